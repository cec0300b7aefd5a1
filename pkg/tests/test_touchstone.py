"""Touchstone v1 import/export."""
import numpy as np
import pytest

import mcris as M
from mcris.errors import TouchstoneError
from mcris.synthesis import WAVELENGTH_24GHZ, CouplingModel


def test_minimal_s1p_ri(tmp_path):
    p = tmp_path / "one.s1p"
    p.write_text("# HZ S RI R 50\n2.4e9 0.1 0\n")
    data = M.load_touchstone(p)
    assert data.s.shape == (1, 1)
    assert data.s[0, 0] == pytest.approx(0.1 + 0j)
    assert data.z0 == 50.0
    assert data.frequency_hz == pytest.approx(2.4e9)

def test_ma_format_half_turn(tmp_path):
    p = tmp_path / "one.s1p"
    p.write_text("# GHz S MA R 50\n2.4 0.2084 180\n")
    data = M.load_touchstone(p)
    assert data.s[0, 0] == pytest.approx(-0.2084, abs=1e-12)

def test_db_format(tmp_path):
    p = tmp_path / "one.s1p"
    p.write_text("# GHz S DB R 50\n2.4 -13.62 90\n")
    data = M.load_touchstone(p)
    assert data.s[0, 0] == pytest.approx(1j * 10 ** (-13.62 / 20), abs=1e-12)

def test_two_port_column_order(tmp_path):
    p = tmp_path / "pair.s2p"
    # v1 order: S11 S21 S12 S22
    p.write_text("# GHz S RI R 50\n2.4 0.11 0 0.21 0 0.12 0 0.22 0\n")
    data = M.load_touchstone(p)
    assert data.s[0, 0] == pytest.approx(0.11)
    assert data.s[1, 0] == pytest.approx(0.21)
    assert data.s[0, 1] == pytest.approx(0.12)
    assert data.s[1, 1] == pytest.approx(0.22)

def test_nearest_frequency_selection(tmp_path):
    p = tmp_path / "sweep.s1p"
    p.write_text("# GHz S RI R 50\n2.2 1 0\n2.39 2 0\n2.6 3 0\n")
    data = M.load_touchstone(p)
    assert data.s[0, 0] == pytest.approx(2.0)

def test_frequency_window_enforced(tmp_path):
    p = tmp_path / "far.s1p"
    p.write_text("# GHz S RI R 50\n5.0 1 0\n")
    with pytest.raises(TouchstoneError):
        M.load_touchstone(p)

def test_malformed_option_line(tmp_path):
    p = tmp_path / "bad.s1p"
    p.write_text("# GHz Z RI R 50\n2.4 1 0\n")
    with pytest.raises(TouchstoneError) as err:
        M.load_touchstone(p)
    assert err.value.line == 1

def test_inconsistent_column_count(tmp_path):
    p = tmp_path / "bad.s2p"
    p.write_text("# GHz S RI R 50\n2.4 1 0 2 0\n")
    with pytest.raises(TouchstoneError):
        M.load_touchstone(p)

def test_non_numeric_token_reports_line(tmp_path):
    p = tmp_path / "bad.s1p"
    p.write_text("# GHz S RI R 50\n2.4 oops 0\n")
    with pytest.raises(TouchstoneError) as err:
        M.load_touchstone(p)
    assert err.value.line == 2

def test_comments_and_wrapping(tmp_path):
    p = tmp_path / "multi.s3p"
    rows = ["! measured block", "# GHz S RI R 50",
            "2.4 1 0 2 0 3 0 4 0 ! wraps after four pairs",
            "5 0 6 0 7 0 8 0", "9 0"]
    p.write_text("\n".join(rows) + "\n")
    data = M.load_touchstone(p)
    assert np.allclose(data.s, np.arange(1, 10).reshape(3, 3))

@pytest.mark.parametrize("fmt", ["RI", "MA", "DB"])
def test_round_trip_all_formats(tmp_path, fmt, rng):
    scn = M.Scenario(m_side_x=2, m_side_y=2)
    model = CouplingModel.from_table(0.25)
    s_aa = M.build_coupling_matrix(model, scn.element_positions(), scn.wavelength)
    p = tmp_path / f"coupling_{fmt}.s4p"
    M.save_touchstone(p, s_aa, fmt=fmt)
    back = M.load_touchstone(p)
    assert np.allclose(back.s, s_aa, atol=1e-9)

def test_round_trip_two_port(tmp_path, rng):
    s = (rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))) * 0.3
    p = tmp_path / "two.s2p"
    M.save_touchstone(p, s, fmt="RI", unit="MHz")
    back = M.load_touchstone(p)
    assert np.allclose(back.s, s, atol=1e-9)

def test_synthesize_accepts_touchstone_path(tmp_path):
    scn = M.Scenario(m_side_x=2, m_side_y=2, seed=4)
    model = CouplingModel.from_table(0.25)
    s_aa = M.build_coupling_matrix(model, scn.element_positions(), scn.wavelength)
    p = tmp_path / "surface.s4p"
    M.save_touchstone(p, s_aa)
    s = M.synthesize(scn, str(p), np.random.default_rng(scn.seed))
    assert np.allclose(s.s_aa, s_aa, atol=1e-9)

def test_port_count_from_suffix_required(tmp_path):
    p = tmp_path / "data.txt"
    p.write_text("# GHz S RI R 50\n2.4 1 0\n")
    with pytest.raises(TouchstoneError):
        M.load_touchstone(p)
