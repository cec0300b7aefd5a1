"""Scenario-driven construction of scattering matrices.

Transmission blocks follow a geometry-anchored Rician model; the surface
self-coupling block is anchored to full-wave reference values tabulated per
element spacing, or imported from a measured Touchstone file.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, asdict

import numpy as np

from .network import ScatteringMatrix
from .touchstone import load_touchstone

# Carrier wavelength at 2.4 GHz, meters.
WAVELENGTH_24GHZ = 0.1249

# Reference self/nearest-neighbor magnitudes (dB) of the surface block,
# keyed by element spacing as a fraction of the wavelength.
COUPLING_TABLE = {
    1 / 2: (-25.15, -19.11),
    1 / 3: (-24.26, -18.25),
    1 / 4: (-20.81, -13.62),
    1 / 6: (-16.23, -12.43),
}

PHASE_DISTANCE = "DistancePhase"
PHASE_ZERO = "ZeroPhase"

# Transmitter/receiver arrays use the conventional half-wavelength pitch;
# only the surface spacing is scenario-controlled.
ENDPOINT_SPACING_OVER_LAMBDA = 0.5


def dbm_to_watts(dbm: float) -> float:
    return 10 ** ((dbm - 30) / 10)


def db_to_linear_amplitude(db: float) -> float:
    return 10 ** (db / 20)


@dataclass(frozen=True)
class Scenario:
    """Geometry, array layout, propagation and budget parameters for one setup."""

    tx_pos: tuple = (40.0, 0.0, 1.0)
    ris_center: tuple = (0.0, 60.0, 2.0)
    rx_pos: tuple = (35.0, 120.0, 1.0)
    n_t: int = 4
    n_r: int = 2
    m_side_x: int = 8
    m_side_y: int = 8
    spacing: float = WAVELENGTH_24GHZ / 4
    wavelength: float = WAVELENGTH_24GHZ
    rician_k: float = 10 ** 0.3  # 3 dB
    beta0_db: float = -30.0
    beta_rt: float = 2.45
    beta_ra: float = 2.2
    beta_at: float = 2.2
    noise_rx_dbm: float = -100.0
    noise_ris_dbm: float = -100.0
    p_max_dbm: float = 20.0
    p_max_a_dbm: float = 20.0
    gamma_max_db: float = 30.0
    insertion_loss_db: float = -1.0
    seed: int = 0
    direct_link_blocked: bool = True
    rx_ring_center: tuple = (20.0, 120.0, 1.0)
    rx_ring_radius: float = 15.0

    def __post_init__(self):
        object.__setattr__(self, "tx_pos", tuple(float(v) for v in self.tx_pos))
        object.__setattr__(self, "ris_center", tuple(float(v) for v in self.ris_center))
        object.__setattr__(self, "rx_pos", tuple(float(v) for v in self.rx_pos))
        object.__setattr__(self, "rx_ring_center", tuple(float(v) for v in self.rx_ring_center))
        if self.spacing <= 0 or self.wavelength <= 0:
            raise ValueError("spacing and wavelength must be positive")
        if min(self.n_t, self.n_r, self.m_side_x, self.m_side_y) < 1:
            raise ValueError("antenna/element counts must be at least 1")
        if self.rician_k < 0:
            raise ValueError("rician_k must be nonnegative")
        if self.gamma_max_db <= 0:
            raise ValueError("gamma_max must exceed 1 (gamma_max_db > 0)")
        for d in (self.d_rt, self.d_at, self.d_ra):
            if d <= 1.0:
                raise ValueError("device separations must exceed the 1 m reference distance")

    # -- derived quantities ------------------------------------------------

    @property
    def m(self) -> int:
        return self.m_side_x * self.m_side_y

    @property
    def spacing_over_lambda(self) -> float:
        return self.spacing / self.wavelength

    @property
    def gamma_max(self) -> float:
        return db_to_linear_amplitude(self.gamma_max_db)

    @property
    def insertion_loss(self) -> float:
        return db_to_linear_amplitude(self.insertion_loss_db)

    @property
    def sigma2_rx(self) -> float:
        return dbm_to_watts(self.noise_rx_dbm)

    @property
    def sigma2_ris(self) -> float:
        return dbm_to_watts(self.noise_ris_dbm)

    @property
    def p_max(self) -> float:
        return dbm_to_watts(self.p_max_dbm)

    @property
    def p_max_a(self) -> float:
        return dbm_to_watts(self.p_max_a_dbm)

    @property
    def d_rt(self) -> float:
        return _dist(self.rx_pos, self.tx_pos)

    @property
    def d_at(self) -> float:
        return _dist(self.ris_center, self.tx_pos)

    @property
    def d_ra(self) -> float:
        return _dist(self.rx_pos, self.ris_center)

    def element_positions(self) -> np.ndarray:
        """Surface element coordinates: row-major grid on the y-z plane."""
        cx, cy, cz = self.ris_center
        ix = np.arange(self.m_side_x) - (self.m_side_x - 1) / 2
        iy = np.arange(self.m_side_y) - (self.m_side_y - 1) / 2
        pos = np.zeros((self.m, 3))
        k = 0
        for i in range(self.m_side_x):
            for j in range(self.m_side_y):
                pos[k] = (cx, cy + ix[i] * self.spacing, cz + iy[j] * self.spacing)
                k += 1
        return pos

    # -- JSON mirror ---------------------------------------------------------

    def to_json_dict(self) -> dict:
        d = asdict(self)
        d.pop("spacing")
        d["spacing_over_lambda"] = self.spacing_over_lambda
        d["tx_pos"] = list(self.tx_pos)
        d["ris_center"] = list(self.ris_center)
        d["rx_pos"] = list(self.rx_pos)
        d["rx_ring_center"] = list(self.rx_ring_center)
        return d

    @classmethod
    def from_json_dict(cls, d: dict) -> "Scenario":
        d = dict(d)
        wavelength = float(d.get("wavelength", WAVELENGTH_24GHZ))
        if "spacing_over_lambda" in d:
            d["spacing"] = float(d.pop("spacing_over_lambda")) * wavelength
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown scenario keys: {sorted(unknown)}")
        return cls(**d)


@dataclass(frozen=True)
class CouplingModel:
    """Synthetic surface self-coupling block anchored to tabulated magnitudes."""

    s11_db: float
    s21_db: float
    reference_spacing: float
    decay_exponent: float = 2.0
    phase_mode: str = PHASE_DISTANCE

    def __post_init__(self):
        if self.s11_db > 0 or self.s21_db > 0:
            raise ValueError("self/coupling magnitudes must be <= 0 dB (passive hardware)")
        if self.decay_exponent < 0:
            raise ValueError("decay_exponent must be nonnegative")
        if self.phase_mode not in (PHASE_DISTANCE, PHASE_ZERO):
            raise ValueError(f"unknown phase_mode {self.phase_mode!r}")

    @classmethod
    def from_table(cls, spacing_over_lambda, wavelength=WAVELENGTH_24GHZ,
                   interpolate=False, **kwargs) -> "CouplingModel":
        """Anchor the model to the tabulated spacing, or interpolate between anchors."""
        fracs = sorted(COUPLING_TABLE)
        for frac in fracs:
            if abs(spacing_over_lambda - frac) < 1e-9:
                s11, s21 = COUPLING_TABLE[frac]
                return cls(s11, s21, frac * wavelength, **kwargs)
        if not fracs[0] - 1e-9 <= spacing_over_lambda <= fracs[-1] + 1e-9:
            raise ValueError(
                f"spacing {spacing_over_lambda:.4g} lambda outside the tabulated "
                f"range [{fracs[0]:.4g}, {fracs[-1]:.4g}]"
            )
        if not interpolate:
            raise ValueError(
                f"spacing {spacing_over_lambda:.4g} lambda is not tabulated; "
                "pass interpolate=True to interpolate between anchors"
            )
        s11 = np.interp(spacing_over_lambda, fracs, [COUPLING_TABLE[f][0] for f in fracs])
        s21 = np.interp(spacing_over_lambda, fracs, [COUPLING_TABLE[f][1] for f in fracs])
        return cls(float(s11), float(s21), spacing_over_lambda * wavelength, **kwargs)


def array_response(count: int, spacing: float, wavelength: float, angle: float) -> np.ndarray:
    """Steering vector of a uniform line of ports; entries have unit magnitude."""
    if count < 1:
        raise ValueError("count must be at least 1")
    k = np.arange(count)
    return np.exp(-2j * np.pi * (spacing / wavelength) * k * np.sin(angle))


def path_loss_db(beta0_db: float, exponent: float, distance_m: float) -> float:
    """Distance-dependent channel gain in dB (negative: a loss).

    ``beta0_db`` anchors the gain at the 1 m reference distance; the gain is
    applied to wave amplitudes as ``10**(value / 20)``.
    """
    if distance_m < 1.0 - 1e-12:
        raise ValueError("distance must be at least the 1 m reference distance")
    return beta0_db - 10.0 * exponent * math.log10(distance_m)


def _dist(a, b) -> float:
    return float(np.linalg.norm(np.asarray(a, float) - np.asarray(b, float)))


def _azimuth(frm, to) -> float:
    d = np.asarray(to, float) - np.asarray(frm, float)
    return math.atan2(d[1], d[0])


def _los_outer(arrive: np.ndarray, depart: np.ndarray) -> np.ndarray:
    return np.outer(arrive, depart.conj())


def rician_block(scenario: Scenario, link: str, rng: np.random.Generator) -> np.ndarray:
    """One transmission block: line-of-sight steering plus Rayleigh scatter.

    With the direct link blocked the transmitter-receiver block is zero: the
    through path is gone, and the surface's own static reflection is far below
    the path-loss-scaled steering term, so no deterministic residue is kept.
    """
    lam = scenario.wavelength
    d_end = ENDPOINT_SPACING_OVER_LAMBDA * lam
    if link == "RT":
        dist, beta = scenario.d_rt, scenario.beta_rt
        depart = array_response(scenario.n_t, d_end, lam,
                                _azimuth(scenario.tx_pos, scenario.rx_pos))
        los = _los_outer(np.ones(scenario.n_r), depart)
        shape = (scenario.n_r, scenario.n_t)
    elif link == "AT":
        dist, beta = scenario.d_at, scenario.beta_at
        arrive = array_response(scenario.m, scenario.spacing, lam,
                                _azimuth(scenario.ris_center, scenario.tx_pos))
        depart = array_response(scenario.n_t, d_end, lam,
                                _azimuth(scenario.tx_pos, scenario.ris_center))
        los = _los_outer(arrive, depart)
        shape = (scenario.m, scenario.n_t)
    elif link == "RA":
        dist, beta = scenario.d_ra, scenario.beta_ra
        depart = array_response(scenario.m, scenario.spacing, lam,
                                _azimuth(scenario.ris_center, scenario.rx_pos))
        los = _los_outer(np.ones(scenario.n_r), depart)
        shape = (scenario.n_r, scenario.m)
    else:
        raise ValueError(f"unknown link {link!r}; expected RT, AT, or RA")

    nlos = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2)
    if link == "RT" and scenario.direct_link_blocked:
        return np.zeros(shape, dtype=complex)
    k = scenario.rician_k
    amp = db_to_linear_amplitude(path_loss_db(scenario.beta0_db, beta, dist))
    return amp * (math.sqrt(k / (k + 1)) * los + math.sqrt(1 / (k + 1)) * nlos)


def build_coupling_matrix(model: CouplingModel, positions: np.ndarray,
                          wavelength: float) -> np.ndarray:
    """Surface self-coupling block from pairwise element geometry.

    Diagonal magnitude is the tabulated self term; off-diagonal magnitudes
    start at the nearest-neighbor anchor and decay with distance.  The result
    is symmetric (reciprocal hardware).
    """
    positions = np.asarray(positions, float)
    m = positions.shape[0]
    if m == 1:
        return np.array([[db_to_linear_amplitude(model.s11_db)]], dtype=complex)
    d = np.linalg.norm(positions[:, None, :] - positions[None, :, :], axis=2)
    mag21 = db_to_linear_amplitude(model.s21_db)
    with np.errstate(divide="ignore"):
        mags = mag21 * (model.reference_spacing / d) ** model.decay_exponent
    np.fill_diagonal(mags, db_to_linear_amplitude(model.s11_db))
    if model.phase_mode == PHASE_DISTANCE:
        phases = np.exp(-2j * np.pi * d / wavelength)
        np.fill_diagonal(phases, 1.0)
    else:
        phases = np.ones_like(d, dtype=complex)
    return mags * phases


def synthesize(scenario: Scenario, coupling=None, rng=None) -> ScatteringMatrix:
    """Assemble the full scattering matrix for a scenario.

    The endpoint arrays are impedance matched and signals flow forward only,
    so every block except the three transmission terms and the surface
    self-coupling is zero.  ``coupling`` may be a CouplingModel, a Touchstone
    file path, an explicit matrix, or None (anchored automatically from the
    scenario spacing).
    """
    if rng is None:
        rng = np.random.default_rng(scenario.seed)
    n_t, m, n_r = scenario.n_t, scenario.m, scenario.n_r

    s_rt = rician_block(scenario, "RT", rng)
    s_at = rician_block(scenario, "AT", rng)
    s_ra = rician_block(scenario, "RA", rng)

    if coupling is None:
        coupling = CouplingModel.from_table(scenario.spacing_over_lambda,
                                            scenario.wavelength)
    if isinstance(coupling, CouplingModel):
        s_aa = build_coupling_matrix(coupling, scenario.element_positions(),
                                     scenario.wavelength)
    elif isinstance(coupling, (str, bytes)) or hasattr(coupling, "__fspath__"):
        data = load_touchstone(coupling)
        s_aa = data.s
    else:
        s_aa = np.asarray(coupling, dtype=complex)
    if s_aa.shape != (m, m):
        raise ValueError(f"coupling block must be {m}x{m}, got {s_aa.shape}")

    return ScatteringMatrix(
        s_tt=np.zeros((n_t, n_t)), s_ta=np.zeros((n_t, m)), s_tr=np.zeros((n_t, n_r)),
        s_at=s_at, s_aa=s_aa, s_ar=np.zeros((m, n_r)),
        s_rt=s_rt, s_ra=s_ra, s_rr=np.zeros((n_r, n_r)),
    )


def scenario_metadata(scenario: Scenario, coupling: CouplingModel | None = None) -> dict:
    """Every parameter the reference experiments leave unstated, made explicit."""
    meta = {
        "kappa_db": round(10 * math.log10(scenario.rician_k), 9) if scenario.rician_k > 0 else None,
        "rician_k_linear": scenario.rician_k,
        "beta0_db": scenario.beta0_db,
        "insertion_loss_db": scenario.insertion_loss_db,
        "power_unit": "dBm",
        "path_loss_convention": "negative amplitude gain: beta0_db - 10*beta*log10(d/1m), applied as 10^(dB/20)",
        "endpoint_spacing_over_lambda": ENDPOINT_SPACING_OVER_LAMBDA,
        "wavelength_m": scenario.wavelength,
    }
    if coupling is not None:
        meta["coupling_decay_exponent"] = coupling.decay_exponent
        meta["coupling_phase_mode"] = coupling.phase_mode
    return meta
