"""Touchstone v1 (.sNp) import/export for measured surface coupling blocks."""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import TouchstoneError

_FREQ_UNITS = {"hz": 1.0, "khz": 1e3, "mhz": 1e6, "ghz": 1e9}
_FORMATS = ("RI", "MA", "DB")


@dataclass(frozen=True)
class TouchstoneData:
    s: np.ndarray
    frequency_hz: float
    z0: float
    fmt: str


def _port_count(path) -> int:
    match = re.search(r"\.s(\d+)p$", str(path), re.IGNORECASE)
    if not match:
        raise TouchstoneError(f"cannot infer port count from file name {path!r}")
    return int(match.group(1))


def _pair_to_complex(x, y, fmt):
    if fmt == "RI":
        return complex(x, y)
    if fmt == "MA":
        return x * complex(math.cos(math.radians(y)), math.sin(math.radians(y)))
    # DB: magnitude in dB, angle in degrees
    mag = 10 ** (x / 20)
    return mag * complex(math.cos(math.radians(y)), math.sin(math.radians(y)))


def _complex_to_pair(v, fmt):
    if fmt == "RI":
        return v.real, v.imag
    mag = abs(v)
    ang = math.degrees(math.atan2(v.imag, v.real))
    if fmt == "MA":
        return mag, ang
    if mag == 0:
        return -1e3, ang  # conventional floor for a zero entry in dB format
    return 20 * math.log10(mag), ang


def load_touchstone(path, target_hz=2.4e9, freq_tolerance=0.1) -> TouchstoneData:
    """Read the network matrix at the frequency closest to ``target_hz``.

    Supports the v1 option line ``# <unit> S <RI|MA|DB> R <z0>`` (tokens in any
    order, defaults MHz/S/MA/50), comment stripping, and wrapped data rows.
    The two-port column ordering quirk of the format is honored.  Symmetry is
    not assumed: measured data may be non-reciprocal.
    """
    path = Path(path)
    n = _port_count(path)
    unit, fmt, z0 = "mhz", "MA", 50.0
    option_seen = False
    tokens: list[tuple[float, int]] = []

    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.split("!", 1)[0].strip()
        if not line:
            continue
        if line.startswith("#"):
            if option_seen:
                continue  # v1: later option lines are ignored
            option_seen = True
            parts = line[1:].split()
            i = 0
            while i < len(parts):
                tok = parts[i].lower()
                if tok in _FREQ_UNITS:
                    unit = tok
                elif tok.upper() in _FORMATS:
                    fmt = tok.upper()
                elif tok == "s":
                    pass
                elif tok in ("y", "z", "g", "h"):
                    raise TouchstoneError(
                        f"unsupported parameter type {tok.upper()!r} (only S)", lineno)
                elif tok == "r":
                    if i + 1 >= len(parts):
                        raise TouchstoneError("option line: R without a resistance", lineno)
                    try:
                        z0 = float(parts[i + 1])
                    except ValueError:
                        raise TouchstoneError(
                            f"option line: bad resistance {parts[i + 1]!r}", lineno) from None
                    i += 1
                else:
                    raise TouchstoneError(f"option line: unknown token {parts[i]!r}", lineno)
                i += 1
            continue
        for tok in line.split():
            try:
                tokens.append((float(tok), lineno))
            except ValueError:
                raise TouchstoneError(f"non-numeric data token {tok!r}", lineno) from None

    per_point = 1 + 2 * n * n
    if not tokens:
        raise TouchstoneError("file contains no data rows")
    if len(tokens) % per_point:
        raise TouchstoneError(
            f"data length {len(tokens)} is not a multiple of {per_point} "
            f"({n}-port: frequency + {2 * n * n} values per point)",
            tokens[-1][1],
        )

    mult = _FREQ_UNITS[unit]
    freqs, mats = [], []
    for start in range(0, len(tokens), per_point):
        chunk = [t[0] for t in tokens[start:start + per_point]]
        freqs.append(chunk[0] * mult)
        vals = [_pair_to_complex(chunk[i], chunk[i + 1], fmt)
                for i in range(1, per_point, 2)]
        mat = np.array(vals, dtype=complex).reshape(n, n)
        if n == 2:
            mat = mat.T  # v1 two-port data arrives column-major (S11 S21 S12 S22)
        mats.append(mat)

    freqs = np.asarray(freqs)
    idx = int(np.argmin(np.abs(freqs - target_hz)))
    if abs(freqs[idx] - target_hz) > freq_tolerance * target_hz:
        raise TouchstoneError(
            f"no frequency within {freq_tolerance:.0%} of {target_hz:.4g} Hz "
            f"(closest: {freqs[idx]:.4g} Hz)"
        )
    return TouchstoneData(s=mats[idx], frequency_hz=float(freqs[idx]), z0=z0, fmt=fmt)


def save_touchstone(path, s, frequency_hz=2.4e9, z0=50.0, fmt="RI", unit="GHz"):
    """Write a single-frequency v1 file; inverse of :func:`load_touchstone`."""
    s = np.asarray(s, dtype=complex)
    n = s.shape[0]
    if s.shape != (n, n):
        raise ValueError("matrix must be square")
    if _port_count(path) != n:
        raise ValueError(f"file suffix must be .s{n}p for an {n}-port matrix")
    fmt = fmt.upper()
    if fmt not in _FORMATS:
        raise ValueError(f"format must be one of {_FORMATS}")
    if unit.lower() not in _FREQ_UNITS:
        raise ValueError(f"unit must be one of {sorted(_FREQ_UNITS)}")

    data = s.T if n == 2 else s
    pairs = [_complex_to_pair(v, fmt) for v in data.ravel()]
    lines = [f"! {n}-port S-parameters", f"# {unit} S {fmt} R {z0:g}"]
    freq = frequency_hz / _FREQ_UNITS[unit.lower()]
    row = [f"{freq:.12g}"]
    for i, (x, y) in enumerate(pairs):
        row.extend([f"{x:.12g}", f"{y:.12g}"])
        # v1 wraps long records at four complex values per line
        if (i + 1) % 4 == 0 and i + 1 < len(pairs):
            lines.append(" ".join(row))
            row = []
    if row:
        lines.append(" ".join(row))
    Path(path).write_text("\n".join(lines) + "\n")
