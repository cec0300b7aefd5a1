"""Seeded Monte Carlo sweeps across schemes and parameters, with CSV/JSON output.

Each trial reuses one synthesized network across every scheme so comparisons
are paired; trial t always uses seed ``base_seed + t``.  Output ordering is
canonical (scheme, value, seed) regardless of execution order, and emitted
files are byte-reproducible: the wall-time column is zeroed on write.
"""
from __future__ import annotations

import csv
import io
import json
import math
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace, asdict

import numpy as np

from .optimizer import ALL_SCHEMES, AoConfig, optimize_baseline
from .synthesis import CouplingModel, Scenario, scenario_metadata, synthesize

AXES = ("PMax", "PMaxA", "NumElements", "Spacing", "RisYCoord", "GammaMax", "Iteration")

CSV_HEADER = ["scheme", "axis", "value", "seed", "rate_bps_hz", "iters", "converged",
              "res_power", "res_amp", "res_gamma", "ms"]

AGG_MEAN = "mean"
AGG_STDERR = "stderr"


@dataclass(frozen=True)
class SweepSpec:
    """One experiment: an axis, its values, the schemes to run, and trial count."""

    axis: str
    values: tuple
    schemes: tuple = ALL_SCHEMES
    trials: int = 100
    base_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(self.values))
        object.__setattr__(self, "schemes", tuple(self.schemes))
        if self.axis not in AXES:
            raise ValueError(f"unknown axis {self.axis!r}; expected one of {AXES}")
        if not self.values:
            raise ValueError("values must be nonempty")
        if list(self.values) != sorted(self.values):
            raise ValueError("values must be sorted ascending")
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        unknown = set(self.schemes) - set(ALL_SCHEMES)
        if unknown:
            raise ValueError(f"unknown schemes: {sorted(unknown)}")

    @classmethod
    def from_json_dict(cls, d: dict) -> "SweepSpec":
        d = dict(d)
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown sweep keys: {sorted(unknown)}")
        return cls(**d)

    def to_json_dict(self) -> dict:
        d = asdict(self)
        d["values"] = list(self.values)
        d["schemes"] = list(self.schemes)
        return d


@dataclass(frozen=True)
class ResultRow:
    """One trial outcome (or one aggregate statistic when seed is textual)."""

    scheme: str
    axis: str
    value: float
    seed: object
    rate_bps_hz: float
    iters: float
    converged: int
    res_power: float
    res_amp: float
    res_gamma: float
    ms: float


def apply_axis(scenario: Scenario, axis: str, value) -> Scenario:
    """Scenario with one swept parameter replaced."""
    if axis == "PMax":
        return replace(scenario, p_max_dbm=float(value))
    if axis == "PMaxA":
        return replace(scenario, p_max_a_dbm=float(value))
    if axis == "NumElements":
        side = int(round(math.sqrt(value)))
        if side * side != int(value):
            raise ValueError(f"NumElements values must be perfect squares, got {value}")
        return replace(scenario, m_side_x=side, m_side_y=side)
    if axis == "Spacing":
        return replace(scenario, spacing=float(value) * scenario.wavelength)
    if axis == "RisYCoord":
        cx, _, cz = scenario.ris_center
        return replace(scenario, ris_center=(cx, float(value), cz))
    if axis == "GammaMax":
        return replace(scenario, gamma_max_db=float(value))
    if axis == "Iteration":
        return scenario
    raise ValueError(f"unknown axis {axis!r}")


def _trial_scenario(scenario: Scenario, trial_seed: int) -> tuple[Scenario, np.random.Generator]:
    """Per-trial receiver placement on the configured ring, then the channel RNG."""
    rng = np.random.default_rng(trial_seed)
    angle = rng.uniform(0.0, 2 * np.pi)
    cx, cy, cz = scenario.rx_ring_center
    rx = (cx + scenario.rx_ring_radius * math.cos(angle),
          cy + scenario.rx_ring_radius * math.sin(angle), cz)
    return replace(scenario, rx_pos=rx, seed=trial_seed), rng


def run_trial(scenario: Scenario, axis: str, value, schemes, config: AoConfig,
              trial_seed: int) -> list[ResultRow]:
    """All schemes on one paired channel draw; failures land in-row."""
    scn = apply_axis(scenario, axis, value)
    scn, rng = _trial_scenario(scn, trial_seed)
    coupling = CouplingModel.from_table(scn.spacing_over_lambda, scn.wavelength)
    s = synthesize(scn, coupling, rng)

    rows = []
    for scheme in schemes:
        t0 = time.perf_counter()
        try:
            state, rate = optimize_baseline(scheme, s, scn, config)
            ms = 1e3 * (time.perf_counter() - t0)
            rows.append(ResultRow(
                scheme=scheme, axis=axis, value=value, seed=trial_seed,
                rate_bps_hz=float(rate), iters=state.iteration,
                converged=int(state.converged),
                res_power=state.residuals["power"], res_amp=state.residuals["amp"],
                res_gamma=state.residuals["gamma"], ms=ms))
        except Exception as exc:  # recorded, never aborts the sweep
            ms = 1e3 * (time.perf_counter() - t0)
            warnings.warn(f"trial {trial_seed} scheme {scheme} failed: {exc}")
            rows.append(ResultRow(
                scheme=scheme, axis=axis, value=value, seed=trial_seed,
                rate_bps_hz=0.0, iters=0, converged=0,
                res_power=0.0, res_amp=0.0, res_gamma=0.0, ms=ms))
    return rows


def _run_iteration_trial(scenario: Scenario, values, schemes, config: AoConfig,
                         trial_seed: int) -> list[ResultRow]:
    """Iteration axis: one run per scheme, one row per requested iteration."""
    scn, rng = _trial_scenario(scenario, trial_seed)
    coupling = CouplingModel.from_table(scn.spacing_over_lambda, scn.wavelength)
    s = synthesize(scn, coupling, rng)
    k_needed = int(max(values))
    cfg = replace(config, k_max=max(config.k_max, k_needed))
    rows = []
    for scheme in schemes:
        t0 = time.perf_counter()
        try:
            state, _ = optimize_baseline(scheme, s, scn, cfg)
            ms = 1e3 * (time.perf_counter() - t0)
            trace = state.rate_trace
            for v in values:
                idx = min(int(v), len(trace) - 1)
                rows.append(ResultRow(
                    scheme=scheme, axis="Iteration", value=v, seed=trial_seed,
                    rate_bps_hz=float(trace[idx]), iters=int(v),
                    converged=int(state.converged),
                    res_power=state.residuals["power"],
                    res_amp=state.residuals["amp"],
                    res_gamma=state.residuals["gamma"], ms=ms))
        except Exception as exc:
            ms = 1e3 * (time.perf_counter() - t0)
            warnings.warn(f"trial {trial_seed} scheme {scheme} failed: {exc}")
            for v in values:
                rows.append(ResultRow(
                    scheme=scheme, axis="Iteration", value=v, seed=trial_seed,
                    rate_bps_hz=0.0, iters=int(v), converged=0,
                    res_power=0.0, res_amp=0.0, res_gamma=0.0, ms=ms))
    return rows


def _task(args):
    scenario, axis, value, schemes, config, trial_seed, values = args
    if axis == "Iteration":
        return _run_iteration_trial(scenario, values, schemes, config, trial_seed)
    return run_trial(scenario, axis, value, schemes, config, trial_seed)


def run_sweep(spec: SweepSpec, scenario: Scenario, config: AoConfig | None = None,
              threads: int = 1) -> tuple[list[ResultRow], dict]:
    """Execute the sweep; returns (rows incl. aggregates, metadata dict)."""
    config = config or AoConfig()
    if spec.axis == "Iteration":
        tasks = [(scenario, spec.axis, None, spec.schemes, config,
                  spec.base_seed + t, spec.values) for t in range(spec.trials)]
    else:
        tasks = [(scenario, spec.axis, v, spec.schemes, config,
                  spec.base_seed + t, None)
                 for v in spec.values for t in range(spec.trials)]

    rows: list[ResultRow] = []
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            for chunk in pool.map(_task, tasks):
                rows.extend(chunk)
    else:
        for args in tasks:
            rows.extend(_task(args))

    rows.sort(key=lambda r: (r.scheme, r.value, r.seed))
    rows.extend(_aggregate(rows))

    coupling = CouplingModel.from_table(scenario.spacing_over_lambda, scenario.wavelength) \
        if spec.axis != "Spacing" else None
    meta = scenario_metadata(scenario, coupling)
    if coupling is None:
        meta["coupling_decay_exponent"] = CouplingModel.from_table(0.25).decay_exponent
        meta["coupling_phase_mode"] = CouplingModel.from_table(0.25).phase_mode
    meta.update({
        "axis": spec.axis, "values": list(spec.values), "schemes": list(spec.schemes),
        "trials": spec.trials, "base_seed": spec.base_seed,
        "eta": config.eta, "k_max": config.k_max, "delta0": config.delta0,
        "aggregate_rows": "per (scheme, value): seed='mean' carries the mean rate, "
                          "seed='stderr' the standard error (0 for a single trial)",
        "ms_column": "zeroed on emit so repeated runs are byte-identical",
    })
    return rows, meta


def _aggregate(rows: list[ResultRow]) -> list[ResultRow]:
    groups: dict[tuple, list[ResultRow]] = {}
    for r in rows:
        groups.setdefault((r.scheme, r.axis, r.value), []).append(r)
    agg = []
    for (scheme, axis, value), grp in sorted(groups.items(),
                                             key=lambda kv: (kv[0][0], kv[0][2])):
        rates = np.array([g.rate_bps_hz for g in grp])
        mean = float(rates.mean())
        stderr = float(rates.std(ddof=1) / math.sqrt(len(rates))) if len(rates) > 1 else 0.0
        agg.append(ResultRow(
            scheme=scheme, axis=axis, value=value, seed=AGG_MEAN,
            rate_bps_hz=mean, iters=float(np.mean([g.iters for g in grp])),
            converged=int(all(g.converged for g in grp)),
            res_power=max(g.res_power for g in grp),
            res_amp=max(g.res_amp for g in grp),
            res_gamma=max(g.res_gamma for g in grp), ms=0.0))
        agg.append(ResultRow(
            scheme=scheme, axis=axis, value=value, seed=AGG_STDERR,
            rate_bps_hz=stderr, iters=0.0, converged=0,
            res_power=0.0, res_amp=0.0, res_gamma=0.0, ms=0.0))
    return agg


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.12g}"


def _row_record(r: ResultRow) -> dict:
    return {
        "scheme": r.scheme, "axis": r.axis, "value": r.value,
        "seed": r.seed if isinstance(r.seed, str) else int(r.seed),
        "rate_bps_hz": r.rate_bps_hz, "iters": r.iters, "converged": int(r.converged),
        "res_power": r.res_power, "res_amp": r.res_amp, "res_gamma": r.res_gamma,
        "ms": 0.0,
    }


def emit_results(rows: list[ResultRow], metadata: dict, path, fmt="csv"):
    """Write the table; CSV column order and float formatting are part of the contract."""
    if not rows:
        raise ValueError("result table is empty")
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for r in rows:
            rec = _row_record(r)
            writer.writerow([
                rec["scheme"], rec["axis"], _fmt(rec["value"]), str(rec["seed"]),
                _fmt(rec["rate_bps_hz"]), _fmt(rec["iters"]), str(rec["converged"]),
                _fmt(rec["res_power"]), _fmt(rec["res_amp"]), _fmt(rec["res_gamma"]),
                _fmt(rec["ms"]),
            ])
        with open(path, "w", newline="") as fh:
            fh.write(buf.getvalue())
    elif fmt == "json":
        doc = {"metadata": metadata, "rows": [_row_record(r) for r in rows]}
        with open(path, "w") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")
    else:
        raise ValueError(f"unknown format {fmt!r}; expected csv or json")


def parse_results(path, fmt=None) -> list[dict]:
    """Read back an emitted file as a list of row dicts."""
    path = str(path)
    if fmt is None:
        fmt = "json" if path.endswith(".json") else "csv"
    if fmt == "json":
        with open(path) as fh:
            return json.load(fh)["rows"]
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        rows = []
        for rec in reader:
            row = dict(rec)
            for key in ("value", "rate_bps_hz", "iters", "res_power", "res_amp",
                        "res_gamma", "ms"):
                row[key] = float(row[key])
            row["converged"] = int(row["converged"])
            if row["seed"] not in (AGG_MEAN, AGG_STDERR):
                row["seed"] = int(row["seed"])
            rows.append(row)
        return rows
