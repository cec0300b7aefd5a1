"""Render sweep results as line figures with error bars.

Consumes only the delimited output of the experiment harness: per-scheme mean
rows give the line, the matching stderr rows give the error bars.  Everything
asserted about a figure is taken from the plotting data API, never pixels.
"""
from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

REQUIRED_COLUMNS = {"scheme", "axis", "value", "seed", "rate_bps_hz"}

AXIS_LABELS = {
    "PMax": "transmit power budget (dBm)",
    "PMaxA": "surface amplification budget (dBm)",
    "NumElements": "number of surface elements",
    "Spacing": "element spacing (fraction of wavelength)",
    "RisYCoord": "surface y-coordinate (m)",
    "GammaMax": "maximum reflection gain (dB)",
    "Iteration": "iteration",
}

DEFAULT_STYLES = {
    "EmMc": {"color": "tab:blue", "marker": "o"},
    "ActiveNoMc": {"color": "tab:green", "marker": "s"},
    "McUnaware": {"color": "tab:red", "marker": "^"},
    "PassiveMc": {"color": "tab:purple", "marker": "v"},
    "PassiveNoMc": {"color": "tab:gray", "marker": "d"},
}


@dataclass(frozen=True)
class FigureSpec:
    input_csv: str
    kind: str
    output_path: str
    styles: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in AXIS_LABELS:
            raise ValueError(f"unknown figure kind {self.kind!r}; "
                             f"expected one of {sorted(AXIS_LABELS)}")


def _read_aggregates(path):
    """Per-scheme {value: (mean, stderr)} from the aggregate rows."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = set(reader.fieldnames or [])
        missing = REQUIRED_COLUMNS - header
        if missing:
            raise ValueError(f"CSV is missing required columns: {sorted(missing)}")
        means: dict[str, dict[float, float]] = {}
        errs: dict[str, dict[float, float]] = {}
        for rec in reader:
            seed = rec["seed"]
            if seed not in ("mean", "stderr"):
                continue
            target = means if seed == "mean" else errs
            target.setdefault(rec["scheme"], {})[float(rec["value"])] = \
                float(rec["rate_bps_hz"])
    return means, errs


def render(spec: FigureSpec):
    """Draw one line (with error bars) per scheme found in the CSV.

    Returns the matplotlib figure after saving it, so callers and tests can
    inspect the plotted data directly.
    """
    means, errs = _read_aggregates(spec.input_csv)
    if not means:
        raise ValueError(f"{spec.input_csv}: no aggregate rows to plot")

    styles = dict(DEFAULT_STYLES)
    styles.update(spec.styles or {})
    for scheme in styles:
        if scheme not in means and (spec.styles or {}).get(scheme):
            warnings.warn(f"scheme {scheme!r} not present in {spec.input_csv}")

    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for scheme in sorted(means):
        values = sorted(means[scheme])
        y = [means[scheme][v] for v in values]
        bars = [errs.get(scheme, {}).get(v, 0.0) for v in values]
        style = styles.get(scheme, {})
        ax.errorbar(values, y, yerr=bars, label=scheme, capsize=3,
                    marker=style.get("marker", "o"), color=style.get("color"),
                    linestyle="-" if len(values) > 1 else "none")
    ax.set_xlabel(AXIS_LABELS[spec.kind])
    ax.set_ylabel("achievable rate (bits/s/Hz)")
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    Path(spec.output_path).parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(spec.output_path, dpi=150)
    return fig
