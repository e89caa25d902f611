"""Serialization of study reports: JSON, CSV tables and log-log SVG plots.

Floats are written with ``repr`` (shortest round-trip form) and nothing
time-dependent enters these files, so equal inputs give equal bytes.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .runner import StudyReport, admissible

PLOT_STYLE = {
    "svg.hashsalt": "vemfacet",
    "svg.fonttype": "path",
    "font.size": 9,
    "figure.figsize": (5.0, 3.6),
}


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else repr(x)
    return obj


def dumps(data) -> str:
    return json.dumps(_clean(data), indent=2, allow_nan=False) + "\n"


def write_json(data, path: str | Path) -> Path:
    path = Path(path)
    path.write_text(dumps(data), encoding="utf-8")
    return path


def _fmt(x) -> str:
    return "" if x is None else repr(float(x))


def write_table(report: StudyReport, path: str | Path) -> Path:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["h", "quantity", "value", "accuracy_estimate"])
        for r in report.rows:
            w.writerow([_fmt(r["h"]), r["quantity"], _fmt(r["value"]), _fmt(r["accuracy_estimate"])])
    return path


def read_table(path: str | Path) -> list[dict]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        return [
            {
                "h": float(r["h"]),
                "quantity": r["quantity"],
                "value": float(r["value"]),
                "accuracy_estimate": float(r["accuracy_estimate"]) if r["accuracy_estimate"] else None,
            }
            for r in csv.DictReader(fh)
        ]


def write_plot(report: StudyReport, path: str | Path, title: str | None = None) -> Path | None:
    """Log-log plot of every quantity against h; hollow markers are gated out of slope fits."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    path = Path(path)
    series = []
    for q in report.quantities():
        hs, vals, accs = report.series(q)
        if (vals > 0).any():
            series.append((q, hs, vals, accs))
    if not series:
        return None
    with plt.rc_context(PLOT_STYLE):
        fig, ax = plt.subplots()
        for q, hs, vals, accs in series:
            ok = np.array([admissible(v, a) for v, a in zip(vals, accs)])
            pos = vals > 0
            (line,) = ax.plot(hs[pos], vals[pos], "-", lw=1, label=q)
            ax.plot(hs[ok], vals[ok], "o", ms=4, color=line.get_color())
            bad = pos & ~ok
            if bad.any():
                ax.plot(hs[bad], vals[bad], "o", ms=4, mfc="none", color=line.get_color())
        ax.set_xscale("log")
        ax.set_yscale("log")
        ax.set_xlabel("h")
        ax.set_ylabel("value")
        ax.set_title(title or report.kind)
        ax.spines["right"].set_visible(False)
        ax.spines["top"].set_visible(False)
        ax.legend(fontsize=6, frameon=False)
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
    return path
