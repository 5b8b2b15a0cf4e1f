"""Figure rendering for run and sweep reports.

Every figure is written next to the delimited data it visualizes; rendering
is headless (Agg) and deterministic apart from font rasterization.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_STYLE = {
    "figure.figsize": (6.4, 4.0),
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 9,
    "lines.linewidth": 1.4,
}


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def norm_decay_figure(times, norm_table: dict, path):
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        for p, vals in sorted(norm_table.items()):
            ax.plot(times, vals, label=f"p = {p}")
        ax.set_xlabel("time")
        ax.set_ylabel("norm")
        ax.set_title("trajectory norms")
        ax.legend()
        _save(fig, path)


def molecule_trace_figure(rows: list, path):
    s = [r["s"] for r in rows]
    with plt.rc_context(_STYLE):
        fig, axes = plt.subplots(1, 3, figsize=(10.5, 3.4))
        for ax, key, label in zip(
            axes, ("moment", "sup", "l1"), ("concentration moment", "sup norm", "L1 norm")
        ):
            ax.plot(s, [r[key] for r in rows], label="measured")
            ax.plot(s, [r[f"{key}_bound"] for r in rows], "--", label="bound")
            ax.set_yscale("log")
            ax.set_xlabel("s")
            ax.set_title(label)
            ax.legend()
        _save(fig, path)


def pairing_decay_figure(rows: list, slope, path):
    r = np.array([row["r"] for row in rows])
    v = np.array([row["normalized"] for row in rows])
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        ax.loglog(r, v, "o-", label="sup pairing / L1")
        if slope is not None and np.all(v > 0):
            anchor = v[0] * (r / r[0]) ** slope
            ax.loglog(r, anchor, "--", label=f"slope {slope:.3f}")
        ax.set_xlabel("molecule size r")
        ax.set_ylabel("normalized pairing")
        ax.set_title("pairing decay across scales")
        ax.legend()
        _save(fig, path)


def sweep_figure(axis_name: str, values, metrics: dict, path):
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        for label, ys in metrics.items():
            pts = [(x, y) for x, y in zip(values, ys) if y is not None]
            if pts:
                ax.plot([p[0] for p in pts], [p[1] for p in pts], "o-", label=label)
        ax.set_xlabel(axis_name)
        if all(isinstance(v, (int, float)) and v > 0 for v in values):
            ax.set_xscale("log")
        ax.set_title(f"sweep over {axis_name}")
        ax.legend()
        _save(fig, path)
