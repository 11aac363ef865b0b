"""SVG views of a sweep report; every plotted number comes from the report."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .errors import EmptyReport  # noqa: E402

_LABELS = {"T": "steps T", "d": "dimension d", "K": "components K",
           "amplitude": "measured score error", "delta": "contamination delta"}


def _series_label(fixed: dict) -> str:
    return ", ".join(f"{k}={v:g}" if isinstance(v, float) else f"{k}={v}" for k, v in fixed.items())


def _pad_limits(values, log=False):
    v = np.asarray(values, dtype=float)
    lo, hi = float(v.min()), float(v.max())
    if log:
        return lo / 1.25, hi * 1.25
    span = (hi - lo) or max(abs(hi), 1e-3)
    return lo - 0.08 * span, hi + 0.08 * span


def _chart(axis, entries):
    fig, ax = plt.subplots(figsize=(6.0, 4.2))
    xs_all, ys_all = [], []
    annotations = []
    for entry in entries:
        if axis == "amplitude":
            xs = entry.get("epsilon_score", entry["amplitude"])
        else:
            xs = entry[axis]
        ys = entry["tv"]
        xs_all += list(xs)
        ys_all += list(ys)
        label = _series_label(entry["fixed"])
        ax.plot(xs, ys, "o", label=label)
        if axis == "T" and "b" in entry:
            grid = np.geomspace(min(xs), max(xs), 50)
            ax.plot(grid, entry["a"] * grid ** (-entry["b"]), "-", lw=1)
            annotations.append(f"slope b = {entry['b']:.3f} (r2 = {entry['r2']:.3f})")
        elif axis == "amplitude" and "slope" in entry:
            grid = np.linspace(min(xs), max(xs), 20)
            ax.plot(grid, entry["intercept"] + entry["slope"] * grid, "-", lw=1)
            annotations.append(f"slope = {entry['slope']:.3f} (r2 = {entry['r2']:.3f})")
        elif axis in ("d", "K"):
            ax.axhline(float(np.mean(ys)), ls="--", lw=0.8)
            if "ratio_max_min" in entry:
                annotations.append(f"max/min = {entry['ratio_max_min']:.3f}")
        if "null_floor" in entry:
            ax.plot(xs, entry["null_floor"], "x", color="grey")
    log_x = axis in ("T", "d", "K") and min(xs_all) > 0
    log_y = axis == "T" and min(ys_all) > 0
    if log_x:
        ax.set_xscale("log")
    if log_y:
        ax.set_yscale("log")
    floors = [v for e in entries for v in e.get("null_floor", [])]
    ax.set_xlim(*_pad_limits(xs_all, log_x))
    ax.set_ylim(*_pad_limits(ys_all + floors, log_y))
    ax.set_xlabel(_LABELS.get(axis, axis))
    ax.set_ylabel("sliced TV")
    for i, text in enumerate(annotations):
        ax.text(0.02, 0.04 + 0.06 * i, text, transform=ax.transAxes, fontsize=8)
    if len(entries) <= 6:
        ax.legend(fontsize=7, loc="upper right")
    fig.tight_layout()
    return fig


def render_charts(report: dict, out_dir) -> list[Path]:
    """Write one SVG per swept axis; returns their paths."""
    fits = report.get("fits") or {}
    if not fits:
        raise EmptyReport("report has no swept axis to chart")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    with plt.rc_context({"svg.hashsalt": "gmmddpm", "svg.fonttype": "path"}):
        for axis, entries in fits.items():
            if not entries:
                continue
            fig = _chart(axis, entries)
            path = out / f"tv_vs_{axis}.svg"
            fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})
            plt.close(fig)
            paths.append(path)
    if not paths:
        raise EmptyReport("report has no chartable series")
    return paths
