"""Sweep driver: one DDPM run plus diagnostics per grid cell, then per-axis fits."""

from __future__ import annotations

import csv
import io
import itertools
import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

from .config import ExperimentSpec, build_target_gmm, serialize_config
from .errors import GmmDdpmError
from .metrics import (
    fit_rate,
    linear_fit,
    mmd,
    moment_diagnostics,
    null_floor,
    projected_target,
    projection_directions,
    sliced_tv,
    tv_1d_grid,
)
from .oracles import clip_oracle, exact_oracle, measure_score_error, perturb_oracle
from .probes import probe_steps, trace_quantiles, tweedie_bound_check, typical_set_probability
from .sampler import contaminate_target, ddpm_sample, sample_target
from .schedule import build_schedule

log = logging.getLogger(__name__)

CSV_COLUMNS = ["run_id", "T", "d", "K", "oracle", "amplitude", "delta", "metric", "value",
               "mc_error", "seed"]


def derive_seed(*parts) -> int:
    """Stable 64-bit seed from integers."""
    ss = np.random.SeedSequence([int(p) & 0xFFFFFFFF for p in parts] + [int(p) >> 32 for p in parts])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _micro(x: float) -> int:
    return int(round(x * 1e6))


@dataclass
class Cell:
    index: int
    T: int
    d: int
    K: int
    amplitude: float
    delta: float
    seed: int
    status: str = "ok"
    error: str = ""
    oracle: str = ""
    metrics: dict = field(default_factory=dict)
    probes: list = field(default_factory=list)
    wall_clock: float = 0.0

    def coords(self) -> dict:
        return {"T": self.T, "d": self.d, "K": self.K, "amplitude": self.amplitude,
                "delta": self.delta}


def enumerate_cells(spec: ExperimentSpec) -> list[Cell]:
    cells = []
    grid = itertools.product(spec.schedule.T, spec.target.d, spec.target.K,
                             spec.oracle.amplitude, spec.target.delta)
    for i, (T, d, K, a, dl) in enumerate(grid):
        # chain seed ignores T so T-sweeps share their random numbers
        seed = derive_seed(spec.seed, d, K, _micro(a), _micro(dl))
        cells.append(Cell(i, T, d, K, a, dl, seed))
    return cells


def build_oracle(spec: ExperimentSpec, gmm, sched, amplitude: float):
    o = spec.oracle
    oracle = exact_oracle(gmm, sched)
    if o.perturb != "none" and amplitude > 0:
        oracle = perturb_oracle(oracle, o.perturb, amplitude, o.perturb_seed)
    if o.clip:
        oracle = clip_oracle(oracle, sched, gmm.d, o.C_clip)
    return oracle


def _direction_seed(spec, cell):
    return derive_seed(spec.seed, 0xD1, cell.d, cell.K)


def run_cell(spec: ExperimentSpec, cell: Cell, threads: int = 1) -> Cell:
    m = spec.metrics
    gmm = build_target_gmm(spec, cell.K, cell.d)
    target = contaminate_target(gmm, cell.delta, {"mean": spec.target.contaminant_mean,
                                                   "scale": spec.target.contaminant_scale})
    sched = build_schedule(cell.T, spec.schedule.c0, spec.schedule.c1)
    oracle = build_oracle(spec, gmm, sched, cell.amplitude)
    cell.oracle = oracle.descriptor
    traj = ddpm_sample(oracle, sched, cell.d, spec.n, cell.seed, record=[], threads=threads)
    y = traj.output.points
    out = {}
    if cell.d == 1:
        tv = tv_1d_grid(projected_target(target, np.ones(1)), y, m.bins)
        dirs = np.ones((1, 1))
    else:
        dirs = projection_directions(gmm, m.projections, _direction_seed(spec, cell),
                                     m.pair_directions)
        tv = sliced_tv(target, y, bins=m.bins, directions=dirs)
    out["tv"] = (tv.value, tv.mc_error)
    if tv.mean is not None:
        out["tv_mean"] = (tv.mean, math.nan)
    if m.null_floor:
        fl = null_floor(target, spec.n, dirs, m.bins, seed=cell.seed)
        out["tv_null_floor"] = (fl.value, fl.mc_error)
    if m.moments:
        mo = moment_diagnostics(y, gmm)
        out["mean_gap"] = (mo.mean_gap, math.nan)
        out["cov_gap"] = (mo.cov_gap, mo.cov_gap_scale)
        out["occupancy_max_dev"] = (float(np.max(np.abs(mo.occupancy - gmm.weights))),
                                    float(np.max(mo.occupancy_se)))
    if m.mmd:
        ref = sample_target(target, m.mmd_n, derive_seed(cell.seed, 0x33D)).points
        est = mmd(y[:m.mmd_n], ref)
        out["mmd2"] = (est.value, est.stderr)
    if m.score_error:
        rep = measure_score_error(oracle, gmm, sched, m.score_error_n,
                                  derive_seed(cell.seed, 0x5C0), target=target)
        out["epsilon_score"] = (rep.epsilon_score, math.nan)
        out["epsilon_score_gmm"] = (rep.epsilon_score_gmm, math.nan)
    if spec.probes.enabled:
        cell.probes = run_probes(spec, gmm, sched, cell)
        for row in cell.probes:
            key = f"{row['probe']}_t{row['t']}"
            out[key] = (row["estimate"], math.nan)
    cell.metrics = out
    return cell


def run_probes(spec, gmm, sched, cell) -> list[dict]:
    p = spec.probes
    rows = []
    steps = p.steps or probe_steps(sched.T)
    for t in steps:
        if not 1 <= t <= sched.T:
            continue
        seed = derive_seed(cell.seed, 0x9B0, t)
        rows.append(typical_set_probability(gmm, sched, t, p.n, p.C1, p.C2, seed).row())
        rows.append(tweedie_bound_check(gmm, sched, t, p.n, p.C_clip, seed).row())
        tq = trace_quantiles(gmm, sched, t, p.n, seed)
        rows.append({"probe": "trace_q999_over_logKT", "t": t, "K": gmm.K, "d": gmm.d,
                     "T": sched.T, "estimate": tq.ratio, "ci_low": None, "ci_high": None,
                     "thresholds": {}, "quantiles": tq.as_dict()})
    return rows


def _series(cells, axis):
    """Group ok cells by every coordinate except ``axis``."""
    groups = {}
    for c in cells:
        if c.status != "ok":
            continue
        key = tuple((k, v) for k, v in c.coords().items() if k != axis)
        groups.setdefault(key, []).append(c)
    return groups


def fit_axes(spec: ExperimentSpec, cells) -> dict:
    fits = {}
    axes = {k: v for k, v in spec.axes().items() if len(set(v)) > 1}
    for axis in axes:
        entries = []
        for key, group in _series(cells, axis).items():
            group = sorted(group, key=lambda c: getattr(c, axis))
            xs = [getattr(c, axis) for c in group]
            tvs = [c.metrics["tv"][0] for c in group]
            entry = {"fixed": dict(key), axis: xs, "tv": tvs}
            if "tv_null_floor" in group[0].metrics:
                entry["null_floor"] = [c.metrics["tv_null_floor"][0] for c in group]
            try:
                if axis == "T":
                    rf = fit_rate(zip(xs, tvs))
                    entry.update(a=rf.a, b=rf.b, r2=rf.r2)
                elif axis in ("d", "K"):
                    entry["ratio_max_min"] = max(tvs) / min(tvs)
                    if len(xs) >= 3:
                        sp = stats.spearmanr(xs, tvs, alternative="greater")
                        entry.update(spearman_rho=float(sp.statistic), spearman_p=float(sp.pvalue))
                elif axis == "amplitude":
                    eps = [c.metrics.get("epsilon_score", (a,))[0] for c, a in zip(group, xs)]
                    lf = linear_fit(eps, tvs)
                    entry.update(epsilon_score=eps, slope=lf.slope, intercept=lf.intercept,
                                 r2=lf.r2, nondecreasing=bool(np.all(np.diff(tvs) >= 0)))
                elif axis == "delta":
                    entry["increase_over_baseline"] = [v - tvs[0] for v in tvs]
            except GmmDdpmError as exc:
                entry["error"] = str(exc)
            entries.append(entry)
        fits[axis] = entries
    return fits


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return "" if math.isnan(v) else repr(v)
    return str(v)


def report_csv(report: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for c in report["cells"]:
        base = [c["run_id"], c["T"], c["d"], c["K"], c["oracle"], _fmt(c["amplitude"]),
                _fmt(c["delta"])]
        if c["status"] != "ok":
            w.writerow(base + ["failed", "", "", c["seed"]])
            continue
        for name, (value, err) in c["metrics"].items():
            w.writerow(base + [name, _fmt(value), _fmt(err), c["seed"]])
    return buf.getvalue()


def _clean(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.generic):
        return _clean(obj.item())
    return obj


def run_sweep(spec: ExperimentSpec, out_dir=None, threads: int = 1, fmt: str = "both") -> dict:
    """Run every cell; failures are recorded per cell and never abort the sweep."""
    cfg_hash = spec.config_hash()
    cells = enumerate_cells(spec)
    timings = {}
    for cell in cells:
        t0 = time.perf_counter()
        log.info("cell %d: %s", cell.index, cell.coords())
        try:
            run_cell(spec, cell, threads)
        except (GmmDdpmError, ValueError, FloatingPointError) as exc:
            cell.status = "failed"
            cell.error = f"{type(exc).__name__}: {exc} at {cell.coords()}"
            log.error("cell %d failed: %s", cell.index, cell.error)
        cell.wall_clock = time.perf_counter() - t0
        timings[f"{cfg_hash}-{cell.index:03d}"] = cell.wall_clock
    report = {
        "config_hash": cfg_hash,
        "config": spec.to_dict(),
        "axes": {k: v for k, v in spec.axes().items() if len(set(v)) > 1},
        "cells": [
            {"run_id": f"{cfg_hash}-{c.index:03d}", "index": c.index, **c.coords(),
             "seed": c.seed, "oracle": c.oracle, "status": c.status, "error": c.error,
             "metrics": {k: [v, e] for k, (v, e) in c.metrics.items()}, "probes": c.probes}
            for c in cells
        ],
        "fits": fit_axes(spec, cells),
        "failed": sum(c.status != "ok" for c in cells),
    }
    report = _clean(report)
    if out_dir is not None:
        write_report(report, out_dir, fmt, timings, serialize_config(spec))
    return report


def write_report(report: dict, out_dir, fmt="both", timings=None, config_text=None) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if fmt in ("csv", "both"):
        (out / "report.csv").write_text(report_csv(report))
    if fmt in ("json", "both"):
        (out / "report.json").write_text(json.dumps(report, indent=1, sort_keys=True) + "\n")
    if config_text is not None:
        (out / "config.resolved.toml").write_text(config_text)
    if timings is not None:
        (out / "timing.json").write_text(json.dumps(timings, indent=1) + "\n")
