"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--n 100000] [--repeat 3] [--json out.json]

Both backends receive identical inputs; their outputs are compared before timing.
"""

from __future__ import annotations

import argparse
import json
import sys
import time

import numpy as np

from gmmddpm import backend
from gmmddpm.gmm import new_gmm
from gmmddpm.oracles import exact_oracle, perturb_oracle
from gmmddpm.schedule import build_schedule

CASES = [(3, 2, False), (3, 2, True), (16, 8, False), (64, 8, False), (3, 128, False)]


def _plan(K, d, field):
    gen = np.random.default_rng(K * 1000 + d)
    g = new_gmm(np.full(K, 1 / K), 3 * gen.standard_normal((K, d)))
    s = build_schedule(64)
    o = exact_oracle(g, s)
    if field:
        o = perturb_oracle(o, "gaussian-field", 0.2, 1)
    return o.plan(32), s


def _best(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def run(n, repeat):
    if backend.compiled is None:
        print("compiled extension not available; nothing to compare", file=sys.stderr)
        return []
    kc, kp = backend.compiled, backend.python
    rows = []
    for K, d, field in CASES:
        p, s = _plan(K, d, field)
        args = (p.means, p.logw, p.omega, p.phase, p.coef, p.field_scale, p.clip_thresh)
        y0 = np.random.default_rng(0).normal(0, 2, (n, d))
        sc, sp = kc.score_batch(y0, *args), kp.score_batch(y0, *args)
        err = float(np.abs(sc - sp).max())

        def step(k):
            y = y0.copy()
            k.reverse_step(y, 0, 7, 32, 1 / np.sqrt(s.a(32)), s.oma(32), *args, 1)

        row = {"K": K, "d": d, "field": field, "n": n, "max_abs_diff": err}
        for name, k in (("cython", kc), ("python", kp)):
            row[f"score_{name}_s"] = _best(lambda: k.score_batch(y0, *args), repeat)
            row[f"step_{name}_s"] = _best(lambda: step(k), repeat)
        row["step_speedup"] = row["step_python_s"] / row["step_cython_s"]
        rows.append(row)
    return rows


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=100_000)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--json", default=None)
    args = ap.parse_args(argv)
    rows = run(args.n, args.repeat)
    print(f"{'K':>3} {'d':>4} {'field':>5} {'score cy':>9} {'score py':>9} "
          f"{'step cy':>9} {'step py':>9} {'speedup':>7} {'max diff':>9}")
    for r in rows:
        print(f"{r['K']:>3} {r['d']:>4} {str(r['field']):>5} {r['score_cython_s']:9.4f} "
              f"{r['score_python_s']:9.4f} {r['step_cython_s']:9.4f} {r['step_python_s']:9.4f} "
              f"{r['step_speedup']:7.2f} {r['max_abs_diff']:9.1e}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=1)


if __name__ == "__main__":
    main()
