"""Command line entry point: ``gmmddpm {sample,sweep,probe,score-error,chart}``."""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path

from .batch import write_batch_csv
from .config import build_target_gmm, parse_config, serialize_config
from .errors import GmmDdpmError
from .experiment import _clean, build_oracle, derive_seed, enumerate_cells, run_probes, run_sweep
from .oracles import measure_score_error
from .sampler import contaminate_target, ddpm_sample
from .schedule import build_schedule

log = logging.getLogger("gmmddpm")

EXIT_OK, EXIT_USAGE, EXIT_FAILED = 0, 1, 2


def _setup_logging():
    level = os.environ.get("GMMDDPM_LOG", "error").upper()
    logging.basicConfig(level=getattr(logging, level, logging.ERROR),
                        format="%(levelname)s %(name)s: %(message)s")


def _load(args):
    spec = parse_config(args.config)
    if args.seed is not None:
        spec = dataclasses.replace(spec, seed=args.seed)
    return spec


def _out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_sweep(args) -> int:
    spec = _load(args)
    report = run_sweep(spec, _out(args), threads=args.threads, fmt=args.format)
    print(f"{len(report['cells'])} cells, {report['failed']} failed -> {args.out}")
    return EXIT_FAILED if report["failed"] else EXIT_OK


def _pick_cell(spec, index):
    cells = enumerate_cells(spec)
    if not 0 <= index < len(cells):
        raise GmmDdpmError(f"cell index {index} out of range (grid has {len(cells)} cells)")
    return cells[index]


def cmd_sample(args) -> int:
    spec = _load(args)
    cell = _pick_cell(spec, args.cell)
    gmm = build_target_gmm(spec, cell.K, cell.d)
    sched = build_schedule(cell.T, spec.schedule.c0, spec.schedule.c1)
    oracle = build_oracle(spec, gmm, sched, cell.amplitude)
    traj = ddpm_sample(oracle, sched, cell.d, spec.n, cell.seed, record=[], threads=args.threads)
    path = _out(args) / "samples.csv"
    write_batch_csv(traj.output, path)
    (path.parent / "config.resolved.toml").write_text(serialize_config(spec))
    print(f"wrote {traj.output.n} samples (d={cell.d}, T={cell.T}) to {path}")
    return EXIT_OK


def _per_cell(spec, fn):
    rows, failed = [], 0
    for cell in enumerate_cells(spec):
        try:
            rows.append({**cell.coords(), "seed": cell.seed, **fn(cell)})
        except (GmmDdpmError, ValueError) as exc:
            failed += 1
            log.error("cell %d failed: %s", cell.index, exc)
            rows.append({**cell.coords(), "seed": cell.seed, "status": "failed",
                         "error": f"{type(exc).__name__}: {exc}"})
    return rows, failed


def cmd_probe(args) -> int:
    spec = _load(args)

    def one(cell):
        gmm = build_target_gmm(spec, cell.K, cell.d)
        sched = build_schedule(cell.T, spec.schedule.c0, spec.schedule.c1)
        return {"probes": run_probes(spec, gmm, sched, cell)}

    rows, failed = _per_cell(spec, one)
    (_out(args) / "probes.json").write_text(json.dumps(_clean(rows), indent=1, sort_keys=True) + "\n")
    print(f"probed {len(rows)} cells, {failed} failed -> {args.out}")
    return EXIT_FAILED if failed else EXIT_OK


def cmd_score_error(args) -> int:
    spec = _load(args)

    def one(cell):
        gmm = build_target_gmm(spec, cell.K, cell.d)
        target = contaminate_target(gmm, cell.delta, {"mean": spec.target.contaminant_mean,
                                                       "scale": spec.target.contaminant_scale})
        sched = build_schedule(cell.T, spec.schedule.c0, spec.schedule.c1)
        oracle = build_oracle(spec, gmm, sched, cell.amplitude)
        rep = measure_score_error(oracle, gmm, sched, spec.metrics.score_error_n,
                                  derive_seed(cell.seed, 0x5C0), target=target)
        return rep.to_dict()

    rows, failed = _per_cell(spec, one)
    (_out(args) / "score_error.json").write_text(json.dumps(_clean(rows), indent=1, sort_keys=True) + "\n")
    print(f"measured {len(rows)} cells, {failed} failed -> {args.out}")
    return EXIT_FAILED if failed else EXIT_OK


def cmd_chart(args) -> int:
    from .charts import render_charts

    report_path = Path(args.report)
    if report_path.is_dir():
        report_path = report_path / "report.json"
    report = json.loads(report_path.read_text())
    paths = render_charts(report, args.out)
    for p in paths:
        print(p)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gmmddpm", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=True):
        if config:
            sp.add_argument("--config", required=True, help="TOML experiment config")
            sp.add_argument("--seed", type=int, default=None, help="override the config seed")
            sp.add_argument("--threads", type=int, default=1, help="worker threads (speed only)")
        sp.add_argument("--out", default="out", help="output directory")

    sp = sub.add_parser("sweep", help="run the full parameter grid")
    common(sp)
    sp.add_argument("--format", choices=("csv", "json", "both"), default="both")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("sample", help="run one cell and dump its samples")
    common(sp)
    sp.add_argument("--cell", type=int, default=0, help="grid index of the cell")
    sp.set_defaults(func=cmd_sample)

    sp = sub.add_parser("probe", help="typical-set, trace and clip probes only")
    common(sp)
    sp.set_defaults(func=cmd_probe)

    sp = sub.add_parser("score-error", help="measure score error of the configured oracle")
    common(sp)
    sp.set_defaults(func=cmd_score_error)

    sp = sub.add_parser("chart", help="render SVG charts from a report")
    sp.add_argument("--report", required=True, help="report.json or the directory holding it")
    common(sp, config=False)
    sp.set_defaults(func=cmd_chart)
    return p


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    if getattr(args, "threads", 1) < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    if getattr(args, "seed", None) is not None and not 0 <= args.seed < 2 ** 64:
        print("error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except GmmDdpmError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
