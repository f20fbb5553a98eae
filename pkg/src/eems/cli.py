"""Command-line experiment runner.

Exit codes: 0 success, 2 configuration error, 3 runtime abort or failed check.
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from statistics import median

import tomli_w

from . import config as cfgmod
from .config import ConfigError
from .network import load_checkpoint
from .problems import PROBLEM_NAMES
from .training import SAMPLERS, run_sampler

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3

log = logging.getLogger("eems")


class UsageError(Exception):
    """Bad command line; mapped to the configuration exit code."""


def _parse_value(text):
    try:
        return cfgmod.tomllib.loads(f"v = {text}")["v"]
    except cfgmod.tomllib.TOMLDecodeError:
        return text


def _overrides(args):
    out = {}
    if getattr(args, "sampler", None):
        out["run.sampler"] = args.sampler
    if getattr(args, "seed", None) is not None:
        out["run.seed"] = args.seed
    if getattr(args, "rounds", None) is not None:
        out["run.rounds"] = args.rounds
    if getattr(args, "iters", None) is not None:
        for key in ("pretrain", "mesh", "retrain"):
            out[f"optimizer.{key}"] = args.iters
    if getattr(args, "out", None):
        out["run.out"] = args.out
    for item in getattr(args, "set", None) or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        out[key.strip()] = _parse_value(value.strip())
    return out


def load_config(args):
    if args.config:
        base = cfgmod.load(args.config)
        if args.problem and args.problem != base.problem.name:
            raise ConfigError(f"--problem {args.problem!r} conflicts with config problem {base.problem.name!r}")
    else:
        base = cfgmod.bundled(args.problem or "kg1d")
    return base.with_overrides(_overrides(args))


def run_dir(cfg, out=None):
    root = Path(out or cfg.run.out)
    return root / f"{cfg.problem.name}_{cfg.run.sampler}_s{cfg.run.seed}"


def execute(cfg, out_dir, plots=True):
    """Run one configured experiment and write its report; returns ``(report, paths)``."""
    from .report import write_report

    problem = cfg.build_problem()
    t0 = time.perf_counter()
    report = run_sampler(problem, cfg.pipeline(), cfg.run.sampler, seed=cfg.run.seed)
    report.info["seconds"] = time.perf_counter() - t0
    out_dir = Path(out_dir)
    paths = write_report(report, out_dir, plots=plots)
    (out_dir / "config.toml").write_text(cfg.dumps())
    return report, paths


def _fmt(v):
    return "n/a" if v is None else f"{v:.3e}"


# --------------------------------------------------------------------------
# subcommands


def cmd_run(args):
    cfg = load_config(args)
    out = run_dir(cfg)
    report, _ = execute(cfg, out, plots=not args.no_plots)
    print(
        f"{cfg.problem.name} {cfg.run.sampler} seed={cfg.run.seed}: "
        f"relative L2 {_fmt(report.relative_l2)}, max energy error {_fmt(report.max_energy_error)}, "
        f"{report.info['seconds']:.1f}s -> {out}"
    )
    if report.aborted:
        print(f"run aborted: {report.aborted}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def _compare_one(job):
    text, sampler, seed, out, plots = job
    cfg = cfgmod.parse(text).with_overrides({"run.sampler": sampler, "run.seed": seed})
    report, _ = execute(cfg, run_dir(cfg, out), plots=plots)
    return sampler, seed, report.relative_l2, report.max_energy_error, report.aborted


def comparison_rows(results, n_interior):
    """One row per run plus a median row per sampler (``seed = "median"``)."""
    rows = []
    samplers = []
    for sampler, seed, l2, dh, aborted in results:
        rows.append([sampler, seed, n_interior, l2, dh, aborted or ""])
        if sampler not in samplers:
            samplers.append(sampler)
    for s in samplers:
        l2s = [r[2] for r in results if r[0] == s and r[2] is not None]
        dhs = [r[3] for r in results if r[0] == s and r[3] is not None]
        rows.append([s, "median", n_interior, median(l2s) if l2s else None, median(dhs) if dhs else None, ""])
    return rows


def cmd_compare(args):
    cfg = load_config(args)
    samplers = [s.strip() for s in args.samplers.split(",") if s.strip()]
    seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
    if not samplers or not seeds:
        raise ConfigError("compare needs at least one sampler and one seed")
    for s in samplers:
        if s not in SAMPLERS:
            raise ConfigError(f"unknown sampler {s!r}")
    out = Path(cfg.run.out)
    text = cfg.dumps()
    jobs = [(text, s, seed, str(out), not args.no_plots) for s in samplers for seed in seeds]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_compare_one, jobs))
    else:
        results = [_compare_one(j) for j in jobs]
    rows = comparison_rows(results, cfg.points.interior)
    out.mkdir(parents=True, exist_ok=True)
    table = out / f"compare_{cfg.problem.name}.csv"
    with open(table, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["sampler", "seed", "n_interior", "relative_l2", "max_energy_error", "aborted"])
        w.writerows(rows)
    for r in rows:
        print(f"{r[0]:>8} {str(r[1]):>6}  L2 {_fmt(r[3])}  dH {_fmt(r[4])}")
    print(f"table -> {table}")
    return EXIT_RUNTIME if any(r[4] for r in results) else EXIT_OK


def cmd_check(args):
    from .checks import run_checks, summarize

    kw = {"cases": args.cases} if args.target == "grad" else {}
    results = run_checks(args.target, **kw)
    for r in results:
        print(r.line())
    return EXIT_OK if summarize(results) else EXIT_RUNTIME


def cmd_mesh_only(args):
    from .report import ReportError
    from .sampling import EnergyMonitor, MeshMap, density_monitor_correlation, map_points, train_mesh
    from .sampling import uniform_points, write_mesh_csv, write_points_csv

    cfg = load_config(args)
    problem = cfg.build_problem()
    try:
        net = load_checkpoint(args.checkpoint)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot load checkpoint: {exc}") from exc
    if net.in_dim != problem.dim + 1 or net.out_dim != problem.n_components:
        raise ConfigError(f"checkpoint shape {net.widths} does not fit problem {problem.name!r}")
    pc = cfg.pipeline()
    pts = uniform_points(problem.domain, pc.n_interior, pc.n_initial, pc.n_boundary, pc.layout, cfg.run.seed)
    monitor = EnergyMonitor(problem, net, c_min=pc.emm.c_min).calibrate()
    mesh = MeshMap(problem.domain, pc.mesh_hidden, pc.normalizer, seed=cfg.run.seed)
    o = pc.optimizer
    res = train_mesh(mesh, monitor, pts, o.mesh, o.adam_lr, o.lbfgs_lr, o.adam_fraction, pc.emm)
    mapped = map_points(res.mesh, pts)
    out = Path(cfg.run.out) / f"{problem.name}_mesh_s{cfg.run.seed}"
    try:
        out.mkdir(parents=True, exist_ok=True)
        write_points_csv(mapped, out / "points_mapped.csv")
        write_mesh_csv(res.mesh, [0.0, problem.domain.T / 2, problem.domain.T], out / "mesh.csv",
                       resolution=101 if problem.dim == 1 else 41)
        res.mesh.save(out / "mesh.ckpt")
    except OSError as exc:
        raise ReportError(f"cannot write mesh artifacts under {out}: {exc}") from exc
    rho = density_monitor_correlation(res.mesh, monitor, mapped.interior)
    final = res.history[-1][0] if res.history else float("nan")
    print(f"mesh loss {final:.3e}, density-monitor correlation {rho:.3f} -> {out}")
    return EXIT_OK


def cmd_show_config(args):
    cfg = load_config(args)
    sys.stdout.write(tomli_w.dumps(cfg.to_dict()))
    return EXIT_OK


# --------------------------------------------------------------------------
# parser


def _common(p, sampler=True):
    p.add_argument("--config", help="TOML configuration file (default: bundled config of --problem)")
    p.add_argument("--problem", choices=PROBLEM_NAMES, help="benchmark name")
    if sampler:
        p.add_argument("--sampler", choices=sorted(SAMPLERS))
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output root directory")
    p.add_argument("--iters", type=int, help="set every phase budget (pretrain, mesh, retrain) to N")
    p.add_argument("--rounds", type=int, help="mesh-move rounds")
    p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE", help="override any config key")
    p.add_argument("--no-plots", action="store_true", help="write CSVs only")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser():
    parser = _Parser(prog="eems", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("run", help="run one sampler pipeline and write its report")
    _common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("compare", help="run several samplers and seeds; write a comparison table")
    _common(p, sampler=False)
    p.add_argument("--samplers", default="uniform,eems")
    p.add_argument("--seeds", default="0,1,2,3,4")
    p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("check", help="run a self-check suite")
    p.add_argument("target", choices=["grad", "energy", "mesh"])
    p.add_argument("--cases", type=int, default=100, help="random cases per benchmark (grad)")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("mesh-only", help="train a mesh against a stored solution checkpoint")
    _common(p, sampler=False)
    p.add_argument("--checkpoint", required=True)
    p.set_defaults(func=cmd_mesh_only)

    p = sub.add_parser("show-config", help="print the effective configuration")
    _common(p)
    p.set_defaults(func=cmd_show_config)
    return parser


def main(argv=None):
    threads = os.environ.get("EEMS_THREADS")
    if threads:
        import torch

        torch.set_num_threads(max(1, int(threads)))
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # runtime failures map to a stable exit code
        log.debug("run failed", exc_info=True)
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
