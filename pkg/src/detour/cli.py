"""Command-line interface: ``detour solve|verify|bounds|ratio``."""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Callable, Iterable, Iterator, Sequence, TextIO

from detour import bounds
from detour.mechanisms import Mechanism, UnsupportedRegime, get_mechanism
from detour.model import DEFAULT_EPS, Edge, Instance, InstanceError, Lottery, ParseError, parse_instance, serialize_instance
from detour.verify import (
    DEFAULT_TOL,
    Objective,
    PeakCounterexample,
    Violation,
    check_incentives,
    check_monotone,
    check_single_peaked,
    corpus,
    evaluate,
    optimum,
    worst_ratio_search,
)

EXIT_OK = 0
EXIT_VIOLATION = 1
EXIT_USAGE = 2
EXIT_PARSE = 3
EXIT_REGIME = 4

WORKERS_ENV = "DETOUR_WORKERS"


@dataclass(frozen=True)
class RunConfig:
    seed: int = 42
    workers: int = 1
    tol: float = DEFAULT_TOL
    eps: float = DEFAULT_EPS
    output: str | None = None


class UsageError(Exception):
    pass


def _f(v: float) -> str:
    return f"{v:.6f}"


def _short(v: float) -> str:
    s = f"{v:.6f}".rstrip("0").rstrip(".")
    return s if s not in ("", "-0") else "0"


def config_from(args: argparse.Namespace) -> RunConfig:
    workers = args.workers
    env = os.environ.get(WORKERS_ENV)
    if env:
        try:
            workers = int(env)
        except ValueError:
            raise UsageError(f"{WORKERS_ENV} must be an integer, got {env!r}") from None
    if workers < 1:
        raise UsageError(f"workers must be >= 1, got {workers}")
    if not 0 <= args.seed < 2**64:
        raise UsageError(f"seed must be a 64-bit unsigned integer, got {args.seed}")
    return RunConfig(seed=args.seed, workers=workers, tol=args.tol, eps=args.eps, output=args.output)


@contextmanager
def _ordered_map(workers: int) -> Iterator[Callable[[Callable, Iterable], Iterable]]:
    """Ordered map, in-process for one worker and over a process pool otherwise."""
    if workers == 1:
        yield map
        return
    with ProcessPoolExecutor(max_workers=workers) as pool:
        yield lambda fn, items: pool.map(fn, items, chunksize=1)


@contextmanager
def _sink(cfg: RunConfig) -> Iterator[TextIO]:
    if cfg.output is None:
        yield sys.stdout
        return
    with open(cfg.output, "w", encoding="utf-8", newline="\n") as fh:
        yield fh


def _load(path: str) -> Instance:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc.strerror}") from None
    return parse_instance(text)


def _mechanism(name: str) -> Mechanism:
    try:
        return get_mechanism(name)
    except KeyError as exc:
        raise UsageError(exc.args[0]) from None


def _format_outcome(out: Edge | Lottery) -> str:
    if isinstance(out, Edge):
        return f"edge {_f(out.a)} {_f(out.b)}"
    parts = [f"({_short(e.a)},{_short(e.b)})@{_f(p)}" for e, p in out.support]
    return "lottery " + " ".join(parts)


# -- solve --------------------------------------------------------------------------------


def cmd_solve(args: argparse.Namespace, cfg: RunConfig) -> int:
    mech = _mechanism(args.mechanism)
    inst = _load(args.input)
    obj = Objective.parse(args.objective)
    out = mech(inst)
    value = evaluate(out, inst, obj)
    _, opt = optimum(inst, obj)
    lines = [
        f"mechanism {mech.name}",
        _format_outcome(out),
        f"objective {obj.value}",
        f"value {_f(value)}",
        f"optimum {_f(opt)}",
        f"ratio {_f(value / opt) if opt > 1e-12 else 'undefined'}",
    ]
    with _sink(cfg) as fh:
        fh.write("\n".join(lines) + "\n")
    return EXIT_OK


# -- verify ---------------------------------------------------------------------------------


def _peak_row(c: PeakCounterexample) -> str:
    inst = c.instance
    return ",".join([
        "-", "peaked", _f(inst.k), _f(inst.o), _f(inst.L),
        " ".join(_f(v) for v in inst.left), " ".join(_f(v) for v in inst.right),
        f"{c.side.value}:{c.index}",
        " ".join(_f(v) for v in (c.alpha.a, c.alpha.b, c.beta.a, c.beta.b)),
        " ".join(_f(v) for v in (c.cost_alpha, c.cost_beta)),
    ])


def _verify_one(task: tuple) -> str | None:
    mode, name, inst, opts = task
    if mode == "peaked":
        c = check_single_peaked(inst, samples=opts["samples"], seed=opts["seed"])
        return None if c is None else _peak_row(c)
    mech = get_mechanism(name)
    if mode == "mono":
        v = check_monotone(mech, inst, moves=opts["moves"], tol=opts["tol"], seed=opts["seed"])
    else:
        v = check_incentives(
            mech, inst, coalition_size=opts["coalition"], resolution=opts["grid"], tol=opts["tol"],
            cross_region=opts["cross_region"], samples=opts["samples"] or None, seed=opts["seed"],
        )
    return None if v is None else v.csv_row()


def cmd_verify(args: argparse.Namespace, cfg: RunConfig) -> int:
    mode = args.mode
    name = args.mechanism
    mech = None
    if mode != "peaked":
        if name is None:
            raise UsageError(f"verify {mode} requires -m/--mechanism")
        mech = _mechanism(name)
        if mode == "mono" and mech.randomized:
            raise UsageError(f"{mech.name} is randomized; mono applies to deterministic mechanisms")
    if args.trials < 1 or args.grid < 1:
        raise UsageError("--trials and --grid must be positive")
    coalition = args.coalition if args.coalition is not None else (2 if mode == "gsp" else 1)
    if not 1 <= coalition <= 3:
        raise UsageError(f"--coalition must be 1, 2 or 3, got {coalition}")
    point_only = mech is not None and mech.point_obstacle_only
    if args.input is not None:
        instances = [_load(args.input)]
        if point_only and instances[0].L != 0.0:
            raise UnsupportedRegime(f"{mech.name} is only defined for L = 0 (got L={instances[0].L!r})")
    else:
        instances = corpus(cfg.seed, args.trials, L=0.0 if point_only else None)
    tasks = []
    for i, inst in enumerate(instances):
        opts = {
            "coalition": coalition, "grid": args.grid, "tol": cfg.tol, "cross_region": args.cross_region,
            "samples": args.samples, "moves": args.moves, "seed": cfg.seed + i,
        }
        tasks.append((mode, mech.name if mech else None, inst, opts))
    with _ordered_map(cfg.workers) as pmap:
        rows = [r for r in pmap(_verify_one, tasks) if r is not None]
    with _sink(cfg) as fh:
        fh.write(Violation.CSV_HEADER + "\n")
        for r in rows:
            fh.write(r + "\n")
    print(f"{len(rows)} violation(s) in {len(instances)} instance(s)", file=sys.stderr)
    return EXIT_VIOLATION if rows else EXIT_OK


# -- bounds ------------------------------------------------------------------------------------

TABLE_HEADER = "k,raw,safe,analytic,grid_n,o_mode"


def _table_row(task: tuple) -> str:
    k, grid_n, o_mode, eps = task
    rec = bounds.b_of_k(k, grid_n, o_mode, eps)
    return ",".join([_f(rec.k), _f(rec.raw), _f(rec.safe), _f(rec.analytic), str(rec.grid_n), rec.o_mode])


def _curve_row(task: tuple) -> str:
    k, L, with_lb, grid_n, eps = task
    vals = [p.value for p in bounds.curve_row(k, L)]
    cols = [_f(k)] + [_f(v) for v in vals[:3]]
    if with_lb:
        cols.append(_f(bounds.b_of_k(k, grid_n, "fixed05", eps).safe))
    cols += [_f(v) for v in vals[3:]]
    return ",".join(cols)


def _ks(args: argparse.Namespace, start: float, end: float) -> list[float]:
    try:
        return bounds.k_range(start, end, args.k_step)
    except (ValueError, InstanceError) as exc:
        raise UsageError(str(exc)) from None


def cmd_bounds(args: argparse.Namespace, cfg: RunConfig) -> int:
    if getattr(args, "grid", 2) < 2:
        raise UsageError("--grid must be >= 2")
    if args.what == "table":
        ks = _ks(args, args.k_start, args.k_end)
        tasks = [(k, args.grid, args.o_mode, cfg.eps) for k in ks]
        header, fn = TABLE_HEADER, _table_row
    elif args.what == "curves":
        if not 0.0 <= args.L < 1.0:
            raise UsageError(f"--L must be in [0, 1), got {args.L}")
        if args.L != 0.0:
            raise UnsupportedRegime("curves other than two_extreme are only defined for L = 0")
        ks = _ks(args, 0.0, 1.0 - args.k_step)
        cols = ["k", "two_extreme", "restrict", "det_lb"]
        if args.with_computer_lb:
            cols.append("computer_lb_safe")
        header = ",".join(cols + ["rand_upper", "rand_lb"])
        tasks = [(k, args.L, args.with_computer_lb, args.grid, cfg.eps) for k in ks]
        fn = _curve_row
    else:
        if args.k_step > 1e-3:
            raise UsageError(f"--k-step must be <= 0.001 for gaps, got {args.k_step}")
        with _ordered_map(cfg.workers) as pmap:
            g = bounds.gap_stats(args.k_step, args.grid, mapper=pmap)
        with _sink(cfg) as fh:
            fh.write("det_gap,det_argk,rand_gap,rand_argk\n")
            fh.write(",".join(_f(v) for v in (g.det_gap, g.det_argk, g.rand_gap, g.rand_argk)) + "\n")
        return EXIT_OK
    with _ordered_map(cfg.workers) as pmap:
        rows = list(pmap(fn, tasks))
    with _sink(cfg) as fh:
        fh.write(header + "\n")
        for r in rows:
            fh.write(r + "\n")
    return EXIT_OK


# -- ratio ----------------------------------------------------------------------------------------


def cmd_ratio(args: argparse.Namespace, cfg: RunConfig) -> int:
    mech = _mechanism(args.mechanism)
    if not 0.0 <= args.k < 1.0:
        raise UsageError(f"--k must be in [0, 1), got {args.k}")
    if not 0.0 <= args.L < 1.0:
        raise UsageError(f"--L must be in [0, 1), got {args.L}")
    if args.budget < 1:
        raise UsageError("--budget must be >= 1")
    obj = Objective.parse(args.objective)
    rep = worst_ratio_search(mech, obj, args.k, args.L, args.budget, cfg.seed)
    bound = bounds.mechanism_bound(mech.name, args.k, args.L) if obj is Objective.MC else None
    lines = [
        f"mechanism {rep.mechanism}",
        f"objective {obj.value}",
        f"k {_f(args.k)}",
        f"L {_f(args.L)}",
        f"worst {_f(rep.worst_ratio)}",
        f"bound {_f(bound) if bound is not None else 'none'}",
        f"mech_value {_f(rep.mech_value)}",
        f"opt_value {_f(rep.opt_value)}",
        "witness",
        serialize_instance(rep.witness).rstrip("\n"),
    ]
    with _sink(cfg) as fh:
        fh.write("\n".join(lines) + "\n")
    return EXIT_OK


# -- parser -----------------------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=42, help="random seed (default 42)")
    common.add_argument("--workers", type=int, default=1, help=f"worker processes; {WORKERS_ENV} overrides")
    common.add_argument("--tol", type=float, default=DEFAULT_TOL, help="violation tolerance (default 1e-9)")
    common.add_argument("--eps", type=float, default=DEFAULT_EPS, help="limit offset (default 1e-6)")
    common.add_argument("-o", "--output", default=None, help="write results to this file instead of stdout")

    p = argparse.ArgumentParser(prog="detour", description="Pathway mechanisms around an obstacle.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", parents=[common], help="run a mechanism on an instance file")
    s.add_argument("-m", "--mechanism", required=True)
    s.add_argument("-i", "--input", required=True)
    s.add_argument("--objective", choices=("sc", "mc"), default="mc")
    s.set_defaults(func=cmd_solve)

    v = sub.add_parser("verify", parents=[common], help="fuzz incentive and structural properties")
    v.add_argument("mode", choices=("sp", "gsp", "mono", "peaked"))
    v.add_argument("-m", "--mechanism")
    v.add_argument("-i", "--input", help="check this instance instead of random trials")
    v.add_argument("--trials", type=int, default=100)
    v.add_argument("--grid", type=int, default=200, help="misreport grid points per region")
    v.add_argument("--coalition", type=int, default=None, help="coalition size (sp: 1, gsp: 2)")
    v.add_argument("--cross-region", action="store_true", help="allow misreports in the other region")
    v.add_argument("--samples", type=int, default=0, help="random misreport tuples per coalition (0: full grid)")
    v.add_argument("--moves", type=int, default=20, help="random moves per instance for mono")
    v.set_defaults(func=cmd_verify)

    b = sub.add_parser("bounds", help="ratio curves and the computed lower bound")
    bsub = b.add_subparsers(dest="what", required=True)
    t = bsub.add_parser("table", parents=[common])
    t.add_argument("--k-start", type=float, default=0.0)
    t.add_argument("--k-end", type=float, default=0.99)
    t.add_argument("--k-step", type=float, default=0.01)
    t.add_argument("--grid", type=int, default=bounds.DEFAULT_GRID)
    t.add_argument("--o-mode", choices=("fixed05", "sweep"), default="fixed05")
    c = bsub.add_parser("curves", parents=[common])
    c.add_argument("--k-step", type=float, default=0.001)
    c.add_argument("--L", type=float, default=0.0)
    c.add_argument("--with-computer-lb", action="store_true")
    c.add_argument("--grid", type=int, default=bounds.DEFAULT_GRID)
    g = bsub.add_parser("gaps", parents=[common])
    g.add_argument("--k-step", type=float, default=0.001)
    g.add_argument("--grid", type=int, default=bounds.DEFAULT_GRID)
    b.set_defaults(func=cmd_bounds)

    r = sub.add_parser("ratio", parents=[common], help="adversarial worst-ratio search")
    r.add_argument("-m", "--mechanism", required=True)
    r.add_argument("--objective", choices=("sc", "mc"), default="mc")
    r.add_argument("--k", type=float, default=0.0)
    r.add_argument("--L", type=float, default=0.0)
    r.add_argument("--budget", type=int, default=10_000)
    r.set_defaults(func=cmd_ratio)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = config_from(args)
        return args.func(args, cfg)
    except UsageError as exc:
        print(f"detour: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ParseError as exc:
        print(f"detour: parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except UnsupportedRegime as exc:
        print(f"detour: unsupported: {exc}", file=sys.stderr)
        return EXIT_REGIME
    except InstanceError as exc:
        print(f"detour: invalid input: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
