"""Command-line front end.

    cxquant [--out DIR] [--seed S] [--grid M] example K [--levels N ...] [--coupling left|right|optimal]
    cxquant [--out DIR] quantise COUPLING.json PARTITIONS.json
    cxquant [--out DIR] mot MU.json NU.json --cost power:RHO[:percoord]
    cxquant [--out DIR] ot MU.json NU.json --cost power:RHO[:percoord]
    cxquant [--out DIR] check-order MU.json NU.json

Exit status: 0 success, 2 usage, schema or I/O error, 3 convex-order violation,
4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

from .jsonio import (
    SchemaViolation,
    coupling_from_json,
    coupling_to_json,
    load_json,
    measure_from_json,
    measure_to_json,
    partitions_from_json,
)
from .lp import LpNumericalError
from .measures import MeasureError, PartitionError, PowerDistance

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_ORDER = 3
EXIT_NUMERICAL = 4


class UsageError(Exception):
    pass


def _real(v: float):
    return None if math.isinf(v) else float(v)


def _read(path: str):
    try:
        return load_json(path)
    except OSError as exc:
        raise UsageError(f"{path}: {exc.strerror or exc}") from exc
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: invalid JSON ({exc})") from exc


def _load(path: str, parse):
    doc = _read(path)
    try:
        return parse(doc)
    except SchemaViolation as exc:
        raise UsageError(f"{path}: {exc}") from exc


def _write(out: Path, name: str, text: str) -> Path:
    try:
        out.mkdir(parents=True, exist_ok=True)
        path = out / name
        path.write_text(text)
    except OSError as exc:
        raise UsageError(f"{out / name}: {exc.strerror or exc}") from exc
    return path


def _emit(args, name: str, doc) -> None:
    text = json.dumps(doc, indent=1) + "\n"
    if args.out is None:
        sys.stdout.write(text)
    else:
        print(_write(Path(args.out), name, text))


def _cost(spec: str) -> PowerDistance:
    try:
        return PowerDistance.parse(spec)
    except ValueError as exc:
        raise UsageError(f"--cost {spec!r}: {exc}") from exc


def cmd_example(args) -> int:
    from .experiments import DEFAULT_LEVELS, run_example

    levels = args.levels or DEFAULT_LEVELS[args.k]
    run = run_example(args.k, levels, grid=args.grid, seed=args.seed, coupling=args.coupling)
    out = Path(args.out or ".")
    values = run.table.to_csv()
    _write(out, "values.csv", values)
    _write(out, "heatmap.csv", run.heatmap_csv())
    sys.stdout.write(values)
    if run.table.violations:
        for v in run.table.violations:
            print(f"warning: {v}", file=sys.stderr)
    return EXIT_OK


def cmd_quantise(args) -> int:
    from .quantise import barycentric_quantise

    pi = _load(args.coupling, coupling_from_json)
    parts = _load(args.partitions, partitions_from_json)
    if len(parts) != 2:
        raise UsageError(f"{args.partitions}: expected an array of two partitions, got {len(parts)}")
    try:
        q = barycentric_quantise(pi, parts[0], parts[1], p=args.p)
    except PartitionError as exc:
        raise UsageError(f"{args.partitions}: {exc}") from exc
    _emit(args, "quantised.json", {
        "mu_n": measure_to_json(q.mu_n),
        "nu_n": measure_to_json(q.nu_n),
        "coupling_n": coupling_to_json(q.coupling_n),
        "bound_mu": _real(q.bound_mu),
        "bound_nu": _real(q.bound_nu),
    })
    return EXIT_OK


def _pair(args):
    mu = _load(args.mu, measure_from_json)
    nu = _load(args.nu, measure_from_json)
    if mu.d != nu.d:
        raise UsageError(f"{args.mu} has d = {mu.d} but {args.nu} has d = {nu.d}")
    return mu, nu


def cmd_mot(args) -> int:
    from .mot import solve_discrete_mot

    mu, nu = _pair(args)
    sol = solve_discrete_mot(mu, nu, _cost(args.cost))
    if not sol.in_order:
        print(f"{args.mu} is not below {args.nu} in convex order", file=sys.stderr)
        return EXIT_ORDER
    _emit(args, "mot.json", {"value": sol.value, "coupling": coupling_to_json(sol.coupling)})
    return EXIT_OK


def cmd_ot(args) -> int:
    from .mot import solve_discrete_ot

    mu, nu = _pair(args)
    value, pi = solve_discrete_ot(mu, nu, _cost(args.cost))
    _emit(args, "ot.json", {"value": value, "coupling": coupling_to_json(pi)})
    return EXIT_OK


def cmd_check_order(args) -> int:
    from .jsonio import dump_json
    from .mot import check_convex_order

    mu, nu = _pair(args)
    ok, witness = check_convex_order(mu, nu)
    if not ok:
        print("not in convex order")
        return EXIT_ORDER
    out = Path(args.out or ".")
    path = out / "witness.json"
    try:
        out.mkdir(parents=True, exist_ok=True)
        dump_json(coupling_to_json(witness), path)
    except OSError as exc:
        raise UsageError(f"{path}: {exc.strerror or exc}") from exc
    print(path)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    def global_flags(parser, default):
        parser.add_argument("--out", metavar="DIR", default=default(None),
                            help="output directory (JSON results go to stdout when omitted)")
        parser.add_argument("--seed", type=int, default=default(0), help="seed for Lloyd initialisation")
        parser.add_argument("--grid", metavar="M", type=int, default=default(None),
                            help="quadrature nodes per axis for the example inputs")

    ap = argparse.ArgumentParser(prog="cxquant", description=__doc__.split("\n")[0])
    global_flags(ap, lambda v: v)
    # the same flags are accepted after the subcommand; there they only override
    common = argparse.ArgumentParser(add_help=False)
    global_flags(common, lambda v: argparse.SUPPRESS)
    sub = ap.add_subparsers(dest="command", required=True)

    ex = sub.add_parser("example", parents=[common], help="run a worked example and write values.csv and heatmap.csv")
    ex.add_argument("k", type=int, choices=(1, 2, 3))
    ex.add_argument("--levels", type=int, nargs="+", metavar="N")
    ex.add_argument("--coupling", choices=("left", "right", "optimal"), default="left",
                    help="input transport for example 1")
    ex.set_defaults(func=cmd_example)

    qu = sub.add_parser("quantise", parents=[common], help="barycentric quantisation of a coupling")
    qu.add_argument("coupling")
    qu.add_argument("partitions", help="JSON array [P1, P2]")
    qu.add_argument("--p", type=float, default=1.0, help="order of the Wasserstein bound")
    qu.set_defaults(func=cmd_quantise)

    for name, func, text in (("mot", cmd_mot, "martingale optimal transport"), ("ot", cmd_ot, "optimal transport")):
        sp = sub.add_parser(name, parents=[common], help=text)
        sp.add_argument("mu")
        sp.add_argument("nu")
        sp.add_argument("--cost", required=True, metavar="power:RHO[:percoord]")
        sp.set_defaults(func=func)

    co = sub.add_parser("check-order", parents=[common], help="decide mu <=cx nu and write a martingale witness")
    co.add_argument("mu")
    co.add_argument("nu")
    co.set_defaults(func=cmd_check_order)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    if args.grid is not None and args.grid < 1:
        print("cxquant: --grid must be positive", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except (UsageError, MeasureError) as exc:
        print(f"cxquant: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except LpNumericalError as exc:
        print(f"cxquant: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
