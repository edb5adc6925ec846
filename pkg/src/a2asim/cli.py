"""Command-line harness.

Subcommands:
  validate    oracle-check every algorithm over a desk-scale grid
  run         one configuration -> CSV row (+ optional phase breakdown)
  sweep       full grid -> CSV file, optionally with SVG plots
  plot        re-render plots from an existing sweep CSV

Exit codes: 0 success, 1 correctness failure, 2 usage or config error.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .algorithms import CorrectnessError
from .costmodel import default_params, load_params
from .harness import (
    CLI_NAMES,
    CSV_HEADER,
    DEFAULT_MEM_BUDGET,
    SweepConfig,
    evaluate_point,
    format_breakdown,
    run_sweep,
    validate,
    write_csv,
)
from .topology import Topology, TopologyError
from .vcomm import ScheduleError


def _int_list(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def _alg_list(text: str) -> list[str]:
    out = []
    for name in text.split(","):
        name = name.strip()
        if not name:
            continue
        if name not in CLI_NAMES:
            raise argparse.ArgumentTypeError(
                f"unknown algorithm {name!r}; choose from {', '.join(CLI_NAMES)}")
        out.append(CLI_NAMES[name])
    return out


def _add_mode_flags(p: argparse.ArgumentParser) -> None:
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--seed-check", dest="mode", action="store_const",
                      const="payload",
                      help="force seeded payload execution and oracle check")
    mode.add_argument("--trace-only", dest="mode", action="store_const",
                      const="trace",
                      help="force structural execution (counts only)")
    p.set_defaults(mode="auto")
    p.add_argument("--mem-budget", type=int, default=DEFAULT_MEM_BUDGET,
                   help="max simulated bytes before a point falls back to "
                        "trace-only (default %(default)s)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="a2asim",
        description="deterministic all-to-all exchange simulator")
    sub = ap.add_subparsers(dest="command", required=True)

    v = sub.add_parser("validate", help="oracle-check the algorithm grid")
    v.add_argument("--max-nodes", type=int, default=4)
    v.add_argument("--max-ppn", type=int, default=8)
    v.add_argument("--max-bytes", type=int, default=64)
    v.add_argument("--random", type=int, default=100,
                   help="extra randomized configurations (default 100)")
    v.add_argument("--seed", type=int, default=0)

    r = sub.add_parser("run", help="simulate one configuration")
    r.add_argument("--alg", required=True, choices=sorted(CLI_NAMES))
    r.add_argument("--impl", choices=("pairwise", "nonblocking"),
                   default="pairwise")
    r.add_argument("--nodes", type=int, required=True)
    r.add_argument("--ppn", type=int, required=True)
    r.add_argument("--bytes", type=int, required=True, dest="block_bytes")
    r.add_argument("--group-size", "--procs-per-leader", type=int,
                   default=None, dest="group_size",
                   help="ranks per aggregation group (default: ppn)")
    r.add_argument("--params", type=Path, default=None)
    r.add_argument("--breakdown", action="store_true",
                   help="also print the per-phase cost table")
    r.add_argument("--trace-dump", type=Path, default=None,
                   help="write the full message trace CSV here")
    _add_mode_flags(r)

    s = sub.add_parser("sweep", help="run a configuration grid to CSV")
    s.add_argument("--nodes", type=_int_list, default=[2, 4, 8, 16, 32])
    s.add_argument("--ppn", type=int, default=112)
    s.add_argument("--bytes", type=_int_list, dest="sizes",
                   default=[4, 16, 64, 256, 1024, 4096])
    s.add_argument("--algs", type=_alg_list,
                   default=list(CLI_NAMES.values()),
                   help="comma-separated algorithm names")
    s.add_argument("--impls", type=lambda t: [v.strip() for v in t.split(",")],
                   default=["pairwise", "nonblocking"])
    s.add_argument("--group-sizes", type=_int_list, default=[4, 8, 16],
                   help="extra group sizes besides ppn")
    s.add_argument("--params", type=Path, default=None)
    s.add_argument("--out", type=Path, required=True, help="output CSV path")
    s.add_argument("--plot", action="store_true",
                   help="render SVG plots next to the CSV")
    _add_mode_flags(s)

    pl = sub.add_parser("plot", help="re-render plots from a sweep CSV")
    pl.add_argument("--csv", type=Path, required=True)
    pl.add_argument("--out-dir", type=Path, default=None,
                    help="default: the CSV's directory")
    return ap


def _params_from(args) -> "CostParams":
    return load_params(args.params) if args.params else default_params()


def cmd_validate(args) -> int:
    ok, msg = validate(args.max_nodes, args.max_ppn, args.max_bytes,
                       args.random, args.seed)
    print(msg)
    return 0 if ok else 1


def cmd_run(args) -> int:
    gs = args.group_size if args.group_size is not None else args.ppn
    topo = Topology(args.nodes, args.ppn, gs)
    result = evaluate_point(CLI_NAMES[args.alg], args.impl, topo,
                            args.block_bytes, _params_from(args),
                            args.mode, args.mem_budget)
    print(CSV_HEADER)
    print(result.csv_row())
    if args.breakdown:
        print()
        print(format_breakdown(result.report))
    if args.trace_dump:
        with open(args.trace_dump, "w", encoding="utf-8") as fh:
            result.trace.dump_csv(fh)
    return 0


def cmd_sweep(args) -> int:
    cfg = SweepConfig(
        nodes=args.nodes,
        ppn=args.ppn,
        sizes=args.sizes,
        algorithms=args.algs,
        impls=args.impls,
        group_sizes=args.group_sizes,
        params=_params_from(args),
        mem_budget=args.mem_budget,
        mode=args.mode,
    )
    results = run_sweep(cfg)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    with open(args.out, "w", encoding="utf-8") as fh:
        write_csv(results, fh)
    print(f"sweep: {len(results)} rows -> {args.out}")
    if args.plot:
        from .plots import read_rows, render_sweep_plots
        for path in render_sweep_plots(read_rows(args.out), args.out.parent):
            print(f"plot: {path}")
    return 0


def cmd_plot(args) -> int:
    from .plots import read_rows, render_sweep_plots
    out_dir = args.out_dir if args.out_dir else args.csv.parent
    for path in render_sweep_plots(read_rows(args.csv), out_dir):
        print(f"plot: {path}")
    return 0


_COMMANDS = {
    "validate": cmd_validate,
    "run": cmd_run,
    "sweep": cmd_sweep,
    "plot": cmd_plot,
}


def main(argv=None) -> int:
    logging.basicConfig(format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except CorrectnessError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except (TopologyError, ScheduleError, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
