"""Experiment harness: correctness validation, single runs, and sweeps.

A sweep point is one (algorithm, impl, n_nodes, ppn, group_size,
block_bytes) configuration.  Points small enough for the configured memory
budget run with seeded payloads and are checked byte-exactly against the
transpose oracle (payload_checked=true in the CSV); larger points run
trace-only, which yields identical counts and predicted times without
materializing buffers.
"""
from __future__ import annotations

import logging
import random
from dataclasses import dataclass, field

from .algorithms import (
    ALGORITHMS,
    IMPLS,
    AlgorithmSpec,
    CorrectnessError,
    build_schedule,
    run_alltoall,
    verify_against_oracle,
)
from .costmodel import (
    CostParams,
    CostReport,
    breakdown,
    default_params,
    predict,
    summarize,
)
from .topology import Topology
from .vcomm import Trace, oracle_transpose, run_schedule, seed_payload, trace_schedule

log = logging.getLogger("a2asim")

CLI_NAMES = {
    "direct": "direct",
    "bruck": "bruck",
    "hierarchical": "hierarchical",
    "node-aware": "node_aware",
    "multileader-node-aware": "multileader_node_aware",
}
KIND_TO_CLI = {v: k for k, v in CLI_NAMES.items()}

CSV_HEADER = ("algorithm,impl,n_nodes,ppn,group_size,block_bytes,"
              "total_bytes_per_rank,steps,msgs_l0,msgs_l1,msgs_l2,"
              "bytes_l0,bytes_l1,bytes_l2,predicted_total_s,predicted_l2_s,"
              "payload_checked")

DEFAULT_MEM_BUDGET = 256 * 1024 * 1024

# group size matters to these; direct and bruck sweep one row per shape
GROUPED_ALGORITHMS = ("hierarchical", "node_aware", "multileader_node_aware")


@dataclass
class SweepConfig:
    nodes: list[int] = field(default_factory=lambda: [2, 4, 8, 16, 32])
    ppn: int = 112
    sizes: list[int] = field(default_factory=lambda: [4, 16, 64, 256, 1024, 4096])
    algorithms: list[str] = field(default_factory=lambda: list(ALGORITHMS))
    impls: list[str] = field(default_factory=lambda: list(IMPLS))
    group_sizes: list[int] = field(default_factory=lambda: [4, 8, 16])
    include_node_group: bool = True   # also sweep group_size == ppn
    params: CostParams = field(default_factory=default_params)
    mem_budget: int = DEFAULT_MEM_BUDGET
    mode: str = "auto"                # auto | payload | trace


@dataclass
class PointResult:
    algorithm: str      # CLI name
    impl: str
    topo: Topology
    block_bytes: int
    trace: Trace
    report: CostReport
    l2_report: CostReport
    payload_checked: bool

    def csv_row(self) -> str:
        msgs, nbytes = summarize(self.trace)
        t = self.topo
        return ",".join([
            self.algorithm,
            self.impl,
            str(t.n_nodes), str(t.ppn), str(t.group_size),
            str(self.block_bytes),
            str(t.p * self.block_bytes),
            str(self.trace.n_steps),
            str(int(msgs[0])), str(int(msgs[1])), str(int(msgs[2])),
            str(int(nbytes[0])), str(int(nbytes[1])), str(int(nbytes[2])),
            f"{self.report.total_seconds:.9e}",
            f"{self.l2_report.total_seconds:.9e}",
            "true" if self.payload_checked else "false",
        ])


def evaluate_point(kind: str, impl: str, topo: Topology, s: int,
                   params: CostParams, mode: str = "auto",
                   mem_budget: int = DEFAULT_MEM_BUDGET) -> PointResult:
    """Build, execute (payload or trace-only), verify, and price one point."""
    spec = AlgorithmSpec(kind, impl)
    schedule = build_schedule(topo, spec, s)
    if mode == "payload":
        payload = True
    elif mode == "trace":
        payload = False
    else:
        payload = topo.p * schedule.workspace_bytes <= mem_budget
    if payload:
        inputs = seed_payload(topo, s)
        outputs, trace = run_schedule(topo, schedule, inputs)
        verify_against_oracle(topo, s, outputs,
                              oracle_transpose(topo, inputs),
                              detail=f"{kind}/{impl}")
    else:
        trace = trace_schedule(topo, schedule)
    return PointResult(
        algorithm=KIND_TO_CLI[kind],
        impl=impl if kind != "bruck" else "-",
        topo=topo,
        block_bytes=s,
        trace=trace,
        report=predict(trace, topo, params),
        l2_report=predict(trace, topo, params, levels=(2,)),
        payload_checked=payload,
    )


# ---------------------------------------------------------------------------
# validate
# ---------------------------------------------------------------------------

def _variants(algorithms=ALGORITHMS, impls=IMPLS):
    """(kind, impl) pairs; bruck's structure is impl-free, keep it once."""
    out = []
    for kind in algorithms:
        if kind == "bruck":
            out.append((kind, "pairwise"))
        else:
            out.extend((kind, impl) for impl in impls)
    return out


def _divisors(n: int) -> list[int]:
    return [d for d in range(1, n + 1) if n % d == 0]


def validate(max_nodes: int = 4, max_ppn: int = 8, max_bytes: int = 64,
             n_random: int = 100, seed: int = 0,
             progress=None) -> tuple[bool, str]:
    """Run every algorithm variant over the desk grid plus randomized
    configurations; every output must match the transpose oracle.

    Returns (all_passed, message); the message locates the first mismatch.
    """
    ppns = [v for v in (1, 2, 4, 8, 16, 32) if v <= max_ppn]
    sizes = [v for v in (1, 4, 16, 64, 256, 1024) if v <= max_bytes]
    configs = []
    for n_nodes in range(1, max_nodes + 1):
        for ppn in ppns:
            for gs in _divisors(ppn):
                for kind, impl in _variants():
                    for s in sizes:
                        configs.append((kind, impl, n_nodes, ppn, gs, s))
    rng = random.Random(seed)
    for _ in range(n_random):
        ppn = rng.randint(1, max_ppn)
        kind, impl = rng.choice(_variants())
        configs.append((kind, impl, rng.randint(1, max_nodes), ppn,
                        rng.choice(_divisors(ppn)), rng.randint(1, max_bytes)))

    for i, (kind, impl, n_nodes, ppn, gs, s) in enumerate(configs):
        topo = Topology(n_nodes, ppn, gs)
        try:
            run_alltoall(topo, AlgorithmSpec(kind, impl), s)
        except CorrectnessError as e:
            msg = (f"validate: mismatch in {kind}/{impl} at "
                   f"nodes={n_nodes} ppn={ppn} group={gs} bytes={s}: "
                   f"rank {e.rank}, block {e.block}, byte {e.byte}")
            return False, msg
        if progress is not None:
            progress(i + 1, len(configs))
    return True, f"validate: {len(configs)} configurations, all outputs match the oracle"


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------

def sweep_points(cfg: SweepConfig):
    """Deterministic (kind, impl, topo, s) grid; invalid group sizes are
    skipped with a logged warning."""
    points = []
    groups = []
    if cfg.include_node_group:
        groups.append(cfg.ppn)
    for g in cfg.group_sizes:
        if g != cfg.ppn and g not in groups:
            groups.append(g)
    for kind, impl in _variants(cfg.algorithms, cfg.impls):
        gss = groups if kind in GROUPED_ALGORITHMS else [cfg.ppn]
        for n_nodes in cfg.nodes:
            for gs in gss:
                if cfg.ppn % gs != 0:
                    log.warning("skipping group_size=%d (does not divide ppn=%d)",
                                gs, cfg.ppn)
                    continue
                for s in cfg.sizes:
                    points.append((kind, impl, n_nodes, cfg.ppn, gs, s))
    points.sort(key=lambda t: (KIND_TO_CLI[t[0]], t[1], t[2], t[3], t[4], t[5]))
    return points


def run_sweep(cfg: SweepConfig, progress=None) -> list[PointResult]:
    points = sweep_points(cfg)
    results = []
    for i, (kind, impl, n_nodes, ppn, gs, s) in enumerate(points):
        topo = Topology(n_nodes, ppn, gs)
        results.append(evaluate_point(kind, impl, topo, s, cfg.params,
                                      cfg.mode, cfg.mem_budget))
        if progress is not None:
            progress(i + 1, len(points))
    return results


def write_csv(results: list[PointResult], fh) -> None:
    fh.write(CSV_HEADER + "\n")
    for r in results:
        fh.write(r.csv_row() + "\n")


def format_breakdown(report: CostReport) -> str:
    """Phase table: tag, predicted seconds, per-level bytes, schedule order."""
    lines = [f"{'phase':<16} {'seconds':>14} {'bytes_l0':>12} "
             f"{'bytes_l1':>12} {'bytes_l2':>12}"]
    for tag, secs, b0, b1, b2 in breakdown(report):
        lines.append(f"{tag:<16} {secs:>14.6e} {b0:>12} {b1:>12} {b2:>12}")
    lines.append(f"{'total':<16} {report.total_seconds:>14.6e}")
    return "\n".join(lines)
