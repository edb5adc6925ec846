"""Hierarchical alpha-beta pricing of traces, with NIC injection contention.

Each message costs alpha(level) + bytes * beta(level), charged to both its
endpoints; a step takes the maximum over ranks of their summed message
costs, and at least as long as the busiest node needs to inject its
inter-node bytes through the NIC.  Phases add their steps; repacks cost
copy_beta per byte moved (max over ranks).  Single-step nonblocking phases
charge queue_penalty per posted receive, modeling queue-search overhead.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .topology import Topology
from .vcomm import Trace

_LEVELS = 3
_PARAM_KEYS = (
    "alpha.l0", "alpha.l1", "alpha.l2",
    "beta.l0", "beta.l1", "beta.l2",
    "nic_bandwidth", "queue_penalty", "copy_beta",
)


@dataclass(frozen=True)
class CostParams:
    alpha: tuple[float, float, float]   # seconds per message, L0/L1/L2
    beta: tuple[float, float, float]    # seconds per byte, L0/L1/L2
    nic_bandwidth: float                # bytes/second injected per node (L2)
    queue_penalty: float = 0.0          # seconds per pending posted receive
    copy_beta: float = 0.0              # seconds per repacked byte

    def __post_init__(self):
        vals = (*self.alpha, *self.beta, self.nic_bandwidth,
                self.queue_penalty, self.copy_beta)
        if any(v < 0 for v in vals):
            raise ValueError("cost parameters must be >= 0")
        if not (self.alpha[2] >= self.alpha[1] >= self.alpha[0]):
            warnings.warn("alpha levels are not ordered L2 >= L1 >= L0",
                          stacklevel=2)

    def scaled(self, c: float) -> "CostParams":
        """Every time-like parameter multiplied by c (bandwidth divided)."""
        return CostParams(
            tuple(a * c for a in self.alpha),
            tuple(b * c for b in self.beta),
            self.nic_bandwidth / c,
            self.queue_penalty * c,
            self.copy_beta * c,
        )


def default_params() -> CostParams:
    """Illustrative desk parameters; not calibrated to any machine."""
    return CostParams(
        alpha=(3e-7, 5e-7, 2e-6),
        beta=(5e-11, 1e-10, 5e-10),
        nic_bandwidth=2.5e10,
        queue_penalty=0.0,
        copy_beta=2e-11,
    )


def load_params(path) -> CostParams:
    """Read `key = value` lines; see _PARAM_KEYS for the vocabulary.

    Blank lines and #-comments are skipped; unknown keys are errors.
    Missing keys keep the default value.
    """
    values = {
        "alpha.l0": 3e-7, "alpha.l1": 5e-7, "alpha.l2": 2e-6,
        "beta.l0": 5e-11, "beta.l1": 1e-10, "beta.l2": 5e-10,
        "nic_bandwidth": 2.5e10, "queue_penalty": 0.0, "copy_beta": 2e-11,
    }
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected `key = value`")
            key, val = (part.strip() for part in line.split("=", 1))
            if key not in _PARAM_KEYS:
                raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
            values[key] = float(val)
    return CostParams(
        alpha=(values["alpha.l0"], values["alpha.l1"], values["alpha.l2"]),
        beta=(values["beta.l0"], values["beta.l1"], values["beta.l2"]),
        nic_bandwidth=values["nic_bandwidth"],
        queue_penalty=values["queue_penalty"],
        copy_beta=values["copy_beta"],
    )


def write_params(params: CostParams, fh) -> None:
    for i in range(_LEVELS):
        fh.write(f"alpha.l{i} = {params.alpha[i]!r}\n")
    for i in range(_LEVELS):
        fh.write(f"beta.l{i} = {params.beta[i]!r}\n")
    fh.write(f"nic_bandwidth = {params.nic_bandwidth!r}\n")
    fh.write(f"queue_penalty = {params.queue_penalty!r}\n")
    fh.write(f"copy_beta = {params.copy_beta!r}\n")


# ---------------------------------------------------------------------------
# trace summaries and predictions
# ---------------------------------------------------------------------------

def summarize(trace: Trace) -> tuple[np.ndarray, np.ndarray]:
    """Per-level (message counts, byte totals), exact."""
    counts = np.bincount(trace.level, minlength=_LEVELS).astype(np.int64)
    nbytes = np.bincount(trace.level, weights=trace.nbytes,
                         minlength=_LEVELS).astype(np.int64)
    return counts, nbytes


@dataclass
class PhaseCost:
    tag: str
    kind: str
    seconds: float
    msgs: np.ndarray    # (3,) per level
    nbytes: np.ndarray  # (3,) per level


@dataclass
class CostReport:
    phases: list[PhaseCost]
    total_seconds: float
    level_msgs: np.ndarray = field(default_factory=lambda: np.zeros(3, np.int64))
    level_bytes: np.ndarray = field(default_factory=lambda: np.zeros(3, np.int64))
    max_rank_sent_bytes: int = 0


def predict(trace: Trace, topo: Topology, params: CostParams,
            levels: tuple[int, ...] = (0, 1, 2)) -> CostReport:
    """Price a trace.  Restricting `levels` prices only those messages
    (repacks count only when level 0 is included)."""
    p = topo.p
    alpha = np.asarray(params.alpha)
    beta = np.asarray(params.beta)
    lv_mask = np.isin(trace.level, levels)
    phase_costs: list[PhaseCost] = []
    total = 0.0

    for ph in trace.phases:
        if ph.kind == "repack":
            secs = 0.0
            if 0 in levels and ph.repack_moved is not None and len(ph.repack_moved):
                secs = params.copy_beta * float(ph.repack_moved.max())
            phase_costs.append(PhaseCost(ph.tag, "repack", secs,
                                         np.zeros(3, np.int64),
                                         np.zeros(3, np.int64)))
            total += secs
            continue

        sl = slice(ph.event_lo, ph.event_hi)
        keep = lv_mask[sl]
        ev_step = trace.step[sl][keep]
        ev_src = trace.src[sl][keep]
        ev_dst = trace.dst[sl][keep]
        ev_bytes = trace.nbytes[sl][keep]
        ev_level = trace.level[sl][keep]
        secs = 0.0
        penalize = ph.impl == "nonblocking" and ph.n_steps == 1
        # events are stored in step order, so slice step spans binarily
        bounds = np.searchsorted(
            ev_step, np.arange(ph.step_lo, ph.step_hi + 1))
        for si in range(ph.step_hi - ph.step_lo):
            lo, hi = int(bounds[si]), int(bounds[si + 1])
            if lo == hi:
                continue
            src, dst = ev_src[lo:hi], ev_dst[lo:hi]
            lvl, nb = ev_level[lo:hi], ev_bytes[lo:hi]
            cost = alpha[lvl] + nb * beta[lvl]
            per_rank = (np.bincount(src, weights=cost, minlength=p)
                        + np.bincount(dst, weights=cost, minlength=p))
            if penalize and params.queue_penalty:
                per_rank += params.queue_penalty * np.bincount(
                    dst, minlength=p)
            t = float(per_rank.max())
            l2 = lvl == 2
            if l2.any() and params.nic_bandwidth > 0:
                node_bytes = np.bincount(src[l2] // topo.ppn,
                                         weights=nb[l2],
                                         minlength=topo.n_nodes)
                t = max(t, float(node_bytes.max()) / params.nic_bandwidth)
            secs += t
        msgs = np.bincount(ev_level, minlength=3).astype(np.int64)
        nb = np.bincount(ev_level, weights=ev_bytes,
                         minlength=3).astype(np.int64)
        phase_costs.append(PhaseCost(ph.tag, "comm", secs, msgs, nb))
        total += secs

    level_msgs = np.bincount(trace.level[lv_mask], minlength=3).astype(np.int64)
    level_bytes = np.bincount(trace.level[lv_mask],
                              weights=trace.nbytes[lv_mask],
                              minlength=3).astype(np.int64)
    sent = np.bincount(trace.src[lv_mask], weights=trace.nbytes[lv_mask],
                       minlength=p)
    return CostReport(
        phases=phase_costs,
        total_seconds=total,
        level_msgs=level_msgs,
        level_bytes=level_bytes,
        max_rank_sent_bytes=int(sent.max()) if p else 0,
    )


def breakdown(report: CostReport) -> list[tuple[str, float, int, int, int]]:
    """(phase tag, predicted seconds, L0/L1/L2 bytes) rows in schedule order."""
    return [(ph.tag, ph.seconds, int(ph.nbytes[0]), int(ph.nbytes[1]),
             int(ph.nbytes[2])) for ph in report.phases]
