"""Step-synchronous execution engine for communication schedules.

All simulated ranks live in one process.  A schedule is an ordered list of
phases; a phase is either a local repack (per-rank byte shuffles, no
messages) or a sequence of communication steps.  Within a step every
message is logically concurrent: all sends read the buffer state at step
entry, then all receives are written.  Senders and receivers post their
sides independently and the engine matches them, so a schedule whose two
sides disagree fails loudly instead of silently corrupting buffers.

Per-rank buffers are plain numpy uint8 arrays.  A rank's all-to-all
payload is p contiguous blocks of block_bytes each, block i belonging to
peer rank i.  Schedules may use workspace beyond the input region as
scratch; the final result is read from `output_offset`.

Levels: L0 = same region, L1 = same node / different region, L2 = across
nodes.
"""
from __future__ import annotations

from collections.abc import Callable, Iterator
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .topology import Topology

L0, L1, L2 = 0, 1, 2
LEVEL_NAMES = ("L0", "L1", "L2")

_FNV_OFFSET = np.uint64(0xCBF29CE484222325)
_FNV_PRIME = np.uint64(0x100000001B3)


class ScheduleError(ValueError):
    """A schedule violated a structural invariant (bounds, duplicates, ...)."""


class ScheduleDeadlockError(ScheduleError):
    """A posted send or receive had no matching counterpart in its step."""


# ---------------------------------------------------------------------------
# payload seeding and the transpose oracle
# ---------------------------------------------------------------------------

def _fnv_low_byte(src: int, dst: np.ndarray, j: np.ndarray) -> np.ndarray:
    """Low byte of FNV-1a-64 over the little-endian u64 triple (src, dst, j)."""
    h = np.full(dst.shape, _FNV_OFFSET, dtype=np.uint64)
    srcv = np.uint64(src)
    mask = np.uint64(0xFF)
    for k in range(8):
        sh = np.uint64(8 * k)
        h ^= (srcv >> sh) & mask
        h *= _FNV_PRIME
    for k in range(8):
        sh = np.uint64(8 * k)
        h ^= (dst >> sh) & mask
        h *= _FNV_PRIME
    for k in range(8):
        sh = np.uint64(8 * k)
        h ^= (j >> sh) & mask
        h *= _FNV_PRIME
    return (h & mask).astype(np.uint8)


def seed_rank_payload(topo: Topology, s: int, rank: int) -> np.ndarray:
    """Deterministic payload for one rank: block dst holds bytes j=0..s-1
    equal to the low byte of FNV-1a-64 of (rank, dst, j)."""
    if s < 1:
        raise ValueError(f"block size must be >= 1, got {s}")
    p = topo.p
    dstv = np.repeat(np.arange(p, dtype=np.uint64), s)
    jv = np.tile(np.arange(s, dtype=np.uint64), p)
    return _fnv_low_byte(rank, dstv, jv)


def seed_payload(topo: Topology, s: int) -> list[np.ndarray]:
    """Seed every rank's buffer; identical inputs give identical buffers."""
    return [seed_rank_payload(topo, s, r) for r in range(topo.p)]


def oracle_transpose(topo: Topology, inputs: list[np.ndarray]) -> list[np.ndarray]:
    """Reference all-to-all result: output block i on rank r = input block r
    on rank i.  Pure array shuffle, no schedule involved."""
    p = topo.p
    if len(inputs) != p:
        raise ValueError(f"expected {p} buffers, got {len(inputs)}")
    n = len(inputs[0])
    if n % p != 0 or any(len(b) != n for b in inputs):
        raise ValueError("buffers must all be p*s bytes")
    s = n // p
    cube = np.stack(inputs).reshape(p, p, s)
    out = cube.transpose(1, 0, 2).reshape(p, p * s)
    return [out[r].copy() for r in range(p)]


# ---------------------------------------------------------------------------
# locality levels
# ---------------------------------------------------------------------------

def classify_level(topo: Topology, src: int, dst: int) -> int:
    """L0/L1/L2 for one (src, dst) pair; self-pairs are repacks, not messages."""
    if src == dst:
        raise ValueError(f"src == dst == {src}: self-copies are not messages")
    return int(levels_of(topo, np.asarray([src]), np.asarray([dst]))[0])


def levels_of(topo: Topology, src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    node_s, node_d = src // topo.ppn, dst // topo.ppn
    reg_s = (src % topo.ppn) // topo.group_size
    reg_d = (dst % topo.ppn) // topo.group_size
    lvl = np.where(node_s != node_d, L2, np.where(reg_s != reg_d, L1, L0))
    return lvl.astype(np.int8)


# ---------------------------------------------------------------------------
# schedule data model
# ---------------------------------------------------------------------------

Segs = list[tuple[int, int]]  # [(offset, nbytes), ...] within one workspace


@dataclass
class CommStep:
    """One synchronous round.  Sends are posted by the source, receives by
    the destination; seg callbacks give byte layouts and are only consulted
    when payload actually moves."""

    send_src: np.ndarray
    send_dst: np.ndarray
    send_bytes: np.ndarray
    recv_src: np.ndarray
    recv_dst: np.ndarray
    recv_bytes: np.ndarray
    send_segs: Callable[[int], Segs] | None = None
    recv_segs: Callable[[int], Segs] | None = None

    @property
    def n_messages(self) -> int:
        return len(self.send_src)


@dataclass
class CommPhase:
    tag: str
    steps: list[CommStep]
    impl: str | None = None   # pairwise | nonblocking | None (fixed structure)
    comm_size: int | None = None  # size of each participating communicator


@dataclass
class RepackPhase:
    """Per-rank local byte permutation.  Reads see the buffer as it was at
    phase entry; moved[] carries per-rank copied bytes for the cost model."""

    copies_fn: Callable[[int], list[tuple[int, int, int]]]
    active_ranks: list[int]
    moved: np.ndarray
    tag: str = "repack"


Phase = CommPhase | RepackPhase


@dataclass
class Schedule:
    topo: Topology
    block_bytes: int
    workspace_bytes: int
    output_offset: int
    phases: list[Phase]

    def comm_steps(self) -> int:
        return sum(len(ph.steps) for ph in self.phases if isinstance(ph, CommPhase))


# ---------------------------------------------------------------------------
# traces
# ---------------------------------------------------------------------------

class TraceEvent(NamedTuple):
    phase: str
    step: int
    src: int
    dst: int
    nbytes: int
    level: int


@dataclass
class TracePhase:
    tag: str
    kind: str                 # "comm" | "repack"
    impl: str | None
    comm_size: int | None
    step_lo: int
    step_hi: int              # half-open span of global step indices
    event_lo: int
    event_hi: int
    repack_moved: np.ndarray | None = None

    @property
    def n_events(self) -> int:
        return self.event_hi - self.event_lo

    @property
    def n_steps(self) -> int:
        return self.step_hi - self.step_lo


@dataclass
class Trace:
    """Columnar record of every simulated message, in (step, src, dst) order."""

    topo: Topology
    phases: list[TracePhase]
    step: np.ndarray = field(default_factory=lambda: np.empty(0, np.int32))
    src: np.ndarray = field(default_factory=lambda: np.empty(0, np.int32))
    dst: np.ndarray = field(default_factory=lambda: np.empty(0, np.int32))
    nbytes: np.ndarray = field(default_factory=lambda: np.empty(0, np.int64))
    level: np.ndarray = field(default_factory=lambda: np.empty(0, np.int8))

    @property
    def n_events(self) -> int:
        return len(self.step)

    @property
    def n_steps(self) -> int:
        return int(self.step[-1]) + 1 if self.n_events else 0

    def events(self) -> Iterator[TraceEvent]:
        tags = np.empty(self.n_events, dtype=object)
        for ph in self.phases:
            tags[ph.event_lo:ph.event_hi] = ph.tag
        for i in range(self.n_events):
            yield TraceEvent(tags[i], int(self.step[i]), int(self.src[i]),
                             int(self.dst[i]), int(self.nbytes[i]),
                             int(self.level[i]))

    def dump_csv(self, fh) -> None:
        """Write `phase,step,src,dst,bytes,level` lines in trace order."""
        fh.write("phase,step,src,dst,bytes,level\n")
        for ev in self.events():
            fh.write(f"{ev.phase},{ev.step},{ev.src},{ev.dst},{ev.nbytes},"
                     f"{LEVEL_NAMES[ev.level]}\n")


# ---------------------------------------------------------------------------
# engine
# ---------------------------------------------------------------------------

def _match_step(topo: Topology, tag: str, gstep: int, st: CommStep):
    """Sort both sides by (src, dst), verify they agree, return sorted views.

    Raises ScheduleDeadlockError naming the phase, step and first offender.
    """
    p = topo.p
    ss, sd = np.asarray(st.send_src, np.int64), np.asarray(st.send_dst, np.int64)
    rs, rd = np.asarray(st.recv_src, np.int64), np.asarray(st.recv_dst, np.int64)
    sb = np.asarray(st.send_bytes, np.int64)
    rb = np.asarray(st.recv_bytes, np.int64)

    if np.any(ss == sd) or np.any(rs == rd):
        bad = int(ss[ss == sd][0]) if np.any(ss == sd) else int(rs[rs == rd][0])
        raise ScheduleError(
            f"phase {tag} step {gstep}: rank {bad} messages itself")
    if np.any(sb <= 0) or np.any(rb <= 0):
        raise ScheduleError(f"phase {tag} step {gstep}: non-positive message size")

    skey = ss * p + sd
    rkey = rs * p + rd
    so = np.argsort(skey, kind="stable")
    ro = np.argsort(rkey, kind="stable")
    skey, rkey = skey[so], rkey[ro]

    if len(skey) > 1 and np.any(skey[1:] == skey[:-1]):
        i = int(np.argmax(skey[1:] == skey[:-1]))
        raise ScheduleError(
            f"phase {tag} step {gstep}: duplicate message "
            f"{skey[i] // p}->{skey[i] % p}")

    if len(skey) != len(rkey) or np.any(skey != rkey):
        sset, rset = set(skey.tolist()), set(rkey.tolist())
        only_s = sorted(sset - rset)
        only_r = sorted(rset - sset)
        if only_s:
            k = only_s[0]
            raise ScheduleDeadlockError(
                f"schedule deadlock in phase {tag} step {gstep}: send "
                f"{k // p}->{k % p} has no matching receive")
        k = only_r[0]
        raise ScheduleDeadlockError(
            f"schedule deadlock in phase {tag} step {gstep}: receive on rank "
            f"{k % p} from {k // p} has no matching send")

    if np.any(sb[so] != rb[ro]):
        i = int(np.argmax(sb[so] != rb[ro]))
        raise ScheduleDeadlockError(
            f"schedule deadlock in phase {tag} step {gstep}: message "
            f"{skey[i] // p}->{skey[i] % p} declares {int(sb[so][i])} send "
            f"bytes vs {int(rb[ro][i])} receive bytes")

    return ss[so], sd[so], sb[so], so, ro


def _check_intervals(intervals: list[tuple[int, int]], what: str) -> None:
    intervals.sort()
    for a, b in zip(intervals, intervals[1:]):
        if a[1] > b[0]:
            raise ScheduleError(f"overlapping {what} [{a[0]},{a[1]}) and "
                                f"[{b[0]},{b[1]})")


def _apply_repack(ws: np.ndarray, copies: list[tuple[int, int, int]],
                  rank: int) -> int:
    size = len(ws)
    moved = 0
    dst_iv = []
    for src_off, dst_off, n in copies:
        if n <= 0:
            raise ScheduleError(f"repack on rank {rank}: non-positive copy length")
        if src_off < 0 or src_off + n > size or dst_off < 0 or dst_off + n > size:
            raise ScheduleError(f"repack on rank {rank}: buffer overrun")
        dst_iv.append((dst_off, dst_off + n))
        moved += n
    _check_intervals(dst_iv, f"repack destinations on rank {rank}")
    old = ws.copy()
    for src_off, dst_off, n in copies:
        ws[dst_off:dst_off + n] = old[src_off:src_off + n]
    return moved


def _execute(topo: Topology, schedule: Schedule,
             inputs: list[np.ndarray] | None) -> tuple[list[np.ndarray] | None, Trace]:
    p = topo.p
    s = schedule.block_bytes
    payload = inputs is not None

    ws = None
    if payload:
        if len(inputs) != p:
            raise ValueError(f"expected {p} input buffers, got {len(inputs)}")
        ws = []
        for r, buf in enumerate(inputs):
            if len(buf) != p * s:
                raise ValueError(
                    f"rank {r} buffer is {len(buf)} bytes, expected {p * s}")
            w = np.zeros(schedule.workspace_bytes, np.uint8)
            w[:p * s] = buf
            ws.append(w)

    col_step, col_src, col_dst, col_bytes = [], [], [], []
    phases_meta: list[TracePhase] = []
    gstep = 0
    nevents = 0

    for ph in schedule.phases:
        if isinstance(ph, RepackPhase):
            if payload:
                for r in ph.active_ranks:
                    moved = _apply_repack(ws[r], ph.copies_fn(r), r)
                    if moved != int(ph.moved[r]):
                        raise ScheduleError(
                            f"repack on rank {r} moved {moved} bytes but "
                            f"declared {int(ph.moved[r])}")
            phases_meta.append(TracePhase(
                ph.tag, "repack", None, None, gstep, gstep, nevents, nevents,
                repack_moved=ph.moved))
            continue

        step_lo, event_lo = gstep, nevents
        for st in ph.steps:
            if st.n_messages == 0:
                continue
            src, dst, nb, so, ro = _match_step(topo, ph.tag, gstep, st)
            if payload:
                _move_payload(ws, st, so, ro, nb, ph.tag, gstep)
            col_step.append(np.full(len(src), gstep, np.int32))
            col_src.append(src.astype(np.int32))
            col_dst.append(dst.astype(np.int32))
            col_bytes.append(nb)
            nevents += len(src)
            gstep += 1
        phases_meta.append(TracePhase(
            ph.tag, "comm", ph.impl, ph.comm_size, step_lo, gstep,
            event_lo, nevents))

    if col_step:
        step = np.concatenate(col_step)
        src = np.concatenate(col_src)
        dst = np.concatenate(col_dst)
        nbytes = np.concatenate(col_bytes)
    else:
        step = np.empty(0, np.int32)
        src = np.empty(0, np.int32)
        dst = np.empty(0, np.int32)
        nbytes = np.empty(0, np.int64)
    trace = Trace(topo, phases_meta, step, src, dst, nbytes,
                  levels_of(topo, src.astype(np.int64), dst.astype(np.int64)))

    outputs = None
    if payload:
        lo = schedule.output_offset
        outputs = [w[lo:lo + p * s].copy() for w in ws]
    return outputs, trace


def _move_payload(ws, st: CommStep, so, ro, nb, tag: str, gstep: int) -> None:
    """Gather every message's bytes against the pre-step state, then write."""
    if st.send_segs is None or st.recv_segs is None:
        raise ScheduleError(
            f"phase {tag} step {gstep}: schedule carries no payload layout")
    staged = []
    write_iv: dict[int, list[tuple[int, int]]] = {}
    for k in range(len(so)):
        i, j = int(so[k]), int(ro[k])
        src = int(st.send_src[i])
        dst = int(st.recv_dst[j])
        segs_s = st.send_segs(i)
        segs_r = st.recv_segs(j)
        want = int(nb[k])
        if sum(n for _, n in segs_s) != want or sum(n for _, n in segs_r) != want:
            raise ScheduleDeadlockError(
                f"schedule deadlock in phase {tag} step {gstep}: message "
                f"{src}->{dst} segment bytes disagree with declared size {want}")
        wsrc = ws[src]
        parts = []
        for off, n in segs_s:
            if off < 0 or off + n > len(wsrc):
                raise ScheduleError(
                    f"phase {tag} step {gstep}: send buffer overrun on rank {src}")
            parts.append(wsrc[off:off + n])
        staged.append((dst, segs_r, np.concatenate(parts) if len(parts) > 1
                       else parts[0].copy()))
        iv = write_iv.setdefault(dst, [])
        for off, n in segs_r:
            if off < 0 or off + n > len(ws[dst]):
                raise ScheduleError(
                    f"phase {tag} step {gstep}: receive buffer overrun on rank {dst}")
            iv.append((off, off + n))
    for dst, iv in write_iv.items():
        _check_intervals(iv, f"receives on rank {dst} (phase {tag} step {gstep})")
    for dst, segs_r, data in staged:
        pos = 0
        wdst = ws[dst]
        for off, n in segs_r:
            wdst[off:off + n] = data[pos:pos + n]
            pos += n


def run_schedule(topo: Topology, schedule: Schedule,
                 inputs: list[np.ndarray]) -> tuple[list[np.ndarray], Trace]:
    """Execute the schedule moving real bytes; returns final buffers + trace."""
    outputs, trace = _execute(topo, schedule, inputs)
    return outputs, trace


def trace_schedule(topo: Topology, schedule: Schedule) -> Trace:
    """Execute the schedule structurally (counts and levels, no payload)."""
    _, trace = _execute(topo, schedule, None)
    return trace
