"""Schedule builders for the all-to-all exchange algorithms.

Every builder returns a Schedule whose execution is bit-equal to the
transpose oracle.  Exchange families:

  direct                   one s-byte message per peer
  bruck                    radix-2 log-step exchange, extra volume per step
  hierarchical             gather to region leaders, leader exchange, scatter
  node_aware               inter-region exchange by every rank, then
                           intra-region redistribution
  multileader_node_aware   gather to region leaders, exchange between
                           corresponding leaders across nodes, redistribution
                           among the leaders of each node, scatter

`group_size` on the topology selects the single-leader (group_size == ppn)
or multi-leader / locality-aware (group_size < ppn) variants.

Internal all-to-alls, gathers and scatters are laid out `pairwise`
(sequenced steps with disjoint send/recv pairs) or `nonblocking` (a single
step holding every message); bruck's step structure is fixed.

Buffer layouts are pinned so that traces are reproducible:
  - gathered leader buffers are ordered destination-region major, source
    member middle, destination member minor;
  - the node-aware intermediate buffer is ordered source-region major,
    final owner minor.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .topology import Topology
from .vcomm import (
    CommPhase,
    CommStep,
    RepackPhase,
    Schedule,
    oracle_transpose,
    run_schedule,
    seed_payload,
    trace_schedule,
    Trace,
)

ALGORITHMS = ("direct", "bruck", "hierarchical", "node_aware",
              "multileader_node_aware")
IMPLS = ("pairwise", "nonblocking")


class CorrectnessError(AssertionError):
    """An executed schedule disagreed with the transpose oracle."""

    def __init__(self, rank: int, block: int, byte: int, detail: str = ""):
        self.rank, self.block, self.byte = rank, block, byte
        super().__init__(
            f"correctness failure: rank {rank}, block {block}, byte {byte}"
            + (f" ({detail})" if detail else ""))


@dataclass(frozen=True)
class AlgorithmSpec:
    """One algorithm variant: kind, internal exchange layout, group size.

    group_size None means "use the topology's"; bruck's step structure is
    fixed and ignores exchange_impl.
    """

    kind: str
    exchange_impl: str = "pairwise"
    group_size: int | None = None

    def __post_init__(self):
        if self.kind not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.kind!r}")
        if self.exchange_impl not in IMPLS:
            raise ValueError(f"unknown exchange impl {self.exchange_impl!r}")


# ---------------------------------------------------------------------------
# step-layout helpers shared by every comm phase
# ---------------------------------------------------------------------------

def _alltoall_steps(comms: np.ndarray, impl: str, nbytes: int,
                    send_segs_of, recv_segs_of) -> list[CommStep]:
    """All-to-all over each row of `comms` (disjoint communicators, equal
    size m).  pairwise: m-1 steps, member a sends to a+i and hears from a-i.
    nonblocking: one step with every ordered pair.

    send_segs_of(c, a, b) -> sender segments for member a -> member b of
    comm c; recv_segs_of(c, a, b) -> receiver-side segments on member b.
    """
    comms = np.asarray(comms, dtype=np.int64)
    G, m = comms.shape
    if m <= 1:
        return []
    steps = []
    if impl == "pairwise":
        a = np.arange(m)
        for i in range(1, m):
            b = (a + i) % m
            frm = (a - i) % m
            steps.append(CommStep(
                send_src=comms[:, a].ravel(),
                send_dst=comms[:, b].ravel(),
                send_bytes=np.full(G * m, nbytes, np.int64),
                recv_src=comms[:, frm].ravel(),
                recv_dst=comms[:, a].ravel(),
                recv_bytes=np.full(G * m, nbytes, np.int64),
                send_segs=lambda k, i=i: send_segs_of(
                    k // m, k % m, (k % m + i) % m),
                recv_segs=lambda k, i=i: recv_segs_of(
                    k // m, (k % m - i) % m, k % m),
            ))
    elif impl == "nonblocking":
        a = np.repeat(np.arange(m), m - 1)
        db = np.tile(np.arange(1, m), m)
        b = (a + db) % m
        n = m * (m - 1)
        steps.append(CommStep(
            send_src=comms[:, a].ravel(),
            send_dst=comms[:, b].ravel(),
            send_bytes=np.full(G * n, nbytes, np.int64),
            recv_src=comms[:, b].ravel(),
            recv_dst=comms[:, a].ravel(),
            recv_bytes=np.full(G * n, nbytes, np.int64),
            send_segs=lambda k: send_segs_of(
                k // n, (k % n) // (m - 1),
                ((k % n) // (m - 1) + (k % n) % (m - 1) + 1) % m),
            recv_segs=lambda k: recv_segs_of(
                k // n,
                ((k % n) // (m - 1) + (k % n) % (m - 1) + 1) % m,
                (k % n) // (m - 1)),
        ))
    else:
        raise ValueError(f"unknown exchange impl {impl!r}")
    return steps


def _fanin_steps(comms: np.ndarray, impl: str, nbytes: int,
                 send_segs_of, recv_segs_of, to_root: bool) -> list[CommStep]:
    """Gather (to_root) or scatter (not to_root) between each row's member 0
    and its other members.  pairwise sequences one member per step."""
    comms = np.asarray(comms, dtype=np.int64)
    G, m = comms.shape
    if m <= 1:
        return []

    def mk(members):
        nmem = len(members)
        others = comms[:, members].ravel()  # comm-major, member-minor
        roots = np.repeat(comms[:, 0], nmem)
        src, dst = (others, roots) if to_root else (roots, others)
        return CommStep(
            send_src=src, send_dst=dst,
            send_bytes=np.full(G * nmem, nbytes, np.int64),
            recv_src=src.copy(), recv_dst=dst.copy(),
            recv_bytes=np.full(G * nmem, nbytes, np.int64),
            send_segs=lambda k: send_segs_of(k // nmem, members[k % nmem]),
            recv_segs=lambda k: recv_segs_of(k // nmem, members[k % nmem]),
        )

    if impl == "pairwise":
        return [mk([j]) for j in range(1, m)]
    if impl == "nonblocking":
        return [mk(list(range(1, m)))]
    raise ValueError(f"unknown exchange impl {impl!r}")


# ---------------------------------------------------------------------------
# builders
# ---------------------------------------------------------------------------

def build_direct(topo: Topology, s: int, impl: str = "pairwise") -> Schedule:
    """p-1 s-byte messages per rank; the self block is a local copy.

    pairwise: p-1 steps, rank r sends block r+i to rank r+i at step i and
    receives from r-i.  nonblocking: one step with every message.
    """
    p, ps = topo.p, topo.p * s
    off_out = ps

    self_copy = RepackPhase(
        copies_fn=lambda r: [(r * s, off_out + r * s, s)],
        active_ranks=list(range(p)),
        moved=np.full(p, s, np.int64),
    )
    comm = CommPhase(
        "direct",
        _alltoall_steps(
            np.arange(p, dtype=np.int64).reshape(1, p), impl, s,
            lambda c, a, b: [(b * s, s)],
            lambda c, a, b: [(off_out + a * s, s)],
        ),
        impl=impl, comm_size=p,
    )
    return Schedule(topo, s, 2 * ps, off_out, [self_copy, comm])


def build_bruck(topo: Topology, s: int) -> Schedule:
    """Radix-2 log-step exchange: rotate blocks locally, then at step k swap
    every block whose index has bit k set with the rank 2^k away, then undo
    the rotation.  ceil(log2 p) message steps for any p."""
    p, ps = topo.p, topo.p * s
    off_w = ps
    ranks = np.arange(p, dtype=np.int64)

    rotate = RepackPhase(
        copies_fn=lambda r: [(((r + i) % p) * s, off_w + i * s, s)
                             for i in range(p)],
        active_ranks=list(range(p)),
        moved=np.full(p, ps, np.int64),
    )
    steps = []
    n_rounds = math.ceil(math.log2(p)) if p > 1 else 0
    for k in range(n_rounds):
        idx = [i for i in range(1, p) if (i >> k) & 1]
        segs = [(off_w + i * s, s) for i in idx]
        nb = len(idx) * s
        steps.append(CommStep(
            send_src=ranks,
            send_dst=(ranks + (1 << k)) % p,
            send_bytes=np.full(p, nb, np.int64),
            recv_src=(ranks - (1 << k)) % p,
            recv_dst=ranks,
            recv_bytes=np.full(p, nb, np.int64),
            send_segs=lambda _k, segs=segs: segs,
            recv_segs=lambda _k, segs=segs: segs,
        ))
    unrotate = RepackPhase(
        copies_fn=lambda r: [(off_w + ((r - src) % p) * s, src * s, s)
                             for src in range(p)],
        active_ranks=list(range(p)),
        moved=np.full(p, ps, np.int64),
    )
    phases = [rotate, CommPhase("bruck-step", steps, impl=None, comm_size=p),
              unrotate]
    return Schedule(topo, s, 2 * ps, 0, phases)


def build_hierarchical(topo: Topology, s: int,
                       impl: str = "pairwise") -> Schedule:
    """Gather each region onto its leader, exchange among all leaders, and
    scatter back.  One leader per node is the classic hierarchical form;
    more leaders shrink the gather at the cost of extra leader traffic."""
    p, ps = topo.p, topo.p * s
    B, R = topo.group_size, topo.n_regions
    off_g = ps
    off_exs = ps * (1 + B)
    off_exr = ps * (1 + 2 * B)
    off_scat = ps * (1 + 3 * B)
    off_out = ps * (1 + 4 * B)
    chunk = B * B * s  # per leader pair

    groups = np.arange(p, dtype=np.int64).reshape(R, B)
    leaders = groups[:, 0].reshape(1, R)
    moved_leader = np.zeros(p, np.int64)
    moved_leader[groups[:, 0]] = B * ps

    gather = CommPhase("gather", _fanin_steps(
        groups, impl, ps,
        lambda c, j: [(0, ps)],
        lambda c, j: [(off_g + j * ps, ps)],
        to_root=True), impl=impl, comm_size=B)

    def pack_copies(leader):
        out = []
        for h in range(R):
            for m in range(B):
                src = (0 if m == 0 else off_g + m * ps) + (h * B) * s
                out.append((src, off_exs + h * chunk + m * B * s, B * s))
        return out

    pack = RepackPhase(pack_copies, groups[:, 0].tolist(), moved_leader.copy())

    exchange = CommPhase("leader-alltoall", _alltoall_steps(
        leaders, impl, chunk,
        lambda c, a, b: [(off_exs + b * chunk, chunk)],
        lambda c, a, b: [(off_exr + a * chunk, chunk)]),
        impl=impl, comm_size=R)

    def unpack_copies(leader):
        g = leader // B
        out = []
        for j in range(B):
            base = off_out if j == 0 else off_scat + j * ps
            for h in range(R):
                src_base = off_exs + g * chunk if h == g else off_exr + h * chunk
                for m in range(B):
                    out.append((src_base + m * B * s + j * s,
                                base + (h * B + m) * s, s))
        return out

    unpack = RepackPhase(unpack_copies, groups[:, 0].tolist(),
                         moved_leader.copy())

    scatter = CommPhase("scatter", _fanin_steps(
        groups, impl, ps,
        lambda c, j: [(off_scat + j * ps, ps)],
        lambda c, j: [(off_out, ps)],
        to_root=False), impl=impl, comm_size=B)

    return Schedule(topo, s, ps * (2 + 4 * B), off_out,
                    [gather, pack, exchange, unpack, scatter])


def build_node_aware(topo: Topology, s: int,
                     impl: str = "pairwise") -> Schedule:
    """Every rank exchanges aggregated region payloads with its peers in the
    other regions, then regions redistribute internally.  group_size == ppn
    aggregates whole nodes; smaller groups aggregate within regions."""
    p, ps = topo.p, topo.p * s
    B, R = topo.group_size, topo.n_regions
    off_sendr, off_tmp, off_send2, off_out = ps, 2 * ps, 3 * ps, 4 * ps

    groups = np.arange(p, dtype=np.int64).reshape(R, B)
    cross = groups.T.copy()  # (B, R): comm m = member m of every region

    def pre_copies(r):
        return [(h * B * s, off_sendr + h * B * s, B * s) for h in range(R)]

    # identity block order (regions are contiguous rank slices); the copy
    # keeps the staged send region intact while receives land in tmp
    pre = RepackPhase(pre_copies, list(range(p)), np.full(p, ps, np.int64))

    inter = CommPhase("inter-alltoall", _alltoall_steps(
        cross, impl, B * s,
        lambda c, a, b: [(off_sendr + b * B * s, B * s)],
        lambda c, a, b: [(off_tmp + a * B * s, B * s)]),
        impl=impl, comm_size=R)

    def mid_copies(r):
        g, mi = divmod(r, B)
        out = []
        for j in range(B):
            for h in range(R):
                src = (off_sendr if h == g else off_tmp) + (h * B + j) * s
                if j == mi:
                    out.append((src, off_out + (h * B + mi) * s, s))
                else:
                    out.append((src, off_send2 + (j * R + h) * s, s))
        return out

    mid = RepackPhase(mid_copies, list(range(p)), np.full(p, ps, np.int64))

    intra = CommPhase("intra-alltoall", _alltoall_steps(
        groups, impl, R * s,
        lambda c, a, b: [(off_send2 + b * R * s, R * s)],
        lambda c, a, b: [(off_out + (h * B + a) * s, s) for h in range(R)]),
        impl=impl, comm_size=B)

    return Schedule(topo, s, 5 * ps, off_out, [pre, inter, mid, intra])


def build_multileader_node_aware(topo: Topology, s: int,
                                 impl: str = "pairwise") -> Schedule:
    """Gather onto each region leader, exchange whole-node payloads between
    corresponding leaders across nodes, redistribute among each node's
    leaders, and scatter.  group_size is the ranks per leader (ppl);
    group_size == ppn degenerates to hierarchical, 1 to node_aware."""
    p, ps = topo.p, topo.p * s
    B, L, N, ppn = topo.group_size, topo.leaders_per_node, topo.n_nodes, topo.ppn
    off_g = ps
    off_rs = ps * (1 + B)
    off_rr = ps * (1 + 2 * B)
    off_bs = ps * (1 + 3 * B)
    off_br = ps * (1 + 4 * B)
    off_scat = ps * (1 + 5 * B)
    off_out = ps * (1 + 6 * B)
    node_chunk = B * ppn * s    # leader pair across nodes
    brown_chunk = N * B * B * s  # leader pair within a node

    groups = np.arange(p, dtype=np.int64).reshape(N * L, B)
    red = (np.arange(N, dtype=np.int64)[:, None] * ppn
           + np.arange(L, dtype=np.int64)[None, :] * B).T.copy()   # (L, N)
    brown = (np.arange(N, dtype=np.int64)[:, None] * ppn
             + np.arange(L, dtype=np.int64)[None, :] * B)          # (N, L)
    moved_leader = np.zeros(p, np.int64)
    moved_leader[groups[:, 0]] = B * ps

    gather = CommPhase("gather", _fanin_steps(
        groups, impl, ps,
        lambda c, j: [(0, ps)],
        lambda c, j: [(off_g + j * ps, ps)],
        to_root=True), impl=impl, comm_size=B)

    def pack_copies(leader):
        out = []
        for n1 in range(N):
            for m in range(B):
                src = (0 if m == 0 else off_g + m * ps) + n1 * ppn * s
                out.append((src, off_rs + n1 * node_chunk + m * ppn * s,
                            ppn * s))
        return out

    pack = RepackPhase(pack_copies, groups[:, 0].tolist(), moved_leader.copy())

    inter = CommPhase("inter-alltoall", _alltoall_steps(
        red, impl, node_chunk,
        lambda c, a, b: [(off_rs + b * node_chunk, node_chunk)],
        lambda c, a, b: [(off_rr + a * node_chunk, node_chunk)]),
        impl=impl, comm_size=N)

    def mid_copies(leader):
        n0 = leader // ppn
        out = []
        for cp in range(L):
            for n1 in range(N):
                base = off_rs if n1 == n0 else off_rr
                for m in range(B):
                    out.append((
                        base + n1 * node_chunk + m * ppn * s + cp * B * s,
                        off_bs + cp * brown_chunk + n1 * B * B * s + m * B * s,
                        B * s))
        return out

    mid = RepackPhase(mid_copies, groups[:, 0].tolist(), moved_leader.copy())

    leader_x = CommPhase("leader-alltoall", _alltoall_steps(
        brown, impl, brown_chunk,
        lambda c, a, b: [(off_bs + b * brown_chunk, brown_chunk)],
        lambda c, a, b: [(off_br + a * brown_chunk, brown_chunk)]),
        impl=impl, comm_size=L)

    def unpack_copies(leader):
        n0, lr = divmod(leader, ppn)
        c = lr // B
        out = []
        for j in range(B):
            base = off_out if j == 0 else off_scat + j * ps
            for cp in range(L):
                src_base = off_bs + c * brown_chunk if cp == c \
                    else off_br + cp * brown_chunk
                for n1 in range(N):
                    for m in range(B):
                        out.append((
                            src_base + n1 * B * B * s + m * B * s + j * s,
                            base + (n1 * ppn + cp * B + m) * s, s))
        return out

    unpack = RepackPhase(unpack_copies, groups[:, 0].tolist(),
                         moved_leader.copy())

    scatter = CommPhase("scatter", _fanin_steps(
        groups, impl, ps,
        lambda c, j: [(off_scat + j * ps, ps)],
        lambda c, j: [(off_out, ps)],
        to_root=False), impl=impl, comm_size=B)

    return Schedule(topo, s, ps * (2 + 6 * B), off_out,
                    [gather, pack, inter, mid, leader_x, unpack, scatter])


_BUILDERS = {
    "direct": build_direct,
    "bruck": lambda topo, s, impl: build_bruck(topo, s),  # impl-free structure
    "hierarchical": build_hierarchical,
    "node_aware": build_node_aware,
    "multileader_node_aware": build_multileader_node_aware,
}


def resolve_topology(topo: Topology, spec: AlgorithmSpec) -> Topology:
    if spec.group_size is not None and spec.group_size != topo.group_size:
        return Topology(topo.n_nodes, topo.ppn, spec.group_size)
    return topo


def build_schedule(topo: Topology, spec: AlgorithmSpec, s: int) -> Schedule:
    topo = resolve_topology(topo, spec)
    return _BUILDERS[spec.kind](topo, s, spec.exchange_impl)


def verify_against_oracle(topo: Topology, s: int, outputs: list[np.ndarray],
                          expected: list[np.ndarray], detail: str = "") -> None:
    """Byte-compare outputs with the oracle; locate the first difference."""
    for r in range(topo.p):
        if not np.array_equal(outputs[r], expected[r]):
            at = int(np.nonzero(outputs[r] != expected[r])[0][0])
            raise CorrectnessError(r, at // s, at % s, detail)


def run_alltoall(topo: Topology, spec: AlgorithmSpec,
                 s: int) -> tuple[list[np.ndarray], Trace]:
    """Seed, build, execute, and check against the transpose oracle."""
    topo = resolve_topology(topo, spec)
    schedule = build_schedule(topo, spec, s)
    inputs = seed_payload(topo, s)
    outputs, trace = run_schedule(topo, schedule, inputs)
    verify_against_oracle(topo, s, outputs, oracle_transpose(topo, inputs),
                          detail=f"{spec.kind}/{spec.exchange_impl}")
    return outputs, trace


def trace_alltoall(topo: Topology, spec: AlgorithmSpec, s: int) -> Trace:
    """Structural execution only: message counts, sizes, levels, steps."""
    topo = resolve_topology(topo, spec)
    return trace_schedule(topo, build_schedule(topo, spec, s))
