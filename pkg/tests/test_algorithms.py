import math

import numpy as np
import pytest

from a2asim.algorithms import (
    AlgorithmSpec,
    CorrectnessError,
    build_bruck,
    build_direct,
    build_hierarchical,
    build_node_aware,
    run_alltoall,
    trace_alltoall,
)
from a2asim.costmodel import summarize
from a2asim.topology import Topology, TopologyError
from a2asim.vcomm import CommPhase, RepackPhase, run_schedule, seed_payload, trace_schedule

from conftest import divisors, step_events


def test_algorithm_spec_validation():
    with pytest.raises(ValueError):
        AlgorithmSpec("nope")
    with pytest.raises(ValueError):
        AlgorithmSpec("direct", "blocking")


def test_direct_p1_is_single_repack():
    topo = Topology(1, 1, 1)
    sched = build_direct(topo, 4)
    assert [type(ph) for ph in sched.phases] == [RepackPhase, CommPhase]
    assert sched.comm_steps() == 0
    trace = trace_schedule(topo, sched)
    assert trace.n_events == 0


def test_direct_pairwise_p4_step_pattern():
    topo = Topology(1, 4, 4)
    trace = trace_alltoall(topo, AlgorithmSpec("direct", "pairwise"), 4)
    steps = step_events(trace)
    assert len(steps) == 3
    assert steps[0] == [(0, 1, 4), (1, 2, 4), (2, 3, 4), (3, 0, 4)]
    assert steps[1] == [(0, 2, 4), (1, 3, 4), (2, 0, 4), (3, 1, 4)]
    assert steps[2] == [(0, 3, 4), (1, 0, 4), (2, 1, 4), (3, 2, 4)]


def test_direct_total_wire_bytes():
    for n, ppn, s in [(1, 4, 4), (2, 4, 8), (3, 2, 16)]:
        topo = Topology(n, ppn, ppn)
        p = topo.p
        for impl in ("pairwise", "nonblocking"):
            trace = trace_alltoall(topo, AlgorithmSpec("direct", impl), s)
            assert trace.nbytes.sum() == p * (p - 1) * s
            assert trace.n_events == p * (p - 1)


def test_direct_nonblocking_single_step():
    topo = Topology(2, 2, 2)
    trace = trace_alltoall(topo, AlgorithmSpec("direct", "nonblocking"), 4)
    assert trace.n_steps == 1
    assert trace.n_events == 4 * 3


def test_bruck_step_counts():
    for p in (1, 2, 3, 5, 8, 16, 31, 64, 100, 128):
        topo = Topology(1, p, p)
        sched = build_bruck(topo, 4)
        want = math.ceil(math.log2(p)) if p > 1 else 0
        assert sched.comm_steps() == want, p


def test_bruck_p8_sends_half_buffer_per_step():
    topo = Topology(2, 4, 4)
    s = 8
    trace = trace_alltoall(topo, AlgorithmSpec("bruck"), s)
    steps = step_events(trace)
    assert len(steps) == 3
    for msgs in steps:
        assert len(msgs) == 8  # one send per rank per step
        senders = {m[0] for m in msgs}
        assert senders == set(range(8))
        for _, _, nb in msgs:
            assert nb == 4 * s  # p/2 blocks of s bytes


def test_bruck_p1_identity():
    topo = Topology(1, 1, 1)
    inputs = seed_payload(topo, 4)
    out, trace = run_schedule(topo, build_bruck(topo, 4), inputs)
    assert trace.n_events == 0
    assert np.array_equal(out[0], inputs[0])


def test_bruck_non_power_of_two_message_bytes():
    # at step k every rank ships the blocks whose index has bit k set
    topo = Topology(1, 5, 5)
    s = 4
    trace = trace_alltoall(topo, AlgorithmSpec("bruck"), s)
    steps = step_events(trace)
    per_step_blocks = [
        len([i for i in range(1, 5) if (i >> k) & 1]) for k in range(3)]
    assert [msgs[0][2] for msgs in steps] == [n * s for n in per_step_blocks]


def test_hierarchical_small_example():
    # 2 nodes x 2 ranks, one leader per node: one 16-byte message each way
    topo = Topology(2, 2, 2)
    trace = trace_alltoall(topo, AlgorithmSpec("hierarchical"), 4)
    counts, nbytes = summarize(trace)
    assert counts[2] == 2
    assert nbytes[2] == 2 * 4 * 2 * 2  # s * ppn^2 per message


def test_hierarchical_single_node_has_no_l2():
    topo = Topology(1, 4, 4)
    trace = trace_alltoall(topo, AlgorithmSpec("hierarchical"), 4)
    counts, _ = summarize(trace)
    assert counts[2] == 0


def test_hierarchical_multileader_same_node_leaders_are_l1():
    topo = Topology(2, 4, 2)  # 2 leaders per node
    trace = trace_alltoall(topo, AlgorithmSpec("hierarchical"), 4)
    counts, _ = summarize(trace)
    # leader exchange spans all 4 leaders; same-node leader pairs are L1
    assert counts[1] == 2 * 2  # one pair per node, both directions
    assert counts[2] == 2 * 2 * 2 * 1  # L^2 * N * (N-1)


def test_node_aware_small_example():
    # hand-enumerated: cross-region comm size 4, 3 messages of 8 B per rank,
    # two of them inter-node
    topo = Topology(2, 4, 2)
    trace = trace_alltoall(topo, AlgorithmSpec("node_aware"), 4)
    inter = [ph for ph in trace.phases if ph.tag == "inter-alltoall"][0]
    assert inter.comm_size == 4
    ev = slice(inter.event_lo, inter.event_hi)
    sends = np.bincount(trace.src[ev], minlength=8)
    assert sends.tolist() == [3] * 8
    assert set(trace.nbytes[ev].tolist()) == {8}
    l2_sends = np.bincount(trace.src[ev][trace.level[ev] == 2], minlength=8)
    assert l2_sends.tolist() == [2] * 8


def test_node_aware_single_node_inter_phase_empty():
    topo = Topology(1, 4, 4)
    trace = trace_alltoall(topo, AlgorithmSpec("node_aware"), 4)
    inter = [ph for ph in trace.phases if ph.tag == "inter-alltoall"][0]
    assert inter.n_events == 0
    intra = [ph for ph in trace.phases if ph.tag == "intra-alltoall"][0]
    assert intra.n_events == 4 * 3


def test_closed_form_l2_counts():
    s = 4
    for n_nodes, ppn in [(2, 4), (4, 8)]:
        p = n_nodes * ppn
        for gs in divisors(ppn):
            topo = Topology(n_nodes, ppn, gs)
            L = ppn // gs

            c, b = summarize(trace_alltoall(topo, AlgorithmSpec("direct"), s))
            assert c[2] == p * (p - ppn)
            assert b[2] == p * (p - ppn) * s

            c, b = summarize(trace_alltoall(topo, AlgorithmSpec("hierarchical"), s))
            assert c[2] == L * L * n_nodes * (n_nodes - 1)
            assert b[2] == c[2] * s * gs * gs

            c, b = summarize(trace_alltoall(topo, AlgorithmSpec("node_aware"), s))
            # p*(N-1)*L reduces to ppn*N*(N-1) in the whole-node case
            assert c[2] == p * (n_nodes - 1) * L
            assert b[2] == c[2] * s * gs

            c, b = summarize(trace_alltoall(
                topo, AlgorithmSpec("multileader_node_aware"), s))
            assert c[2] == L * n_nodes * (n_nodes - 1)
            assert b[2] == c[2] * s * ppn * gs


def test_reduction_identities():
    for impl in ("pairwise", "nonblocking"):
        for n_nodes, ppn in [(2, 4), (3, 6), (4, 8)]:
            topo_full = Topology(n_nodes, ppn, ppn)
            hier = trace_alltoall(topo_full, AlgorithmSpec("hierarchical", impl), 4)
            ml_full = trace_alltoall(
                topo_full, AlgorithmSpec("multileader_node_aware", impl), 4)
            assert step_events(hier) == step_events(ml_full)

            na = trace_alltoall(topo_full, AlgorithmSpec("node_aware", impl), 4)
            ml_one = trace_alltoall(
                Topology(n_nodes, ppn, 1),
                AlgorithmSpec("multileader_node_aware", impl), 4)
            assert step_events(na) == step_events(ml_one)


def test_pairwise_discipline():
    # every pairwise all-to-all phase over m ranks: m-1 steps, one send and
    # one receive per participant per step, disjoint pairs
    a2a_tags = {"direct", "leader-alltoall", "inter-alltoall", "intra-alltoall"}
    for n_nodes, ppn, gs in [(2, 4, 2), (3, 6, 3), (4, 8, 8), (2, 8, 4)]:
        topo = Topology(n_nodes, ppn, gs)
        for kind in ("direct", "hierarchical", "node_aware",
                     "multileader_node_aware"):
            trace = trace_alltoall(topo, AlgorithmSpec(kind, "pairwise"), 4)
            for ph in trace.phases:
                if ph.kind != "comm" or ph.tag not in a2a_tags:
                    continue
                if ph.n_events == 0:
                    continue
                assert ph.n_steps == ph.comm_size - 1
                ev = slice(ph.event_lo, ph.event_hi)
                participants = set(trace.src[ev].tolist())
                assert participants == set(trace.dst[ev].tolist())
                for st in range(ph.step_lo, ph.step_hi):
                    m = trace.step[ev] == st
                    srcs = trace.src[ev][m].tolist()
                    dsts = trace.dst[ev][m].tolist()
                    assert sorted(srcs) == sorted(participants)
                    assert sorted(dsts) == sorted(participants)
                    assert len(set(srcs)) == len(srcs)
                    assert len(set(dsts)) == len(dsts)


def test_all_algorithms_agree_with_each_other():
    topo = Topology(2, 4, 2)
    s = 8
    results = {}
    for kind in ("direct", "bruck", "node_aware"):
        out, _ = run_alltoall(topo, AlgorithmSpec(kind), s)
        results[kind] = out
    for r in range(topo.p):
        assert np.array_equal(results["direct"][r], results["bruck"][r])
        assert np.array_equal(results["direct"][r], results["node_aware"][r])


def test_algorithm_spec_group_size_overrides_topology():
    topo = Topology(2, 4, 4)
    trace = trace_alltoall(topo, AlgorithmSpec("node_aware", group_size=2), 4)
    inter = [ph for ph in trace.phases if ph.tag == "inter-alltoall"][0]
    assert inter.comm_size == 4  # 2 nodes x 2 regions


def test_invalid_group_size_is_construction_error():
    topo = Topology(2, 4, 4)
    with pytest.raises(TopologyError):
        run_alltoall(topo, AlgorithmSpec("node_aware", group_size=3), 4)


def test_corrupted_repack_is_located():
    # swap two destination offsets inside the redistribution repack: the
    # oracle comparison must identify a concrete (rank, block, byte)
    topo = Topology(2, 4, 4)
    s = 4
    sched = build_node_aware(topo, s)
    mid = [ph for ph in sched.phases if isinstance(ph, RepackPhase)][1]
    orig = mid.copies_fn

    def corrupted(r):
        cps = orig(r)
        if r == 0:
            (s0, d0, n0), (s1, d1, n1) = cps[0], cps[1]
            cps[0], cps[1] = (s0, d1, n0), (s1, d0, n1)
        return cps

    mid.copies_fn = corrupted
    inputs = seed_payload(topo, s)
    out, _ = run_schedule(topo, sched, inputs)
    from a2asim.algorithms import verify_against_oracle
    from a2asim.vcomm import oracle_transpose

    with pytest.raises(CorrectnessError) as exc:
        verify_against_oracle(topo, s, out, oracle_transpose(topo, inputs))
    assert exc.value.rank >= 0
    assert exc.value.block >= 0


def test_workspace_sizes_scale_with_group():
    topo = Topology(2, 8, 4)
    ps = topo.p * 4
    assert build_direct(topo, 4).workspace_bytes == 2 * ps
    assert build_hierarchical(topo, 4).workspace_bytes == ps * (2 + 4 * 4)
    assert build_node_aware(topo, 4).workspace_bytes == 5 * ps
