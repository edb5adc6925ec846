import pytest

from a2asim.topology import (
    Topology,
    TopologyError,
    coord_of,
    cross_node_comm,
    group_comm,
    leader_group_comm,
    local_comm,
    region_rank,
)


def all_topologies(max_nodes=3, ppns=(1, 2, 4, 6)):
    for n in range(1, max_nodes + 1):
        for ppn in ppns:
            for gs in range(1, ppn + 1):
                if ppn % gs == 0:
                    yield Topology(n, ppn, gs)


def test_construction_validates_shape():
    with pytest.raises(TopologyError):
        Topology(0, 4, 2)
    with pytest.raises(TopologyError):
        Topology(2, 0, 1)
    with pytest.raises(TopologyError):
        Topology(2, 4, 3)  # 3 does not divide 4
    with pytest.raises(TopologyError):
        Topology(2, 4, 0)


def test_derived_counts():
    topo = Topology(2, 4, 2)
    assert topo.p == 8
    assert topo.leaders_per_node == 2
    assert topo.n_regions == 4


def test_coord_of_examples():
    c = coord_of(Topology(2, 4, 2), 5)
    assert (c.node, c.local_rank, c.group_in_node, c.rank_in_group) == (1, 1, 0, 1)

    c = coord_of(Topology(1, 1, 1), 0)
    assert (c.node, c.local_rank, c.group_in_node, c.rank_in_group) == (0, 0, 0, 0)

    c = coord_of(Topology(32, 112, 4), 3583)
    assert (c.node, c.local_rank, c.group_in_node, c.rank_in_group) == (31, 111, 27, 3)


def test_coord_of_matches_brute_force_enumeration():
    # enumerate all 3584 coordinates straight from the layout definition
    topo = Topology(32, 112, 4)
    rank = 0
    for node in range(32):
        for group in range(112 // 4):
            for in_group in range(4):
                c = coord_of(topo, rank)
                assert c.node == node
                assert c.group_in_node == group
                assert c.rank_in_group == in_group
                assert c.local_rank == group * 4 + in_group
                assert c.global_rank == rank
                rank += 1


def test_coord_of_rejects_out_of_range():
    topo = Topology(2, 4, 2)
    for bad in (-1, 8, 100):
        with pytest.raises(TopologyError):
            coord_of(topo, bad)


def test_local_comm_examples():
    assert local_comm(Topology(2, 4, 4), 5).ranks == (4, 5, 6, 7)
    assert local_comm(Topology(2, 4, 2), 5).ranks == (4, 5)
    assert local_comm(Topology(1, 1, 1), 0).ranks == (0,)


def test_group_comm_examples():
    assert group_comm(Topology(2, 4, 4), 5).ranks == (1, 5)
    assert group_comm(Topology(2, 4, 2), 5).ranks == (1, 3, 5, 7)
    assert group_comm(Topology(32, 112, 112), 0).ranks == tuple(range(0, 3584, 112))


def test_leader_group_comm_examples():
    assert leader_group_comm(Topology(2, 4, 2), 4).ranks == (4, 6)
    assert leader_group_comm(Topology(3, 4, 4), 8).ranks == (8,)
    assert leader_group_comm(Topology(1, 4, 1), 2).ranks == (0, 1, 2, 3)


def test_leader_group_comm_rejects_non_leader():
    with pytest.raises(TopologyError):
        leader_group_comm(Topology(2, 4, 2), 5)  # rank_in_group == 1


def test_cross_node_comm():
    assert cross_node_comm(Topology(3, 4, 2), 5).ranks == (1, 5, 9)
    # collapses to group_comm when groups span whole nodes
    topo = Topology(3, 4, 4)
    for r in range(topo.p):
        assert cross_node_comm(topo, r).ranks == group_comm(topo, r).ranks


def test_partition_property():
    # each comm family tiles [0, p) exactly once
    for topo in all_topologies():
        for fam in (local_comm, group_comm):
            seen = []
            for r in range(topo.p):
                seen.extend(fam(topo, r).ranks)
            assert sorted(seen) == [r for r in range(topo.p)
                                    for _ in range(len(fam(topo, r).ranks))]
            groups = {fam(topo, r).ranks for r in range(topo.p)}
            flat = sorted(r for g in groups for r in g)
            assert flat == list(range(topo.p))


def test_member_consistency():
    # any two members of a group derive the identical ordered list
    for topo in all_topologies():
        for r in range(topo.p):
            for fam in (local_comm, group_comm, cross_node_comm):
                g = fam(topo, r)
                assert r in g.ranks
                for other in g.ranks:
                    assert fam(topo, other).ranks == g.ranks


def test_group_size_reductions():
    # group_size == ppn: local_comm is the node, group_comm pairs local ranks
    topo = Topology(4, 6, 6)
    for r in range(topo.p):
        node = r // 6
        assert local_comm(topo, r).ranks == tuple(range(node * 6, node * 6 + 6))
        assert len(group_comm(topo, r).ranks) == 4
    # group_size == 1: every rank is alone in its region
    topo = Topology(4, 6, 1)
    for r in range(topo.p):
        assert local_comm(topo, r).ranks == (r,)
    assert group_comm(topo, 0).ranks == tuple(range(24))


def test_region_rank_round_trip():
    for topo in all_topologies():
        for g in range(topo.n_regions):
            for m in range(topo.group_size):
                r = region_rank(topo, g, m)
                c = coord_of(topo, r)
                assert c.node * topo.leaders_per_node + c.group_in_node == g
                assert c.rank_in_group == m


def test_comm_group_index_of():
    g = local_comm(Topology(2, 4, 2), 5)
    assert g.index_of(5) == 1
    with pytest.raises(TopologyError):
        g.index_of(0)
