"""Simulated machine hierarchy: nodes, ranks per node, aggregation groups.

Rank layout is node-major with contiguous local ranks, and aggregation
groups are contiguous slices of local ranks:

    global_rank = node * ppn + local_rank
    local_rank  = group_in_node * group_size + rank_in_group

A "region" is one (node, group_in_node) slice.  With group_size == ppn the
region is the whole node; with group_size == 1 every rank is its own region.
The rank with rank_in_group == 0 is the region's leader.
"""
from __future__ import annotations

from dataclasses import dataclass


class TopologyError(ValueError):
    """Invalid machine shape or rank arguments."""


@dataclass(frozen=True)
class Topology:
    """Machine shape: n_nodes nodes, ppn ranks each, groups of group_size."""

    n_nodes: int
    ppn: int
    group_size: int

    def __post_init__(self):
        if self.n_nodes < 1 or self.ppn < 1 or self.group_size < 1:
            raise TopologyError(
                f"n_nodes, ppn, group_size must all be >= 1, got "
                f"({self.n_nodes}, {self.ppn}, {self.group_size})"
            )
        if self.ppn % self.group_size != 0:
            raise TopologyError(
                f"group_size {self.group_size} does not divide ppn {self.ppn}"
            )

    @property
    def p(self) -> int:
        """Total rank count."""
        return self.n_nodes * self.ppn

    @property
    def leaders_per_node(self) -> int:
        return self.ppn // self.group_size

    @property
    def n_regions(self) -> int:
        """Total aggregation regions across the machine."""
        return self.n_nodes * self.leaders_per_node


@dataclass(frozen=True)
class RankCoord:
    global_rank: int
    node: int
    local_rank: int
    group_in_node: int
    rank_in_group: int


@dataclass(frozen=True)
class CommGroup:
    """Ordered member list of one sub-communicator."""

    ranks: tuple[int, ...]

    @property
    def size(self) -> int:
        return len(self.ranks)

    def index_of(self, rank: int) -> int:
        """Position of `rank` within the group; raises if not a member."""
        try:
            return self.ranks.index(rank)
        except ValueError:
            raise TopologyError(f"rank {rank} is not a member of {self.ranks}")


def _check_rank(topo: Topology, rank: int) -> None:
    if not 0 <= rank < topo.p:
        raise TopologyError(f"rank {rank} out of range [0, {topo.p})")


def coord_of(topo: Topology, rank: int) -> RankCoord:
    """Decompose a global rank into its hierarchy coordinates."""
    _check_rank(topo, rank)
    node, local = divmod(rank, topo.ppn)
    group, in_group = divmod(local, topo.group_size)
    return RankCoord(rank, node, local, group, in_group)


def rank_of(topo: Topology, node: int, local_rank: int) -> int:
    """Inverse of coord_of for (node, local_rank)."""
    return node * topo.ppn + local_rank


def region_rank(topo: Topology, region: int, member: int) -> int:
    """Global rank of `member` within region id `region` (node-major regions)."""
    node, group = divmod(region, topo.leaders_per_node)
    return node * topo.ppn + group * topo.group_size + member


def local_comm(topo: Topology, rank: int) -> CommGroup:
    """Ranks in this rank's region, ordered by rank_in_group."""
    c = coord_of(topo, rank)
    base = rank_of(topo, c.node, c.group_in_node * topo.group_size)
    return CommGroup(tuple(range(base, base + topo.group_size)))


def group_comm(topo: Topology, rank: int) -> CommGroup:
    """Ranks sharing this rank's position within their region, one per region.

    Ordered by (node, group_in_node); size n_nodes * leaders_per_node.
    """
    c = coord_of(topo, rank)
    return CommGroup(tuple(
        region_rank(topo, g, c.rank_in_group) for g in range(topo.n_regions)
    ))


def cross_node_comm(topo: Topology, rank: int) -> CommGroup:
    """Ranks with this rank's local_rank on every node, ordered by node.

    Equals group_comm when group_size == ppn; the combined multi-leader
    exchange uses it to pair corresponding leaders across nodes.
    """
    c = coord_of(topo, rank)
    return CommGroup(tuple(
        rank_of(topo, n, c.local_rank) for n in range(topo.n_nodes)
    ))


def leader_group_comm(topo: Topology, rank: int) -> CommGroup:
    """The leaders on this rank's node, ordered by group_in_node.

    Only leaders (rank_in_group == 0) may ask.
    """
    c = coord_of(topo, rank)
    if c.rank_in_group != 0:
        raise TopologyError(
            f"rank {rank} is not a leader (rank_in_group={c.rank_in_group})"
        )
    return CommGroup(tuple(
        rank_of(topo, c.node, g * topo.group_size)
        for g in range(topo.leaders_per_node)
    ))
