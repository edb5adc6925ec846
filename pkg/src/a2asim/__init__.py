"""Deterministic simulator and schedule library for hierarchical all-to-all
exchanges on many-core machines."""

from .topology import (
    CommGroup,
    RankCoord,
    Topology,
    TopologyError,
    coord_of,
    cross_node_comm,
    group_comm,
    leader_group_comm,
    local_comm,
)
from .vcomm import (
    CommPhase,
    CommStep,
    RepackPhase,
    Schedule,
    ScheduleDeadlockError,
    ScheduleError,
    Trace,
    TraceEvent,
    classify_level,
    oracle_transpose,
    run_schedule,
    seed_payload,
    seed_rank_payload,
    trace_schedule,
)
from .algorithms import (
    ALGORITHMS,
    IMPLS,
    AlgorithmSpec,
    CorrectnessError,
    build_bruck,
    build_direct,
    build_hierarchical,
    build_multileader_node_aware,
    build_node_aware,
    build_schedule,
    run_alltoall,
    trace_alltoall,
)
from .costmodel import (
    CostParams,
    CostReport,
    breakdown,
    default_params,
    load_params,
    predict,
    summarize,
)

__version__ = "0.1.0"
