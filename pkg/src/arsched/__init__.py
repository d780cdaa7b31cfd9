"""Advance-reservation scheduling for bulk transfers over capacitated
networks: flow solvers, online schedulers, and a deterministic simulator."""

from .flowsolve import (
    Commodity,
    DisconnectedPairError,
    FlowAssignment,
    max_concurrent_time,
    max_flow_value,
    multicomm,
)
from .metrics import LoadPoint, fluid_bound, sweep_aggregate
from .netgraph import (
    DIRECTED,
    FULL_DUPLEX,
    UNDIRECTED_SHARED,
    Edge,
    Network,
    ResidualNetwork,
    TopologyError,
    clique,
    count_simple_paths,
    lambdarail,
    parse_topology,
    ring,
    serialize_topology,
    shortest_path_subgraph,
    star,
)
from .pathdisp import PathSet, decompose, disp_wrap, widest_path
from .schedulers import (
    BatchAllScheduler,
    BatchLimScheduler,
    GreedyScheduler,
    GreedyShortestScheduler,
    Job,
    RejectedJobError,
    Reservation,
    make_scheduler,
    verify_competitive,
)
from .simcore import (
    ConstantSize,
    EventQueue,
    ExponentialSize,
    ParetoSize,
    WorkloadSpec,
    generate_trace,
    run,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
