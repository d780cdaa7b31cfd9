"""Capacity bounds and cross-run aggregation.

The fluid bound asks for the largest request rate whose long-run average
traffic matrix is still a feasible multicommodity flow: with load split
evenly over P ordered pairs and mean size F, the per-pair rate lambda*F/P
must route concurrently, so lambda_max = P / (F * T_unit) where T_unit is
the concurrent-flow time of one unit demand per pair.
"""

from __future__ import annotations

from dataclasses import dataclass

from .flowsolve import Commodity, max_concurrent_time
from .netgraph import Network

SWEEP_COLUMNS = (
    "scheduler",
    "load_req_per_hour",
    "mean_delay_s",
    "p99_delay_s",
    "max_delay_s",
    "saturated",
)


@dataclass(frozen=True)
class LoadPoint:
    scheduler: str
    load_req_per_hour: float
    mean_delay_s: float
    p99_delay_s: float
    max_delay_s: float
    saturated: bool

    def __post_init__(self):
        if self.load_req_per_hour < 0 or self.mean_delay_s < 0:
            raise ValueError("rates and delays must be nonnegative")


def fluid_bound(
    net: Network, mean_size_bits: float, pair_policy: tuple = ("uniform-distinct",)
) -> float:
    """Largest sustainable arrival rate, requests/hour.

    Raises DisconnectedPairError when some ordered pair cannot route.
    """
    if not mean_size_bits > 0:
        raise ValueError("mean size must be positive")
    if pair_policy[0] == "fixed":
        pairs = [(pair_policy[1], pair_policy[2])]
    else:
        pairs = [(a, b) for a in net.nodes for b in net.nodes if a != b]
    demands = [Commodity(s, d, 1.0) for s, d in pairs]
    t_unit, _ = max_concurrent_time(net, demands)
    return len(pairs) * 3600.0 / (mean_size_bits * t_unit)


def sweep_aggregate(summaries) -> list[LoadPoint]:
    """Fold run summaries into one table, one row per (scheduler, load)."""
    summaries = list(summaries)
    if not summaries:
        raise ValueError("no runs to aggregate")
    topologies = {s["topology_id"] for s in summaries}
    if len(topologies) > 1:
        raise ValueError("cannot aggregate runs over different topologies")
    points = [
        LoadPoint(
            s["scheduler"],
            float(s["load_req_per_hour"]),
            s["mean_delay_s"],
            s["p99_delay_s"],
            s["max_delay_s"],
            bool(s["saturated"]),
        )
        for s in summaries
    ]
    points.sort(key=lambda p: (p.scheduler, p.load_req_per_hour))
    return points


def write_loadpoints_csv(points, fobj, config_echo: str | None = None) -> None:
    if config_echo:
        fobj.write(f"# config: {config_echo}\n")
    fobj.write(",".join(SWEEP_COLUMNS) + "\n")
    for p in points:
        fobj.write(
            f"{p.scheduler},{p.load_req_per_hour!r},{p.mean_delay_s!r},"
            f"{p.p99_delay_s!r},{p.max_delay_s!r},{str(p.saturated).lower()}\n"
        )


def first_saturated_load(points, scheduler: str) -> float | None:
    """Smallest load at which a scheduler's saturated flag is set."""
    loads = [
        p.load_req_per_hour
        for p in points
        if p.scheduler == scheduler and p.saturated
    ]
    return min(loads) if loads else None
