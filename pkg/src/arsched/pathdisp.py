"""Bounded-dispersion flow approximation.

A flow assignment may spread one commodity over very many arcs.  Repeatedly
peeling off the widest (max-bottleneck) path and reserving its bottleneck
rate yields, after k extractions on a graph with |E| arcs, at least a
(1 - e^(-k/|E|)) fraction of the flow; each peeled path carries at least
remaining/|E|.  The ``*Disp`` schedulers apply this at batch or window commit
and stretch the window so every job still completes.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

from . import flowsolve
from .flowsolve import RATE_EPS
from .netgraph import Network
from .schedulers import BatchAllScheduler, BatchLimScheduler


@dataclass
class Extraction:
    path: tuple[str, ...]
    bottleneck: float
    remaining_before: float  # flow value still routable before this peel


@dataclass
class PathSet:
    source: str
    sink: str
    paths: list[tuple[tuple[str, ...], float]]
    achieved: float
    source_flow: float
    extractions: list[Extraction] = field(default_factory=list)

    def arc_rates(self, net: Network) -> dict[int, float]:
        rates: dict[int, float] = {}
        for nodes, rate in self.paths:
            for u, v in zip(nodes, nodes[1:]):
                a = net.arc_index[(u, v)]
                rates[a] = rates.get(a, 0.0) + rate
        return rates


def flow_value(net: Network, rates: dict[int, float], s: str) -> float:
    """Net outflow of ``s`` under per-arc rates."""
    out = 0.0
    for a, r in rates.items():
        u, v = net.arcs[a]
        if u == s:
            out += r
        elif v == s:
            out -= r
    return out


def widest_path(net: Network, rates: dict[int, float], s: str, d: str):
    """Max-bottleneck s->d path over arcs with positive rate.

    Ties break toward fewer hops, then lexicographically smaller node
    sequences, so extraction order is deterministic.  Returns
    (path, bottleneck) or None when no positive-rate path exists.
    """
    adj: dict[str, list[tuple[str, float]]] = {}
    for a, r in rates.items():
        if r > RATE_EPS:
            u, v = net.arcs[a]
            adj.setdefault(u, []).append((v, r))
    for lst in adj.values():
        lst.sort()
    heap: list[tuple[float, int, tuple[str, ...]]] = [(-math.inf, 0, (s,))]
    settled: set[str] = set()
    while heap:
        neg_b, hops, path = heapq.heappop(heap)
        node = path[-1]
        if node in settled:
            continue
        settled.add(node)
        if node == d:
            return path, -neg_b
        for v, r in adj.get(node, ()):  # extensions stay simple: all earlier
            if v in settled:  # path nodes are already settled
                continue
            heapq.heappush(heap, (max(neg_b, -r), hops + 1, path + (v,)))
    return None


def decompose(net: Network, rates: dict[int, float], s: str, d: str, k: int) -> PathSet:
    """Approximate a flow by at most k widest paths.

    Reserves each path's bottleneck and subtracts it before the next peel.
    ``achieved`` is the summed path rate; it is at least
    (1 - e^(-k/|E|)) * source_flow and exactly source_flow once k covers a
    full decomposition.
    """
    if k < 1:
        raise ValueError("path budget k must be >= 1")
    residual = {a: r for a, r in rates.items() if r > RATE_EPS}
    f0 = flow_value(net, residual, s)
    remaining = f0
    floor = max(f0 * 1e-9, RATE_EPS)
    paths: list[tuple[tuple[str, ...], float]] = []
    extractions: list[Extraction] = []
    for _ in range(k):
        if remaining <= floor:
            break
        found = widest_path(net, residual, s, d)
        if found is None:
            break
        path, b = found
        extractions.append(Extraction(path, b, remaining))
        paths.append((path, b))
        for u, v in zip(path, path[1:]):
            a = net.arc_index[(u, v)]
            left = residual[a] - b
            if left > RATE_EPS:
                residual[a] = left
            else:
                del residual[a]
        remaining -= b
    achieved = sum(r for _, r in paths)
    return PathSet(s, d, paths, achieved, f0, extractions)


def dispersion_fraction(k: int, num_arcs: int) -> float:
    """Guaranteed achieved/flow fraction for a k-path budget: 1 - e^(-k/|E|)."""
    return 1.0 - math.exp(-k / num_arcs)


# -- dispersion-bounded schedulers ---------------------------------------------


class BatchAllDispScheduler(BatchAllScheduler):
    """BatchAll whose committed flows use at most k paths per commodity.

    Every batch is stretched by the worst commodity's lost fraction (at most
    1/(1 - e^(-k/|E|))) and commodity rates are scaled down so the stretched
    window delivers each demand exactly; capacities are never exceeded.
    """

    name = "batchall-disp"

    def __init__(self, net: Network, k: int, keep_plans: bool = False):
        super().__init__(net, keep_plans=keep_plans)
        if k < 1:
            raise ValueError("path budget k must be >= 1")
        self.k = k

    def _solve(self, jobs):
        duration, rates, _ = super()._solve(jobs)
        return self._disperse(duration, rates)

    def _solve_single(self, job):
        duration, rates, _ = super()._solve_single(job)
        return self._disperse(duration, rates)

    def _disperse(self, duration, rates):
        decomposed: dict = {}
        stretch = 1.0
        for pair, arc_rates in rates.items():
            ps = decompose(self.net, arc_rates, pair[0], pair[1], self.k)
            rho = min(ps.achieved / ps.source_flow, 1.0)
            stretch = max(stretch, 1.0 / rho)
            decomposed[pair] = ps
        stretched = duration * stretch
        out_rates: dict = {}
        counts: dict = {}
        for pair, ps in decomposed.items():
            # Deliver demand = source_flow * duration exactly over the
            # stretched window.
            scale = (ps.source_flow * duration) / (ps.achieved * stretched)
            out_rates[pair] = {
                a: r * scale for a, r in ps.arc_rates(self.net).items()
            }
            counts[pair] = len(ps.paths)
        return stretched, out_rates, counts


class BatchLimDispScheduler(BatchLimScheduler):
    """BatchLim whose windows only admit jobs the k-path decomposition can
    still deliver, so completion promises survive the peeling.

    A window fits a job set when the concurrent-flow time stretched by the
    worst commodity's decomposition loss stays within the window; the
    committed rates are the peeled paths scaled to deliver each demand
    exactly.  The stretch never exceeds 1/(1 - e^(-k/|E|)).
    """

    name = "batchlim-disp"

    def __init__(self, net: Network, k: int, keep_plans: bool = False):
        super().__init__(net, keep_plans=keep_plans)
        if k < 1:
            raise ValueError("path budget k must be >= 1")
        self.k = k

    def _feasible(self, jobs, length):
        commodities = [j.commodity() for j in jobs]
        try:
            t_min, assignment = flowsolve.max_concurrent_time(self.net, commodities)
        except flowsolve.DisconnectedPairError:
            return False, None, {}
        decomposed: dict = {}
        stretch = 1.0
        for pair, arc_rates in assignment.rates.items():
            ps = decompose(self.net, arc_rates, pair[0], pair[1], self.k)
            rho = min(ps.achieved / ps.source_flow, 1.0)
            stretch = max(stretch, 1.0 / rho)
            decomposed[pair] = ps
        if t_min * stretch > length * (1.0 + flowsolve.TIME_RTOL):
            return False, None, {}
        rates: dict = {}
        counts: dict = {}
        for pair, ps in decomposed.items():
            scale = assignment.demands[pair] / (ps.achieved * length)
            rates[pair] = {
                a: r * min(scale, 1.0)
                for a, r in ps.arc_rates(self.net).items()
            }
            counts[pair] = len(ps.paths)
        return True, rates, counts

    def _min_time(self, job, mf) -> float:
        ps = decompose(self.net, mf.arc_rates, job.source, job.destination, self.k)
        return job.size / ps.achieved

    def _commit_windows(self) -> None:
        for w in self.windows:
            for res in self._res_by_window.get(w.id, []):
                res.num_paths = w.path_counts.get((res.source, res.destination), 0)


def disp_wrap(scheduler, k: int):
    """Wrap a fresh BatchAll/BatchLim instance with a k-path budget."""
    if not isinstance(scheduler, (BatchAllScheduler, BatchLimScheduler)):
        raise TypeError("disp_wrap applies to BatchAll or BatchLim schedulers")
    if scheduler.reservations:
        raise ValueError("disp_wrap needs an unused scheduler")
    if isinstance(scheduler, BatchAllScheduler):
        return BatchAllDispScheduler(scheduler.net, k, keep_plans=scheduler.keep_plans)
    return BatchLimDispScheduler(scheduler.net, k, keep_plans=scheduler.keep_plans)
