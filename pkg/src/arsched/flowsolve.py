"""Flow primitives: single-pair max flow, multicommodity feasibility, and
max concurrent flow.

The single-pair solver is a small Dinic implementation over the network's
capacity pools (shared pools become an undirected edge with flow
cancellation).  The multicommodity solvers build one arc-based LP, normalised
so every coefficient is O(1), and hand it to HiGHS via scipy.  Commodities
sharing a (source, destination) pair are aggregated before solving.

All operations are pure functions of their inputs and safe to call
concurrently on shared networks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from .netgraph import Network, ResidualNetwork

# Relative accuracy contract for concurrent-flow durations.
TIME_RTOL = 1e-6
# Returned rates below this are clamped to zero (solver noise).
RATE_EPS = 1e-12
# Tolerance used when validating assignments.
FLOW_RTOL = 1e-6


class DisconnectedPairError(ValueError):
    """A commodity's endpoints are not connected in the network."""


@dataclass(frozen=True)
class Commodity:
    """One demand: move ``demand`` bits from ``source`` to ``sink``."""

    source: str
    sink: str
    demand: float  # bits

    def __post_init__(self) -> None:
        if self.source == self.sink:
            raise ValueError("commodity source equals sink")
        if not self.demand > 0:
            raise ValueError("commodity demand must be positive")


@dataclass
class MaxFlowResult:
    value: float  # bits/second
    arc_rates: dict[int, float]  # arc id -> bits/second


@dataclass
class FlowAssignment:
    """Per-commodity, per-arc rates for one window of ``duration`` seconds.

    ``rates`` and ``demands`` are keyed by (source, sink) pair; jobs sharing
    a pair are aggregated and split proportionally by the callers.
    """

    duration: float
    demands: dict[tuple[str, str], float]
    rates: dict[tuple[str, str], dict[int, float]] = field(default_factory=dict)

    def pair_rate(self, net: Network, pair: tuple[str, str]) -> float:
        """Net source outflow for one commodity, bits/second."""
        out = 0.0
        src = pair[0]
        for arc, r in self.rates.get(pair, {}).items():
            u, v = net.arcs[arc]
            if u == src:
                out += r
            elif v == src:
                out -= r
        return out

    def validate(self, net: Network, rtol: float = FLOW_RTOL) -> list[str]:
        """Check capacity, conservation, and demand satisfaction.

        Returns a list of human-readable violations (empty when clean).
        """
        problems: list[str] = []
        pool_load = np.zeros(len(net.pool_capacity))
        for pair, arc_rates in self.rates.items():
            for arc, r in arc_rates.items():
                if r < -rtol:
                    problems.append(f"{pair}: negative rate on arc {arc}")
                pool_load[net.arc_pool[arc]] += max(r, 0.0)
        over = pool_load > net.pool_capacity * (1.0 + rtol)
        for pid in np.nonzero(over)[0]:
            problems.append(
                f"pool {pid}: load {pool_load[pid]:.6g} exceeds capacity "
                f"{net.pool_capacity[pid]:.6g}"
            )
        for pair, demand in self.demands.items():
            arc_rates = self.rates.get(pair, {})
            scale = max(demand / max(self.duration, RATE_EPS), 1.0)
            balance: dict[str, float] = {}
            for arc, r in arc_rates.items():
                u, v = net.arcs[arc]
                balance[u] = balance.get(u, 0.0) - r
                balance[v] = balance.get(v, 0.0) + r
            src, snk = pair
            for node, net_in in balance.items():
                if node == src or node == snk:
                    continue
                if abs(net_in) > rtol * scale:
                    problems.append(f"{pair}: conservation broken at {node}")
            delivered = -balance.get(src, 0.0) * self.duration
            if delivered < demand * (1.0 - rtol):
                problems.append(
                    f"{pair}: delivered {delivered:.6g} of {demand:.6g} bits"
                )
        return problems


# -- Dinic max flow -----------------------------------------------------------


def max_flow_value(
    net: Network | ResidualNetwork,
    s: str,
    d: str,
    available: np.ndarray | None = None,
    arc_mask: frozenset[int] | None = None,
) -> MaxFlowResult:
    """Maximum s->d flow rate over residual pool capacities.

    Accepts either a network or a residual view of one.  ``available`` is a
    per-pool availability vector (defaults to the full capacities);
    ``arc_mask``, when given, restricts flow to those arc ids.  A
    disconnected pair yields value 0, not an error.
    """
    if isinstance(net, ResidualNetwork):
        if available is None:
            available = net.available
        net = net.base
    if s == d:
        raise ValueError("source equals destination")
    avail = net.pool_capacity if available is None else available
    cap_floor = net.pool_capacity * 1e-9  # ignore residual dust

    node_id = {n: i for i, n in enumerate(net.nodes)}
    if s not in node_id or d not in node_id:
        raise ValueError("unknown node")
    # Edge arrays: to[], cap[], paired reverse at e ^ 1.
    to: list[int] = []
    cap: list[float] = []
    head: list[list[int]] = [[] for _ in net.nodes]
    meta: list[tuple[int, int | None, float]] = []  # edge -> (fwd arc, rev arc, cap0)

    def add(u: int, v: int, c_fwd: float, c_rev: float, fwd_arc: int, rev_arc: int | None):
        head[u].append(len(to))
        to.append(v)
        cap.append(c_fwd)
        head[v].append(len(to))
        to.append(u)
        cap.append(c_rev)
        meta.append((fwd_arc, rev_arc, c_fwd))

    for pid, arc_ids in enumerate(net.pool_arcs):
        c = float(avail[pid])
        if c <= cap_floor[pid]:
            continue
        allowed = [a for a in arc_ids if arc_mask is None or a in arc_mask]
        if not allowed:
            continue
        if len(allowed) == 2:
            a_fwd, a_rev = allowed
            u, v = net.arcs[a_fwd]
            add(node_id[u], node_id[v], c, c, a_fwd, a_rev)
        else:
            a = allowed[0]
            u, v = net.arcs[a]
            # Shared pool with one direction masked off degenerates to one-way.
            add(node_id[u], node_id[v], c, 0.0, a, None)

    src, snk = node_id[s], node_id[d]
    n = len(net.nodes)
    eps = max(float(np.max(avail, initial=0.0)) * 1e-12, 1e-300)
    total = 0.0
    level = [0] * n
    it = [0] * n

    def bfs() -> bool:
        for i in range(n):
            level[i] = -1
        level[src] = 0
        q = [src]
        qi = 0
        while qi < len(q):
            u = q[qi]
            qi += 1
            for e in head[u]:
                v = to[e]
                if cap[e] > eps and level[v] < 0:
                    level[v] = level[u] + 1
                    q.append(v)
        return level[snk] >= 0

    def dfs(u: int, pushed: float) -> float:
        if u == snk:
            return pushed
        while it[u] < len(head[u]):
            e = head[u][it[u]]
            v = to[e]
            if cap[e] > eps and level[v] == level[u] + 1:
                got = dfs(v, min(pushed, cap[e]))
                if got > eps:
                    cap[e] -= got
                    cap[e ^ 1] += got
                    return got
            it[u] += 1
        return 0.0

    while bfs():
        for i in range(n):
            it[i] = 0
        while True:
            pushed = dfs(src, math.inf)
            if pushed <= eps:
                break
            total += pushed

    rates: dict[int, float] = {}
    for e2, (fwd_arc, rev_arc, c0) in enumerate(meta):
        e = 2 * e2
        x = c0 - cap[e]  # net flow in the forward direction
        if x > RATE_EPS:
            rates[fwd_arc] = rates.get(fwd_arc, 0.0) + x
        elif x < -RATE_EPS and rev_arc is not None:
            rates[rev_arc] = rates.get(rev_arc, 0.0) - x
    return MaxFlowResult(total, rates)


# -- multicommodity LP --------------------------------------------------------


def aggregate_demands(jobs) -> dict[tuple[str, str], float]:
    """Sum demands over commodities sharing a (source, sink) pair."""
    demands: dict[tuple[str, str], float] = {}
    for c in jobs:
        key = (c.source, c.sink)
        demands[key] = demands.get(key, 0.0) + c.demand
    return demands


def _concurrent_lp(net: Network, demands: dict[tuple[str, str], float]):
    """Maximise the common rate multiplier for all commodities at once.

    Returns (T_min, rates) where ``rates[pair]`` maps arc id -> bits/second
    at which the pair's demand fits exactly into T_min.  T_min is +inf when
    some commodity cannot route.
    """
    pairs = sorted(demands)
    K = len(pairs)
    A = net.num_arcs
    d = np.array([demands[p] for p in pairs])
    d_max = float(d.max())
    u = d / d_max
    c_ref = float(net.pool_capacity.max())

    rows: list[int] = []
    cols: list[int] = []
    vals: list[float] = []
    n_eq = 0
    # Conservation at every node but the sink; the source row carries -u_k w.
    for k, (src, snk) in enumerate(pairs):
        base = k * A
        row_of_node = {}
        for n_name in net.nodes:
            if n_name == snk:
                continue
            row_of_node[n_name] = n_eq
            n_eq += 1
        for a, (x, y) in enumerate(net.arcs):
            r = row_of_node.get(x)
            if r is not None:
                rows.append(r)
                cols.append(base + a)
                vals.append(1.0)
            r = row_of_node.get(y)
            if r is not None:
                rows.append(r)
                cols.append(base + a)
                vals.append(-1.0)
        rows.append(row_of_node[src])
        cols.append(K * A)
        vals.append(-u[k])
    a_eq = sparse.coo_matrix((vals, (rows, cols)), shape=(n_eq, K * A + 1)).tocsr()
    b_eq = np.zeros(n_eq)

    rows, cols, vals = [], [], []
    for pid, arc_ids in enumerate(net.pool_arcs):
        for a in arc_ids:
            for k in range(K):
                rows.append(pid)
                cols.append(k * A + a)
                vals.append(1.0)
    a_ub = sparse.coo_matrix(
        (vals, (rows, cols)), shape=(len(net.pool_capacity), K * A + 1)
    ).tocsr()
    b_ub = net.pool_capacity / c_ref

    cost = np.zeros(K * A + 1)
    cost[-1] = -1.0
    res = linprog(cost, A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=b_eq, method="highs")
    if res.status != 0:
        raise RuntimeError(f"concurrent-flow LP failed: {res.message}")
    w = float(res.x[-1])
    if w <= RATE_EPS:
        return math.inf, None
    t_min = d_max / (w * c_ref)
    rates: dict[tuple[str, str], dict[int, float]] = {}
    x = res.x[: K * A] * c_ref
    for k, pair in enumerate(pairs):
        arc_rates = {}
        for a in range(A):
            r = x[k * A + a]
            if r > RATE_EPS:
                arc_rates[a] = float(r)
        rates[pair] = arc_rates
    return t_min, rates


def _check_connectivity(net: Network, demands) -> None:
    reach: dict[str, dict[str, int]] = {}
    for s, dd in demands:
        if s not in reach:
            reach[s] = net.hop_distances(s)
        if dd not in reach[s]:
            raise DisconnectedPairError(f"pair {s!r} -> {dd!r} is disconnected")


def max_concurrent_time(net: Network, jobs) -> tuple[float, FlowAssignment]:
    """Minimum common duration T so that all demands route at rates d/T.

    An empty job list returns (0.0, empty assignment).  Raises
    DisconnectedPairError when some commodity cannot route at all.
    """
    jobs = list(jobs)
    if not jobs:
        return 0.0, FlowAssignment(0.0, {})
    demands = aggregate_demands(jobs)
    _check_connectivity(net, demands)
    if len(demands) == 1:
        ((pair, d),) = demands.items()
        mf = max_flow_value(net, pair[0], pair[1])
        t_min = d / mf.value
        return t_min, FlowAssignment(t_min, demands, {pair: dict(mf.arc_rates)})
    t_min, rates = _concurrent_lp(net, demands)
    if rates is None:  # pragma: no cover - guarded by connectivity check
        raise DisconnectedPairError("no concurrent flow exists")
    return t_min, FlowAssignment(t_min, demands, rates)


def multicomm(net: Network, jobs, duration: float) -> tuple[bool, FlowAssignment | None]:
    """Can all demands be moved concurrently within ``duration`` seconds?

    Infeasibility (including disconnected pairs) is a normal False return.
    The returned assignment carries rates scaled to finish exactly at
    ``duration``.
    """
    jobs = list(jobs)
    if not jobs:
        raise ValueError("job list must be nonempty")
    if not duration > 0:
        raise ValueError("duration must be positive")
    try:
        t_min, assignment = max_concurrent_time(net, jobs)
    except DisconnectedPairError:
        return False, None
    if t_min > duration * (1.0 + TIME_RTOL):
        return False, None
    scale = t_min / duration
    scaled = {
        pair: {a: r * scale for a, r in arc_rates.items()}
        for pair, arc_rates in assignment.rates.items()
    }
    return True, FlowAssignment(duration, assignment.demands, scaled)
