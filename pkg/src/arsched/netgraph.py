"""Capacitated network topologies: parsing, generators, and path structure.

Edge semantics come in three modes:

* ``directed`` -- each declared edge is an independent one-way arc.
* ``full-duplex`` -- each link expands to two independent arcs, one per
  direction, each with the stated capacity.
* ``undirected-shared`` -- each link expands to two arcs drawing on a single
  shared capacity pool: flow(u->v) + flow(v->u) <= capacity.

Internally a network is a list of directed arcs plus a list of capacity
pools; every arc references the pool it draws from.  Canonical units are
bits and seconds everywhere; parsers convert (1 TB = 8e12 bits).
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

import numpy as np

DIRECTED = "directed"
UNDIRECTED_SHARED = "undirected-shared"
FULL_DUPLEX = "full-duplex"
MODES = (DIRECTED, UNDIRECTED_SHARED, FULL_DUPLEX)

# Relative tolerance for capacity comparisons.
CAP_RTOL = 1e-9

_UNIT_BPS = {
    "bps": 1.0,
    "kbps": 1e3,
    "mbps": 1e6,
    "gbps": 1e9,
    "tbps": 1e12,
    "b/s": 1.0,
    "kb/s": 1e3,
    "mb/s": 1e6,
    "gb/s": 1e9,
    "tb/s": 1e12,
}

TB_BITS = 8e12  # file-size unit used by workload parameters


class TopologyError(ValueError):
    """Malformed topology document or inconsistent network definition."""


class PathLimitExceeded(RuntimeError):
    """Raised when simple-path enumeration exceeds the caller's budget."""


@dataclass(frozen=True)
class Edge:
    """One declared link: ``u -> v`` (or ``u -- v`` in undirected modes)."""

    u: str
    v: str
    capacity: float  # bits/second

    def __post_init__(self) -> None:
        if self.u == self.v:
            raise TopologyError(f"self-loop edge {self.u!r}")
        if not (self.capacity > 0.0 and math.isfinite(self.capacity)):
            raise TopologyError(
                f"edge {self.u!r}->{self.v!r}: capacity must be positive and "
                f"finite, got {self.capacity!r}"
            )


class Network:
    """Immutable capacitated graph.

    Attributes:
        nodes: sorted tuple of node identifiers.
        links: declared edges, in declaration order.
        mode: one of ``MODES``.
        arcs: directed arcs ``(u, v)`` derived from the links.
        pool_capacity: numpy array of capacity per pool (bits/second).
        arc_pool: pool index for each arc.

    Instances are safe to share across threads; schedulers never mutate them.
    """

    def __init__(self, edges, mode: str, nodes=None):
        if mode not in MODES:
            raise TopologyError(f"unknown mode {mode!r}")
        edges = tuple(edges)
        if not edges:
            raise TopologyError("graph with no edges")
        declared = set(nodes) if nodes is not None else None
        seen: set[str] = set()
        for e in edges:
            if declared is not None:
                for end in (e.u, e.v):
                    if end not in declared:
                        raise TopologyError(f"unknown node reference {end!r}")
            seen.update((e.u, e.v))
        self.mode = mode
        self.links = edges
        self.nodes = tuple(sorted(declared if declared is not None else seen))

        # Duplicate detection: ordered pairs in directed mode, unordered
        # otherwise (both directions of one link come from a single line).
        keys = set()
        for e in edges:
            key = (e.u, e.v) if mode == DIRECTED else tuple(sorted((e.u, e.v)))
            if key in keys:
                raise TopologyError(f"duplicate edge {e.u!r} {e.v!r}")
            keys.add(key)

        arcs: list[tuple[str, str]] = []
        arc_pool: list[int] = []
        pool_capacity: list[float] = []
        pool_arcs: list[tuple[int, ...]] = []
        for e in edges:
            pid = len(pool_capacity)
            if mode == DIRECTED:
                pool_capacity.append(e.capacity)
                arcs.append((e.u, e.v))
                arc_pool.append(pid)
                pool_arcs.append((len(arcs) - 1,))
            elif mode == FULL_DUPLEX:
                arcs.append((e.u, e.v))
                arc_pool.append(pid)
                pool_capacity.append(e.capacity)
                pool_arcs.append((len(arcs) - 1,))
                pid = len(pool_capacity)
                arcs.append((e.v, e.u))
                arc_pool.append(pid)
                pool_capacity.append(e.capacity)
                pool_arcs.append((len(arcs) - 1,))
            else:  # UNDIRECTED_SHARED: both directions drain one pool
                pool_capacity.append(e.capacity)
                arcs.append((e.u, e.v))
                arc_pool.append(pid)
                arcs.append((e.v, e.u))
                arc_pool.append(pid)
                pool_arcs.append((len(arcs) - 2, len(arcs) - 1))
        self.arcs = tuple(arcs)
        self.arc_pool = tuple(arc_pool)
        self.pool_capacity = np.asarray(pool_capacity, dtype=float)
        self.pool_arcs = tuple(pool_arcs)
        self.arc_index = {a: i for i, a in enumerate(arcs)}

        out_arcs: dict[str, list[int]] = {n: [] for n in self.nodes}
        in_arcs: dict[str, list[int]] = {n: [] for n in self.nodes}
        for i, (u, v) in enumerate(arcs):
            out_arcs[u].append(i)
            in_arcs[v].append(i)
        self.out_arcs = {n: tuple(v) for n, v in out_arcs.items()}
        self.in_arcs = {n: tuple(v) for n, v in in_arcs.items()}

    # -- basic queries ------------------------------------------------------

    @property
    def num_links(self) -> int:
        return len(self.links)

    @property
    def num_arcs(self) -> int:
        return len(self.arcs)

    def arc_capacity(self, arc_id: int) -> float:
        return float(self.pool_capacity[self.arc_pool[arc_id]])

    def __eq__(self, other) -> bool:
        if not isinstance(other, Network):
            return NotImplemented
        return (
            self.mode == other.mode
            and self.nodes == other.nodes
            and sorted(self.links, key=lambda e: (e.u, e.v))
            == sorted(other.links, key=lambda e: (e.u, e.v))
        )

    def __hash__(self):  # pragma: no cover - identity hashing is fine
        return id(self)

    def __repr__(self) -> str:
        return (
            f"Network(mode={self.mode!r}, nodes={len(self.nodes)}, "
            f"links={self.num_links})"
        )

    def scaled(self, factor: float) -> "Network":
        """Same topology with every capacity multiplied by ``factor``."""
        if not factor > 0:
            raise TopologyError("scale factor must be positive")
        return Network(
            [Edge(e.u, e.v, e.capacity * factor) for e in self.links],
            self.mode,
            nodes=self.nodes,
        )

    def topology_id(self) -> str:
        """Stable fingerprint used to refuse mixing runs across topologies."""
        parts = [self.mode] + [
            f"{e.u}-{e.v}:{e.capacity!r}"
            for e in sorted(self.links, key=lambda e: (e.u, e.v))
        ]
        return "|".join(parts)

    # -- distances and connectivity ----------------------------------------

    def hop_distances(self, src: str, reverse: bool = False) -> dict[str, int]:
        """BFS hop counts from ``src`` along arcs (or against them)."""
        if src not in self.arc_adjacency:
            raise TopologyError(f"unknown node {src!r}")
        adj = self.reverse_adjacency if reverse else self.arc_adjacency
        dist = {src: 0}
        q = deque([src])
        while q:
            u = q.popleft()
            for v in adj[u]:
                if v not in dist:
                    dist[v] = dist[u] + 1
                    q.append(v)
        return dist

    @property
    def arc_adjacency(self) -> dict[str, tuple[str, ...]]:
        try:
            return self._adj
        except AttributeError:
            adj = {n: sorted({self.arcs[i][1] for i in self.out_arcs[n]}) for n in self.nodes}
            self._adj = {n: tuple(v) for n, v in adj.items()}
            return self._adj

    @property
    def reverse_adjacency(self) -> dict[str, tuple[str, ...]]:
        try:
            return self._radj
        except AttributeError:
            radj = {n: sorted({self.arcs[i][0] for i in self.in_arcs[n]}) for n in self.nodes}
            self._radj = {n: tuple(v) for n, v in radj.items()}
            return self._radj

    def connected(self, s: str, d: str) -> bool:
        return d in self.hop_distances(s)


class ResidualNetwork:
    """Mutable leftover-capacity view over an immutable base network.

    Tracks per-pool available bandwidth; reservations subtract a flow's pool
    usage.  Confine each instance to a single scheduler.
    """

    def __init__(self, base: Network, available: np.ndarray | None = None):
        self.base = base
        self.available = (
            base.pool_capacity.copy() if available is None else np.asarray(available, float).copy()
        )
        self._check()

    def _check(self) -> None:
        cap = self.base.pool_capacity
        if np.any(self.available < -CAP_RTOL * cap) or np.any(
            self.available > cap * (1.0 + CAP_RTOL)
        ):
            raise ValueError("available bandwidth outside [0, capacity]")

    def reserve(self, arc_rates: dict[int, float]) -> None:
        """Subtract a flow's usage; both directions of a shared pool count."""
        pool = self.base.arc_pool
        for arc, rate in arc_rates.items():
            self.available[pool[arc]] -= rate
        self._check()

    def release(self, arc_rates: dict[int, float]) -> None:
        pool = self.base.arc_pool
        for arc, rate in arc_rates.items():
            self.available[pool[arc]] += rate
        self._check()

    def copy(self) -> "ResidualNetwork":
        return ResidualNetwork(self.base, self.available)


# -- topology documents -----------------------------------------------------


def parse_topology(text: str) -> Network:
    """Parse a line-oriented topology document.

    Format::

        # comment
        mode full-duplex
        node A            # optional; if present, edges must reference them
        edge A B 20 Gbps

    Units: bps, kbps, Mbps, Gbps, Tbps (case-insensitive; ``Gb/s`` works).
    """
    mode: str | None = None
    nodes: list[str] = []
    edges: list[Edge] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        kind = parts[0].lower()
        try:
            if kind == "mode":
                if len(parts) != 2 or parts[1] not in MODES:
                    raise TopologyError(f"expected 'mode <{'|'.join(MODES)}>'")
                if mode is not None:
                    raise TopologyError("duplicate mode line")
                mode = parts[1]
            elif kind == "node":
                if len(parts) != 2:
                    raise TopologyError("expected 'node <id>'")
                if parts[1] in nodes:
                    raise TopologyError(f"duplicate node {parts[1]!r}")
                nodes.append(parts[1])
            elif kind == "edge":
                if len(parts) != 5:
                    raise TopologyError("expected 'edge <u> <v> <capacity> <unit>'")
                _, u, v, cap_s, unit = parts
                try:
                    cap = float(cap_s)
                except ValueError:
                    raise TopologyError(f"bad capacity {cap_s!r}") from None
                scale = _UNIT_BPS.get(unit.lower())
                if scale is None:
                    raise TopologyError(f"unknown unit {unit!r}")
                edges.append(Edge(u, v, cap * scale))
            else:
                raise TopologyError(f"unknown directive {parts[0]!r}")
        except TopologyError as exc:
            raise TopologyError(f"line {lineno}: {exc}") from None
    if mode is None:
        raise TopologyError("missing mode line")
    try:
        return Network(edges, mode, nodes=nodes or None)
    except TopologyError as exc:
        raise TopologyError(str(exc)) from None


def serialize_topology(net: Network) -> str:
    """Canonical document form; ``parse_topology`` round-trips it."""
    lines = [f"mode {net.mode}"]
    lines += [f"node {n}" for n in net.nodes]
    lines += [f"edge {e.u} {e.v} {e.capacity!r} bps" for e in net.links]
    return "\n".join(lines) + "\n"


# -- structural operations ---------------------------------------------------


def shortest_path_arcs(net: Network, s: str, d: str) -> frozenset[int]:
    """Arc ids lying on at least one hop-shortest s->d path."""
    if s == d:
        raise TopologyError("source equals destination")
    ds = net.hop_distances(s)
    if d not in ds:
        raise TopologyError(f"disconnected pair {s!r} -> {d!r}")
    dd = net.hop_distances(d, reverse=True)
    total = ds[d]
    keep = [
        i
        for i, (u, v) in enumerate(net.arcs)
        if u in ds and v in dd and ds[u] + 1 + dd[v] == total
    ]
    return frozenset(keep)


def shortest_path_subgraph(net: Network, s: str, d: str) -> Network:
    """Subgraph keeping exactly the arcs on hop-shortest s->d paths.

    The result is a directed-mode network (one arc per retained direction,
    capacity copied from the owning pool).  Schedulers that restrict routing
    this way apply the arc set as a mask on the original network instead, so
    shared-pool coupling is preserved where it matters.
    """
    keep = shortest_path_arcs(net, s, d)
    edges = [
        Edge(net.arcs[i][0], net.arcs[i][1], net.arc_capacity(i))
        for i in sorted(keep)
    ]
    return Network(edges, DIRECTED)


def count_simple_paths(net: Network, s: str, d: str, limit: int) -> int:
    """Number of simple directed s->d paths; raises past ``limit``."""
    if s == d:
        raise TopologyError("source equals destination")
    if s not in net.arc_adjacency or d not in net.arc_adjacency:
        raise TopologyError("unknown node")
    adj = net.arc_adjacency
    count = 0
    on_path = {s}
    stack: list[tuple[str, int]] = [(s, 0)]
    order = {n: adj[n] for n in net.nodes}
    while stack:
        node, nxt = stack[-1]
        if node == d:
            count += 1
            if count > limit:
                raise PathLimitExceeded(f"more than {limit} simple paths")
            on_path.discard(node)
            stack.pop()
            continue
        succs = order[node]
        advanced = False
        while nxt < len(succs):
            nb = succs[nxt]
            nxt += 1
            if nb not in on_path:
                stack[-1] = (node, nxt)
                stack.append((nb, 0))
                on_path.add(nb)
                advanced = True
                break
        if not advanced:
            on_path.discard(node)
            stack.pop()
    return count


# -- generators ---------------------------------------------------------------


def clique(n: int, capacity: float = 20e9, mode: str = FULL_DUPLEX) -> Network:
    """Complete graph on nodes ``1..n``."""
    if n < 2:
        raise TopologyError("clique needs >= 2 nodes")
    names = [str(i) for i in range(1, n + 1)]
    edges = [
        Edge(names[i], names[j], capacity)
        for i in range(n)
        for j in range(i + 1, n)
    ]
    return Network(edges, mode)


def ring(n: int, capacity: float = 1e9, mode: str = UNDIRECTED_SHARED) -> Network:
    """Cycle 1-2-...-n-1."""
    if n < 3:
        raise TopologyError("ring needs >= 3 nodes")
    names = [str(i) for i in range(1, n + 1)]
    edges = [Edge(names[i], names[(i + 1) % n], capacity) for i in range(n)]
    return Network(edges, mode)


def star(n: int, capacity: float = 1e9, mode: str = FULL_DUPLEX) -> Network:
    """Direct link 1-2 plus n-3 two-hop relays, plus one spare leaf off node 2.

    At uniform capacities the 1->2 max flow is n-2 while the only hop-shortest
    route is the direct link, and there are exactly n-2 simple 1->2 paths.
    """
    if n < 4:
        raise TopologyError("star needs >= 4 nodes")
    edges = [Edge("1", "2", capacity)]
    for i in range(3, n):
        edges.append(Edge("1", str(i), capacity))
        edges.append(Edge(str(i), "2", capacity))
    edges.append(Edge("2", str(n), capacity))
    return Network(edges, mode)


def lambdarail(capacity: float = 20e9, mode: str = FULL_DUPLEX) -> Network:
    """11-node continental backbone resembling a national research network.

    The adjacency is approximate: a coast-to-coast perimeter ring with three
    cross-country chords, 14 links in all.
    """
    perimeter = [
        ("SEA", "SVL"), ("SVL", "LAX"), ("LAX", "ELP"), ("ELP", "HOU"),
        ("HOU", "JAX"), ("JAX", "ATL"), ("ATL", "WDC"), ("WDC", "PIT"),
        ("PIT", "CHI"), ("CHI", "DEN"), ("DEN", "SEA"),
    ]
    chords = [("SVL", "DEN"), ("CHI", "ATL"), ("HOU", "ATL")]
    return Network([Edge(u, v, capacity) for u, v in perimeter + chords], mode)


_GENERATORS = {
    "clique": clique,
    "ring": ring,
    "star": star,
    "lambdarail": lambda n=11, capacity=20e9, mode=FULL_DUPLEX: lambdarail(capacity, mode),
}


def from_spec(spec: str, capacity: float | None = None, mode: str | None = None) -> Network:
    """Build a generator topology from a string like ``clique:8``."""
    name, _, arg = spec.partition(":")
    gen = _GENERATORS.get(name)
    if gen is None:
        raise TopologyError(f"unknown topology generator {name!r}")
    kwargs = {}
    if capacity is not None:
        kwargs["capacity"] = capacity
    if mode is not None:
        kwargs["mode"] = mode
    if name == "lambdarail":
        return gen(**kwargs)
    if not arg:
        raise TopologyError(f"generator {name!r} needs a node count, e.g. {name}:8")
    try:
        n = int(arg)
    except ValueError:
        raise TopologyError(f"bad node count {arg!r}") from None
    return gen(n, **kwargs)
