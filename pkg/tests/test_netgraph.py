import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from arsched import netgraph
from arsched.netgraph import (
    DIRECTED,
    FULL_DUPLEX,
    UNDIRECTED_SHARED,
    Edge,
    Network,
    PathLimitExceeded,
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

from _oracles import count_paths_naive, shortest_union_arcs

CLIQUE8_DOC = "\n".join(
    ["mode full-duplex"]
    + [
        f"edge {i} {j} 20 Gbps"
        for i in range(1, 9)
        for j in range(i + 1, 9)
    ]
)


def test_parse_clique_document():
    net = parse_topology(CLIQUE8_DOC)
    assert len(net.nodes) == 8
    assert net.num_links == 28
    assert net.num_arcs == 56
    assert net.arc_capacity(0) == 20e9


def test_parse_empty_edge_list_is_error():
    with pytest.raises(TopologyError, match="no edges"):
        parse_topology("mode directed\n")


def test_parse_ring_undirected_shared():
    doc = "mode undirected-shared\n" + "\n".join(
        f"edge {i} {i % 8 + 1} 1 Gbps" for i in range(1, 9)
    )
    net = parse_topology(doc)
    assert len(net.nodes) == 8
    assert net.num_links == 8
    assert len(net.pool_capacity) == 8  # one shared pool per link
    assert net.num_arcs == 16


@pytest.mark.parametrize(
    "doc,msg",
    [
        ("edge a b 1 Gbps", "missing mode"),
        ("mode directed\nedge a b 1 parsecs", "line 2.*unit"),
        ("mode directed\nedge a b -3 Gbps", "line 2.*capacity"),
        ("mode directed\nedge a a 1 Gbps", "line 2.*self-loop"),
        ("mode directed\nnode a\nnode b\nedge a c 1 Gbps", "unknown node"),
        ("mode directed\nedge a b 1 Gbps\nedge a b 2 Gbps", "duplicate edge"),
        ("mode directed\nwibble a b", "line 2.*unknown directive"),
    ],
)
def test_parse_errors_carry_line_numbers(doc, msg):
    with pytest.raises(TopologyError, match=msg):
        parse_topology(doc)


def test_full_duplex_duplicate_detected_across_directions():
    doc = "mode full-duplex\nedge a b 1 Gbps\nedge b a 1 Gbps"
    with pytest.raises(TopologyError, match="duplicate"):
        parse_topology(doc)


def test_serialize_parse_round_trip():
    for net in (clique(4), ring(5), star(6), lambdarail()):
        again = parse_topology(serialize_topology(net))
        assert again == net
        assert parse_topology(serialize_topology(again)) == again


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6))
def test_round_trip_on_random_graphs(seed):
    import numpy as np

    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 7))
    mode = [DIRECTED, UNDIRECTED_SHARED, FULL_DUPLEX][int(rng.integers(3))]
    names = [f"n{i}" for i in range(n)]
    edges = []
    used = set()
    for _ in range(int(rng.integers(1, 10))):
        i, j = rng.integers(0, n, size=2)
        if i == j:
            continue
        key = (int(i), int(j)) if mode == DIRECTED else tuple(sorted((int(i), int(j))))
        if key in used:
            continue
        used.add(key)
        edges.append(Edge(names[int(i)], names[int(j)], float(rng.integers(1, 50))))
    if not edges:
        return
    net = Network(edges, mode)
    assert parse_topology(serialize_topology(net)) == net


def test_star_shape():
    net = star(6)
    # direct link, three relays, one spare leaf
    assert len(net.nodes) == 6
    assert count_simple_paths(net, "1", "2", 100) == 4


def test_shortest_subgraph_star_keeps_only_direct_link():
    sub = shortest_path_subgraph(star(6), "1", "2")
    assert [(e.u, e.v) for e in sub.links] == [("1", "2")]


def test_shortest_subgraph_clique_pair_is_single_edge():
    sub = shortest_path_subgraph(clique(5), "2", "4")
    assert [(e.u, e.v) for e in sub.links] == [("2", "4")]


def test_shortest_subgraph_four_cycle_keeps_both_routes():
    net = ring(4, mode=FULL_DUPLEX)
    sub = shortest_path_subgraph(net, "1", "3")
    assert sub.num_links == 4
    assert set(sub.arc_index) == {("1", "2"), ("2", "3"), ("1", "4"), ("4", "3")}


def test_shortest_subgraph_disconnected_pair():
    net = Network([Edge("a", "b", 1.0), Edge("c", "d", 1.0)], DIRECTED)
    with pytest.raises(TopologyError, match="disconnected"):
        shortest_path_subgraph(net, "a", "d")


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6))
def test_shortest_subgraph_matches_brute_force_union(seed):
    import numpy as np

    rng = np.random.default_rng(seed)
    n = int(rng.integers(3, 8))
    names = [str(i) for i in range(n)]
    links = []
    used = set()
    for i in range(n):
        for j in range(n):
            if i != j and rng.random() < 0.4:
                key = (i, j)
                if key not in used:
                    used.add(key)
                    links.append((names[i], names[j], 1.0))
    if not links:
        return
    net = Network([Edge(u, v, c) for u, v, c in links], DIRECTED)
    s, d = names[0], names[n - 1]
    expected = shortest_union_arcs(links, "directed", s, d)
    if expected is None:
        with pytest.raises(TopologyError):
            shortest_path_subgraph(net, s, d)
        return
    sub = shortest_path_subgraph(net, s, d)
    assert set(sub.arc_index) == expected


def test_count_simple_paths_examples():
    assert count_simple_paths(clique(8), "3", "7", 5000) == 1957
    single = Network([Edge("s", "d", 1.0)], DIRECTED)
    assert count_simple_paths(single, "s", "d", 10) == 1
    assert count_simple_paths(clique(4), "1", "2", 100) == 5


def test_count_simple_paths_limit():
    with pytest.raises(PathLimitExceeded):
        count_simple_paths(clique(8), "1", "2", 100)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6))
def test_count_simple_paths_matches_naive_dfs(seed):
    import numpy as np

    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 7))
    names = [str(i) for i in range(n)]
    links = [
        (names[i], names[j], 1.0)
        for i in range(n)
        for j in range(n)
        if i != j and rng.random() < 0.5
    ]
    if not any(u == "0" for u, _, _ in links):
        return
    net = Network([Edge(u, v, c) for u, v, c in links], DIRECTED)
    expected = count_paths_naive(links, "directed", "0", names[-1])
    assert count_simple_paths(net, "0", names[-1], 10**6) == expected


def test_generators_reject_bad_sizes():
    with pytest.raises(TopologyError):
        clique(1)
    with pytest.raises(TopologyError):
        ring(2)
    with pytest.raises(TopologyError):
        star(3)


def test_lambdarail_is_28_arcs():
    net = lambdarail()
    assert len(net.nodes) == 11
    assert net.num_links == 14
    assert net.num_arcs == 28
    for a in net.nodes:
        assert net.connected(a, net.nodes[0]) or a == net.nodes[0]


def test_from_spec():
    assert netgraph.from_spec("clique:8").num_links == 28
    assert netgraph.from_spec("ring:8", capacity=5e9).pool_capacity[0] == 5e9
    with pytest.raises(TopologyError):
        netgraph.from_spec("torus:8")
    with pytest.raises(TopologyError):
        netgraph.from_spec("clique")


def test_scaled():
    net = ring(4)
    assert netgraph.from_spec("ring:4").scaled(1.5).pool_capacity[0] == 1.5e9
    assert net.scaled(2.0) == ring(4, capacity=2e9)
