import io

import pytest

from arsched.flowsolve import Commodity, max_concurrent_time
from arsched.netgraph import DIRECTED, FULL_DUPLEX, Edge, Network, clique, ring, star
from arsched.schedulers import (
    LOG_COLUMNS,
    BatchAllScheduler,
    BatchLimScheduler,
    GreedyScheduler,
    GreedyShortestScheduler,
    Job,
    RejectedJobError,
    check_window_growth,
    make_scheduler,
    verify_competitive,
    write_reservation_log,
)
from arsched.simcore import (
    generate_trace,
    ring_sequence_trace,
    run,
    two_pair_alternating_trace,
    ConstantSize,
    ExponentialSize,
    WorkloadSpec,
)

HOUR = 3600.0
TB = 8e12


@pytest.fixture
def single_link():
    return Network([Edge("a", "b", 20e9)], FULL_DUPLEX)


@pytest.fixture
def two_links():
    return Network([Edge("A", "B", 1e9), Edge("B", "C", 1e9)], FULL_DUPLEX)


# -- greedy --------------------------------------------------------------------


def test_greedy_single_link_transfer_time(single_link):
    sched = GreedyScheduler(single_link, keep_plans=True)
    size = 2.475 * TB
    res = sched.submit(Job(1, "a", "b", size, 5.0))
    assert res.start == 5.0
    assert res.completion == pytest.approx(5.0 + 990.0, rel=1e-12)
    assert res.delivered_bits == pytest.approx(size)


def test_greedy_ring_serializes_to_half_v_seconds():
    net = ring(8)
    sched = GreedyScheduler(net, keep_plans=True)
    for job in ring_sequence_trace(8, 1e9, 0.1):
        sched.submit(job)
    completions = [r.completion for r in sched.reservations]
    assert completions == pytest.approx([0.5 * j for j in range(1, 9)], abs=1e-9)
    # optimal handles the same eight jobs in one second
    t, _ = max_concurrent_time(net, [Commodity(str(i), str(i % 8 + 1), 1e9) for i in range(1, 9)])
    assert completions[-1] / t == pytest.approx(4.0, rel=1e-6)


def test_greedy_work_conservation(single_link):
    # within each slice the job's rate equals the residual max flow
    net = clique(4, capacity=1e9)
    sched = GreedyScheduler(net, keep_plans=True)
    trace = generate_trace(
        WorkloadSpec(200.0, ExponentialSize(0.05 * TB), 30, 3), net
    )
    for job in trace:
        sched.submit(job)
    for r in sched.reservations:
        for sl in r.plan:
            outflow = sum(
                rate for a, rate in sl.arc_rates.items() if net.arcs[a][0] == r.source
            ) - sum(
                rate for a, rate in sl.arc_rates.items() if net.arcs[a][1] == r.source
            )
            assert outflow > 0


def test_greedy_idle_network_repeats_reservation_shape(single_link):
    sched = GreedyScheduler(single_link, keep_plans=True)
    first = sched.submit(Job(1, "a", "b", 1e12, 0.0))
    second = sched.submit(Job(2, "a", "b", 1e12, first.completion + 10.0))
    assert second.completion - second.start == pytest.approx(
        first.completion - first.start, rel=1e-12
    )


def test_greedy_rejects_disconnected():
    net = Network([Edge("a", "b", 1.0), Edge("c", "d", 1.0)], DIRECTED)
    sched = GreedyScheduler(net)
    with pytest.raises(RejectedJobError):
        sched.submit(Job(1, "a", "d", 1.0, 0.0))


def test_greedy_requires_online_order(single_link):
    sched = GreedyScheduler(single_link)
    sched.submit(Job(1, "a", "b", 1.0, 10.0))
    with pytest.raises(ValueError, match="arrival order"):
        sched.submit(Job(2, "a", "b", 1.0, 9.0))


def test_greedy_shortest_star_serializes():
    net = star(6, capacity=1e9)
    sched = GreedyShortestScheduler(net, keep_plans=True)
    size = 1e9 * 10  # ten seconds on the direct link
    for i in range(3):
        res = sched.submit(Job(i, "1", "2", size, 0.0))
    assert res.completion == pytest.approx(30.0)
    # plain greedy pushes four units in parallel
    plain = GreedyScheduler(net)
    res = plain.submit(Job(1, "1", "2", size, 0.0))
    assert res.completion == pytest.approx(2.5)


def test_greedy_shortest_on_clique_matches_direct_edge(single_link):
    net = clique(5, capacity=1e9)
    sched = GreedyShortestScheduler(net, keep_plans=True)
    res = sched.submit(Job(1, "1", "3", 3e9, 0.0))
    assert res.completion == pytest.approx(3.0)  # only the direct edge
    (sl,) = res.plan
    assert set(sl.arc_rates) == {net.arc_index[("1", "3")]}


# -- batchall --------------------------------------------------------------------


def test_batchall_idle_then_batch(two_links):
    sched = BatchAllScheduler(two_links, keep_plans=True)
    size = 1e9 * HOUR
    ack1 = sched.submit(Job(1, "A", "B", size, 0.0))
    assert ack1.start == 0.0 and ack1.completion == pytest.approx(HOUR)
    ack2 = sched.submit(Job(2, "B", "C", size, 0.25 * HOUR))
    ack3 = sched.submit(Job(3, "A", "B", size, 0.5 * HOUR))
    assert ack2.start == ack3.start == pytest.approx(HOUR)
    assert ack2.completion is None  # deferred until the batch closes
    sched.drain()
    by_id = {r.job_id: r for r in sched.reservations}
    # disjoint full-bandwidth jobs share the second batch for one hour
    assert by_id[2].start == pytest.approx(HOUR)
    assert by_id[2].completion == pytest.approx(2 * HOUR)
    assert by_id[3].completion == pytest.approx(2 * HOUR)
    assert by_id[2].batch_id == by_id[3].batch_id


def test_batchall_two_unit_jobs_shared_edge_batch_length():
    net = Network([Edge("a", "b", 1.0)], "undirected-shared")
    sched = BatchAllScheduler(net)
    sched.submit(Job(1, "a", "b", 1.0, 0.0))
    sched.submit(Job(2, "a", "b", 1.0, 0.5))
    sched.submit(Job(3, "b", "a", 1.0, 0.5))
    sched.drain()
    by_id = {r.job_id: r for r in sched.reservations}
    # two pending unit jobs over one shared unit edge need two seconds
    assert by_id[2].start == pytest.approx(1.0)
    assert by_id[2].completion == pytest.approx(3.0)


def test_batchall_arrival_exactly_at_close_with_empty_pending(two_links):
    sched = BatchAllScheduler(two_links)
    size = 1e9 * HOUR
    sched.submit(Job(1, "A", "B", size, 0.0))
    ack = sched.submit(Job(2, "B", "C", size, HOUR))
    # boundary arrival on an idle system starts immediately
    assert ack.start == pytest.approx(HOUR)
    assert ack.completion == pytest.approx(2 * HOUR)


def test_batchall_arrival_at_close_with_pending_joins_successor_wait(two_links):
    sched = BatchAllScheduler(two_links)
    size = 1e9 * HOUR
    sched.submit(Job(1, "A", "B", size, 0.0))
    sched.submit(Job(2, "B", "C", size, 0.5 * HOUR))  # pending batch 2
    ack = sched.submit(Job(3, "A", "B", size, HOUR))  # exactly at the boundary
    # batch 2 starts at the boundary; job 3 waits for its end
    assert ack.start == pytest.approx(2 * HOUR)
    sched.drain()
    by_id = {r.job_id: r for r in sched.reservations}
    assert by_id[2].start == pytest.approx(HOUR)
    assert by_id[3].start == pytest.approx(2 * HOUR)


def test_batchall_waiting_matches_running_batch(two_links):
    # every non-idle arrival starts exactly at the end of the batch that was
    # running when it arrived
    net = clique(5, capacity=1e9)
    trace = generate_trace(WorkloadSpec(400.0, ExponentialSize(0.2 * TB), 60, 11), net)
    sched = BatchAllScheduler(net)
    promises = {}
    batch_at_arrival = {}
    for job in trace:
        sched.on_close(job.arrival)  # settle batches ending before the arrival
        running = sched._batch
        ack = sched.submit(job)
        promises[job.id] = ack.start
        if running is not None and ack.completion is None:
            batch_at_arrival[job.id] = running.end
    sched.drain()
    for r in sched.reservations:
        assert r.start == pytest.approx(promises[r.job_id])
        if r.job_id in batch_at_arrival:
            assert r.start == pytest.approx(batch_at_arrival[r.job_id])


def test_batchall_delay_bounded_by_two_batch_spans():
    # delay <= duration(previous batch) + duration(own batch)
    net = clique(5, capacity=1e9)
    trace = generate_trace(WorkloadSpec(500.0, ExponentialSize(0.15 * TB), 120, 41), net)
    sched = BatchAllScheduler(net)
    run(net, sched, trace)
    spans = {b.id: b.end - b.start for b in sched.batches}
    for r in sched.reservations:
        own = spans[r.batch_id]
        prev = spans.get(r.batch_id - 1, 0.0)
        assert r.delay <= own + prev + 1e-6


# -- batchlim --------------------------------------------------------------------


def test_batchlim_single_job_window(two_links):
    sched = BatchLimScheduler(two_links)
    size = 1e9 * HOUR
    ack = sched.submit(Job(1, "A", "B", size, 7.0))
    assert ack.start == pytest.approx(7.0)
    assert ack.completion == pytest.approx(7.0 + HOUR)
    assert ack.rejected_slots == 0


def test_batchlim_first_fit_and_append(two_links):
    size = 1e9 * HOUR
    arrivals = [0, 0.25 * HOUR, 0.5 * HOUR, 1.25 * HOUR, 1.35 * HOUR, 1.45 * HOUR]
    trace = two_pair_alternating_trace(arrivals, size)
    sched = BatchLimScheduler(two_links)
    acks = [sched.submit(j) for j in trace]
    sched.drain()
    # jobs 3 and 5 first-fit into existing windows
    assert acks[2].batch_id == acks[1].batch_id
    assert acks[4].batch_id == acks[3].batch_id
    # job 6 fails first-fit on a real candidate and appends a fresh window
    assert acks[5].rejected_slots == 1
    assert acks[5].batch_id == len(sched.windows)
    assert sched.windows[-1].start == pytest.approx(3 * HOUR)


def test_batchlim_promises_never_revised(two_links):
    net = clique(5, capacity=1e9)
    trace = generate_trace(WorkloadSpec(300.0, ExponentialSize(0.2 * TB), 80, 2), net)
    sched = BatchLimScheduler(net)
    promised = {}
    for job in trace:
        ack = sched.submit(job)
        promised[job.id] = (ack.start, ack.completion)
    sched.drain()
    for r in sched.reservations:
        assert (r.start, r.completion) == promised[r.job_id]


def test_batchlim_window_growth_under_overload(single_link):
    # saturating stream over one pair: window lengths at most double
    sched = BatchLimScheduler(single_link)
    size = 20e9 * 100.0  # 100 seconds each
    for i in range(30):
        sched.submit(Job(i, "a", "b", size, i * 1.0))
    assert check_window_growth(sched.windows)
    lengths = [w.end - w.start for w in sched.windows]
    assert max(lengths) > 100.0  # growth actually happened


def test_batchlim_gap_then_idle_restart(single_link):
    sched = BatchLimScheduler(single_link)
    size = 20e9 * 10.0
    first = sched.submit(Job(1, "a", "b", size, 0.0))
    assert first.completion == pytest.approx(10.0)
    late = sched.submit(Job(2, "a", "b", size, 500.0))
    assert late.start == pytest.approx(500.0)
    assert late.completion == pytest.approx(510.0)


# -- shared behaviour --------------------------------------------------------------


@pytest.mark.parametrize("name", ["greedy", "greedy-shortest", "batchall", "batchlim"])
def test_no_oversubscription_on_random_traces(name):
    net = clique(5, capacity=1e9)
    trace = generate_trace(WorkloadSpec(500.0, ExponentialSize(0.1 * TB), 60, 17), net)
    sched = make_scheduler(name, net, keep_plans=True)
    result = run(net, sched, trace, check_flows=True)
    assert result.violations == []


@pytest.mark.parametrize("name", ["greedy", "batchall", "batchlim"])
def test_determinism_identical_logs(name):
    net = clique(5, capacity=1e9)
    trace = generate_trace(WorkloadSpec(300.0, ExponentialSize(0.1 * TB), 40, 23), net)
    logs = []
    for _ in range(2):
        sched = make_scheduler(name, net)
        run(net, sched, trace)
        buf = io.StringIO()
        write_reservation_log(sched.reservations, buf)
        logs.append(buf.getvalue())
    assert logs[0] == logs[1]


def test_reservation_log_format(two_links):
    sched = BatchAllScheduler(two_links)
    sched.submit(Job(1, "A", "B", 1e9, 0.0))
    sched.drain()
    buf = io.StringIO()
    write_reservation_log(sched.reservations, buf, config_echo="{}")
    lines = buf.getvalue().splitlines()
    assert lines[0] == "# config: {}"
    assert lines[1].split(",") == list(LOG_COLUMNS)
    assert lines[2].startswith("1,A,B,")


# -- competitive harness ------------------------------------------------------------


def test_verify_competitive_ring_trace():
    net = ring(8)
    trace = ring_sequence_trace(8, 1e9, 0.1)
    rep = verify_competitive(net, trace, eps=1.0, algorithm="batchall")
    assert rep.ok and rep.ratio <= 2.0


def test_verify_competitive_single_job_trivial():
    net = clique(4, capacity=1e9)
    trace = [Job(1, "1", "2", 1e9, 0.0)]
    for eps in (0.25, 1.0, 3.0):
        rep = verify_competitive(net, trace, eps, algorithm="batchall")
        assert rep.ok
        # lone job: optimal delay is (1+eps) times the augmented run's delay
        assert rep.lower_bound == pytest.approx(rep.max_delay * (1 + eps))


def test_verify_competitive_six_job_trace_batchall():
    net = Network([Edge("A", "B", 1e9), Edge("B", "C", 1e9)], FULL_DUPLEX)
    arrivals = [0, 0.25 * HOUR, 0.5 * HOUR, 1.25 * HOUR, 1.35 * HOUR, 1.45 * HOUR]
    trace = two_pair_alternating_trace(arrivals, 1e9 * HOUR)
    rep = verify_competitive(net, trace, eps=0.5, algorithm="batchall")
    assert rep.ok and rep.ratio <= 4.0


def test_verify_competitive_batchlim_checks():
    net = ring(8)
    trace = ring_sequence_trace(8, 1e9, 0.1)
    rep = verify_competitive(net, trace, eps=1.0, algorithm="batchlim")
    assert rep.ok and rep.promises_kept and rep.window_growth_ok
