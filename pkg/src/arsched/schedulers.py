"""Online advance-reservation schedulers.

Four algorithms over a shared job/reservation vocabulary:

* ``greedy`` -- at submission, repeatedly takes the max flow of the residual
  network slot by slot until the file drains; earliest completion for the
  job in isolation, path switching allowed between slots.
* ``greedy-shortest`` -- greedy restricted to arcs on hop-shortest paths.
* ``batchall`` -- batches every request arriving during the running batch
  and serves each batch with one max concurrent flow.
* ``batchlim`` -- first-fit into future windows via multicommodity
  feasibility; appends a window sized max(min completion time, now..end gap)
  on failure, and returns the completion promise at submission.

Each scheduler instance is a single-threaded state machine fed jobs in
arrival order; distinct instances may run concurrently on one network.
"""

from __future__ import annotations

import bisect
import io
import math
from dataclasses import dataclass, field

import numpy as np

from . import flowsolve
from .flowsolve import Commodity, max_flow_value
from .netgraph import Network, shortest_path_arcs

LOG_COLUMNS = (
    "job_id",
    "src",
    "dst",
    "size_bits",
    "arrival_s",
    "start_s",
    "completion_s",
    "delay_s",
    "batch_or_slot_id",
    "num_paths",
)


class RejectedJobError(ValueError):
    """The job's node pair is disconnected in the base network."""


@dataclass(frozen=True)
class Job:
    id: int | str
    source: str
    destination: str
    size: float  # bits
    arrival: float  # seconds

    def __post_init__(self) -> None:
        if self.source == self.destination:
            raise ValueError(f"job {self.id}: source equals destination")
        if not self.size > 0:
            raise ValueError(f"job {self.id}: size must be positive")

    def commodity(self) -> Commodity:
        return Commodity(self.source, self.destination, self.size)


@dataclass
class PlanSlice:
    start: float
    end: float
    arc_rates: dict[int, float]  # this job's share, bits/second


@dataclass
class Reservation:
    job_id: int | str
    source: str
    destination: str
    size_bits: float
    arrival: float
    start: float
    completion: float
    batch_id: int  # batch or window id; -1 for greedy (no batching)
    num_paths: int = 0  # tracked only by dispersion-bounded schedulers
    plan: list[PlanSlice] | None = None
    delivered_bits: float = 0.0

    @property
    def delay(self) -> float:
        return self.completion - self.arrival


@dataclass
class SubmitAck:
    """What the scheduler promises at submission time."""

    job_id: int | str
    start: float
    completion: float | None  # None when deferred (batchall pending)
    batch_id: int | None = None
    rejected_slots: int = 0  # batchlim: candidate windows that failed first-fit


# -- greedy -------------------------------------------------------------------


class _Slot:
    __slots__ = ("start", "end", "avail", "zero_pairs")

    def __init__(self, start: float, end: float, avail: np.ndarray, zero_pairs: set):
        self.start = start
        self.end = end
        self.avail = avail
        self.zero_pairs = zero_pairs


class GreedyTimeline:
    """Event-delimited reserved-bandwidth state for the greedy schedulers.

    Slots partition [t0, inf); each holds per-pool available bandwidth.
    Availability in a slot only ever decreases, so an s-d pair observed to
    have zero residual max flow in a slot stays at zero; those pairs are
    cached per slot to skip repeat solves under backlog.
    """

    def __init__(self, net: Network):
        self.net = net
        self._slots: list[_Slot] = [
            _Slot(0.0, math.inf, net.pool_capacity.copy(), set())
        ]
        self._starts: list[float] = [0.0]

    def _split(self, i: int, t: float) -> None:
        s = self._slots[i]
        tail = _Slot(t, s.end, s.avail.copy(), set(s.zero_pairs))
        s.end = t
        self._slots.insert(i + 1, tail)
        self._starts.insert(i + 1, t)

    def slot_at(self, t: float) -> int:
        """Index of the slot starting exactly at t, splitting if needed."""
        i = bisect.bisect_right(self._starts, t) - 1
        if self._slots[i].start < t:
            self._split(i, t)
            i += 1
        return i

    def prune_before(self, t: float) -> None:
        """Drop fully elapsed slots; jobs arrive in order so they are dead."""
        cut = 0
        while cut < len(self._slots) - 1 and self._slots[cut].end <= t:
            cut += 1
        if cut:
            del self._slots[:cut]
            del self._starts[:cut]

    def reserve(self, i: int, arc_rates: dict[int, float]) -> None:
        """Subtract a flow's pool usage from slot i."""
        s = self._slots[i]
        pool = self.net.arc_pool
        for arc, r in arc_rates.items():
            s.avail[pool[arc]] -= r
        if np.any(s.avail < -1e-6 * self.net.pool_capacity.max()):
            raise AssertionError("slot oversubscribed")

    def slots(self) -> list[_Slot]:
        return self._slots

    def residual_at(self, t: float):
        """Leftover-capacity view for the slot containing time t."""
        from .netgraph import ResidualNetwork

        i = bisect.bisect_right(self._starts, t) - 1
        return ResidualNetwork(self.net, self._slots[i].avail)


class GreedyScheduler:
    """Immediate earliest-completion reservation with path switching."""

    name = "greedy"
    shortest = False

    def __init__(self, net: Network, keep_plans: bool = False):
        self.net = net
        self.keep_plans = keep_plans
        self.timeline = GreedyTimeline(net)
        self.reservations: list[Reservation] = []
        self._last_arrival = -math.inf
        self._masks: dict[tuple[str, str], frozenset[int] | None] = {}

    def _mask(self, s: str, d: str):
        key = (s, d)
        if key not in self._masks:
            self._masks[key] = shortest_path_arcs(self.net, s, d) if self.shortest else None
        return self._masks[key]

    def submit(self, job: Job) -> Reservation:
        if job.arrival < self._last_arrival:
            raise ValueError("jobs must be submitted in arrival order")
        self._last_arrival = job.arrival
        if not self.net.connected(job.source, job.destination):
            raise RejectedJobError(f"job {job.id}: disconnected pair")
        mask = self._mask(job.source, job.destination)

        tl = self.timeline
        tl.prune_before(job.arrival)
        i = tl.slot_at(job.arrival)
        pair = (job.source, job.destination)
        remaining = job.size
        plan: list[PlanSlice] | None = [] if self.keep_plans else None
        delivered = 0.0
        completion = None
        while True:
            slot = tl.slots()[i]
            if pair in slot.zero_pairs:
                i += 1
                continue
            mf = max_flow_value(self.net, job.source, job.destination, slot.avail, mask)
            if mf.value <= 1e-9 * self.net.pool_capacity.max():
                if math.isinf(slot.end):
                    raise AssertionError("connected pair stalled on idle network")
                slot.zero_pairs.add(pair)
                i += 1
                continue
            need = remaining / mf.value
            length = slot.end - slot.start
            if need <= length * (1.0 + 1e-12):  # the final slot is infinite
                end = slot.start + need
                if end < slot.end:
                    tl._split(i, end)
                tl.reserve(i, mf.arc_rates)
                delivered += remaining
                if plan is not None:
                    plan.append(PlanSlice(slot.start, end, dict(mf.arc_rates)))
                completion = end
                break
            tl.reserve(i, mf.arc_rates)
            moved = mf.value * length
            delivered += moved
            remaining -= moved
            if plan is not None:
                plan.append(PlanSlice(slot.start, slot.end, dict(mf.arc_rates)))
            i += 1
        res = Reservation(
            job.id, job.source, job.destination, job.size, job.arrival,
            start=job.arrival, completion=completion, batch_id=-1,
            plan=plan, delivered_bits=delivered,
        )
        self.reservations.append(res)
        return res

    # Greedy resolves everything at submission.
    def next_wakeup(self) -> float | None:
        return None

    def on_close(self, t: float) -> None:
        pass

    def drain(self) -> None:
        pass


class GreedyShortestScheduler(GreedyScheduler):
    """Greedy restricted to arcs on hop-shortest paths of each pair."""

    name = "greedy-shortest"
    shortest = True


# -- batchall -----------------------------------------------------------------


@dataclass
class BatchRecord:
    id: int
    start: float
    end: float
    job_ids: list
    demands: dict = field(default_factory=dict)
    path_counts: dict = field(default_factory=dict)  # pair -> paths used


class BatchAllScheduler:
    """Batch every arrival during the running batch; serve batches with one
    max concurrent flow."""

    name = "batchall"

    def __init__(self, net: Network, keep_plans: bool = False):
        self.net = net
        self.keep_plans = keep_plans
        self.reservations: list[Reservation] = []
        self.batches: list[BatchRecord] = []
        self._batch: BatchRecord | None = None
        self._pending: list[Job] = []
        self._promised_start: dict = {}
        self._last_arrival = -math.inf
        self._next_id = 1

    def submit(self, job: Job) -> SubmitAck:
        if job.arrival < self._last_arrival:
            raise ValueError("jobs must be submitted in arrival order")
        self._last_arrival = job.arrival
        if not self.net.connected(job.source, job.destination):
            raise RejectedJobError(f"job {job.id}: disconnected pair")
        self._advance(job.arrival)
        if self._batch is None:
            # Idle arrival: the job starts now and runs at its own max flow.
            duration, rates, counts = self._solve_single(job)
            batch = BatchRecord(
                self._next_id, job.arrival, job.arrival + duration, [job.id],
                demands={(job.source, job.destination): job.size},
                path_counts=counts,
            )
            self._next_id += 1
            self._batch = batch
            self.batches.append(batch)
            self._emit(job, batch, rates)
            return SubmitAck(job.id, batch.start, batch.end, batch.id)
        self._pending.append(job)
        self._promised_start[job.id] = self._batch.end
        return SubmitAck(job.id, self._batch.end, None, None)

    def _advance(self, t: float) -> None:
        while self._batch is not None and self._batch.end <= t:
            self._close()

    def _close(self) -> None:
        """Batch boundary: start the waiting batch, or go idle."""
        t0 = self._batch.end
        self._batch = None
        if not self._pending:
            return
        jobs = self._pending
        self._pending = []
        duration, rates, counts = self._solve(jobs)
        batch = BatchRecord(
            self._next_id, t0, t0 + duration, [j.id for j in jobs],
            demands=flowsolve.aggregate_demands(j.commodity() for j in jobs),
            path_counts=counts,
        )
        self._next_id += 1
        self._batch = batch
        self.batches.append(batch)
        for job in jobs:
            assert self._promised_start.pop(job.id) == t0
            self._emit(job, batch, rates)

    def _solve(self, jobs: list[Job]):
        """Hook: (duration, per-pair arc rates, path counts) for one batch."""
        t, assignment = flowsolve.max_concurrent_time(
            self.net, [j.commodity() for j in jobs]
        )
        return t, assignment.rates, {}

    def _solve_single(self, job: Job):
        """Hook: same as _solve for a lone idle arrival (max flow suffices)."""
        mf = max_flow_value(self.net, job.source, job.destination)
        pair = (job.source, job.destination)
        return job.size / mf.value, {pair: dict(mf.arc_rates)}, {}

    def _emit(self, job: Job, batch: BatchRecord, rates_by_pair) -> None:
        pair = (job.source, job.destination)
        share = job.size / batch.demands[pair]
        plan = None
        if self.keep_plans:
            mine = {a: r * share for a, r in rates_by_pair.get(pair, {}).items()}
            plan = [PlanSlice(batch.start, batch.end, mine)]
        self.reservations.append(
            Reservation(
                job.id, job.source, job.destination, job.size, job.arrival,
                start=batch.start, completion=batch.end, batch_id=batch.id,
                num_paths=batch.path_counts.get(pair, 0),
                plan=plan, delivered_bits=job.size,
            )
        )

    def next_wakeup(self) -> float | None:
        return self._batch.end if self._batch is not None else None

    def on_close(self, t: float) -> None:
        self._advance(t)

    def drain(self) -> None:
        while self._batch is not None:
            self._close()


# -- batchlim -----------------------------------------------------------------


@dataclass
class WindowRecord:
    id: int
    start: float
    end: float
    jobs: list[Job]
    rates: dict = field(default_factory=dict)
    path_counts: dict = field(default_factory=dict)
    # Window-creation diagnostics for the growth-law checks.
    creator_arrival: float = 0.0
    prev_length: float = 0.0
    min_time: float = 0.0


class BatchLimScheduler:
    """First-fit batching over future windows with completion promises."""

    name = "batchlim"

    def __init__(self, net: Network, keep_plans: bool = False):
        self.net = net
        self.keep_plans = keep_plans
        self.windows: list[WindowRecord] = []
        self.reservations: list[Reservation] = []
        #: (earliest arrival among the jobs of the last failing window plus
        #: the new job, new job's arrival) -- lower-bound hints for the
        #: competitive harness.
        self.lb_windows: list[tuple[float, float]] = []
        self._res_by_window: dict[int, list[Reservation]] = {}
        self._last_arrival = -math.inf

    def _feasible(self, jobs: list[Job], length: float):
        """Hook: (fits, committed per-pair rates, per-pair path counts)."""
        ok, assignment = flowsolve.multicomm(
            self.net, [j.commodity() for j in jobs], length
        )
        return ok, (assignment.rates if ok else None), {}

    def _min_time(self, job: Job, mf) -> float:
        """Hook: smallest window able to carry ``job`` alone."""
        return job.size / mf.value

    def submit(self, job: Job) -> SubmitAck:
        if job.arrival < self._last_arrival:
            raise ValueError("jobs must be submitted in arrival order")
        self._last_arrival = job.arrival
        if not self.net.connected(job.source, job.destination):
            raise RejectedJobError(f"job {job.id}: disconnected pair")
        now = job.arrival
        rejected = 0
        for w in self.windows:
            if w.start < now:  # running or past windows are never modified
                continue
            ok, rates, counts = self._feasible(w.jobs + [job], w.end - w.start)
            if ok:
                w.jobs.append(job)
                w.rates = rates
                w.path_counts = counts
                return self._emit(job, w, rejected)
            rejected += 1
        if rejected:
            last = self.windows[-1]
            self.lb_windows.append(
                (min([j.arrival for j in last.jobs] + [now]), now)
            )
        mf = max_flow_value(self.net, job.source, job.destination)
        min_time = self._min_time(job, mf)
        tail = self.windows[-1].end if self.windows else now
        t_last = tail if tail > now else now
        length = max(min_time, t_last - now)
        ok, rates, counts = self._feasible([job], length)
        assert ok, "freshly sized window must fit its creating job"
        w = WindowRecord(
            len(self.windows) + 1, t_last, t_last + length, [job],
            rates=rates,
            path_counts=counts,
            creator_arrival=now,
            prev_length=(self.windows[-1].end - self.windows[-1].start)
            if self.windows
            else 0.0,
            min_time=min_time,
        )
        self.windows.append(w)
        return self._emit(job, w, rejected)

    def _emit(self, job: Job, w: WindowRecord, rejected: int) -> SubmitAck:
        res = Reservation(
            job.id, job.source, job.destination, job.size, job.arrival,
            start=w.start, completion=w.end, batch_id=w.id,
            delivered_bits=job.size,
        )
        self.reservations.append(res)
        self._res_by_window.setdefault(w.id, []).append(res)
        return SubmitAck(job.id, w.start, w.end, w.id, rejected_slots=rejected)

    def next_wakeup(self) -> float | None:
        return None

    def on_close(self, t: float) -> None:
        pass

    def drain(self) -> None:
        """Finalise committed flow plans (promises themselves never move)."""
        self._commit_windows()
        if not self.keep_plans:
            return
        for w in self.windows:
            demands = flowsolve.aggregate_demands(j.commodity() for j in w.jobs)
            for res in self._res_by_window.get(w.id, []):
                pair = (res.source, res.destination)
                share = res.size_bits / demands[pair]
                mine = {a: r * share for a, r in w.rates.get(pair, {}).items()}
                res.plan = [PlanSlice(w.start, w.end, mine)]

    def _commit_windows(self) -> None:
        """Hook: the dispersion variant decomposes flows here."""


# -- registry -----------------------------------------------------------------


def make_scheduler(name: str, net: Network, paths: int | None = None, keep_plans: bool = False):
    """Instantiate a scheduler by CLI name (``batchall-disp`` needs paths)."""
    from . import pathdisp  # local import: pathdisp depends on this module

    plain = {
        "greedy": GreedyScheduler,
        "greedy-shortest": GreedyShortestScheduler,
        "batchall": BatchAllScheduler,
        "batchlim": BatchLimScheduler,
    }
    if name in plain:
        return plain[name](net, keep_plans=keep_plans)
    if name in ("batchall-disp", "batchlim-disp"):
        if paths is None or paths < 1:
            raise ValueError(f"{name} needs a path budget k >= 1")
        base = BatchAllScheduler if name == "batchall-disp" else BatchLimScheduler
        return pathdisp.disp_wrap(base(net, keep_plans=keep_plans), paths)
    raise ValueError(f"unknown scheduler {name!r}")


SCHEDULER_NAMES = (
    "greedy",
    "greedy-shortest",
    "batchall",
    "batchlim",
    "batchall-disp",
    "batchlim-disp",
)


# -- reservation log ----------------------------------------------------------


def reservation_log_rows(reservations) -> list[tuple]:
    rows = []
    for r in sorted(reservations, key=lambda r: (r.arrival, str(r.job_id))):
        rows.append(
            (
                r.job_id, r.source, r.destination, repr(float(r.size_bits)),
                repr(float(r.arrival)), repr(float(r.start)),
                repr(float(r.completion)), repr(float(r.delay)),
                r.batch_id, r.num_paths,
            )
        )
    return rows


def write_reservation_log(reservations, fobj: io.TextIOBase, config_echo: str | None = None) -> None:
    if config_echo:
        fobj.write(f"# config: {config_echo}\n")
    fobj.write(",".join(LOG_COLUMNS) + "\n")
    for row in reservation_log_rows(reservations):
        fobj.write(",".join(str(x) for x in row) + "\n")


# -- competitive-ratio harness --------------------------------------------------


@dataclass
class CompetitiveReport:
    algorithm: str
    eps: float
    bound: float
    max_delay: float
    lower_bound: float
    ratio: float
    ok: bool
    promises_kept: bool
    window_growth_ok: bool
    num_jobs: int


def _delay_lower_bound(net: Network, trace, windows) -> float:
    """Sound lower bound on the optimal maximum delay in ``net``.

    Any algorithm needs at least max_concurrent_time(jobs arriving in [a, b])
    of wall clock after a, so some job waits at least that minus (b - a); a
    single job can never beat its own minimum completion time.
    """
    lb = 0.0
    for job in trace:
        mf = max_flow_value(net, job.source, job.destination)
        lb = max(lb, job.size / mf.value)
    seen = set()
    for a, b in windows:
        key = (round(a, 12), round(b, 12))
        if key in seen:
            continue
        seen.add(key)
        jobs = [j for j in trace if a <= j.arrival <= b]
        if not jobs:
            continue
        t_w, _ = flowsolve.max_concurrent_time(net, [j.commodity() for j in jobs])
        lb = max(lb, t_w - (b - a))
    return lb


def verify_competitive(
    net: Network, trace, eps: float, algorithm: str = "batchall"
) -> CompetitiveReport:
    """Run a batching scheduler on the (1+eps)-augmented network and compare
    its max delay against a lower bound on the optimum in the original."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    if algorithm not in ("batchall", "batchlim"):
        raise ValueError("verify_competitive covers batchall and batchlim")
    trace = sorted(trace, key=lambda j: (j.arrival, str(j.id)))
    aug = net.scaled(1.0 + eps)
    sched = make_scheduler(algorithm, aug)
    promises: dict = {}
    for job in trace:
        ack = sched.submit(job)
        if algorithm == "batchlim":
            promises[job.id] = ack.completion
    sched.drain()

    delays = {r.job_id: r.delay for r in sched.reservations}
    max_delay = max(delays.values())
    if algorithm == "batchall":
        windows = [(b.start, b.end) for b in sched.batches]
        bound = 2.0 / eps
        promises_kept = True
        window_growth_ok = True
    else:
        windows = [(w.start, w.end) for w in sched.windows]
        windows += list(sched.lb_windows)
        bound = 4.0 / eps
        promises_kept = all(
            math.isclose(promises[r.job_id], r.completion, rel_tol=0, abs_tol=0)
            for r in sched.reservations
        )
        window_growth_ok = check_window_growth(sched.windows)
    lower = _delay_lower_bound(net, trace, windows)
    ratio = max_delay / lower if lower > 0 else math.inf
    return CompetitiveReport(
        algorithm, eps, bound, max_delay, lower, ratio,
        ok=ratio <= bound * (1.0 + 1e-9),
        promises_kept=promises_kept, window_growth_ok=window_growth_ok,
        num_jobs=len(trace),
    )


def check_window_growth(windows) -> bool:
    """Window-creation growth laws:

    (a) length >= (end - creator_arrival) / 2, and
    (b) length <= max(2 * previous length, min completion time).
    """
    tol = 1e-9
    for w in windows:
        length = w.end - w.start
        if length < (w.end - w.creator_arrival) / 2.0 - tol * max(length, 1.0):
            return False
        cap = max(2.0 * w.prev_length, w.min_time)
        if length > cap * (1.0 + 1e-9) + tol:
            return False
    return True
