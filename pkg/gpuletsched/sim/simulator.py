"""
Event-loop simulation of a server running schedule plans.

Requests of a model are spread over the model's lanes by smooth weighted
round robin on the lane rates. A lane opens a window at its oldest waiting
request and seals a batch when its batch size is reached or the duty cycle
has passed. Sealed batches queue on their gpulet, which executes one batch
at a time for L(n, size) times the co-location factor of the lanes on the
sibling gpulet.
"""
import heapq
from collections import deque
from dataclasses import dataclass, field, replace
from itertools import count
from typing import Callable, Deque, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from ..errors import ConfigurationError
from ..interference import FactorFn, no_interference
from ..partition import Gpulet, Lane, partners_in
from ..profile import LatencyProfile, lookup_latency
from ..scheduler import Mode, SchedulePlan, Verdict
from ..utils.configuration import SimConfig, sim_config
from ..utils.logging import setup_logger
from .report import ReorgEvent, SimulationReport
from .streams import ARRIVAL_KINDS, RequestStream, arrivals_for, deterministic_arrivals, ewma_rate

log = setup_logger(__name__)

# rates -> plan, used by the live rescheduling loop
Planner = Callable[[Mapping[str, float]], SchedulePlan]

PlanSource = Union[SchedulePlan, Planner]

_SEAL, _DONE, _PERIOD, _ACTIVATE = 0, 1, 2, 3


def check_sim_config(config: SimConfig) -> None:

    if not config.scheduling_period_s > config.reorg_latency_max_s:

        raise ConfigurationError(
            "the scheduling period must be longer than the slowest reorganization "
            f"({config.scheduling_period_s} <= {config.reorg_latency_max_s})"
        )

    if not 0 <= config.reorg_latency_min_s <= config.reorg_latency_max_s:

        raise ConfigurationError("reorganization latency bounds are inverted")

    if not 0.0 < config.ewma_alpha <= 1.0:

        raise ConfigurationError(f"ewma alpha {config.ewma_alpha} must be in (0, 1]")

    if not 0.0 <= config.grow_trigger <= 1.0:

        raise ConfigurationError(f"grow trigger {config.grow_trigger} must be in [0, 1]")

    if not 0.0 <= config.slo_margin < 1.0:

        raise ConfigurationError(f"SLO margin {config.slo_margin} must be in [0, 1)")

    if config.duration_s < 0:

        raise ConfigurationError("duration must be >= 0")

    if config.arrival not in ARRIVAL_KINDS:

        raise ConfigurationError(f"unknown arrival process {config.arrival}")


def idle_plan(models: Sequence[str]) -> SchedulePlan:
    """
    a plan without gpulets; every request is dropped
    """

    return SchedulePlan(
        verdict=Verdict.SCHEDULABLE,
        mode=Mode.GPULET,
        gpulets=(),
        assigned={m: 0.0 for m in models},
        incoming={m: 0.0 for m in models},
        num_gpus=0,
    )


class _Executor:

    def __init__(self, gpulet: Gpulet) -> None:

        self.gpulet: Gpulet = gpulet
        self.fifo: Deque[Tuple["_LaneState", List[float]]] = deque()
        self.busy: bool = False


class _LaneState:

    def __init__(self, lane: Lane, executor: _Executor, factor: float) -> None:

        self.lane: Lane = lane
        self.executor: _Executor = executor
        self.factor: float = factor
        self.queue: Deque[float] = deque()
        self.window_open: Optional[float] = None
        # invalidates seal events of closed windows
        self.token: int = 0
        self.credit: float = 0.0

    @property
    def duty_s(self) -> float:

        return self.lane.duty_cycle_ms / 1000.0


class _Deployment:
    """
    lanes and executors of one plan
    """

    def __init__(self, plan: SchedulePlan, factor: FactorFn) -> None:

        self.plan: SchedulePlan = plan

        self.lanes: Dict[str, List[_LaneState]] = {}

        for g in plan.allocated:

            partners = partners_in(plan.gpulets, g)

            executor = _Executor(g)

            for lane in g.lanes:

                if lane.rate <= 0 or lane.batch < 1:

                    continue

                self.lanes.setdefault(lane.model, []).append(
                    _LaneState(lane, executor, factor(lane.model, g.size, partners))
                )

    @property
    def utilized(self) -> int:

        return self.plan.utilized_partition_sum()

    def route(self, model: str) -> Optional[_LaneState]:
        """
        smooth weighted round robin over the model's lanes
        """

        states = self.lanes.get(model)

        if not states:

            return None

        total = 0.0

        best: Optional[_LaneState] = None

        for s in states:

            s.credit += s.lane.rate

            total += s.lane.rate

            if best is None or s.credit > best.credit:

                best = s

        best.credit -= total

        return best


@dataclass
class _LiveState:

    ewma: Dict[str, float]
    # tracked rates the serving (or pending) plan was made for, before headroom
    base: Dict[str, float]
    # arrivals since the last period boundary
    window: Dict[str, int] = field(default_factory=dict)
    pending: bool = False


class _Run:
    """
    the mutable state of one simulation
    """

    def __init__(
        self,
        simulator: "Simulator",
        report: SimulationReport,
        deployment: _Deployment,
        planner: Optional[Planner] = None,
        live: Optional[_LiveState] = None,
    ) -> None:

        self.sim = simulator
        self.config: SimConfig = simulator.config
        self.report = report
        self.deployment = deployment
        self.planner = planner
        self.live = live
        self.events: List = []
        self.seq = count()
        self.rng = np.random.default_rng([self.config.seed, 1])

        report.record_plan(0.0, deployment.utilized)

    def push(self, t: float, kind: int, payload) -> None:

        heapq.heappush(self.events, (t, next(self.seq), kind, payload))

    def arrive(self, model: str, t: float, lane: Optional[_LaneState] = None) -> None:

        self.drain(t)

        self.report.record_arrival(model, t)

        if self.live is not None:

            self.live.window[model] = self.live.window.get(model, 0) + 1

        lane = lane if lane is not None else self.deployment.route(model)

        if lane is None:

            self.report.record_drop(model, t)

            return

        lane.queue.append(t)

        if lane.window_open is None:

            self.open(lane, t)

        elif len(lane.queue) >= lane.lane.batch:

            self.seal(lane, t)

    def open(self, lane: _LaneState, now: float) -> None:

        while lane.queue:

            lane.window_open = lane.queue[0]

            lane.token += 1

            deadline = lane.window_open + lane.duty_s

            if len(lane.queue) >= lane.lane.batch or deadline <= now:

                self.take(lane, now)

                continue

            self.push(deadline, _SEAL, (lane, lane.token))

            return

        lane.window_open = None

    def take(self, lane: _LaneState, now: float) -> None:

        n = min(lane.lane.batch, len(lane.queue))

        batch = [lane.queue.popleft() for _ in range(n)]

        lane.window_open = None

        lane.token += 1

        lane.executor.fifo.append((lane, batch))

        if not lane.executor.busy:

            self.start(lane.executor, now)

    def seal(self, lane: _LaneState, now: float) -> None:

        self.take(lane, now)

        self.open(lane, now)

    def start(self, executor: _Executor, now: float) -> None:

        size = executor.gpulet.size

        while executor.fifo:

            lane, batch = executor.fifo.popleft()

            profile = self.sim.profiles[lane.lane.model]

            if self.config.drop_late:

                budget_s = (lane.lane.slo_ms - lookup_latency(profile, 1, size) * lane.factor) / 1000.0

                kept = []

                for arrival in batch:

                    if now - arrival > budget_s:

                        self.report.record_drop(lane.lane.model, arrival)

                    else:

                        kept.append(arrival)

                batch = kept

            if not batch:

                continue

            exec_s = lookup_latency(profile, len(batch), size) * lane.factor / 1000.0

            executor.busy = True

            self.push(now + exec_s, _DONE, (executor, lane, batch))

            return

        executor.busy = False

    def drain(self, until: float) -> None:
        """
        process every event up to until
        """

        while self.events and self.events[0][0] <= until:

            now, _, kind, payload = heapq.heappop(self.events)

            if kind == _SEAL:

                lane, token = payload

                if token == lane.token and lane.window_open is not None:

                    self.seal(lane, now)

            elif kind == _DONE:

                executor, lane, batch = payload

                for arrival in batch:

                    self.report.record_completion(
                        lane.lane.model, arrival, (now - arrival) * 1000.0, lane.lane.slo_ms
                    )

                executor.busy = False

                self.start(executor, now)

            elif kind == _PERIOD:

                self.period(now)

            elif kind == _ACTIVATE:

                self.activate(payload, now)

    def period(self, now: float) -> None:

        config = self.config

        live = self.live

        # a rising load is met at its last observed rate, a falling one at the average
        target: Dict[str, float] = {}

        for model in live.ewma:

            observed = live.window.get(model, 0) / config.scheduling_period_s

            live.ewma[model] = ewma_rate(live.ewma[model], observed, config.ewma_alpha)

            live.window[model] = 0

            target[model] = max(live.ewma[model], observed)

        if live.pending:

            return

        ceiling = 1.0 + config.grow_trigger * config.rate_headroom

        grow = any(target[m] > ceiling * live.base.get(m, 0.0) + 1e-9 for m in target)

        floor = 1.0 - config.shrink_threshold

        shrink = any(live.ewma[m] < floor * live.base.get(m, 0.0) for m in target)

        if not (grow or shrink):

            return

        plan = self.sim.plan_for(self.planner, target)

        if plan is None:

            log.debug(f"t={now:.0f}s: no plan for {live.ewma}, keeping the current one")

            return

        delay = float(self.rng.uniform(config.reorg_latency_min_s, config.reorg_latency_max_s))

        live.pending = True

        live.base = dict(target)

        self.report.reorganizations.append(
            ReorgEvent(
                decided_s=now,
                activated_s=now + delay,
                rates=dict(target),
                utilized_before=self.deployment.utilized,
                utilized_after=plan.utilized_partition_sum(),
            )
        )

        self.push(now + delay, _ACTIVATE, plan)

    def activate(self, plan: SchedulePlan, now: float) -> None:
        """
        switch to a new plan; waiting requests move to the new lanes while
        sealed batches finish on the old executors
        """

        old, new = self.deployment, _Deployment(plan, self.sim.factor)

        self.deployment = new

        self.live.pending = False

        self.report.record_plan(now, new.utilized)

        waiting: List[Tuple[float, str]] = []

        for model, states in old.lanes.items():

            for s in states:

                waiting.extend((arrival, model) for arrival in s.queue)

                s.queue.clear()

                s.window_open = None

                s.token += 1

        for arrival, model in sorted(waiting):

            lane = new.route(model)

            if lane is None:

                self.report.record_drop(model, arrival)

            else:

                lane.queue.append(arrival)

        for states in new.lanes.values():

            for s in states:

                if s.queue:

                    self.open(s, now)

        log.debug(f"t={now:.1f}s: plan on {new.utilized}% active")


class Simulator:
    """
    runs request streams against a fixed plan, or against a planner that is
    asked for a new plan whenever the tracked rates drift
    """

    def __init__(
        self,
        profiles: Mapping[str, LatencyProfile],
        config: Optional[SimConfig] = None,
        factor: Optional[FactorFn] = None,
    ) -> None:
        """
        :param profiles: latency profiles of every simulated model
        :param config: timing, drop policy and rescheduling parameters
        :param factor: co-location factor the executions really see
        """

        self._profiles: Mapping[str, LatencyProfile] = profiles
        self._config: SimConfig = config if config is not None else sim_config()
        self._factor: FactorFn = factor if factor is not None else no_interference

        check_sim_config(self._config)

    @property
    def config(self) -> SimConfig:

        return self._config

    @property
    def profiles(self) -> Mapping[str, LatencyProfile]:

        return self._profiles

    @property
    def factor(self) -> FactorFn:

        return self._factor

    def plan_for(self, planner: Planner, rates: Mapping[str, float]) -> Optional[SchedulePlan]:
        """
        a schedulable plan for the rates plus headroom, else for the bare
        rates, else None
        """

        if not any(r > 0 for r in rates.values()):

            return None

        headroom = {m: r * (1.0 + self._config.rate_headroom) for m, r in rates.items()}

        for target in (headroom, dict(rates)):

            plan = planner(target)

            if plan.schedulable:

                return plan

        return None

    def run(
        self,
        source: PlanSource,
        streams: Sequence[RequestStream],
        duration_s: Optional[float] = None,
    ) -> SimulationReport:
        """
        simulate the streams for duration_s seconds (config default) and let
        every request finish

        :param source: a plan, or a planner for live rescheduling
        :param streams: one request stream per model
        :param duration_s: arrivals are generated in [0, duration_s)
        :returns: SimulationReport

        """
        config = self._config

        duration = config.duration_s if duration_s is None else duration_s

        models = tuple(sorted({s.model for s in streams}))

        report = SimulationReport(
            models=models, period_s=config.scheduling_period_s, duration_s=duration
        )

        if isinstance(source, SchedulePlan):

            state = _Run(self, report, _Deployment(source, self._factor))

        else:

            initial = {s.model: s.trace.rate_at(0.0) for s in streams}

            plan = self.plan_for(source, initial)

            if plan is None:

                plan = source(initial) if any(r > 0 for r in initial.values()) else idle_plan(models)

            live = _LiveState(ewma=dict(initial), base=dict(initial))

            state = _Run(self, report, _Deployment(plan, self._factor), planner=source, live=live)

            k = 1

            while k * config.scheduling_period_s < duration:

                state.push(k * config.scheduling_period_s, _PERIOD, k)

                k += 1

        arrivals = [arrivals_for(s, duration, config.arrival) for s in streams]

        if arrivals:

            times = np.concatenate(arrivals)

            owners = np.concatenate([np.full(len(a), i, dtype=int) for i, a in enumerate(arrivals)])

            order = np.argsort(times, kind="stable")

            for t, owner in zip(times[order].tolist(), owners[order].tolist()):

                state.arrive(streams[owner].model, t)

        state.drain(float("inf"))

        log.debug(
            f"simulated {report.arrivals()} requests, {report.violation_rate():.4f} violating"
        )

        return report

    def replay(self, plan: SchedulePlan, duration_s: Optional[float] = None) -> SimulationReport:
        """
        every lane receives regularly spaced requests at exactly its planned rate

        """
        duration = self._config.duration_s if duration_s is None else duration_s

        report = SimulationReport(
            models=tuple(sorted(plan.incoming)),
            period_s=self._config.scheduling_period_s,
            duration_s=duration,
        )

        state = _Run(self, report, _Deployment(plan, self._factor))

        feed = []

        for model, lanes in sorted(state.deployment.lanes.items()):

            for i, lane in enumerate(lanes):

                for t in deterministic_arrivals(lane.lane.rate, duration).tolist():

                    feed.append((t, model, i, lane))

        feed.sort(key=lambda x: x[:3])

        for t, model, _, lane in feed:

            state.arrive(model, t, lane=lane)

        state.drain(float("inf"))

        return report


def run(
    source: PlanSource,
    streams: Sequence[RequestStream],
    profiles: Mapping[str, LatencyProfile],
    config: Optional[SimConfig] = None,
    factor: Optional[FactorFn] = None,
    duration_s: Optional[float] = None,
) -> SimulationReport:

    return Simulator(profiles, config=config, factor=factor).run(
        source, streams, duration_s=duration_s
    )


def with_config(config: Optional[SimConfig] = None, **overrides) -> SimConfig:
    """
    a copy of the (active) simulation configuration with fields replaced
    """

    base = config if config is not None else sim_config()

    return replace(base, **overrides)
