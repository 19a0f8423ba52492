from dataclasses import dataclass
from typing import List, Mapping, Optional, Tuple

from ..interference import FactorFn
from ..profile import LatencyProfile
from ..scheduler import Interference, SchedulePlan, WorkloadSpec, resolve_factor, schedule
from ..utils.configuration import SimConfig, ThroughputConfig, throughput_config
from ..utils.logging import setup_logger
from .report import SimulationReport
from .simulator import Simulator, with_config
from .streams import streams_for

log = setup_logger(__name__)


@dataclass(frozen=True)
class ThroughputProbe:

    multiplier: float
    aggregate_rate: float
    schedulable: bool
    violation_rate: float


@dataclass(frozen=True)
class ThroughputResult:

    aggregate_rate: float
    multiplier: float
    probes: Tuple[ThroughputProbe, ...]


def simulate_plan(
    plan: SchedulePlan,
    spec: WorkloadSpec,
    profiles: Mapping[str, LatencyProfile],
    config: SimConfig,
    truth: Optional[FactorFn] = None,
) -> SimulationReport:
    """
    the workload's rates as streams against a fixed plan
    """

    streams = streams_for(spec.incoming, seed=config.seed)

    return Simulator(profiles, config=config, factor=truth).run(plan, streams)


def max_achievable_throughput(
    spec: WorkloadSpec,
    profiles: Mapping[str, LatencyProfile],
    intf: Interference = None,
    truth: Optional[FactorFn] = None,
    config: Optional[ThroughputConfig] = None,
    sim: Optional[SimConfig] = None,
    max_doublings: int = 20,
    simulate: bool = True,
) -> ThroughputResult:
    """
    largest aggregate rate, scaling all of the workload's rates together, that
    the workload's scheduler mode accepts and that is served with at most the
    allowed violation rate

    The multiplier is doubled from 1 until a probe fails, then bisected.

    :param spec: base rates and the scheduler mode
    :param profiles: latency profiles
    :param intf: interference knowledge handed to the scheduler
    :param truth: co-location factor the simulated executions see, intf by default
    :param config: threshold, bisection steps, simulated time and arrival process
    :param sim: simulation parameters
    :param simulate: False only asks the scheduler (maximum schedulable rate)
    :returns: ThroughputResult

    """
    config = config if config is not None else throughput_config()

    truth = truth if truth is not None else resolve_factor(intf, profiles)

    sim = with_config(sim, duration_s=config.duration_s, arrival=config.arrival)

    base_total = sum(spec.rates)

    probes: List[ThroughputProbe] = []

    def passes(multiplier: float) -> bool:

        scaled = spec.scaled(multiplier)

        plan = schedule(scaled, profiles, intf)

        violation = 1.0

        if plan.schedulable and not simulate:

            violation = 0.0

        elif plan.schedulable:

            violation = simulate_plan(plan, scaled, profiles, sim, truth).violation_rate()

        probes.append(
            ThroughputProbe(
                multiplier=multiplier,
                aggregate_rate=multiplier * base_total,
                schedulable=plan.schedulable,
                violation_rate=violation,
            )
        )

        return plan.schedulable and violation <= config.violation_threshold

    lo, hi = 0.0, 1.0

    for _ in range(max_doublings):

        if not passes(hi):

            break

        lo, hi = hi, 2.0 * hi

    for _ in range(config.search_steps):

        mid = 0.5 * (lo + hi)

        if passes(mid):

            lo = mid

        else:

            hi = mid

    log.info(f"{spec.mode.value}: max throughput {lo * base_total:.1f} req/s")

    return ThroughputResult(aggregate_rate=lo * base_total, multiplier=lo, probes=tuple(probes))
