"""
Squishy bin packing: whole GPUs shared in time only.

Every model runs at the largest batch whose duty cycle plus execution fits
its SLO on a full GPU. Models needing more than one GPU take whole GPUs for
the saturated part; the residual rates are packed first-fit-decreasing by the
fraction of a duty cycle they keep the GPU busy.
"""
import math
from typing import Dict, List, Mapping, Tuple

from ..interference import no_interference
from ..partition import GpuletInventory, LaneConfigurator
from ..profile import EPS, LatencyProfile, lookup_latency, operating_point
from ..utils.logging import setup_logger
from .plan import Mode, SchedulePlan, Verdict, WorkloadSpec, check_profiles, make_plan

log = setup_logger(__name__)


def occupancy(profile: LatencyProfile, rate: float, duty_ms: float) -> float:
    """
    share of a full GPU's duty cycle spent executing the batch that covers rate
    """

    batch = max(1, math.ceil(rate * duty_ms / 1000.0 - 1e-9))

    batch = min(batch, profile.max_batch)

    return lookup_latency(profile, batch, 100) / duty_ms


def squishy_bin_packing(
    spec: WorkloadSpec, profiles: Mapping[str, LatencyProfile]
) -> SchedulePlan:

    check_profiles(spec, profiles)

    configurator = LaneConfigurator(profiles, no_interference, slos=spec.slos, margin=spec.slo_margin)

    # whole GPUs only
    inventory = GpuletInventory(spec.num_gpus, spec.grid, max_gpulets_per_gpu=1)

    assigned: Dict[str, float] = {name: 0.0 for name in spec.names}

    def give_up() -> SchedulePlan:

        return make_plan(Verdict.NOT_SCHEDULABLE, Mode.SBP, spec, inventory.gpulets, assigned)

    items: List[Tuple[float, str, float]] = []

    for name, rate in spec.ordered():

        if rate <= 0:

            continue

        point = operating_point(
            profiles[name], 100, spec.slos[name], overhead_ms=configurator.reserve(name)
        )

        if point is None:

            log.debug(f"{name} misses its SLO even on a whole GPU")

            return give_up()

        saturated = int(math.floor(rate / point.rate + EPS))

        for _ in range(saturated):

            free = inventory.remain_gpulets

            if not free or not inventory.allocate(free[0], [(name, point.rate)], configurator):

                return give_up()

            assigned[name] += point.rate

        residual = rate - saturated * point.rate

        if residual > EPS * max(1.0, rate):

            items.append((occupancy(profiles[name], residual, point.duty_ms), name, residual))

    # first fit decreasing
    for _, name, residual in sorted(items, key=lambda x: (-x[0], x[1])):

        placed = False

        for g in inventory.gpulets:

            if name in g.models:

                continue

            demands = [(lane.model, lane.rate) for lane in g.lanes] + [(name, residual)]

            if inventory.allocate(g, demands, configurator):

                placed = True

                break

        if not placed:

            log.debug(f"no GPU left for {residual:.1f} req/s of {name}")

            return give_up()

        assigned[name] += residual

    inventory.check_invariants()

    return make_plan(Verdict.SCHEDULABLE, Mode.SBP, spec, inventory.gpulets, assigned)
