from typing import Dict, Mapping, Optional, Sequence

from ..partition import Gpulet, GpuletInventory, LaneConfigurator
from ..profile import (
    EPS,
    CapacityCurve,
    LatencyProfile,
    capacity_curve,
    max_efficient_partition,
    min_required_partition,
    operating_point,
)
from ..utils.logging import setup_logger
from .plan import (
    Interference,
    Mode,
    SchedulePlan,
    Verdict,
    WorkloadSpec,
    check_profiles,
    make_plan,
    resolve_factor,
)

log = setup_logger(__name__)


def grid_curve(profile: LatencyProfile, slo_ms: float, grid: Sequence[int]) -> CapacityCurve:
    """
    interference-free capacity curve restricted to the partition grid
    """

    full = capacity_curve(profile, slo_ms)

    keep = [i for i, p in enumerate(full.partitions) if p in set(grid)]

    return CapacityCurve(
        model=full.model,
        partitions=tuple(full.partitions[i] for i in keep),
        rates=tuple(full.rates[i] for i in keep),
    )


def find_best_fit(
    inventory: GpuletInventory,
    configurator: LaneConfigurator,
    model: str,
    p_ideal: int,
    remaining: float,
) -> Optional[Gpulet]:
    """
    place part of a model's remaining rate on the smallest free gpulet of at
    least p_ideal percent, splitting whole GPUs at p_ideal, then fold it
    into an allocated gpulet if they can share it in time

    :param inventory: the server's gpulets
    :param configurator: lane configuration with the co-location factor
    :param model: the model to place
    :param p_ideal: smallest acceptable gpulet size
    :param remaining: rate still to be placed
    :returns: the gpulet now carrying the share, None if nothing fits

    """
    profile = configurator.profiles[model]

    slo = configurator.slo(model)

    chosen: Optional[Gpulet] = None

    for g in inventory.remain_gpulets:

        if g.size < p_ideal:

            continue

        candidate = g

        if g.size == 100:

            candidate, _ = inventory.split(g, p_ideal)

        slowdown = configurator.factor(model, candidate.size, inventory.partners(candidate))

        point = operating_point(
            profile,
            candidate.size,
            slo,
            slowdown=slowdown,
            overhead_ms=configurator.reserve(model),
        )

        if point is not None:

            share = min(remaining, point.rate)

            if inventory.allocate(candidate, [(model, share)], configurator):

                chosen = candidate

                break

            log.debug(f"{model} on gpulet {candidate.id} breaks its sibling")

        if candidate is not g:

            inventory.revert_split(candidate)

    if chosen is None:

        return None

    for g_alloc in inventory.alloc_gpulets:

        if g_alloc.id == chosen.id:

            continue

        if inventory.temporally_sharable(chosen, g_alloc, configurator, min_size=p_ideal):

            return inventory.merge_temporal(chosen, g_alloc, configurator, min_size=p_ideal)

    return chosen


def fit_residual(
    inventory: GpuletInventory,
    configurator: LaneConfigurator,
    model: str,
    remaining: float,
) -> Optional[Gpulet]:
    """
    place part of a rate no gpulet of the preferred size takes: add it to an
    allocated gpulet with room left in its duty window, else run it on the
    largest free gpulet that serves any of it, whole GPUs unsplit

    :param inventory: the server's gpulets
    :param configurator: lane configuration with the co-location factor
    :param model: the model to place
    :param remaining: rate still to be placed
    :returns: the gpulet now carrying more of the model, None if nothing fits

    """
    least = EPS * max(1.0, remaining)

    for g in sorted(inventory.alloc_gpulets, key=lambda h: (-h.size, h.id)):

        held = g.assigned_rate.get(model, 0.0)

        others = [(lane.model, lane.rate) for lane in g.lanes if lane.model != model]

        room = configurator.max_share(g.size, others, model, inventory.partners(g)) - held

        if room <= least:

            continue

        if inventory.allocate(g, others + [(model, held + min(remaining, room))], configurator):

            log.debug(f"{model} shares gpulet {g.id} with {g.models}")

            return g

    profile = configurator.profiles[model]

    for g in sorted(inventory.remain_gpulets, key=lambda h: (-h.size, h.id)):

        slowdown = configurator.factor(model, g.size, inventory.partners(g))

        point = operating_point(
            profile,
            g.size,
            configurator.slo(model),
            slowdown=slowdown,
            overhead_ms=configurator.reserve(model),
        )

        if point is None or point.rate <= least:

            continue

        if inventory.allocate(g, [(model, min(remaining, point.rate))], configurator):

            return g

    return None


def placed_rate(inventory: GpuletInventory, model: str) -> float:

    return sum(g.assigned_rate.get(model, 0.0) for g in inventory.alloc_gpulets)


def elastic_partitioning(
    spec: WorkloadSpec,
    profiles: Mapping[str, LatencyProfile],
    intf: Interference = None,
    mode: Optional[Mode] = None,
) -> SchedulePlan:
    """
    place every model (highest rate first) on right-sized gpulets until its
    whole rate is covered

    The size asked for is the smaller of the knee of the model's capacity
    curve and the smallest partition covering the rate still unplaced.

    :param spec: the workload
    :param profiles: latency profiles of every model of the workload
    :param intf: fitted interference model or co-location factor, None to ignore interference
    :param mode: recorded in the plan; defaults from intf
    :returns: SchedulePlan

    """
    check_profiles(spec, profiles)

    if mode is None:

        mode = Mode.GPULET if intf is None else Mode.GPULET_INT

    configurator = LaneConfigurator(
        profiles, resolve_factor(intf, profiles), slos=spec.slos, margin=spec.slo_margin
    )

    inventory = GpuletInventory(spec.num_gpus, spec.grid, spec.max_gpulets_per_gpu)

    assigned: Dict[str, float] = {name: 0.0 for name in spec.names}

    for name, rate in spec.ordered():

        if rate <= 0:

            continue

        curve = grid_curve(profiles[name], spec.slos[name], spec.grid)

        p_eff = max_efficient_partition(curve)

        while rate - assigned[name] > EPS * max(1.0, rate):

            remaining = rate - assigned[name]

            p_req = min_required_partition(curve, remaining).size

            p_ideal = min(p_eff, p_req)

            g = find_best_fit(inventory, configurator, name, p_ideal, remaining)

            if g is None:

                g = fit_residual(inventory, configurator, name, remaining)

            if g is None:

                log.debug(f"no gpulet left for {remaining:.1f} req/s of {name}")

                return make_plan(
                    Verdict.NOT_SCHEDULABLE, mode, spec, inventory.gpulets, assigned
                )

            assigned[name] = placed_rate(inventory, name)

            inventory.check_invariants()

    log.debug(f"{mode.value}: placed {spec.incoming} on {inventory.utilized_partition_sum()}%")

    return make_plan(Verdict.SCHEDULABLE, mode, spec, inventory.gpulets, assigned)
