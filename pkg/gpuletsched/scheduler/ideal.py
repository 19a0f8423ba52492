"""
Exhaustive scheduler used as an oracle.

Every way of cutting each GPU once on the grid is enumerated. For each
layout every model (highest rate first) is given a set of gpulets, and its
rate is then spread over them in steps of one batch per duty cycle, which
are the only amounts a lane configuration can tell apart.
"""
import math
from itertools import combinations, combinations_with_replacement
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

from ..errors import ResourceBudgetError
from ..partition import Demand, Gpulet, Lane, LaneConfigurator
from ..profile import EPS, LatencyProfile, capacity_curve
from ..utils.configuration import gpuletsched_config
from ..utils.logging import setup_logger
from .elastic import elastic_partitioning
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


def gpu_layouts(grid: Sequence[int], max_gpulets_per_gpu: int = 2) -> List[Tuple[int, ...]]:
    """
    the ways to cut one GPU: whole, or in two pieces on the grid
    """

    layouts: List[Tuple[int, ...]] = [(100,)]

    if max_gpulets_per_gpu < 2:

        return layouts

    for p in sorted(set(grid)):

        if p < 100 and p <= 100 - p and (100 - p) in grid:

            layouts.append((p, 100 - p))

    return layouts


class _Search:
    """
    backtracking over one server layout: first which gpulets every model
    uses, then how much of its rate each of them takes
    """

    def __init__(
        self,
        slots: Sequence[Tuple[int, int]],
        order: Sequence[Tuple[str, float]],
        configurator: LaneConfigurator,
        budget: "_Budget",
    ) -> None:

        # (gpu, size) per gpulet
        self._slots = list(slots)
        self._order = list(order)
        self._configurator = configurator
        self._budget = budget

        self._members: List[List[str]] = [[] for _ in self._slots]
        self._shares: List[Dict[str, float]] = [{} for _ in self._slots]

        self._sibling: List[Optional[int]] = []

        for i, (gpu, _) in enumerate(self._slots):

            others = [j for j, (h, _) in enumerate(self._slots) if h == gpu and j != i]

            self._sibling.append(others[0] if others else None)

        indices = range(len(self._slots))

        self._subsets: List[Tuple[int, ...]] = [
            c for n in range(1, len(self._slots) + 1) for c in combinations(indices, n)
        ]

        # solo capacity without interference bounds what a gpulet can carry
        self._capacity: Dict[str, Tuple[float, ...]] = {}

        for name, _ in self._order:

            curve = capacity_curve(configurator.profiles[name], configurator.slo(name))

            self._capacity[name] = tuple(curve.max_rate(size) for _, size in self._slots)

    def demands(self, i: int) -> List[Demand]:

        return [(m, self._shares[i].get(m, 0.0)) for m in self._members[i]]

    def partners(self, i: int) -> List[Tuple[str, int]]:

        j = self._sibling[i]

        if j is None:

            return []

        return [(m, self._slots[j][1]) for m in self._members[j]]

    def lanes(self, i: int) -> Optional[List[Lane]]:

        return self._configurator.configure(self._slots[i][1], self.demands(i), self.partners(i))

    def solve(self) -> bool:

        return self._join(0)

    def _join(self, k: int) -> bool:

        self._budget.spend()

        if k == len(self._order):

            return self._share(0, 0, 0.0)

        name, rate = self._order[k]

        for subset in self._subsets:

            if sum(self._capacity[name][i] for i in subset) < rate * (1.0 - EPS):

                continue

            for i in subset:

                self._members[i].append(name)

            touched = set(subset) | {self._sibling[i] for i in subset if self._sibling[i] is not None}

            if all(self.lanes(i) is not None for i in touched) and self._join(k + 1):

                return True

            for i in subset:

                self._members[i].pop()

        return False

    def _share(self, k: int, pos: int, done: float) -> bool:

        self._budget.spend()

        if k == len(self._order):

            return True

        name, rate = self._order[k]

        used = [i for i, members in enumerate(self._members) if name in members]

        i = used[pos]

        remaining = rate - done

        if pos == len(used) - 1:

            options = [remaining]

        else:

            # a share only matters through its batch, so try the most each batch carries
            step = 1000.0 / self.lanes(i)[0].duty_cycle_ms

            top = min(
                self._configurator.profiles[name].max_batch,
                math.ceil(remaining / step - EPS) - 1,
            )

            options = [b * step for b in range(top, 0, -1)]

        for share in options:

            self._shares[i][name] = share

            if self.lanes(i) is None:

                continue

            if pos == len(used) - 1:

                found = self._share(k + 1, 0, 0.0)

            else:

                found = self._share(k, pos + 1, done + share)

            if found:

                return True

        self._shares[i].pop(name, None)

        return False


class _Budget:

    def __init__(self, limit: int) -> None:

        self._limit = limit
        self.used = 0

    def spend(self) -> None:

        self.used += 1

        if self.used > self._limit:

            raise ResourceBudgetError(
                f"the exhaustive search went past {self._limit} states; "
                "use fewer GPUs, models or grid points, or raise scheduler.ideal_state_budget"
            )


def ideal_exhaustive(
    spec: WorkloadSpec,
    profiles: Mapping[str, LatencyProfile],
    intf: Interference = None,
    state_budget: Optional[int] = None,
) -> SchedulePlan:
    """
    Schedulable iff some layout of the GPUs on the grid and some spreading of
    the models over its gpulets meets every SLO and rate

    :param spec: the workload
    :param profiles: latency profiles
    :param intf: interference model or co-location factor
    :param state_budget: search states before giving up; from the configuration by default
    :returns: SchedulePlan

    """
    check_profiles(spec, profiles)

    budget = _Budget(
        state_budget
        if state_budget is not None
        else gpuletsched_config.scheduler.ideal_state_budget
    )

    incumbent = elastic_partitioning(spec, profiles, intf, mode=Mode.GPULET_INT)

    if incumbent.schedulable:

        return make_plan(
            Verdict.SCHEDULABLE, Mode.IDEAL, spec, incumbent.gpulets, incumbent.assigned
        )

    configurator = LaneConfigurator(
        profiles, resolve_factor(intf, profiles), slos=spec.slos, margin=spec.slo_margin
    )

    order = [(n, r) for n, r in spec.ordered() if r > 0]

    layouts = gpu_layouts(spec.grid, spec.max_gpulets_per_gpu)

    for server in combinations_with_replacement(layouts, spec.num_gpus):

        slots = [(gpu, size) for gpu, layout in enumerate(server) for size in layout]

        search = _Search(slots, order, configurator, budget)

        if search.solve():

            log.debug(f"ideal layout {server} after {budget.used} states")

            gpulets = _to_gpulets(slots, search)

            assigned: Dict[str, float] = {name: 0.0 for name in spec.names}

            for g in gpulets:

                for lane in g.lanes:

                    assigned[lane.model] += lane.rate

            return make_plan(Verdict.SCHEDULABLE, Mode.IDEAL, spec, gpulets, assigned)

    log.debug(f"no layout works, {budget.used} states searched")

    return make_plan(
        Verdict.NOT_SCHEDULABLE, Mode.IDEAL, spec, incumbent.gpulets, incumbent.assigned
    )


def _to_gpulets(slots: Sequence[Tuple[int, int]], search: _Search) -> List[Gpulet]:

    gpulets = []

    for i, (gpu, size) in enumerate(slots):

        lanes = search.lanes(i)

        gpulets.append(Gpulet(id=i, gpu_id=gpu, size=size, lanes=list(lanes or [])))

    return gpulets
