import math
from dataclasses import dataclass, field, replace
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Set, Tuple

from .errors import ConfigurationError, GridError, SharabilityError, StateError
from .interference import FactorFn, Partner, no_interference
from .profile import DEFAULT_GRID, EPS, LatencyProfile, lookup_latency, operating_point
from .utils.logging import setup_logger

log = setup_logger(__name__)

# (model, rate in req/s) asked of a gpulet
Demand = Tuple[str, float]


@dataclass
class Lane:
    """
    one model served on a gpulet: requests are collected for duty_cycle_ms
    (or until batch requests are waiting) and executed in exec_ms
    """

    model: str
    rate: float
    slo_ms: float
    batch: int = 0
    duty_cycle_ms: float = 0.0
    exec_ms: float = 0.0


@dataclass
class Gpulet:

    id: int
    gpu_id: int
    size: int
    lanes: List[Lane] = field(default_factory=list)
    # the whole-GPU gpulet this one was split from
    parent_id: Optional[int] = None

    @property
    def allocated(self) -> bool:

        return len(self.lanes) > 0

    @property
    def models(self) -> List[str]:

        return [lane.model for lane in self.lanes]

    @property
    def assigned_rate(self) -> Dict[str, float]:

        out: Dict[str, float] = {}

        for lane in self.lanes:

            out[lane.model] = out.get(lane.model, 0.0) + lane.rate

        return out

    def copy(self) -> "Gpulet":

        return replace(self, lanes=[replace(lane) for lane in self.lanes])


def check_temporal_sharing(
    duties: Sequence[float],
    execs: Sequence[float],
    slos: Sequence[float],
    batches: Sequence[int],
    rates: Sequence[float],
    overheads: Optional[Sequence[float]] = None,
) -> bool:
    """
    can these lanes take turns on one gpulet?

    With D the smallest duty cycle, the batches of all lanes must fit in one
    window (sum exec <= D), a request of lane i waits at most one window and
    every batch (D + sum exec + overhead_i <= SLO_i), and each lane's batch per
    window covers its rate (b_i / D >= rate_i).

    """
    if not duties:

        return True

    overheads = overheads if overheads is not None else [0.0] * len(duties)

    window = min(duties)

    total = sum(execs)

    if total > window + EPS:

        return False

    for slo, batch, rate, extra in zip(slos, batches, rates, overheads):

        if window + total + extra > slo + EPS:

            return False

        if rate > 0 and 1000.0 * batch / window < rate * (1.0 - EPS):

            return False

    return True


class LaneConfigurator:
    """
    derives batch sizes and the common duty cycle of the lanes of a gpulet
    from the latency profiles and a co-location factor; margin is the share
    of every SLO left free for queueing
    """

    def __init__(
        self,
        profiles: Mapping[str, LatencyProfile],
        factor: Optional[FactorFn] = None,
        slos: Optional[Mapping[str, float]] = None,
        margin: float = 0.0,
    ) -> None:

        if not 0.0 <= margin < 1.0:

            raise ConfigurationError(f"the SLO margin {margin} must be in [0, 1)")

        self._profiles: Mapping[str, LatencyProfile] = profiles
        self._factor: FactorFn = factor if factor is not None else no_interference
        self._slos: Dict[str, float] = dict(slos) if slos is not None else {}
        self._margin: float = margin

    @property
    def profiles(self) -> Mapping[str, LatencyProfile]:

        return self._profiles

    @property
    def factor(self) -> FactorFn:

        return self._factor

    def slo(self, model: str) -> float:

        if model in self._slos:

            return self._slos[model]

        return self._profiles[model].model.slo_ms

    def reserve(self, model: str) -> float:
        """
        ms of the SLO of model kept out of the lane configuration
        """

        return self._margin * self.slo(model)

    def configure(
        self, size: int, demands: Sequence[Demand], partners: Sequence[Partner] = ()
    ) -> Optional[List[Lane]]:
        """
        lanes for the demands on a gpulet of this size, None if infeasible

        """
        if not demands:

            return []

        if len({m for m, _ in demands}) != len(demands):

            return None

        factors = [self._factor(m, size, partners) for m, _ in demands]

        points = [
            operating_point(
                self._profiles[m], size, self.slo(m), slowdown=f, overhead_ms=self.reserve(m)
            )
            for (m, _), f in zip(demands, factors)
        ]

        if any(p is None for p in points):

            return None

        window = min(p.duty_ms for p in points)

        lanes: List[Lane] = []

        for (model, rate), f in zip(demands, factors):

            profile = self._profiles[model]

            if rate <= EPS:

                batch, exec_ms = 0, 0.0

            else:

                batch = max(1, math.ceil(rate * window / 1000.0 - 1e-9))

                if batch > profile.max_batch:

                    return None

                exec_ms = lookup_latency(profile, batch, size) * f

            lanes.append(
                Lane(
                    model=model,
                    rate=rate,
                    slo_ms=self.slo(model),
                    batch=batch,
                    duty_cycle_ms=window,
                    exec_ms=exec_ms,
                )
            )

        if not check_temporal_sharing(
            duties=[p.duty_ms for p in points],
            execs=[lane.exec_ms for lane in lanes],
            slos=[lane.slo_ms for lane in lanes],
            batches=[lane.batch for lane in lanes],
            rates=[lane.rate for lane in lanes],
            overheads=[self.reserve(lane.model) for lane in lanes],
        ):

            return None

        return lanes

    def max_share(
        self,
        size: int,
        demands: Sequence[Demand],
        model: str,
        partners: Sequence[Partner] = (),
    ) -> float:
        """
        largest rate a new lane of model can add to the demands of a gpulet
        """

        empty = self.configure(size, list(demands) + [(model, 0.0)], partners)

        if empty is None:

            return 0.0

        window = empty[0].duty_cycle_ms

        def fits(k: int) -> bool:

            return (
                self.configure(size, list(demands) + [(model, 1000.0 * k / window)], partners)
                is not None
            )

        lo, hi = 0, self._profiles[model].max_batch

        # feasibility only shrinks as the batch grows
        while lo < hi:

            mid = (lo + hi + 1) // 2

            if fits(mid):

                lo = mid

            else:

                hi = mid - 1

        return 1000.0 * lo / window


class GpuletInventory:
    """
    the gpulets of a server: every GPU starts as one 100% gpulet and can be
    split in two; gpulets without lanes are in the remain set, the others in
    the alloc set
    """

    def __init__(
        self,
        num_gpus: int,
        grid: Sequence[int] = DEFAULT_GRID,
        max_gpulets_per_gpu: int = 2,
    ) -> None:

        if num_gpus < 1:

            raise ConfigurationError("at least one GPU is needed")

        grid = tuple(sorted(int(p) for p in grid))

        if 100 not in grid:

            raise ConfigurationError("the partition grid must contain 100")

        for p in grid:

            if p < 100 and (100 - p) not in grid:

                raise ConfigurationError(
                    f"splitting at {p}% leaves {100 - p}% which is not on the grid"
                )

        self._num_gpus: int = num_gpus
        self._grid: Tuple[int, ...] = grid
        self._max_per_gpu: int = max_gpulets_per_gpu

        self._gpulets: Dict[int, Gpulet] = {}
        self._remain: Set[int] = set()
        self._alloc: Set[int] = set()

        for gpu in range(num_gpus):

            self._gpulets[gpu] = Gpulet(id=gpu, gpu_id=gpu, size=100)

            self._remain.add(gpu)

        self._next_id: int = num_gpus

    @property
    def num_gpus(self) -> int:

        return self._num_gpus

    @property
    def grid(self) -> Tuple[int, ...]:

        return self._grid

    @property
    def remain_gpulets(self) -> List[Gpulet]:
        """
        unallocated gpulets, smallest first
        """

        return sorted(
            (self._gpulets[i] for i in self._remain), key=lambda g: (g.size, g.gpu_id, g.id)
        )

    @property
    def alloc_gpulets(self) -> List[Gpulet]:

        return sorted((self._gpulets[i] for i in self._alloc), key=lambda g: (g.gpu_id, g.id))

    @property
    def gpulets(self) -> List[Gpulet]:

        return sorted(self._gpulets.values(), key=lambda g: (g.gpu_id, g.id))

    def get(self, gpulet_id: int) -> Gpulet:

        return self._gpulets[gpulet_id]

    def on_gpu(self, gpu_id: int) -> List[Gpulet]:

        return sorted(
            (g for g in self._gpulets.values() if g.gpu_id == gpu_id), key=lambda g: g.id
        )

    def sibling(self, g: Gpulet) -> Optional[Gpulet]:

        for other in self.on_gpu(g.gpu_id):

            if other.id != g.id:

                return other

        return None

    def partners(self, g: Gpulet) -> List[Partner]:

        sibling = self.sibling(g)

        if sibling is None:

            return []

        return [(lane.model, sibling.size) for lane in sibling.lanes if lane.rate > EPS]

    def utilized_partition_sum(self) -> int:

        return sum(self._gpulets[i].size for i in self._alloc)

    def _known(self, g: Gpulet) -> Gpulet:

        if g.id not in self._gpulets or self._gpulets[g.id] is not g:

            raise StateError(f"gpulet {g.id} is not part of this inventory")

        return g

    def split(self, g: Gpulet, p_ideal: int) -> Tuple[Gpulet, Optional[Gpulet]]:
        """
        split a free whole GPU into p_ideal and 100 - p_ideal; both halves
        are left in the remain set

        """
        self._known(g)

        if g.size != 100 or g.lanes or g.id not in self._remain:

            log.error(f"refusing to split gpulet {g.id} of size {g.size}")

            raise StateError(f"only free 100% gpulets can be split, not gpulet {g.id}")

        if p_ideal >= 100:

            return g, None

        if p_ideal not in self._grid:

            raise GridError(f"cannot split at {p_ideal}%: not on the grid {self._grid}")

        if self._max_per_gpu < 2:

            raise StateError(f"GPU {g.gpu_id} cannot hold more than one gpulet")

        del self._gpulets[g.id]

        self._remain.discard(g.id)

        ideal = Gpulet(id=self._next_id, gpu_id=g.gpu_id, size=p_ideal, parent_id=g.id)
        remain = Gpulet(
            id=self._next_id + 1, gpu_id=g.gpu_id, size=100 - p_ideal, parent_id=g.id
        )

        self._next_id += 2

        for h in (ideal, remain):

            self._gpulets[h.id] = h

            self._remain.add(h.id)

        log.debug(f"split GPU {g.gpu_id} into {ideal.size}% and {remain.size}%")

        return ideal, remain

    def revert_split(self, g: Gpulet) -> Gpulet:
        """
        give a lane-free gpulet back; it is fused with its sibling into the
        original whole GPU when the sibling is free as well

        :returns: the gpulet now in the remain set

        """
        self._known(g)

        if g.lanes or g.id in self._alloc:

            raise StateError(f"gpulet {g.id} still serves {g.models}")

        self._remain.add(g.id)

        sibling = self.sibling(g)

        if sibling is None or sibling.lanes:

            return g

        parent = g.parent_id if g.parent_id is not None else min(g.id, sibling.id)

        for h in (g, sibling):

            del self._gpulets[h.id]

            self._remain.discard(h.id)

        whole = Gpulet(id=parent, gpu_id=g.gpu_id, size=100)

        self._gpulets[whole.id] = whole

        self._remain.add(whole.id)

        log.debug(f"GPU {g.gpu_id} is whole again")

        return whole

    def reconfigure(
        self, configurator: LaneConfigurator, overrides: Mapping[int, Sequence[Demand]]
    ) -> Optional[Dict[int, List[Lane]]]:
        """
        lane configuration of the gpulets in overrides (with the given
        demands) and of their siblings (with their current demands), or None
        if any of them becomes infeasible

        """

        def demand(gpulet_id: int) -> List[Demand]:

            if gpulet_id in overrides:

                return list(overrides[gpulet_id])

            return [(lane.model, lane.rate) for lane in self._gpulets[gpulet_id].lanes]

        touched: List[int] = []

        for gpulet_id in overrides:

            for h in [self._gpulets[gpulet_id], self.sibling(self._gpulets[gpulet_id])]:

                if h is not None and h.id not in touched:

                    touched.append(h.id)

        result: Dict[int, List[Lane]] = {}

        for gpulet_id in touched:

            g = self._gpulets[gpulet_id]

            sibling = self.sibling(g)

            partners = (
                [(m, sibling.size) for m, r in demand(sibling.id) if r > EPS]
                if sibling is not None
                else []
            )

            lanes = configurator.configure(g.size, demand(gpulet_id), partners)

            if lanes is None:

                return None

            result[gpulet_id] = lanes

        return result

    def apply(self, changes: Mapping[int, List[Lane]]) -> None:

        for gpulet_id, lanes in changes.items():

            g = self._gpulets[gpulet_id]

            g.lanes = list(lanes)

            if g.lanes:

                self._remain.discard(gpulet_id)
                self._alloc.add(gpulet_id)

            else:

                self._alloc.discard(gpulet_id)
                self._remain.add(gpulet_id)

    def allocate(
        self, g: Gpulet, demands: Sequence[Demand], configurator: LaneConfigurator
    ) -> bool:
        """
        put lanes on a gpulet if it and its sibling stay feasible
        """
        self._known(g)

        changes = self.reconfigure(configurator, {g.id: demands})

        if changes is None:

            return False

        self.apply(changes)

        return True

    def _merge_changes(
        self,
        g: Gpulet,
        g_alloc: Gpulet,
        configurator: LaneConfigurator,
        min_size: Optional[int],
    ) -> Optional[Dict[int, List[Lane]]]:

        if g.id == g_alloc.id or not g_alloc.lanes or not g.lanes:

            return None

        if g_alloc.size < (min_size if min_size is not None else g.size):

            return None

        # lanes of one model on both gpulets become a single lane
        merged: Dict[str, float] = {}

        for lane in g_alloc.lanes + g.lanes:

            merged[lane.model] = merged.get(lane.model, 0.0) + lane.rate

        return self.reconfigure(configurator, {g_alloc.id: list(merged.items()), g.id: []})

    def temporally_sharable(
        self,
        g: Gpulet,
        g_alloc: Gpulet,
        configurator: LaneConfigurator,
        min_size: Optional[int] = None,
    ) -> bool:
        """
        can the lanes of g move onto the allocated gpulet g_alloc, whose size
        must be at least min_size (default: the size of g)? A gpulet is
        always sharable with itself.

        """
        self._known(g)
        self._known(g_alloc)

        if g.id == g_alloc.id:

            return True

        return self._merge_changes(g, g_alloc, configurator, min_size) is not None

    def merge_temporal(
        self,
        g: Gpulet,
        g_alloc: Gpulet,
        configurator: LaneConfigurator,
        min_size: Optional[int] = None,
    ) -> Gpulet:
        """
        move the lanes of g onto g_alloc and give g back with revert_split

        """
        self._known(g)
        self._known(g_alloc)

        if not g_alloc.lanes:

            raise StateError(f"gpulet {g_alloc.id} has no lanes to merge into")

        if g.id == g_alloc.id:

            return g_alloc

        changes = self._merge_changes(g, g_alloc, configurator, min_size)

        if changes is None:

            raise SharabilityError(
                f"{g.models} on gpulet {g.id} cannot share gpulet {g_alloc.id} with {g_alloc.models}"
            )

        self.apply(changes)

        self.revert_split(g)

        log.debug(f"merged onto gpulet {g_alloc.id}: {g_alloc.models}")

        return g_alloc

    def check_invariants(self) -> None:

        if self._remain & self._alloc:

            raise StateError("a gpulet is both free and allocated")

        if self._remain | self._alloc != set(self._gpulets):

            raise StateError("a gpulet is neither free nor allocated")

        for g in self._gpulets.values():

            if g.allocated != (g.id in self._alloc):

                raise StateError(f"gpulet {g.id} lanes disagree with its set")

        for gpu in range(self._num_gpus):

            parts = self.on_gpu(gpu)

            if sum(g.size for g in parts) != 100:

                raise StateError(f"GPU {gpu} gpulets do not add up to 100%")

            if len(parts) > self._max_per_gpu:

                raise StateError(f"GPU {gpu} holds {len(parts)} gpulets")

    def snapshot(self) -> Tuple[Gpulet, ...]:

        return tuple(g.copy() for g in self.gpulets)


def sibling_in(gpulets: Iterable[Gpulet], g: Gpulet) -> Optional[Gpulet]:

    for other in gpulets:

        if other.gpu_id == g.gpu_id and other.id != g.id:

            return other

    return None


def partners_in(gpulets: Iterable[Gpulet], g: Gpulet) -> List[Partner]:

    sibling = sibling_in(gpulets, g)

    if sibling is None:

        return []

    return [(lane.model, sibling.size) for lane in sibling.lanes if lane.rate > EPS]


def gpulets_to_dict(gpulets: Iterable[Gpulet], num_gpus: int) -> List[Dict]:
    """
    per GPU, its gpulets with their lanes; plain containers for the plan dump
    """

    gpulets = list(gpulets)

    out: List[Dict] = []

    for gpu in range(num_gpus):

        entry = dict(gpu=gpu, gpulets=[])

        for g in sorted((g for g in gpulets if g.gpu_id == gpu), key=lambda g: g.id):

            entry["gpulets"].append(
                dict(
                    id=g.id,
                    size=g.size,
                    lanes=[
                        dict(
                            model=lane.model,
                            batch=lane.batch,
                            duty_cycle_ms=round(lane.duty_cycle_ms, 4),
                            rate=round(lane.rate, 4),
                        )
                        for lane in g.lanes
                    ],
                )
            )

        out.append(entry)

    return out
