from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

from omegaconf import OmegaConf

from ..errors import ConfigurationError, StateError
from ..interference import FactorFn, FittedFactor, InterferenceModel, no_interference
from ..partition import Gpulet, Lane, check_temporal_sharing, gpulets_to_dict, partners_in
from ..profile import DEFAULT_GRID, EPS, LatencyProfile, ModelSpec, lookup_latency
from ..utils.logging import setup_logger
from ..utils.read_input_file import WorkloadFile, read_workload_file

log = setup_logger(__name__)

# what the schedulers accept as interference knowledge
Interference = Union[InterferenceModel, FactorFn, None]


class Mode(str, Enum):

    GPULET = "gpulet"
    GPULET_INT = "gpulet+int"
    SBP = "sbp"
    IDEAL = "ideal"

    @classmethod
    def parse(cls, value: Union[str, "Mode"]) -> "Mode":

        try:

            return cls(value)

        except ValueError:

            raise ConfigurationError(
                f"unknown mode {value}; pick one of {[m.value for m in cls]}"
            )


class Verdict(str, Enum):

    SCHEDULABLE = "Schedulable"
    NOT_SCHEDULABLE = "NotSchedulable"


@dataclass(frozen=True)
class WorkloadSpec:
    """
    the models to serve with their incoming rates (req/s) and the server
    they are served on
    """

    models: Tuple[ModelSpec, ...]
    rates: Tuple[float, ...]
    num_gpus: int = 4
    grid: Tuple[int, ...] = DEFAULT_GRID
    mode: Mode = Mode.GPULET_INT
    max_gpulets_per_gpu: int = 2
    # share of every SLO the schedulers keep free
    slo_margin: float = 0.0

    def __post_init__(self):

        object.__setattr__(self, "models", tuple(self.models))
        object.__setattr__(self, "rates", tuple(float(r) for r in self.rates))
        object.__setattr__(self, "grid", tuple(sorted(int(p) for p in self.grid)))
        object.__setattr__(self, "mode", Mode.parse(self.mode))

        if len(self.models) != len(self.rates):

            raise ConfigurationError("one rate per model is needed")

        if len({m.name for m in self.models}) != len(self.models):

            raise ConfigurationError("model names must be unique")

        if any(r < 0 for r in self.rates):

            raise ConfigurationError(f"rates must be >= 0, got {self.rates}")

        if not any(r > 0 for r in self.rates):

            raise ConfigurationError("at least one model needs a positive rate")

        if self.num_gpus < 1:

            raise ConfigurationError("at least one GPU is needed")

        if not 0.0 <= self.slo_margin < 1.0:

            raise ConfigurationError(f"the SLO margin {self.slo_margin} must be in [0, 1)")

    @property
    def names(self) -> Tuple[str, ...]:

        return tuple(m.name for m in self.models)

    @property
    def slos(self) -> Dict[str, float]:

        return {m.name: m.slo_ms for m in self.models}

    @property
    def incoming(self) -> Dict[str, float]:

        return dict(zip(self.names, self.rates))

    def rate_of(self, name: str) -> float:

        return self.incoming[name]

    def ordered(self) -> List[Tuple[str, float]]:
        """
        (name, rate) by descending rate, ties by name
        """

        return sorted(self.incoming.items(), key=lambda x: (-x[1], x[0]))

    def with_rates(self, rates: Mapping[str, float]) -> "WorkloadSpec":

        return WorkloadSpec(
            models=self.models,
            rates=tuple(float(rates.get(n, 0.0)) for n in self.names),
            num_gpus=self.num_gpus,
            grid=self.grid,
            mode=self.mode,
            max_gpulets_per_gpu=self.max_gpulets_per_gpu,
            slo_margin=self.slo_margin,
        )

    def scaled(self, multiplier: float) -> "WorkloadSpec":

        return self.with_rates({n: r * multiplier for n, r in self.incoming.items()})

    @classmethod
    def from_rates(
        cls,
        rates: Mapping[str, float],
        profiles: Mapping[str, LatencyProfile],
        num_gpus: int = 4,
        grid: Sequence[int] = DEFAULT_GRID,
        mode: Union[str, Mode] = Mode.GPULET_INT,
        slos: Optional[Mapping[str, float]] = None,
        max_gpulets_per_gpu: int = 2,
        slo_margin: float = 0.0,
    ) -> "WorkloadSpec":
        """
        spec over the models of rates; SLOs come from the profiles unless given

        """
        slos = dict(slos) if slos is not None else {}

        models = []

        for name in rates:

            if name not in profiles:

                raise ConfigurationError(f"no profile for model {name}")

            models.append(
                ModelSpec(
                    name=name,
                    slo_ms=float(slos.get(name, profiles[name].model.slo_ms)),
                    max_batch=profiles[name].max_batch,
                )
            )

        return cls(
            models=tuple(models),
            rates=tuple(float(rates[m.name]) for m in models),
            num_gpus=num_gpus,
            grid=tuple(grid),
            mode=Mode.parse(mode),
            max_gpulets_per_gpu=max_gpulets_per_gpu,
            slo_margin=slo_margin,
        )

    @classmethod
    def from_workload_file(
        cls,
        file_name: Union[str, Path],
        profiles: Optional[Mapping[str, LatencyProfile]] = None,
    ) -> "WorkloadSpec":
        """
        read a workload YAML/JSON file: models [{name, slo_ms, rate}],
        num_gpus, mode and grid

        """
        content: WorkloadFile = read_workload_file(file_name)

        models = []

        for entry in content.models:

            slo = entry.slo_ms

            if not slo > 0 and profiles is not None and entry.name in profiles:

                slo = profiles[entry.name].model.slo_ms

            max_batch = (
                profiles[entry.name].max_batch
                if profiles is not None and entry.name in profiles
                else 1
            )

            models.append(ModelSpec(name=entry.name, slo_ms=slo, max_batch=max_batch))

        log.debug(f"read workload of {len(models)} models from {file_name}")

        return cls(
            models=tuple(models),
            rates=tuple(entry.rate for entry in content.models),
            num_gpus=content.num_gpus,
            grid=tuple(content.grid),
            mode=Mode.parse(content.mode),
        )


def check_profiles(spec: WorkloadSpec, profiles: Mapping[str, LatencyProfile]) -> None:
    """
    every model needs a profile covering the whole grid
    """

    for name in spec.names:

        if name not in profiles:

            log.error(f"model {name} has no latency profile")

            raise ConfigurationError(f"no profile for model {name}")

        for p in spec.grid:

            profiles[name].partition_index(p)


def resolve_factor(
    intf: Interference, profiles: Mapping[str, LatencyProfile]
) -> FactorFn:

    if intf is None:

        return no_interference

    if isinstance(intf, InterferenceModel):

        return FittedFactor(intf, profiles)

    return intf


@dataclass(frozen=True)
class SchedulePlan:
    """
    outcome of one scheduler run: the verdict, the gpulets (with their lanes)
    and how much of each model's incoming rate was placed
    """

    verdict: Verdict
    mode: Mode
    gpulets: Tuple[Gpulet, ...]
    assigned: Mapping[str, float]
    incoming: Mapping[str, float]
    num_gpus: int
    # allocated gpulets whose sibling was empty when they were checked
    flags: Tuple[int, ...] = field(default_factory=tuple)

    @property
    def schedulable(self) -> bool:

        return self.verdict == Verdict.SCHEDULABLE

    @property
    def allocated(self) -> List[Gpulet]:

        return [g for g in self.gpulets if g.lanes]

    def utilized_partition_sum(self) -> int:

        return sum(g.size for g in self.allocated)

    def lanes_for(self, model: str) -> List[Tuple[Gpulet, Lane]]:

        return [(g, lane) for g in self.gpulets for lane in g.lanes if lane.model == model]

    def to_dict(self) -> Dict:

        return dict(
            mode=self.mode.value,
            assigned={k: round(v, 4) for k, v in sorted(self.assigned.items())},
            gpus=gpulets_to_dict(self.gpulets, self.num_gpus),
        )

    def dump(self) -> str:
        """
        verdict line followed by the plan as YAML
        """

        body = OmegaConf.to_yaml(OmegaConf.create(self.to_dict()))

        return f"# verdict: {self.verdict.value}\n{body}"

    def validate(
        self,
        profiles: Mapping[str, LatencyProfile],
        factor: Optional[FactorFn] = None,
    ) -> None:
        """
        raise StateError unless the GPU sizes add up and, for a schedulable
        plan, every rate is covered and every gpulet's lanes meet their SLO
        with the given co-location factor

        """
        factor = factor if factor is not None else no_interference

        for gpu in range(self.num_gpus):

            parts = [g for g in self.gpulets if g.gpu_id == gpu]

            if sum(g.size for g in parts) != 100:

                raise StateError(f"GPU {gpu} gpulets do not add up to 100%")

        if not self.schedulable:

            return

        for name, rate in self.incoming.items():

            if self.assigned.get(name, 0.0) < rate - EPS * max(1.0, rate):

                raise StateError(f"{name}: {self.assigned.get(name, 0.0)} of {rate} placed")

        for g in self.allocated:

            partners = partners_in(self.gpulets, g)

            execs = [
                lookup_latency(profiles[lane.model], lane.batch, g.size)
                * factor(lane.model, g.size, partners)
                if lane.batch > 0
                else 0.0
                for lane in g.lanes
            ]

            if not check_temporal_sharing(
                duties=[lane.duty_cycle_ms for lane in g.lanes],
                execs=execs,
                slos=[lane.slo_ms for lane in g.lanes],
                batches=[lane.batch for lane in g.lanes],
                rates=[lane.rate for lane in g.lanes],
            ):

                raise StateError(f"gpulet {g.id} on GPU {g.gpu_id} misses an SLO")


def make_plan(
    verdict: Verdict,
    mode: Mode,
    spec: WorkloadSpec,
    gpulets: Sequence[Gpulet],
    assigned: Mapping[str, float],
) -> SchedulePlan:

    gpulets = tuple(g.copy() for g in sorted(gpulets, key=lambda g: (g.gpu_id, g.id)))

    flags = []

    for g in gpulets:

        if not g.lanes:

            continue

        sibling = [h for h in gpulets if h.gpu_id == g.gpu_id and h.id != g.id]

        if sibling and not sibling[0].lanes:

            flags.append(g.id)

    return SchedulePlan(
        verdict=verdict,
        mode=mode,
        gpulets=gpulets,
        assigned=dict(assigned),
        incoming=spec.incoming,
        num_gpus=spec.num_gpus,
        flags=tuple(flags),
    )
