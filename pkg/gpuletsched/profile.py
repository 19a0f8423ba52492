from dataclasses import dataclass, replace
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from .errors import CapacityError, ConfigurationError, GridError, ProfileDataError
from .io.csv_files import PROFILE_COLUMNS, ordered, read_profile_table, write_table
from .utils.logging import setup_logger

log = setup_logger(__name__)

DEFAULT_GRID: Tuple[int, ...] = (20, 40, 50, 60, 80, 100)

# published per-model latency budgets
DEFAULT_SLOS: Dict[str, float] = {
    "goo": 44.0,
    "le": 5.0,
    "res": 95.0,
    "ssd": 136.0,
    "vgg": 130.0,
}

EPS = 1e-9


@dataclass(frozen=True)
class ModelSpec:

    name: str
    slo_ms: float
    max_batch: int = 1

    def __post_init__(self):

        if not self.name:

            raise ConfigurationError("a model needs a name")

        if not self.slo_ms > 0:

            raise ConfigurationError(f"{self.name}: slo_ms must be positive")

        if self.max_batch < 1:

            raise ConfigurationError(f"{self.name}: max_batch must be at least 1")


@dataclass(frozen=True, eq=False)
class LatencyProfile:
    """
    L(b, p) for one model on a fixed batch / partition grid, plus the
    solo-run L2 and memory bandwidth utilization at every partition size.

    latency has shape (len(batches), len(partitions)) and is in ms.
    """

    model: ModelSpec
    batches: Tuple[int, ...]
    partitions: Tuple[int, ...]
    latency: np.ndarray
    l2_util: Tuple[float, ...]
    mem_bw_util: Tuple[float, ...]

    def __post_init__(self):

        name = self.model.name

        table = np.array(self.latency, dtype=float)

        if table.shape != (len(self.batches), len(self.partitions)):

            raise ConfigurationError(
                f"{name}: latency table shape {table.shape} does not match the grid"
            )

        if list(self.batches) != sorted(set(self.batches)) or self.batches[0] < 1:

            raise ConfigurationError(f"{name}: batches must be increasing and >= 1")

        if list(self.partitions) != sorted(set(self.partitions)):

            raise ConfigurationError(f"{name}: partitions must be increasing")

        if len(self.l2_util) != len(self.partitions) or len(self.mem_bw_util) != len(
            self.partitions
        ):

            raise ConfigurationError(f"{name}: one utilization per partition is needed")

        for values, what in ((self.l2_util, "l2_util"), (self.mem_bw_util, "mem_bw_util")):

            for p, u in zip(self.partitions, values):

                if not 0.0 <= u <= 1.0:

                    raise ProfileDataError(f"{what} {u} outside [0, 1]", name, 0, p)

        bad = np.argwhere(~(table > 0))

        if len(bad):

            i, j = bad[0]

            raise ProfileDataError(
                "latency must be positive", name, self.batches[i], self.partitions[j]
            )

        # non-decreasing in b
        bad = np.argwhere(np.diff(table, axis=0) < -EPS)

        if len(bad):

            i, j = bad[0]

            log.error(f"{name}: latency drops with batch size")

            raise ProfileDataError(
                "latency decreases with batch size",
                name,
                self.batches[i + 1],
                self.partitions[j],
            )

        # non-increasing in p
        bad = np.argwhere(np.diff(table, axis=1) > EPS)

        if len(bad):

            i, j = bad[0]

            log.error(f"{name}: latency grows with partition size")

            raise ProfileDataError(
                "latency increases with partition size",
                name,
                self.batches[i],
                self.partitions[j + 1],
            )

        table.setflags(write=False)

        object.__setattr__(self, "latency", table)

        if self.model.max_batch != self.batches[-1]:

            object.__setattr__(
                self, "model", replace(self.model, max_batch=self.batches[-1])
            )

    @property
    def name(self) -> str:

        return self.model.name

    @property
    def max_batch(self) -> int:

        return self.batches[-1]

    def partition_index(self, p: int) -> int:

        try:

            return self.partitions.index(int(p))

        except ValueError:

            raise GridError(f"{self.name}: partition {p}% is not on the grid {self.partitions}")

    def l2_at(self, p: int) -> float:

        return self.l2_util[self.partition_index(p)]

    def mem_at(self, p: int) -> float:

        return self.mem_bw_util[self.partition_index(p)]

    def with_slo(self, slo_ms: float) -> "LatencyProfile":

        return replace(self, model=replace(self.model, slo_ms=slo_ms))

    def same_table(self, other: "LatencyProfile") -> bool:

        return (
            self.name == other.name
            and self.batches == other.batches
            and self.partitions == other.partitions
            and np.array_equal(self.latency, other.latency)
            and np.allclose(self.l2_util, other.l2_util)
            and np.allclose(self.mem_bw_util, other.mem_bw_util)
        )


@dataclass(frozen=True)
class CapacityCurve:

    model: str
    partitions: Tuple[int, ...]
    rates: Tuple[float, ...]

    def max_rate(self, p: int) -> float:

        try:

            return self.rates[self.partitions.index(int(p))]

        except ValueError:

            raise GridError(f"{self.model}: partition {p}% is not on the curve")


class RequiredPartition(NamedTuple):

    size: int
    saturating: bool


class OperatingPoint(NamedTuple):
    """
    the batch a lane runs at on a gpulet, its duty cycle and the rate it sustains
    """

    batch: int
    duty_ms: float
    rate: float


def build_profile(
    frame: pd.DataFrame, slo_ms: float, name: Optional[str] = None
) -> LatencyProfile:
    """
    build one profile from the rows of a single model

    """
    name = name if name is not None else str(frame["model"].iloc[0])

    duplicated = frame.duplicated(subset=["batch", "partition_pct"])

    if duplicated.any():

        row = frame[duplicated].iloc[0]

        raise ProfileDataError(
            "duplicate entry", name, int(row["batch"]), int(row["partition_pct"])
        )

    batches = tuple(sorted(int(b) for b in frame["batch"].unique()))
    partitions = tuple(sorted(int(p) for p in frame["partition_pct"].unique()))

    table = frame.pivot(index="batch", columns="partition_pct", values="latency_ms")
    table = table.reindex(index=list(batches), columns=list(partitions))

    holes = np.argwhere(table.isna().to_numpy())

    if len(holes):

        i, j = holes[0]

        raise ProfileDataError(
            "the partition grid differs between batch sizes",
            name,
            batches[i],
            partitions[j],
        )

    l2: List[float] = []
    mem: List[float] = []

    for p in partitions:

        rows = frame[frame["partition_pct"] == p]

        for column, sink in (("l2_util", l2), ("mem_bw_util", mem)):

            values = rows[column].to_numpy(dtype=float)

            if np.ptp(values) > 1e-9:

                raise ProfileDataError(
                    f"{column} must not depend on the batch size",
                    name,
                    int(rows["batch"].iloc[int(np.argmax(values))]),
                    p,
                )

            sink.append(float(values[0]))

    return LatencyProfile(
        model=ModelSpec(name=name, slo_ms=slo_ms, max_batch=batches[-1]),
        batches=batches,
        partitions=partitions,
        latency=table.to_numpy(dtype=float),
        l2_util=tuple(l2),
        mem_bw_util=tuple(mem),
    )


def load_profiles(
    source: Union[str, Path], slos: Optional[Mapping[str, float]] = None
) -> Dict[str, LatencyProfile]:
    """
    read a profile CSV and validate every model's table

    :param source: the profile file
    :param slos: per-model SLO in ms; falls back to the published defaults
    :returns: profiles keyed by model name

    """
    frame = read_profile_table(source)

    slos = dict(DEFAULT_SLOS, **(dict(slos) if slos is not None else {}))

    profiles: Dict[str, LatencyProfile] = {}

    for name, rows in frame.groupby("model", sort=True):

        if name not in slos:

            raise ConfigurationError(f"no SLO known for model {name}")

        profiles[name] = build_profile(rows, slo_ms=slos[name], name=name)

        log.debug(f"loaded profile of {name}")

    log.info(f"loaded {len(profiles)} profiles from {source}")

    return profiles


def profiles_frame(profiles: Iterable[LatencyProfile]) -> pd.DataFrame:

    rows = []

    for profile in sorted(profiles, key=lambda x: x.name):

        for i, b in enumerate(profile.batches):

            for j, p in enumerate(profile.partitions):

                rows.append(
                    dict(
                        model=profile.name,
                        batch=b,
                        partition_pct=p,
                        latency_ms=float(profile.latency[i, j]),
                        l2_util=profile.l2_util[j],
                        mem_bw_util=profile.mem_bw_util[j],
                    )
                )

    return ordered(pd.DataFrame(rows, columns=list(PROFILE_COLUMNS)), PROFILE_COLUMNS)


def write_profiles(
    profiles: Iterable[LatencyProfile], destination: Union[str, Path], header: Optional[str] = None
) -> Path:

    return write_table(profiles_frame(profiles), destination, header=header)


def lookup_latency(profile: LatencyProfile, b: int, p: int) -> float:
    """
    L(b, p) in ms; untabulated batch sizes take the next larger tabulated one

    """
    j = profile.partition_index(p)

    if b < 1 or b > profile.max_batch:

        raise CapacityError(
            f"{profile.name}: batch {b} outside the profiled range 1..{profile.max_batch}"
        )

    i = int(np.searchsorted(profile.batches, b, side="left"))

    return float(profile.latency[i, j])


def max_feasible_batch(
    profile: LatencyProfile,
    p: int,
    slo_ms: float,
    overhead_ms: float = 0.0,
    slowdown: float = 1.0,
) -> Optional[int]:
    """
    largest tabulated b with duty_cycle(b) + L(b, p) + overhead <= SLO,
    where the duty cycle equals L(b, p). slowdown scales L for co-located
    gpulets; None if not even b = 1 fits.

    """
    column = profile.latency[:, profile.partition_index(p)] * slowdown

    feasible = np.flatnonzero(2.0 * column + overhead_ms <= slo_ms + EPS)

    if len(feasible) == 0:

        return None

    return int(profile.batches[feasible[-1]])


def operating_point(
    profile: LatencyProfile,
    p: int,
    slo_ms: float,
    slowdown: float = 1.0,
    overhead_ms: float = 0.0,
) -> Optional[OperatingPoint]:

    b = max_feasible_batch(profile, p, slo_ms, overhead_ms=overhead_ms, slowdown=slowdown)

    if b is None:

        return None

    duty = lookup_latency(profile, b, p) * slowdown

    return OperatingPoint(batch=b, duty_ms=duty, rate=1000.0 * b / duty)


def capacity_curve(profile: LatencyProfile, slo_ms: float) -> CapacityCurve:

    rates: List[float] = []

    batches = np.array(profile.batches, dtype=float)

    for j, p in enumerate(profile.partitions):

        column = profile.latency[:, j]

        feasible = 2.0 * column <= slo_ms + EPS

        if feasible.any():

            rates.append(float(np.max(1000.0 * batches[feasible] / column[feasible])))

        else:

            rates.append(0.0)

    return CapacityCurve(model=profile.name, partitions=profile.partitions, rates=tuple(rates))


def curvature(partitions: Sequence[float], rates: Sequence[float]) -> np.ndarray:
    """
    magnitude of the second difference of the rate curve at the interior
    points, with rates scaled to a maximum of 1 and the grid to a span of 1.
    Uneven grid steps use the three-point form.

    """
    x = np.asarray(partitions, dtype=float)
    y = np.asarray(rates, dtype=float)

    x = (x - x[0]) / (x[-1] - x[0])
    y = y / y.max()

    h1 = x[1:-1] - x[:-2]
    h2 = x[2:] - x[1:-1]

    slope_left = (y[1:-1] - y[:-2]) / h1
    slope_right = (y[2:] - y[1:-1]) / h2

    return np.abs(2.0 * (slope_right - slope_left) / (h1 + h2))


def max_efficient_partition(curve: CapacityCurve) -> int:
    """
    the knee of the rate-vs-partition curve (p_eff)

    """
    rates = np.asarray(curve.rates, dtype=float)

    usable = np.flatnonzero(rates > 0)

    if len(usable) < 3:

        return int(curve.partitions[-1])

    parts = np.asarray(curve.partitions)[usable]

    kappa = curvature(parts, rates[usable])

    best = int(np.flatnonzero(kappa >= kappa.max() - EPS)[0])

    return int(parts[1:-1][best])


def min_required_partition(curve: CapacityCurve, rate: float) -> RequiredPartition:
    """
    smallest partition whose SLO-feasible capacity covers rate (p_req)

    """
    for p, r in zip(curve.partitions, curve.rates):

        if rate <= r + EPS:

            return RequiredPartition(size=int(p), saturating=False)

    return RequiredPartition(size=int(curve.partitions[-1]), saturating=True)
