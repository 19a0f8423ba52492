"""
Synthetic stand-ins for measured data: latency profiles built from a
closed-form archetype per model and co-run samples drawn from a planted
interference model.
"""
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import ConfigurationError
from .interference import CoRunSample
from .profile import DEFAULT_GRID, LatencyProfile, ModelSpec
from .utils.logging import setup_logger
from .utils.package_data import get_path_of_data_file
from .utils.read_input_file import ArchetypeFile, read_archetype_file

log = setup_logger(__name__)

DEFAULT_BATCHES: Tuple[int, ...] = (1, 2, 3, 4, 6, 8, 12, 16, 24, 32)


@dataclass(frozen=True)
class ModelArchetype:

    name: str
    slo_ms: float
    alpha: float
    beta: float
    saturation: float = 1.0
    l2_util: float = 0.3
    mem_bw_util: float = 0.3

    def __post_init__(self):

        if self.alpha < 0 or not self.beta > 0:

            raise ConfigurationError(f"{self.name}: need alpha >= 0 and beta > 0")

        if not self.saturation > 0:

            raise ConfigurationError(f"{self.name}: saturation must be positive")

    def speedup(self, p: float) -> float:
        """
        fraction of the full-GPU speed reached on p percent of the GPU
        """

        x = p / 100.0

        k = self.saturation

        return (1.0 + k) * x / (x + k)

    def latency(self, b: float, p: float) -> float:

        return self.beta + self.alpha * b / self.speedup(p)

    def l2(self, p: float) -> float:

        return float(min(1.0, self.l2_util * np.sqrt(p / 100.0)))

    def mem(self, p: float) -> float:

        return float(min(1.0, self.mem_bw_util * np.sqrt(p / 100.0)))


def archetypes_from_file(
    file_name: Union[str, Path]
) -> Tuple[List[ModelArchetype], Tuple[int, ...]]:

    content: ArchetypeFile = read_archetype_file(file_name)

    archetypes = [
        ModelArchetype(
            name=m.name,
            slo_ms=m.slo_ms,
            alpha=m.alpha,
            beta=m.beta,
            saturation=m.saturation,
            l2_util=m.l2_util,
            mem_bw_util=m.mem_bw_util,
        )
        for m in content.models
    ]

    return archetypes, tuple(int(b) for b in content.batches)


def default_archetypes() -> List[ModelArchetype]:

    archetypes, _ = archetypes_from_file(get_path_of_data_file("model_archetypes.yml"))

    return archetypes


def generate_profile(
    archetype: ModelArchetype,
    batches: Sequence[int] = DEFAULT_BATCHES,
    grid: Sequence[int] = DEFAULT_GRID,
    jitter: float = 0.0,
    rng: Optional[np.random.Generator] = None,
) -> LatencyProfile:

    table = np.array(
        [[archetype.latency(b, p) for p in grid] for b in batches], dtype=float
    )

    if jitter > 0:

        rng = rng if rng is not None else np.random.default_rng()

        table = table * rng.lognormal(0.0, jitter, size=table.shape)

        # keep the table monotone after the noise
        table = np.maximum.accumulate(table, axis=0)
        table = np.minimum.accumulate(table, axis=1)

    return LatencyProfile(
        model=ModelSpec(name=archetype.name, slo_ms=archetype.slo_ms, max_batch=max(batches)),
        batches=tuple(int(b) for b in batches),
        partitions=tuple(int(p) for p in grid),
        latency=table,
        l2_util=tuple(archetype.l2(p) for p in grid),
        mem_bw_util=tuple(archetype.mem(p) for p in grid),
    )


def generate_profiles(
    archetypes: Optional[Sequence[ModelArchetype]] = None,
    batches: Sequence[int] = DEFAULT_BATCHES,
    grid: Sequence[int] = DEFAULT_GRID,
    seed: int = 0,
    jitter: float = 0.0,
) -> Dict[str, LatencyProfile]:
    """
    L(b, p) = beta + alpha b / s(p / 100) for every archetype

    :param archetypes: defaults to the five evaluation models
    :param batches: tabulated batch sizes
    :param grid: partition sizes in percent
    :param seed: seed of the optional jitter
    :param jitter: log-normal sigma of a multiplicative noise, 0 keeps the closed form
    :returns: profiles keyed by name

    """
    archetypes = archetypes if archetypes is not None else default_archetypes()

    rng = np.random.default_rng(seed)

    profiles = {
        a.name: generate_profile(a, batches=batches, grid=grid, jitter=jitter, rng=rng)
        for a in archetypes
    }

    log.info(f"generated {len(profiles)} synthetic profiles")

    return profiles


def generate_corun_samples(
    n: int,
    coefficients: Sequence[float] = (0.04, 0.10, 0.06, 0.22, 0.95),
    noise: float = 0.0,
    seed: int = 0,
    low: float = 0.05,
    high: float = 0.95,
) -> List[CoRunSample]:
    """
    co-run observations of a planted linear model with relative Gaussian noise

    """
    rng = np.random.default_rng(seed)

    utils = rng.uniform(low, high, size=(n, 4))

    c = np.asarray(coefficients, dtype=float)

    truth = utils @ c[:4] + c[4]

    observed = truth * (1.0 + noise * rng.standard_normal(n)) if noise > 0 else truth

    observed = np.maximum(observed, 1e-3)

    return [
        CoRunSample(
            l2_a=float(u[0]),
            l2_b=float(u[1]),
            mem_a=float(u[2]),
            mem_b=float(u[3]),
            observed_factor=float(o),
        )
        for u, o in zip(utils, observed)
    ]
