from typing import Dict, Sequence

import numpy as np
import pytest

from gpuletsched.profile import DEFAULT_GRID, LatencyProfile, ModelSpec
from gpuletsched.synthetic import generate_profiles
from gpuletsched.utils.logging import update_logging_level

update_logging_level("DEBUG")


def linear_profile(
    name: str,
    slo_ms: float,
    scale: float,
    grid: Sequence[int] = DEFAULT_GRID,
    batches: Sequence[int] = (1, 2, 4, 8),
    l2: float = 0.3,
    mem: float = 0.3,
) -> LatencyProfile:
    """
    L(b, p) = scale * b * 100 / p, so capacity grows linearly with p
    """

    latency = np.array([[scale * b * 100.0 / p for p in grid] for b in batches])

    return LatencyProfile(
        model=ModelSpec(name=name, slo_ms=slo_ms, max_batch=max(batches)),
        batches=tuple(batches),
        partitions=tuple(grid),
        latency=latency,
        l2_util=(l2,) * len(grid),
        mem_bw_util=(mem,) * len(grid),
    )


@pytest.fixture(scope="session")
def lin() -> Dict[str, LatencyProfile]:

    # capacities 100, 200, 250, 300, 400, 500 req/s on the default grid
    return {"lin": linear_profile("lin", 40.0, 2.0)}


@pytest.fixture(scope="session")
def pair() -> Dict[str, LatencyProfile]:

    return {
        "A": linear_profile("A", 40.0, 2.0),
        "B": linear_profile("B", 40.0, 2.0),
    }


@pytest.fixture(scope="session")
def short_and_long() -> Dict[str, LatencyProfile]:

    return {
        "S": linear_profile("S", 10.0, 0.5),
        "V": linear_profile("V", 40.0, 2.0),
    }


@pytest.fixture(scope="session")
def synthetic() -> Dict[str, LatencyProfile]:

    return generate_profiles(seed=0)
