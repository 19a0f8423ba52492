from typing import Mapping, Optional

from ..profile import LatencyProfile
from ..utils.logging import setup_logger
from .elastic import elastic_partitioning
from .ideal import ideal_exhaustive
from .plan import Interference, Mode, SchedulePlan, WorkloadSpec
from .sbp import squishy_bin_packing

log = setup_logger(__name__)


def schedule(
    spec: WorkloadSpec,
    profiles: Mapping[str, LatencyProfile],
    intf: Interference = None,
    state_budget: Optional[int] = None,
) -> SchedulePlan:
    """
    run the scheduler named by spec.mode; plain gpulet mode ignores intf

    """
    if spec.mode == Mode.GPULET:

        plan = elastic_partitioning(spec, profiles, None, mode=Mode.GPULET)

    elif spec.mode == Mode.GPULET_INT:

        plan = elastic_partitioning(spec, profiles, intf, mode=Mode.GPULET_INT)

    elif spec.mode == Mode.SBP:

        plan = squishy_bin_packing(spec, profiles)

    else:

        plan = ideal_exhaustive(spec, profiles, intf, state_budget=state_budget)

    log.debug(f"{spec.mode.value}: {plan.verdict.value}")

    return plan
