# -*- coding: utf-8 -*-

"""Top-level package for gpuletsched."""

from .errors import GpuletschedError
from .interference import InterferenceModel, fit
from .partition import Gpulet, GpuletInventory, Lane, LaneConfigurator
from .profile import LatencyProfile, ModelSpec, load_profiles
from .scheduler import Mode, SchedulePlan, Verdict, WorkloadSpec, schedule
from .sim import Simulator, max_achievable_throughput
from .synthetic import generate_profiles
from .utils.configuration import gpuletsched_config, show_configuration

from ._version import __version__
