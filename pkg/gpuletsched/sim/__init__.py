from .report import PeriodCounts, ReorgEvent, SimulationReport, empty_report
from .simulator import Simulator, check_sim_config, idle_plan, run, with_config
from .streams import (
    RateTrace,
    RequestStream,
    arrivals_for,
    deterministic_arrivals,
    ewma_rate,
    generate_arrivals,
    load_traces,
    streams_for,
    write_traces,
)
from .throughput import ThroughputResult, max_achievable_throughput, simulate_plan

__all__ = [
    "PeriodCounts",
    "RateTrace",
    "ReorgEvent",
    "RequestStream",
    "SimulationReport",
    "Simulator",
    "ThroughputResult",
    "arrivals_for",
    "check_sim_config",
    "deterministic_arrivals",
    "empty_report",
    "ewma_rate",
    "generate_arrivals",
    "idle_plan",
    "load_traces",
    "max_achievable_throughput",
    "run",
    "simulate_plan",
    "streams_for",
    "with_config",
    "write_traces",
]
