"""
Evaluation protocols: schedulability sweeps over rate scenarios, multi-model
applications, rate fluctuation, the ideal-scheduler comparison and the
interference model fit.
"""
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from itertools import product
from typing import Dict, Iterator, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from omegaconf import OmegaConf

from .errors import ConfigurationError, ResourceBudgetError
from .interference import FactorFn, FitResult, InterferenceModel, fit
from .profile import DEFAULT_GRID, LatencyProfile
from .scheduler import Interference, Mode, SchedulePlan, WorkloadSpec, resolve_factor, schedule
from .sim import (
    RateTrace,
    SimulationReport,
    Simulator,
    ThroughputResult,
    empty_report,
    max_achievable_throughput,
    streams_for,
)
from .synthetic import generate_corun_samples
from .utils.configuration import SimConfig, ThroughputConfig, gpuletsched_config, sim_config
from .utils.logging import setup_logger

log = setup_logger(__name__)

EVALUATION_MODELS: Tuple[str, ...] = ("goo", "le", "res", "ssd", "vgg")

BUDGET_EXCEEDED = "BudgetExceeded"


@dataclass(frozen=True)
class Scenario:

    id: int
    rates: Tuple[Tuple[str, float], ...]
    name: str = ""

    @property
    def rate_map(self) -> Dict[str, float]:

        return dict(self.rates)


@dataclass(frozen=True)
class ScenarioSuite:

    name: str
    models: Tuple[str, ...]
    scenarios: Tuple[Scenario, ...]

    def __len__(self) -> int:

        return len(self.scenarios)

    def __iter__(self) -> Iterator[Scenario]:

        return iter(self.scenarios)


def canonical_suite(
    models: Sequence[str] = EVALUATION_MODELS,
    levels: Sequence[float] = (0.0, 200.0, 400.0, 600.0),
) -> ScenarioSuite:
    """
    every combination of one rate level per model except all zero,
    len(levels) ** len(models) - 1 scenarios
    """

    models = tuple(models)

    scenarios = []

    for combo in product(levels, repeat=len(models)):

        if not any(r > 0 for r in combo):

            continue

        scenarios.append(
            Scenario(id=len(scenarios), rates=tuple(zip(models, (float(r) for r in combo))))
        )

    return ScenarioSuite(name="canonical", models=models, scenarios=tuple(scenarios))


NAMED_SCENARIOS: Dict[str, Dict[str, float]] = {
    "equal": {"le": 50.0, "goo": 50.0, "res": 50.0, "ssd": 50.0, "vgg": 50.0},
    "long-only": {"le": 0.0, "goo": 0.0, "res": 100.0, "ssd": 100.0, "vgg": 100.0},
    "short-skew": {"le": 100.0, "goo": 100.0, "res": 100.0, "ssd": 50.0, "vgg": 50.0},
}


def named_suite() -> ScenarioSuite:

    scenarios = tuple(
        Scenario(id=i, rates=tuple(sorted(rates.items())), name=name)
        for i, (name, rates) in enumerate(NAMED_SCENARIOS.items())
    )

    return ScenarioSuite(name="named", models=EVALUATION_MODELS, scenarios=scenarios)


@dataclass(frozen=True)
class AppScenario:
    """
    an application whose every request fans out into model requests
    """

    name: str
    fanout: Tuple[Tuple[str, int], ...]

    def __post_init__(self):

        object.__setattr__(self, "fanout", tuple(self.fanout))

        if not self.fanout:

            raise ConfigurationError(f"{self.name}: an application needs models")

        for model, k in self.fanout:

            if k < 1:

                raise ConfigurationError(f"{self.name}: multiplicity of {model} must be >= 1")

    @property
    def models(self) -> Tuple[str, ...]:

        return tuple(m for m, _ in self.fanout)

    def rates(self, app_rate: float) -> Dict[str, float]:

        return {m: k * app_rate for m, k in self.fanout}

    def slo_ms(self, profiles: Mapping[str, LatencyProfile]) -> float:
        """
        twice the solo latency of its slowest model; model SLOs already double
        their solo latency, so this is the largest SLO among its models
        """

        for m in self.models:

            if m not in profiles:

                raise ConfigurationError(f"{self.name}: no profile for model {m}")

        return max(profiles[m].model.slo_ms for m in self.models)


GAME = AppScenario(name="game", fanout=(("le", 6), ("res", 1)))

TRAFFIC = AppScenario(name="traffic", fanout=(("ssd", 1), ("goo", 1), ("vgg", 1)))

APPS: Dict[str, AppScenario] = {a.name: a for a in (GAME, TRAFFIC)}


def get_app(name: str) -> AppScenario:

    if name not in APPS:

        raise ConfigurationError(f"unknown application {name}; pick one of {sorted(APPS)}")

    return APPS[name]


def config_header(**run) -> str:
    """
    the active configuration and the run's parameters as YAML
    """

    content = OmegaConf.create(
        dict(config=OmegaConf.to_container(gpuletsched_config, resolve=True), run=run)
    )

    return OmegaConf.to_yaml(content)


def rank_correlation(x: Sequence[float], y: Sequence[float]) -> float:

    rx = pd.Series(list(x), dtype=float).rank().to_numpy()
    ry = pd.Series(list(y), dtype=float).rank().to_numpy()

    if len(rx) < 2 or np.std(rx) == 0 or np.std(ry) == 0:

        return 0.0

    return float(np.corrcoef(rx, ry)[0, 1])


def _spec(
    rates: Mapping[str, float],
    profiles: Mapping[str, LatencyProfile],
    mode: Mode,
    num_gpus: int,
    grid: Sequence[int],
) -> WorkloadSpec:

    return WorkloadSpec.from_rates(rates, profiles, num_gpus=num_gpus, grid=grid, mode=mode)


def _sweep_one(
    task: Tuple[int, Dict[str, float], Mode, Mapping[str, LatencyProfile], Interference, int, Tuple[int, ...], Optional[int]]
) -> Tuple[int, str, str]:

    scenario_id, rates, mode, profiles, intf, num_gpus, grid, budget = task

    spec = _spec(rates, profiles, mode, num_gpus, grid)

    try:

        verdict = schedule(spec, profiles, intf, state_budget=budget).verdict.value

    except ResourceBudgetError:

        verdict = BUDGET_EXCEEDED

    return scenario_id, mode.value, verdict


@dataclass
class SweepResult:

    frame: pd.DataFrame
    totals: Dict[str, int]

    def schedulable_ids(self, mode: Mode) -> set:

        rows = self.frame[(self.frame["mode"] == mode.value) & (self.frame["verdict"] == "Schedulable")]

        return set(rows["scenario_id"].tolist())


def sweep_schedulability(
    suite: ScenarioSuite,
    modes: Sequence[Mode],
    profiles: Mapping[str, LatencyProfile],
    num_gpus: int = 4,
    grid: Sequence[int] = DEFAULT_GRID,
    intf: Interference = None,
    workers: int = 1,
    state_budget: Optional[int] = None,
) -> SweepResult:
    """
    run every mode on every scenario

    :param suite: the scenarios
    :param modes: scheduler modes to compare
    :param profiles: latency profiles
    :param num_gpus: GPUs of the server
    :param grid: partition grid
    :param intf: interference knowledge for the modes that use it
    :param workers: scenarios scheduled in parallel processes when > 1
    :param state_budget: search states of the ideal scheduler per scenario
    :returns: verdicts sorted by scenario and mode, and schedulable totals

    """
    tasks = [
        (s.id, s.rate_map, Mode.parse(m), profiles, intf, num_gpus, tuple(grid), state_budget)
        for s in suite
        for m in modes
    ]

    if workers > 1:

        with ProcessPoolExecutor(max_workers=workers) as pool:

            results = list(pool.map(_sweep_one, tasks, chunksize=max(1, len(tasks) // (4 * workers))))

    else:

        results = [_sweep_one(t) for t in tasks]

    frame = pd.DataFrame(sorted(results), columns=["scenario_id", "mode", "verdict"])

    totals = {
        Mode.parse(m).value: int(
            ((frame["mode"] == Mode.parse(m).value) & (frame["verdict"] == "Schedulable")).sum()
        )
        for m in modes
    }

    log.info(f"{suite.name} sweep of {len(suite)} scenarios: {totals}")

    return SweepResult(frame=frame, totals=totals)


@dataclass
class AppRun:

    app: AppScenario
    app_rate: float
    app_slo_ms: float
    plan: Optional[SchedulePlan]
    report: SimulationReport


def run_app_scenario(
    app: AppScenario,
    rate: float,
    profiles: Mapping[str, LatencyProfile],
    mode: Mode = Mode.GPULET_INT,
    intf: Interference = None,
    truth: Optional[FactorFn] = None,
    num_gpus: int = 4,
    grid: Sequence[int] = DEFAULT_GRID,
    config: Optional[SimConfig] = None,
) -> AppRun:
    """
    expand the application rate into model rates, schedule them and
    simulate the plan
    """

    config = config if config is not None else sim_config()

    slo = app.slo_ms(profiles)

    rates = app.rates(rate)

    if not any(r > 0 for r in rates.values()):

        report = empty_report(sorted(rates), config.scheduling_period_s, config.duration_s)

        return AppRun(app=app, app_rate=rate, app_slo_ms=slo, plan=None, report=report)

    # every model request of the application is held to the application SLO
    spec = WorkloadSpec.from_rates(
        rates, profiles, num_gpus=num_gpus, grid=grid, mode=mode, slos={m: slo for m in rates}
    )

    plan = schedule(spec, profiles, intf)

    truth = truth if truth is not None else resolve_factor(intf, profiles)

    report = Simulator(profiles, config=config, factor=truth).run(
        plan, streams_for(rates, seed=config.seed)
    )

    log.info(f"{app.name} at {rate} req/s: {plan.verdict.value}, {report.violation_rate():.4f} violating")

    return AppRun(app=app, app_rate=rate, app_slo_ms=slo, plan=plan, report=report)


def app_max_throughput(
    app: AppScenario,
    profiles: Mapping[str, LatencyProfile],
    mode: Mode = Mode.GPULET_INT,
    intf: Interference = None,
    truth: Optional[FactorFn] = None,
    num_gpus: int = 4,
    grid: Sequence[int] = DEFAULT_GRID,
    config: Optional[ThroughputConfig] = None,
    sim: Optional[SimConfig] = None,
) -> float:
    """
    largest application request rate served within the violation threshold
    """

    slo = app.slo_ms(profiles)

    spec = WorkloadSpec.from_rates(
        app.rates(1.0), profiles, num_gpus=num_gpus, grid=grid, mode=mode, slos={m: slo for m in app.models}
    )

    result = max_achievable_throughput(spec, profiles, intf=intf, truth=truth, config=config, sim=sim)

    return result.multiplier


def two_wave_trace(
    base: Mapping[str, float],
    duration_s: float = 1800.0,
    segment_s: float = 20.0,
    peaks: Tuple[float, float] = (2.0, 2.5),
    seed: int = 0,
) -> Dict[str, RateTrace]:
    """
    rates that rise to peaks[0] times the base and fall back over the first
    third of the run, then rise to peaks[1] times the base over the second
    half; every model is shifted a little in time

    """
    rng = np.random.default_rng(seed)

    def bump(t: float, start: float, end: float) -> float:

        if not start <= t <= end:

            return 0.0

        return math.sin(math.pi * (t - start) / (end - start)) ** 2

    starts = np.arange(0.0, duration_s, segment_s)

    traces: Dict[str, RateTrace] = {}

    for model, rate in sorted(base.items()):

        shift = float(rng.uniform(-0.03, 0.03)) * duration_s

        values = []

        for start in starts:

            t = start + 0.5 * segment_s - shift

            multiplier = (
                1.0
                + (peaks[0] - 1.0) * bump(t, 0.0, duration_s / 3.0)
                + (peaks[1] - 1.0) * bump(t, duration_s / 2.0, 5.0 * duration_s / 6.0)
            )

            values.append((float(start), rate * multiplier))

        traces[model] = RateTrace(tuple(values))

    return traces


@dataclass
class FluctuationResult:

    report: SimulationReport
    frame: pd.DataFrame
    load_correlation: float
    violation_fraction: float


def fluctuation_experiment(
    traces: Mapping[str, RateTrace],
    profiles: Mapping[str, LatencyProfile],
    mode: Mode = Mode.GPULET_INT,
    intf: Interference = None,
    truth: Optional[FactorFn] = None,
    num_gpus: int = 4,
    grid: Sequence[int] = DEFAULT_GRID,
    config: Optional[SimConfig] = None,
    duration_s: Optional[float] = None,
) -> FluctuationResult:
    """
    live rescheduling over rate traces; per period the offered load, the
    throughput, the violations and the utilized partition sum

    """
    config = config if config is not None else sim_config()

    mode = Mode.parse(mode)

    def planner(rates: Mapping[str, float]) -> SchedulePlan:

        spec = WorkloadSpec.from_rates(
            rates,
            profiles,
            num_gpus=num_gpus,
            grid=grid,
            mode=mode,
            slo_margin=config.slo_margin,
        )

        return schedule(spec, profiles, intf)

    truth = truth if truth is not None else resolve_factor(intf, profiles)

    simulator = Simulator(profiles, config=config, factor=truth)

    report = simulator.run(planner, streams_for(traces, seed=config.seed), duration_s=duration_s)

    frame = report.system_frame()

    correlation = rank_correlation(frame["offered"], frame["utilized_partition_sum"])

    log.info(
        f"fluctuation: {len(report.reorganizations)} reorganizations, "
        f"load / partition rank correlation {correlation:.2f}"
    )

    return FluctuationResult(
        report=report,
        frame=frame,
        load_correlation=correlation,
        violation_fraction=report.violation_rate(),
    )


@dataclass
class IdealComparison:

    frame: pd.DataFrame
    totals: Dict[str, int]
    # ideal's count over the scenarios it finished within its budget
    completed: int

    @property
    def ratio(self) -> float:

        ideal = self.totals.get(Mode.IDEAL.value, 0)

        if ideal == 0:

            return 1.0

        return self.totals.get(Mode.GPULET_INT.value, 0) / ideal


def compare_ideal(
    suite: ScenarioSuite,
    profiles: Mapping[str, LatencyProfile],
    intf: Interference = None,
    num_gpus: int = 4,
    grid: Sequence[int] = DEFAULT_GRID,
    workers: int = 1,
    state_budget: Optional[int] = None,
) -> IdealComparison:
    """
    gpulet+int against the exhaustive scheduler on the scenarios the
    exhaustive one finishes

    """
    sweep = sweep_schedulability(
        suite,
        [Mode.GPULET_INT, Mode.IDEAL],
        profiles,
        num_gpus=num_gpus,
        grid=grid,
        intf=intf,
        workers=workers,
        state_budget=state_budget,
    )

    wide = sweep.frame.pivot(index="scenario_id", columns="mode", values="verdict").reset_index()

    finished = wide[wide[Mode.IDEAL.value] != BUDGET_EXCEEDED]

    totals = {
        m.value: int((finished[m.value] == "Schedulable").sum())
        for m in (Mode.GPULET_INT, Mode.IDEAL)
    }

    return IdealComparison(frame=wide, totals=totals, completed=len(finished))


def ideal_rate_ratio(
    spec: WorkloadSpec,
    profiles: Mapping[str, LatencyProfile],
    intf: Interference = None,
    config: Optional[ThroughputConfig] = None,
) -> float:
    """
    maximum schedulable rate of gpulet+int over that of the ideal scheduler
    """

    rates = {}

    for mode in (Mode.GPULET_INT, Mode.IDEAL):

        result: ThroughputResult = max_achievable_throughput(
            WorkloadSpec(
                models=spec.models,
                rates=spec.rates,
                num_gpus=spec.num_gpus,
                grid=spec.grid,
                mode=mode,
                max_gpulets_per_gpu=spec.max_gpulets_per_gpu,
                slo_margin=spec.slo_margin,
            ),
            profiles,
            intf=intf,
            config=config,
            simulate=False,
        )

        rates[mode] = result.aggregate_rate

    if rates[Mode.IDEAL] <= 0:

        return 1.0

    return rates[Mode.GPULET_INT] / rates[Mode.IDEAL]


@dataclass
class FitExperiment:

    result: FitResult
    planted: InterferenceModel
    coefficient_error: float
    p95_error: float
    samples: list = field(default_factory=list)


def fit_interference_experiment(
    n_samples: int = 2500,
    coefficients: Sequence[float] = (0.04, 0.10, 0.06, 0.22, 0.95),
    noise: float = 0.05,
    train_fraction: float = 0.7,
    seed: int = 0,
    samples: Optional[Sequence] = None,
) -> FitExperiment:
    """
    fit the linear model on co-run samples (drawn from planted coefficients
    unless given) and report the validation error CDF

    """
    planted = InterferenceModel.from_coefficients(coefficients)

    if samples is None:

        samples = generate_corun_samples(n_samples, coefficients=coefficients, noise=noise, seed=seed)

    result = fit(samples, split=train_fraction, seed=seed)

    error = float(np.max(np.abs(result.model.coefficients - planted.coefficients)))

    p95 = result.error_at(95.0) if len(result.cdf) else 0.0

    log.info(f"fitted {result.model}, 95th percentile error {p95:.4f}")

    return FitExperiment(
        result=result,
        planted=planted,
        coefficient_error=error,
        p95_error=p95,
        samples=list(samples),
    )
