import functools
import sys
from pathlib import Path
from typing import Dict, List, Optional

import click
import pandas as pd
from rich.console import Console

from .errors import GpuletschedError
from .experiments import (
    NAMED_SCENARIOS,
    canonical_suite,
    compare_ideal,
    config_header,
    fit_interference_experiment,
    fluctuation_experiment,
    get_app,
    app_max_throughput,
    named_suite,
    run_app_scenario,
    sweep_schedulability,
    two_wave_trace,
)
from .interference import FactorTable, InterferenceModel, load_samples
from .io.csv_files import write_table
from .profile import LatencyProfile, load_profiles, profiles_frame, write_profiles
from .scheduler import Interference, Mode, WorkloadSpec, schedule
from .sim import load_traces, max_achievable_throughput
from .synthetic import archetypes_from_file, generate_profiles
from .utils.configuration import gpuletsched_config, show_configuration, sim_config, throughput_config
from .utils.logging import setup_logger, silence_warnings, theme, update_logging_level
from .utils.read_input_file import read_workload_file

log = setup_logger(__name__)

_console = Console(theme=theme)


def _handled(command):
    """
    turn package errors into a logged message and exit code 2
    """

    @functools.wraps(command)
    def wrapper(*args, **kwargs):

        try:

            return command(*args, **kwargs)

        except GpuletschedError as e:

            log.error(f"{type(e).__name__}: {e}")

            sys.exit(2)

    return wrapper


def _parse_grid(ctx, param, value: Optional[str]) -> List[int]:

    if value is None:

        return list(gpuletsched_config.scheduler.grid)

    try:

        return [int(v) for v in value.split(",") if v.strip()]

    except ValueError:

        raise click.BadParameter(f"expected comma separated percentages, got {value}")


def _parse_rates(value: str) -> Dict[str, float]:

    rates = {}

    for item in value.split(","):

        if not item.strip():

            continue

        name, _, rate = item.partition("=")

        try:

            rates[name.strip()] = float(rate)

        except ValueError:

            raise click.BadParameter(f"expected model=rate pairs, got {item}")

    return rates


def _profiles(path: Optional[str], grid: List[int], seed: int) -> Dict[str, LatencyProfile]:

    if path is not None:

        return load_profiles(path)

    return generate_profiles(grid=grid, seed=seed)


def _interference(model_file: Optional[str], factor_table: Optional[str]) -> Interference:

    if factor_table is not None:

        return FactorTable.from_file(factor_table)

    if model_file is not None:

        return InterferenceModel.from_file(model_file)

    return InterferenceModel.from_coefficients(list(gpuletsched_config.interference.planted))


def _emit(frame: pd.DataFrame, out: Optional[str], header: str) -> None:

    if out is not None:

        path = write_table(frame, out, header=header)

        log.info(f"wrote {path}")

        return

    for line in header.rstrip("\n").splitlines():

        click.echo(f"# {line}")

    click.echo(frame.to_csv(index=False), nl=False)


def common_options(command):

    options = [
        click.option("--profiles", type=click.Path(exists=True, dir_okay=False), default=None,
                     help="profile CSV; synthetic profiles when omitted"),
        click.option("--gpus", type=int, default=lambda: gpuletsched_config.scheduler.num_gpus,
                     show_default="from config", help="number of GPUs"),
        click.option("--grid", callback=_parse_grid, default=None,
                     help="partition grid in percent, e.g. 20,40,50,60,80,100"),
        click.option("--seed", type=int, default=0, show_default=True,
                     help="seed of synthetic profiles and request streams"),
        click.option("--interference", "interference_file", type=click.Path(exists=True, dir_okay=False),
                     default=None, help="fitted interference model YAML"),
        click.option("--factor-table", type=click.Path(exists=True, dir_okay=False), default=None,
                     help="co-location factor CSV used instead of a fitted model"),
        click.option("--out", type=click.Path(dir_okay=False), default=None,
                     help="CSV destination; stdout when omitted"),
    ]

    for option in reversed(options):

        command = option(command)

    return command


_MODES = click.Choice([m.value for m in Mode])


@click.group(name="gpuletsched")
@click.option("--log-level", default=None, help="console log level, e.g. INFO")
@click.option("--quiet", is_flag=True, help="hide warnings")
def cli(log_level: Optional[str], quiet: bool) -> None:
    """
    SLO-aware scheduling of inference models on partitioned GPUs
    """

    if log_level is not None:

        update_logging_level(log_level.upper())

    if quiet:

        silence_warnings()


@cli.command()
@common_options
@click.option("--suite", type=click.Choice(["canonical", "named"]), default="canonical", show_default=True)
@click.option("--mode", "modes", type=_MODES, multiple=True,
              help="modes to compare; gpulet+int, gpulet and sbp when omitted")
@click.option("--workers", type=int, default=lambda: gpuletsched_config.sweep.workers)
@_handled
def sweep(profiles, gpus, grid, seed, interference_file, factor_table, out, suite, modes, workers):
    """
    schedulability of every scenario of a suite under each mode
    """

    modes = list(modes) or [Mode.GPULET_INT.value, Mode.GPULET.value, Mode.SBP.value]

    table = _profiles(profiles, grid, seed)

    if suite == "canonical":

        scenarios = canonical_suite(levels=list(gpuletsched_config.sweep.levels))

    else:

        scenarios = named_suite()

    result = sweep_schedulability(
        scenarios,
        [Mode.parse(m) for m in modes],
        table,
        num_gpus=gpus,
        grid=grid,
        intf=_interference(interference_file, factor_table),
        workers=workers,
        state_budget=gpuletsched_config.scheduler.ideal_state_budget,
    )

    header = config_header(command="sweep", suite=suite, modes=modes, gpus=gpus, grid=grid, seed=seed,
                           totals=result.totals)

    _emit(result.frame, out, header)


@cli.command()
@common_options
@click.option("--mode", type=_MODES, default=Mode.GPULET_INT.value, show_default=True)
@click.option("--rates", default=None, help="base rates as model=rate pairs")
@click.option("--scenario", type=click.Choice(sorted(NAMED_SCENARIOS)), default="equal", show_default=True,
              help="named base rates, used when --rates is omitted")
@click.option("--duration", type=float, default=None, help="simulated seconds per probe")
@_handled
def throughput(profiles, gpus, grid, seed, interference_file, factor_table, out, mode, rates, scenario, duration):
    """
    maximum aggregate rate served within the violation threshold
    """

    table = _profiles(profiles, grid, seed)

    base = _parse_rates(rates) if rates is not None else dict(NAMED_SCENARIOS[scenario])

    spec = WorkloadSpec.from_rates(base, table, num_gpus=gpus, grid=grid, mode=mode)

    config = throughput_config() if duration is None else throughput_config(duration_s=duration)

    result = max_achievable_throughput(
        spec,
        table,
        intf=_interference(interference_file, factor_table),
        config=config,
        sim=sim_config(seed=seed),
    )

    frame = pd.DataFrame(
        [
            dict(
                multiplier=p.multiplier,
                aggregate_rate=p.aggregate_rate,
                schedulable=p.schedulable,
                violation_rate=p.violation_rate,
            )
            for p in result.probes
        ],
        columns=["multiplier", "aggregate_rate", "schedulable", "violation_rate"],
    )

    header = config_header(command="throughput", mode=mode, rates=base, gpus=gpus, grid=grid, seed=seed,
                           max_throughput=result.aggregate_rate)

    _emit(frame, out, header)


@cli.command()
@common_options
@click.option("--app", "app_name", type=click.Choice(["game", "traffic"]), default="game", show_default=True)
@click.option("--mode", type=_MODES, default=Mode.GPULET_INT.value, show_default=True)
@click.option("--rate", type=float, default=None, help="application requests per second")
@click.option("--duration", type=float, default=None, help="simulated seconds")
@_handled
def app(profiles, gpus, grid, seed, interference_file, factor_table, out, app_name, mode, rate, duration):
    """
    simulate a multi-model application, or search its maximum rate when
    --rate is omitted
    """

    table = _profiles(profiles, grid, seed)

    application = get_app(app_name)

    intf = _interference(interference_file, factor_table)

    sim = sim_config(seed=seed) if duration is None else sim_config(seed=seed, duration_s=duration)

    if rate is None:

        rate = app_max_throughput(application, table, mode=mode, intf=intf, num_gpus=gpus, grid=grid, sim=sim)

        _console.print(f"[model]{app_name}[/model] max throughput: [rate]{rate:.1f}[/rate] req/s")

    result = run_app_scenario(application, rate, table, mode=mode, intf=intf, num_gpus=gpus, grid=grid, config=sim)

    header = config_header(command="app", app=app_name, mode=mode, rate=rate, app_slo_ms=result.app_slo_ms,
                           gpus=gpus, grid=grid, seed=seed)

    _emit(result.report.frame(), out, header)


@cli.command()
@common_options
@click.option("--mode", type=_MODES, default=Mode.GPULET_INT.value, show_default=True)
@click.option("--traces", type=click.Path(exists=True, dir_okay=False), default=None,
              help="rate trace CSV; a two-wave trace over the equal scenario when omitted")
@click.option("--duration", type=float, default=1800.0, show_default=True)
@_handled
def fluctuate(profiles, gpus, grid, seed, interference_file, factor_table, out, mode, traces, duration):
    """
    live rescheduling over fluctuating rates, one row per scheduling period
    """

    table = _profiles(profiles, grid, seed)

    if traces is not None:

        rate_traces = load_traces(traces)

    else:

        rate_traces = two_wave_trace(NAMED_SCENARIOS["equal"], duration_s=duration, seed=seed)

    result = fluctuation_experiment(
        rate_traces,
        table,
        mode=mode,
        intf=_interference(interference_file, factor_table),
        num_gpus=gpus,
        grid=grid,
        config=sim_config(seed=seed, duration_s=duration),
    )

    header = config_header(
        command="fluctuate",
        mode=mode,
        gpus=gpus,
        grid=grid,
        seed=seed,
        reorganizations=len(result.report.reorganizations),
        load_correlation=result.load_correlation,
        violation_fraction=result.violation_fraction,
    )

    _emit(result.frame, out, header)


@cli.command(name="fit-interference")
@click.option("--samples", type=click.Path(exists=True, dir_okay=False), default=None,
              help="co-run sample CSV; synthetic samples when omitted")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--save-model", type=click.Path(dir_okay=False), default=None, help="write the fitted model YAML")
@click.option("--out", type=click.Path(dir_okay=False), default=None)
@_handled
def fit_interference(samples, seed, save_model, out):
    """
    fit the interference model and emit its validation error CDF
    """

    config = gpuletsched_config.interference

    result = fit_interference_experiment(
        n_samples=config.n_samples,
        coefficients=list(config.planted),
        noise=config.noise,
        train_fraction=config.train_fraction,
        seed=seed,
        samples=load_samples(samples) if samples is not None else None,
    )

    if save_model is not None:

        result.result.model.save(save_model)

    header = config_header(
        command="fit-interference",
        seed=seed,
        coefficients=[float(c) for c in result.result.model.coefficients],
        p95_error=result.p95_error,
    )

    _emit(result.result.cdf, out, header)


@cli.command(name="gen-profiles")
@click.option("--archetypes", type=click.Path(exists=True, dir_okay=False), default=None,
              help="archetype YAML; the five evaluation models when omitted")
@click.option("--grid", callback=_parse_grid, default=None)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--jitter", type=float, default=0.0, show_default=True, help="relative latency noise")
@click.option("--out", type=click.Path(dir_okay=False), default=None)
@_handled
def gen_profiles(archetypes, grid, seed, jitter, out):
    """
    write synthetic latency profiles in the profile CSV format
    """

    if archetypes is not None:

        models, batches = archetypes_from_file(archetypes)

        table = generate_profiles(models, batches=batches, grid=grid, seed=seed, jitter=jitter)

    else:

        table = generate_profiles(grid=grid, seed=seed, jitter=jitter)

    header = config_header(command="gen-profiles", grid=grid, seed=seed, jitter=jitter)

    if out is not None:

        write_profiles(table.values(), out, header=header)

        return

    _emit(profiles_frame(table.values()), None, header)


@cli.command(name="compare-ideal")
@common_options
@click.option("--suite", type=click.Choice(["canonical", "named"]), default="named", show_default=True)
@click.option("--budget", type=int, default=lambda: gpuletsched_config.scheduler.ideal_state_budget,
              help="search states of the ideal scheduler per scenario")
@click.option("--workers", type=int, default=lambda: gpuletsched_config.sweep.workers)
@_handled
def compare_ideal_command(profiles, gpus, grid, seed, interference_file, factor_table, out, suite, budget, workers):
    """
    gpulet+int against the exhaustive scheduler
    """

    table = _profiles(profiles, grid, seed)

    scenarios = canonical_suite(levels=list(gpuletsched_config.sweep.levels)) if suite == "canonical" else named_suite()

    result = compare_ideal(
        scenarios,
        table,
        intf=_interference(interference_file, factor_table),
        num_gpus=gpus,
        grid=grid,
        workers=workers,
        state_budget=budget,
    )

    header = config_header(command="compare-ideal", suite=suite, gpus=gpus, grid=grid, seed=seed,
                           totals=result.totals, completed=result.completed, ratio=result.ratio)

    _emit(result.frame, out, header)


@cli.command(name="schedule")
@click.option("--workload", type=click.Path(exists=True, dir_okay=False), required=True,
              help="workload YAML with models, num_gpus, mode and grid")
@click.option("--profiles", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--interference", "interference_file", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--factor-table", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--out", type=click.Path(dir_okay=False), default=None, help="plan YAML destination")
@_handled
def schedule_command(workload, profiles, seed, interference_file, factor_table, out):
    """
    plan a workload file and print the verdict and the gpulets
    """

    table = _profiles(profiles, list(read_workload_file(workload).grid), seed)

    spec = WorkloadSpec.from_workload_file(workload, table)

    plan = schedule(spec, table, _interference(interference_file, factor_table))

    text = plan.dump()

    if out is not None:

        Path(out).write_text(text)

        style = "verdict.schedulable" if plan.schedulable else "verdict.not_schedulable"

        _console.print(f"[{style}]{plan.verdict.value}[/{style}] on {spec.num_gpus} GPUs, plan in {out}")

    else:

        click.echo(text, nl=False)

    if not plan.schedulable:

        log.warning(f"workload {workload} is not schedulable on {spec.num_gpus} GPUs")


@cli.command(name="show-config")
def show_config():
    """
    print the active configuration
    """

    _console.print(show_configuration())
