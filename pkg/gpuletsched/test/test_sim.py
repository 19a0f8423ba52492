import numpy as np
import pytest

from gpuletsched.errors import ConfigurationError
from gpuletsched.interference import FactorTable
from gpuletsched.scheduler import Mode, WorkloadSpec, schedule
from gpuletsched.sim import (
    RateTrace,
    RequestStream,
    SimulationReport,
    Simulator,
    deterministic_arrivals,
    ewma_rate,
    generate_arrivals,
    idle_plan,
    load_traces,
    max_achievable_throughput,
    streams_for,
    write_traces,
)
from gpuletsched.utils.configuration import ThroughputConfig, sim_config


def _plan(rates, profiles, mode=Mode.GPULET, num_gpus=1, intf=None):

    spec = WorkloadSpec.from_rates(rates, profiles, num_gpus=num_gpus, mode=mode)

    return schedule(spec, profiles, intf)


def test_poisson_rate():

    stream = RequestStream(model="m", trace=RateTrace.constant(100.0), seed=9)

    times = generate_arrivals(stream, 100.0)

    # 3 sigma of a Poisson count with mean 10000
    assert abs(len(times) - 10000) < 300

    assert np.all(np.diff(times) >= 0)

    assert times[-1] < 100.0


def test_arrivals_are_reproducible():

    stream = RequestStream(model="m", trace=RateTrace.constant(50.0), seed=1)

    assert np.array_equal(generate_arrivals(stream, 10.0), generate_arrivals(stream, 10.0))


def test_piecewise_trace():

    trace = RateTrace(((10.0, 100.0), (20.0, 0.0)))

    assert trace.rate_at(5.0) == 0.0

    assert trace.rate_at(15.0) == 100.0

    assert trace.mean_rate(0.0, 30.0) == pytest.approx(100.0 / 3.0)

    times = generate_arrivals(RequestStream(model="m", trace=trace, seed=2), 30.0)

    assert np.all((times >= 10.0) & (times < 20.0))

    with pytest.raises(ConfigurationError):

        RateTrace(((5.0, 1.0), (5.0, 2.0)))


def test_trace_file(tmp_path):

    traces = {"a": RateTrace(((0.0, 10.0), (20.0, 30.0))), "b": RateTrace.constant(5.0)}

    loaded = load_traces(write_traces(traces, tmp_path / "traces.csv"))

    assert loaded == traces


def test_deterministic_arrivals():

    times = deterministic_arrivals(4.0, 1.0)

    assert np.allclose(times, [0.0, 0.25, 0.5, 0.75])


def test_ewma():

    assert ewma_rate(100.0, 200.0, 0.5) == 150.0

    with pytest.raises(ConfigurationError):

        ewma_rate(100.0, 200.0, 0.0)


def test_config_checks(lin):

    with pytest.raises(ConfigurationError):

        Simulator(lin, config=sim_config(scheduling_period_s=10.0))

    with pytest.raises(ConfigurationError):

        Simulator(lin, config=sim_config(arrival="bursty"))

    with pytest.raises(ConfigurationError):

        Simulator(lin, config=sim_config(grow_trigger=1.5))


def test_replay_of_a_split_gpu(short_and_long):

    plan = _plan({"S": 400.0, "V": 400.0}, short_and_long)

    report = Simulator(short_and_long, config=sim_config(duration_s=5.0)).replay(plan)

    assert report.arrivals() == 4000

    assert report.completed() == 4000

    assert report.violations() == 0

    assert report.latency_percentile("S", 100) <= 10.0 + 1e-6


def test_light_poisson_load_meets_slo(lin):

    plan = _plan({"lin": 500.0}, lin)

    simulator = Simulator(lin, config=sim_config(duration_s=420.0))

    # half of the planned capacity
    report = simulator.run(plan, streams_for({"lin": 250.0}, seed=3))

    assert report.arrivals() > 100000

    assert report.violation_rate() < 0.01


def test_unplanned_model_is_dropped(lin):

    plan = _plan({"lin": 100.0}, lin)

    streams = streams_for({"lin": 50.0, "other": 10.0}, seed=1)

    report = Simulator(lin, config=sim_config(duration_s=10.0)).run(plan, streams)

    assert report.dropped("other") == report.arrivals("other")

    assert report.violation_rate("lin") < 0.05


def test_idle_plan_drops_everything(lin):

    report = Simulator(lin, config=sim_config(duration_s=5.0)).run(
        idle_plan(["lin"]), streams_for({"lin": 20.0})
    )

    assert report.violation_rate() == 1.0


def test_unseen_interference_breaks_slo(pair):

    truth = FactorTable({("A", "B"): 1.6, ("B", "A"): 1.6})

    blind = _plan({"A": 200.0, "B": 200.0}, pair, mode=Mode.GPULET)

    assert blind.schedulable

    simulator = Simulator(pair, config=sim_config(duration_s=20.0), factor=truth)

    assert simulator.run(blind, streams_for({"A": 200.0, "B": 200.0})).violation_rate() > 0.01

    aware = _plan({"A": 200.0, "B": 200.0}, pair, mode=Mode.GPULET_INT, intf=truth)

    assert not aware.schedulable


def test_report_frame(lin):

    plan = _plan({"lin": 100.0}, lin)

    report = Simulator(lin, config=sim_config(duration_s=50.0)).run(plan, streams_for({"lin": 100.0}))

    frame = report.frame()

    assert list(frame.columns) == ["period", "model", "throughput", "violation_rate", "utilized_partition_sum"]

    # periods of 20, 20 and 10 seconds
    assert len(frame) == 3

    assert (frame["utilized_partition_sum"] == plan.utilized_partition_sum()).all()

    assert report.throughput() == pytest.approx(report.completed() / 50.0)


def test_period_accounting():

    report = SimulationReport(models=("m",), period_s=20.0, duration_s=50.0)

    assert report.num_periods == 3

    assert report.period_of(49.0) == 2

    assert report.period_length(2) == 10.0

    report.record_plan(0.0, 40)

    report.record_plan(30.0, 100)

    assert report.utilized_partition_sum(1) == pytest.approx(70.0)


def test_live_rescheduling_on_flat_load(lin):

    def planner(rates):

        return _plan(rates, lin)

    simulator = Simulator(lin, config=sim_config(duration_s=200.0))

    report = simulator.run(planner, streams_for({"lin": 150.0}, seed=5))

    assert len(report.reorganizations) <= 1

    assert report.arrivals() > 0


def test_live_rescheduling_follows_a_step(lin):

    def planner(rates):

        return _plan(rates, lin)

    trace = RateTrace(((0.0, 60.0), (100.0, 300.0)))

    config = sim_config(duration_s=200.0, rate_headroom=0.5)

    report = Simulator(lin, config=config).run(planner, streams_for({"lin": trace}, seed=2))

    assert report.reorganizations

    first = report.reorganizations[0]

    assert first.decided_s >= 100.0

    assert 10.0 <= first.activated_s - first.decided_s <= 15.0

    assert first.utilized_after > first.utilized_before

    assert report.utilized_partition_sum(report.num_periods - 1) > report.utilized_partition_sum(0)


def test_max_throughput_search(lin):

    spec = WorkloadSpec.from_rates({"lin": 100.0}, lin, num_gpus=1, mode=Mode.GPULET)

    schedulable = max_achievable_throughput(spec, lin, simulate=False)

    assert 499.0 <= schedulable.aggregate_rate <= 500.0 + 1e-6

    config = ThroughputConfig(duration_s=5.0, arrival="deterministic", search_steps=6)

    served = max_achievable_throughput(spec, lin, config=config)

    assert 400.0 <= served.aggregate_rate <= 500.0 + 1e-6

    assert served.probes[0].multiplier == 1.0


def test_live_rescheduling_uses_up_little_headroom(lin):

    def planner(rates):

        return _plan(rates, lin)

    # a third more load stays below the provisioned 90 req/s
    trace = RateTrace(((0.0, 60.0), (100.0, 80.0)))

    config = sim_config(duration_s=200.0, rate_headroom=0.5, grow_trigger=0.25)

    report = Simulator(lin, config=config).run(planner, streams_for({"lin": trace}, seed=4))

    first = report.reorganizations[0]

    assert first.decided_s == pytest.approx(120.0)

    assert 70.0 < first.rates["lin"] < 90.0


def test_live_margin_keeps_slack(lin):

    spec = WorkloadSpec.from_rates({"lin": 150.0}, lin, num_gpus=1, mode=Mode.GPULET, slo_margin=0.25)

    plan = schedule(spec, lin)

    assert plan.schedulable

    for g in plan.allocated:

        for lane in g.lanes:

            assert lane.slo_ms == 40.0

            assert lane.duty_cycle_ms + lane.exec_ms <= 0.75 * 40.0 + 1e-9

    with pytest.raises(ConfigurationError):

        WorkloadSpec.from_rates({"lin": 1.0}, lin, slo_margin=1.0)
