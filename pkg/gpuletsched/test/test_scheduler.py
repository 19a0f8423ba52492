import math
from itertools import combinations, product

import numpy as np
import pytest

from gpuletsched.errors import ConfigurationError, GridError, ResourceBudgetError
from gpuletsched.interference import FactorTable, InterferenceModel
from gpuletsched.partition import GpuletInventory, LaneConfigurator
from gpuletsched.profile import capacity_curve
from gpuletsched.scheduler import (
    Mode,
    Verdict,
    WorkloadSpec,
    elastic_partitioning,
    find_best_fit,
    gpu_layouts,
    ideal_exhaustive,
    resolve_factor,
    schedule,
    squishy_bin_packing,
)
from gpuletsched.sim import Simulator
from gpuletsched.utils.configuration import sim_config


def _spec(rates, profiles, mode=Mode.GPULET, num_gpus=1, grid=None):

    kwargs = dict(num_gpus=num_gpus, mode=mode)

    if grid is not None:

        kwargs["grid"] = grid

    return WorkloadSpec.from_rates(rates, profiles, **kwargs)


def test_spec_validation(lin):

    with pytest.raises(ConfigurationError):

        _spec({"lin": 0.0}, lin)

    with pytest.raises(ConfigurationError):

        _spec({"lin": -1.0}, lin)

    with pytest.raises(ConfigurationError):

        _spec({"nope": 1.0}, lin)

    with pytest.raises(ConfigurationError):

        Mode.parse("fastest")


def test_elastic_splits_at_the_knee(lin):

    plan = schedule(_spec({"lin": 500.0}, lin), lin)

    assert plan.verdict == Verdict.SCHEDULABLE

    assert sorted((g.size, round(g.lanes[0].rate)) for g in plan.allocated) == [(40, 200), (60, 300)]

    assert plan.assigned["lin"] == pytest.approx(500.0)

    plan.validate(lin)


def test_elastic_over_capacity(lin):

    plan = schedule(_spec({"lin": 501.0}, lin), lin)

    assert plan.verdict == Verdict.NOT_SCHEDULABLE

    assert plan.assigned["lin"] < 501.0


def test_partitioning_beats_squishy_bin_packing(short_and_long):

    spec = _spec({"S": 400.0, "V": 400.0}, short_and_long, mode=Mode.SBP)

    assert not squishy_bin_packing(spec, short_and_long).schedulable

    plan = elastic_partitioning(spec, short_and_long)

    assert plan.schedulable

    layout = {g.lanes[0].model: (g.size, g.lanes[0].batch, g.lanes[0].duty_cycle_ms) for g in plan.allocated}

    assert layout["S"] == (20, 2, pytest.approx(5.0))

    assert layout["V"] == (80, 8, pytest.approx(20.0))

    plan.validate(short_and_long)


def test_squishy_bin_packing_uses_whole_gpus(lin):

    plan = squishy_bin_packing(_spec({"lin": 200.0}, lin, mode=Mode.SBP), lin)

    assert plan.schedulable

    (g,) = plan.allocated

    assert g.size == 100

    # ceil(200 * 16 ms) = 4 requests per 16 ms window
    assert g.lanes[0].batch == 4

    assert g.lanes[0].duty_cycle_ms == pytest.approx(16.0)


def test_squishy_bin_packing_saturates_gpus(lin):

    plan = squishy_bin_packing(_spec({"lin": 1200.0}, lin, mode=Mode.SBP, num_gpus=3), lin)

    assert plan.schedulable

    assert sorted(round(g.lanes[0].rate) for g in plan.allocated) == [200, 500, 500]

    assert not squishy_bin_packing(_spec({"lin": 1200.0}, lin, mode=Mode.SBP, num_gpus=2), lin).schedulable


def test_interference_filters_a_pair(pair):

    plan = schedule(_spec({"A": 200.0, "B": 200.0}, pair, mode=Mode.GPULET), pair)

    assert plan.schedulable

    assert sorted((g.size, g.lanes[0].model) for g in plan.allocated) == [(40, "A"), (60, "B")]

    slow = InterferenceModel.from_coefficients((0.0, 0.0, 0.0, 0.0, 1.6))

    # plain gpulet mode does not look at interference
    assert schedule(_spec({"A": 200.0, "B": 200.0}, pair, mode=Mode.GPULET), pair, slow).schedulable

    assert not schedule(_spec({"A": 200.0, "B": 200.0}, pair, mode=Mode.GPULET_INT), pair, slow).schedulable


def test_harmless_interference_changes_nothing(pair):

    table = FactorTable({("A", "B"): 1.0, ("B", "A"): 1.0})

    plan = schedule(_spec({"A": 200.0, "B": 200.0}, pair, mode=Mode.GPULET_INT), pair, table)

    assert plan.schedulable


def test_flags_mark_gpulets_with_idle_siblings(lin):

    plan = schedule(_spec({"lin": 150.0}, lin), lin)

    (g,) = plan.allocated

    assert g.size == 40

    assert plan.flags == (g.id,)

    assert plan.utilized_partition_sum() == 40


def test_grid_outside_profile(lin):

    with pytest.raises(GridError):

        schedule(_spec({"lin": 10.0}, lin, grid=(30, 70, 100)), lin)


def test_plan_dump(lin):

    text = schedule(_spec({"lin": 500.0}, lin), lin).dump()

    assert text.startswith("# verdict: Schedulable\n")

    assert "duty_cycle_ms" in text


def test_gpu_layouts():

    assert gpu_layouts((20, 40, 50, 60, 80, 100)) == [(100,), (20, 80), (40, 60), (50, 50)]

    assert gpu_layouts((20, 40, 50, 60, 80, 100), max_gpulets_per_gpu=1) == [(100,)]


def _single_model_brute_force(profile, rate, grid):
    """
    a single model on one GPU fits iff some cut of the GPU has enough
    summed capacity
    """

    curve = capacity_curve(profile, profile.model.slo_ms)

    best = max(sum(curve.max_rate(p) for p in layout) for layout in gpu_layouts(grid))

    return rate <= best


@pytest.mark.parametrize("grid", [(20, 80, 100), (40, 60, 100), (20, 40, 50, 60, 80, 100)])
def test_ideal_matches_brute_force_for_one_model(synthetic, grid):

    for name, profile in sorted(synthetic.items()):

        curve = capacity_curve(profile, profile.model.slo_ms)

        best = max(sum(curve.max_rate(p) for p in layout) for layout in gpu_layouts(grid))

        for rate in (0.5 * best, 0.97 * best, 1.03 * best):

            spec = _spec({name: rate}, synthetic, mode=Mode.IDEAL, grid=grid)

            plan = ideal_exhaustive(spec, synthetic)

            assert plan.schedulable == _single_model_brute_force(profile, rate, grid)


def test_ideal_dominates_elastic_on_small_instances(synthetic):

    models = ("goo", "res", "vgg")

    for levels in product((0.0, 150.0, 300.0), repeat=len(models)):

        if not any(levels):

            continue

        rates = dict(zip(models, levels))

        elastic = schedule(_spec(rates, synthetic, mode=Mode.GPULET_INT), synthetic)

        ideal = schedule(_spec(rates, synthetic, mode=Mode.IDEAL), synthetic)

        if elastic.schedulable:

            assert ideal.schedulable

        if ideal.schedulable:

            ideal.validate(synthetic)


def test_ideal_finds_what_elastic_misses(short_and_long):

    # cutting at the knee of S spreads it over 40% and 60% and leaves V
    # nothing; S on 80% with V on 20% fits both
    spec = _spec({"S": 1400.0, "V": 80.0}, short_and_long, mode=Mode.IDEAL)

    elastic = elastic_partitioning(spec, short_and_long)

    assert not elastic.schedulable

    ideal = ideal_exhaustive(spec, short_and_long)

    assert ideal.schedulable

    assert sorted((g.size, g.lanes[0].model) for g in ideal.allocated) == [(20, "V"), (80, "S")]

    ideal.validate(short_and_long)


def test_ideal_budget(synthetic):

    rates = {"goo": 600.0, "res": 600.0, "vgg": 600.0, "ssd": 600.0, "le": 600.0}

    with pytest.raises(ResourceBudgetError):

        ideal_exhaustive(_spec(rates, synthetic, mode=Mode.IDEAL, num_gpus=2), synthetic, state_budget=5)


def _one_gpu_brute_force(rates, profiles, grid):
    """
    every cut of one GPU, every choice of gpulets per model and every whole
    number of batches per duty window a split model leaves on its first gpulet
    """

    configurator = LaneConfigurator(profiles)

    models = [m for m, r in rates.items() if r > 0]

    for layout in gpu_layouts(grid):

        slots = range(len(layout))

        choices = [c for k in range(1, len(layout) + 1) for c in combinations(slots, k)]

        for placement in product(choices, repeat=len(models)):

            members = [[m for m, c in zip(models, placement) if s in c] for s in slots]

            options = []

            for m, c in zip(models, placement):

                if len(c) == 1:

                    options.append([{(c[0], m): rates[m]}])

                    continue

                lanes = configurator.configure(layout[c[0]], [(x, 0.0) for x in members[c[0]]])

                if lanes is None:

                    options.append([])

                    continue

                step = 1000.0 / lanes[0].duty_cycle_ms

                options.append(
                    [
                        {(c[0], m): k * step, (c[1], m): rates[m] - k * step}
                        for k in range(1, math.ceil(rates[m] / step - 1e-9))
                    ]
                )

            for pick in product(*options):

                shares = {key: r for option in pick for key, r in option.items()}

                if all(
                    configurator.configure(layout[s], [(m, shares[(s, m)]) for m in members[s]])
                    is not None
                    for s in slots
                ):

                    return True

    return False


def test_ideal_matches_brute_force_on_one_gpu(synthetic):

    grid = (20, 50, 80, 100)

    models = ("goo", "res", "ssd")

    for levels in product((0.0, 50.0, 150.0, 300.0), repeat=len(models)):

        if not any(levels):

            continue

        rates = dict(zip(models, levels))

        spec = _spec(rates, synthetic, mode=Mode.IDEAL, grid=grid)

        plan = ideal_exhaustive(spec, synthetic, state_budget=10 ** 7)

        assert plan.schedulable == _one_gpu_brute_force(rates, synthetic, grid), rates

        if plan.schedulable:

            plan.validate(synthetic)


def test_ideal_splits_a_model_over_both_halves(synthetic):

    rates = {"res": 150.0, "goo": 50.0, "ssd": 100.0}

    spec = _spec(rates, synthetic, mode=Mode.IDEAL, grid=(20, 50, 80, 100))

    plan = ideal_exhaustive(spec, synthetic, state_budget=10 ** 7)

    assert plan.schedulable

    assert _one_gpu_brute_force(rates, synthetic, (20, 50, 80, 100))

    assert plan.assigned["res"] == pytest.approx(150.0)

    plan.validate(synthetic)


@pytest.mark.parametrize("p_ideal,expected", [(20, 20), (40, 50), (50, 50), (60, 80), (100, 100)])
def test_best_fit_takes_the_smallest_fitting_gpulet(lin, p_ideal, expected):

    configurator = LaneConfigurator(lin)

    inventory = GpuletInventory(3)

    inventory.split(inventory.get(0), 20)

    inventory.split(inventory.get(1), 50)

    free = sorted(g.size for g in inventory.remain_gpulets)

    assert free == [20, 50, 50, 80, 100]

    assert min(s for s in free if s >= p_ideal) == expected

    g = find_best_fit(inventory, configurator, "lin", p_ideal, 80.0)

    assert g.size == expected

    assert g.assigned_rate["lin"] == pytest.approx(80.0)

    inventory.check_invariants()


def test_best_fit_keeps_whole_gpus_when_a_half_fits(short_and_long):

    configurator = LaneConfigurator(short_and_long)

    inventory = GpuletInventory(2)

    a, _ = inventory.split(inventory.get(0), 40)

    assert inventory.allocate(a, [("V", 100.0)], configurator)

    # remain {60, 100}, p_ideal 50 takes the 60 without splitting
    g = find_best_fit(inventory, configurator, "S", 50, 100.0)

    assert g.size == 60

    assert [h.size for h in inventory.on_gpu(1)] == [100]


def test_lowering_a_rate_keeps_a_plan(synthetic):

    cases = [({"goo": 200.0, "le": 200.0, "res": 600.0, "ssd": 400.0, "vgg": 200.0}, "goo", 118.0)]

    rng = np.random.default_rng(23)

    names = sorted(synthetic)

    for _ in range(80):

        rates = {m: float(rng.choice((0.0, 200.0, 400.0, 600.0))) for m in names}

        rates = {m: r for m, r in rates.items() if r > 0}

        if not rates:

            continue

        model = str(rng.choice(sorted(rates)))

        cases.append((rates, model, float(rates[model] * rng.uniform(0.2, 0.95))))

    checked = 0

    for rates, model, lower in cases:

        if not schedule(_spec(rates, synthetic, mode=Mode.GPULET, num_gpus=4), synthetic).schedulable:

            continue

        checked += 1

        reduced = dict(rates, **{model: lower})

        plan = schedule(_spec(reduced, synthetic, mode=Mode.GPULET, num_gpus=4), synthetic)

        assert plan.schedulable, (rates, model, lower)

    assert checked > 0


def test_elastic_falls_back_to_leftover_room(pair):

    # A takes 200 on 40% and 100 on 60%; no free gpulet is left for B, whose
    # two-request batches still fit in the duty window of A on the 60%
    plan = schedule(_spec({"A": 300.0, "B": 150.0}, pair, num_gpus=1), pair)

    assert plan.schedulable

    layout = sorted((g.size, tuple(sorted(g.models))) for g in plan.allocated)

    assert layout == [(40, ("A",)), (60, ("A", "B"))]

    plan.validate(pair)


def test_schedulable_plans_replay_without_violations(synthetic):

    rng = np.random.default_rng(7)

    names = sorted(synthetic)

    intf = InterferenceModel.from_coefficients((0.1, 0.2, 0.1, 0.2, 1.0))

    checked = {Mode.GPULET: 0, Mode.GPULET_INT: 0}

    for i in range(500):

        mode = Mode.GPULET if i % 2 == 0 else Mode.GPULET_INT

        chosen = rng.choice(names, size=int(rng.integers(1, 4)), replace=False)

        rates = {str(m): float(rng.uniform(20.0, 400.0)) for m in chosen}

        if mode == Mode.GPULET:

            plan = schedule(_spec(rates, synthetic, mode=mode, num_gpus=2), synthetic)

            factor = None

        else:

            plan = schedule(_spec(rates, synthetic, mode=mode, num_gpus=2), synthetic, intf)

            factor = resolve_factor(intf, synthetic)

        if not plan.schedulable:

            continue

        checked[mode] += 1

        plan.validate(synthetic)

        simulator = Simulator(synthetic, config=sim_config(duration_s=1.0, drop_late=True), factor=factor)

        report = simulator.replay(plan)

        assert report.violations() == 0, plan.dump()

    assert all(n > 0 for n in checked.values())
