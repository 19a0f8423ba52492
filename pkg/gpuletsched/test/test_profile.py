import numpy as np
import pandas as pd
import pytest

from gpuletsched.errors import CapacityError, GridError, ProfileDataError, ProfileParseError
from gpuletsched.profile import (
    CapacityCurve,
    build_profile,
    capacity_curve,
    load_profiles,
    lookup_latency,
    max_efficient_partition,
    max_feasible_batch,
    min_required_partition,
    operating_point,
    write_profiles,
)


def test_capacity_curve_of_linear_profile(lin):

    curve = capacity_curve(lin["lin"], 40.0)

    assert curve.partitions == (20, 40, 50, 60, 80, 100)

    assert np.allclose(curve.rates, [100, 200, 250, 300, 400, 500])


def test_max_feasible_batch(lin):

    profile = lin["lin"]

    # L(b, 40) = 5 b, 2 L <= 40
    assert max_feasible_batch(profile, 40, 40.0) == 4

    assert max_feasible_batch(profile, 20, 40.0) == 2

    assert max_feasible_batch(profile, 20, 19.0) is None

    # slowed down by half: 7.5 b <= 20
    assert max_feasible_batch(profile, 40, 40.0, slowdown=1.5) == 2


def test_operating_point(lin):

    point = operating_point(lin["lin"], 100, 40.0)

    assert point.batch == 8

    assert point.duty_ms == pytest.approx(16.0)

    assert point.rate == pytest.approx(500.0)


def test_lookup_latency_rounds_batch_up(lin):

    profile = lin["lin"]

    assert lookup_latency(profile, 3, 40) == pytest.approx(lookup_latency(profile, 4, 40))

    with pytest.raises(CapacityError):

        lookup_latency(profile, 9, 40)

    with pytest.raises(GridError):

        lookup_latency(profile, 1, 30)


def test_knee():

    curve = CapacityCurve(
        model="x", partitions=(20, 40, 60, 80, 100), rates=(100, 200, 240, 260, 270)
    )

    assert max_efficient_partition(curve) == 40

    flat = CapacityCurve(model="x", partitions=(20, 40, 60), rates=(0, 0, 300))

    assert max_efficient_partition(flat) == 60


def test_knee_of_linear_curve_is_first_interior_point(lin):

    assert max_efficient_partition(capacity_curve(lin["lin"], 40.0)) == 40


def test_knee_is_not_moved_by_steep_slopes():

    curve = CapacityCurve(
        model="x", partitions=(20, 40, 60, 80, 100), rates=(100, 300, 400, 420, 430)
    )

    assert max_efficient_partition(curve) == 40


def test_knee_on_uneven_grid():

    # |second differences| 0, 5, 1.67 and 0.25 at 40, 50, 60 and 80
    curve = CapacityCurve(
        model="x", partitions=(20, 40, 50, 60, 80, 100), rates=(20, 40, 50, 55, 60, 64)
    )

    assert max_efficient_partition(curve) == 50


@pytest.mark.parametrize("factor", [1e-3, 0.5, 7.0, 1e4])
def test_knee_is_scale_invariant(synthetic, factor):

    for name, profile in synthetic.items():

        curve = capacity_curve(profile, profile.model.slo_ms)

        scaled = CapacityCurve(
            model=name,
            partitions=curve.partitions,
            rates=tuple(factor * r for r in curve.rates),
        )

        assert max_efficient_partition(scaled) == max_efficient_partition(curve)


def test_batch_and_capacity_against_enumeration(synthetic):

    for profile in synthetic.values():

        slo = profile.model.slo_ms

        for j, p in enumerate(profile.partitions):

            feasible = [
                (b, profile.latency[i, j])
                for i, b in enumerate(profile.batches)
                if 2.0 * profile.latency[i, j] <= slo
            ]

            b = max_feasible_batch(profile, p, slo)

            if not feasible:

                assert b is None

                assert capacity_curve(profile, slo).max_rate(p) == 0.0

                continue

            assert b == max(x for x, _ in feasible)

            assert 2.0 * lookup_latency(profile, b, p) <= slo

            if b < profile.max_batch:

                assert 2.0 * lookup_latency(profile, b + 1, p) > slo

            best = max(1000.0 * x / l for x, l in feasible)

            assert capacity_curve(profile, slo).max_rate(p) == pytest.approx(best)


def test_min_required_partition_against_enumeration(synthetic):

    for profile in synthetic.values():

        curve = capacity_curve(profile, profile.model.slo_ms)

        for rate in np.linspace(0.0, 1.2 * max(curve.rates), 25):

            fits = [p for p, r in zip(curve.partitions, curve.rates) if r >= rate]

            required = min_required_partition(curve, rate)

            if fits:

                assert required == (min(fits), False)

            else:

                assert required == (curve.partitions[-1], True)


def test_min_required_partition(lin):

    curve = capacity_curve(lin["lin"], 40.0)

    assert min_required_partition(curve, 150) == (40, False)

    assert min_required_partition(curve, 300) == (60, False)

    assert min_required_partition(curve, 900) == (100, True)


def _rows(latencies):

    return pd.DataFrame(
        [
            dict(model="m", batch=b, partition_pct=p, latency_ms=l, l2_util=0.2, mem_bw_util=0.1)
            for (b, p), l in latencies.items()
        ]
    )


def test_profile_validation():

    good = {(1, 50): 4.0, (1, 100): 2.0, (2, 50): 6.0, (2, 100): 3.0}

    profile = build_profile(_rows(good), slo_ms=20.0)

    assert profile.max_batch == 2

    assert profile.partitions == (50, 100)

    bad_batch = dict(good)
    bad_batch[(2, 50)] = 3.0

    with pytest.raises(ProfileDataError) as e:

        build_profile(_rows(bad_batch), slo_ms=20.0)

    assert e.value.batch == 2 and e.value.partition == 50

    bad_partition = dict(good)
    bad_partition[(1, 100)] = 5.0

    with pytest.raises(ProfileDataError):

        build_profile(_rows(bad_partition), slo_ms=20.0)

    hole = dict(good)
    del hole[(2, 100)]

    with pytest.raises(ProfileDataError):

        build_profile(_rows(hole), slo_ms=20.0)


def test_profile_file(tmp_path, synthetic):

    path = write_profiles(synthetic.values(), tmp_path / "profiles.csv", header="seed: 0")

    assert path.read_text().startswith("# seed: 0\n")

    loaded = load_profiles(path)

    assert sorted(loaded) == sorted(synthetic)

    for name, profile in loaded.items():

        assert profile.batches == synthetic[name].batches

        assert np.allclose(profile.latency, synthetic[name].latency)

        assert profile.model.slo_ms == synthetic[name].model.slo_ms


def test_unparsable_profile_row(tmp_path):

    path = tmp_path / "bad.csv"

    path.write_text(
        "model,batch,partition_pct,latency_ms,l2_util,mem_bw_util\n"
        "goo,1,100,2.0,0.1,0.1\n"
        "goo,two,100,3.0,0.1,0.1\n"
    )

    with pytest.raises(ProfileParseError) as e:

        load_profiles(path)

    assert e.value.line == 3


def test_bad_row_after_comments_and_blank_lines(tmp_path):

    path = tmp_path / "bad.csv"

    path.write_text(
        "# seed: 3\n"
        "# grid: [20, 40, 50, 60, 80, 100]\n"
        "model,batch,partition_pct,latency_ms,l2_util,mem_bw_util\n"
        "goo,1,100,2.0,0.1,0.1\n"
        "\n"
        "goo,2,100,fast,0.1,0.1\n"
    )

    with pytest.raises(ProfileParseError) as e:

        load_profiles(path)

    assert e.value.line == 6


def test_missing_column(tmp_path):

    path = tmp_path / "bad.csv"

    path.write_text("model,batch,partition_pct\ngoo,1,100\n")

    with pytest.raises(ProfileParseError):

        load_profiles(path)
