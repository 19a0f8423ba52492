import numpy as np
import pytest

from gpuletsched.errors import ConfigurationError, FitError
from gpuletsched.interference import (
    CoRunSample,
    FactorTable,
    FittedFactor,
    InterferenceModel,
    SoloStats,
    fit,
    load_samples,
    write_samples,
)
from gpuletsched.synthetic import generate_corun_samples

PLANTED = (0.04, 0.10, 0.06, 0.22, 0.95)


def test_noise_free_recovery():

    samples = generate_corun_samples(300, coefficients=PLANTED, noise=0.0, seed=3)

    result = fit(samples, split=0.7, seed=3)

    assert np.allclose(result.model.coefficients, PLANTED, atol=1e-6)

    assert result.n_train == 210

    assert result.n_validation == 90


def test_noisy_fit_error_cdf():

    samples = generate_corun_samples(2500, coefficients=PLANTED, noise=0.05, seed=0)

    result = fit(samples, split=0.7, seed=0)

    assert result.n_train == 1750

    assert result.error_at(95.0) <= 0.2

    # a CDF is monotone
    assert np.all(np.diff(result.cdf["relative_error"].to_numpy()) >= 0)


def test_too_few_samples():

    samples = generate_corun_samples(5, seed=1)

    with pytest.raises(FitError):

        fit(samples, split=0.5)


def test_degenerate_samples():

    same = CoRunSample(l2_a=0.2, l2_b=0.3, mem_a=0.4, mem_b=0.5, observed_factor=1.2)

    with pytest.raises(FitError):

        fit([same] * 20, split=1.0)


def test_sample_validation():

    with pytest.raises(ConfigurationError):

        CoRunSample(l2_a=1.2, l2_b=0.3, mem_a=0.4, mem_b=0.5, observed_factor=1.2)


def test_prediction_never_speeds_up():

    model = InterferenceModel.from_coefficients((0.0, 0.0, 0.0, 0.0, 0.5))

    assert model.predict(SoloStats(0.5, 0.5), SoloStats(0.5, 0.5)) == 1.0

    model = InterferenceModel.from_coefficients((1.0, 0.0, 0.0, 0.0, 1.0))

    assert model.predict(SoloStats(0.5, 0.1), SoloStats(0.9, 0.9)) == pytest.approx(1.5)


def test_model_file(tmp_path):

    model = InterferenceModel.from_coefficients(PLANTED)

    model.save(tmp_path / "model.yml")

    assert InterferenceModel.from_file(tmp_path / "model.yml") == model


def test_sample_file(tmp_path):

    samples = generate_corun_samples(10, seed=2)

    loaded = load_samples(write_samples(samples, tmp_path / "corun.csv"))

    assert len(loaded) == 10

    assert loaded[0].observed_factor == pytest.approx(samples[0].observed_factor)


def test_fitted_factor_uses_partner_utilization(pair):

    model = InterferenceModel.from_coefficients((0.0, 1.0, 0.0, 0.0, 1.0))

    factor = FittedFactor(model, pair)

    assert factor("A", 40, []) == 1.0

    # partner l2 at 60% is 0.3
    assert factor("A", 40, [("B", 60)]) == pytest.approx(1.3)


def test_factor_table(tmp_path):

    path = tmp_path / "factors.csv"

    path.write_text("model_a,model_b,factor\nA,B,1.6\nB,A,0.9\n")

    table = FactorTable.from_file(path)

    assert table("A", 40, [("B", 60)]) == pytest.approx(1.6)

    # a factor below one is read as no slowdown
    assert table("B", 60, [("A", 40)]) == 1.0

    assert table("A", 40, []) == 1.0

    assert table("A", 40, [("C", 60)]) == 1.0
