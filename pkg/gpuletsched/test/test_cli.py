import pandas as pd
import pytest
from click.testing import CliRunner

from gpuletsched.cli import cli
from gpuletsched.profile import load_profiles
from gpuletsched.utils.logging import activate_warnings, update_logging_level


@pytest.fixture(scope="function")
def runner():

    return CliRunner()


@pytest.fixture(scope="function")
def workload(tmp_path):

    path = tmp_path / "workload.yml"

    path.write_text(
        "num_gpus: 1\n"
        "mode: gpulet\n"
        "models:\n"
        "  - name: goo\n"
        "    rate: 100\n"
        "  - name: res\n"
        "    rate: 50\n"
    )

    return path


def test_gen_profiles(runner, tmp_path):

    out = tmp_path / "profiles.csv"

    result = runner.invoke(cli, ["gen-profiles", "--seed", "3", "--out", str(out)])

    assert result.exit_code == 0, result.output

    profiles = load_profiles(out)

    assert sorted(profiles) == ["goo", "le", "res", "ssd", "vgg"]


def test_schedule(runner, workload, tmp_path):

    out = tmp_path / "plan.yml"

    result = runner.invoke(cli, ["schedule", "--workload", str(workload), "--out", str(out)])

    assert result.exit_code == 0, result.output

    assert out.read_text().startswith("# verdict: Schedulable")


def test_schedule_to_stdout(runner, workload):

    result = runner.invoke(cli, ["schedule", "--workload", str(workload)])

    assert result.exit_code == 0, result.output

    assert "# verdict:" in result.output


def test_bad_workload_exits_with_2(runner, tmp_path):

    path = tmp_path / "workload.yml"

    path.write_text("mode: fastest\nmodels:\n  - name: goo\n    rate: 10\n")

    result = runner.invoke(cli, ["schedule", "--workload", str(path)])

    assert result.exit_code == 2


def test_named_sweep(runner, tmp_path):

    out = tmp_path / "sweep.csv"

    result = runner.invoke(cli, ["sweep", "--suite", "named", "--gpus", "2", "--out", str(out)])

    assert result.exit_code == 0, result.output

    frame = pd.read_csv(out, comment="#")

    assert list(frame.columns) == ["scenario_id", "mode", "verdict"]

    # three scenarios under three modes
    assert len(frame) == 9

    assert set(frame["mode"]) == {"gpulet+int", "gpulet", "sbp"}


def test_unknown_mode_is_rejected(runner):

    result = runner.invoke(cli, ["sweep", "--suite", "named", "--mode", "fastest"])

    assert result.exit_code != 0


def test_fit_interference(runner, tmp_path):

    model = tmp_path / "model.yml"

    out = tmp_path / "cdf.csv"

    result = runner.invoke(cli, ["fit-interference", "--save-model", str(model), "--out", str(out)])

    assert result.exit_code == 0, result.output

    assert model.exists()

    assert out.read_text().startswith("# ")


def test_show_config(runner):

    result = runner.invoke(cli, ["show-config"])

    assert result.exit_code == 0

    assert "scheduler" in result.output


def test_quiet_flag(runner, workload):

    result = runner.invoke(cli, ["--quiet", "--log-level", "info", "schedule", "--workload", str(workload)])

    activate_warnings()

    update_logging_level("DEBUG")

    assert result.exit_code == 0, result.output
