from dataclasses import dataclass, field
from pathlib import Path
from typing import List

from omegaconf import OmegaConf
from omegaconf.dictconfig import DictConfig
from rich.tree import Tree

# Path to configuration

_config_path = Path("~/.config/gpuletsched/").expanduser()

_config_name = Path("gpuletsched_config.yml")

_config_file = _config_path / _config_name

# Define structure of configuration with dataclasses


@dataclass
class Logging:

    on: bool = True
    level: str = "WARNING"


@dataclass
class SchedulerConfig:

    grid: List[int] = field(default_factory=lambda: [20, 40, 50, 60, 80, 100])
    num_gpus: int = 4
    max_gpulets_per_gpu: int = 2
    # enumerated search states before the ideal oracle gives up
    ideal_state_budget: int = 200000


@dataclass
class SimConfig:

    scheduling_period_s: float = 20.0
    reorg_latency_min_s: float = 10.0
    reorg_latency_max_s: float = 15.0
    ewma_alpha: float = 0.5
    duration_s: float = 120.0
    drop_late: bool = True
    # extra rate provisioned when the live loop reschedules
    rate_headroom: float = 0.3
    # share of the headroom a rising rate may use up before the live loop reschedules
    grow_trigger: float = 0.25
    # share of every SLO the plans of the live loop keep free for queueing
    slo_margin: float = 0.1
    # relative drop of a model's rate that triggers a shrinking reorganization
    shrink_threshold: float = 0.25
    arrival: str = "poisson"
    seed: int = 1234


@dataclass
class ThroughputConfig:

    violation_threshold: float = 0.01
    search_steps: int = 12
    duration_s: float = 60.0
    arrival: str = "poisson"


@dataclass
class InterferenceConfig:

    planted: List[float] = field(
        default_factory=lambda: [0.04, 0.10, 0.06, 0.22, 0.95]
    )
    n_samples: int = 2500
    train_fraction: float = 0.7
    noise: float = 0.05


@dataclass
class SweepConfig:

    levels: List[float] = field(default_factory=lambda: [0.0, 200.0, 400.0, 600.0])
    workers: int = 1


@dataclass
class GpuletschedConfig:

    logging: Logging = field(default_factory=Logging)
    scheduler: SchedulerConfig = field(default_factory=SchedulerConfig)
    sim: SimConfig = field(default_factory=SimConfig)
    throughput: ThroughputConfig = field(default_factory=ThroughputConfig)
    interference: InterferenceConfig = field(default_factory=InterferenceConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)


# Read the default config
gpuletsched_config: GpuletschedConfig = OmegaConf.structured(GpuletschedConfig)

# Merge with local config if it exists
if _config_file.is_file():

    _local_config = OmegaConf.load(_config_file)

    gpuletsched_config: GpuletschedConfig = OmegaConf.merge(
        gpuletsched_config, _local_config
    )

# Write defaults if not
else:

    try:

        # Make directory if needed
        _config_path.mkdir(parents=True, exist_ok=True)

        with _config_file.open("w") as f:

            OmegaConf.save(config=gpuletsched_config, f=f.name)

    except OSError:

        # read-only homes still get the defaults
        pass


def sim_config(**overrides) -> SimConfig:
    """
    build a plain SimConfig from the active configuration

    :param overrides: fields to replace
    :returns: SimConfig

    """
    base: SimConfig = OmegaConf.to_object(gpuletsched_config.sim)

    for k, v in overrides.items():

        setattr(base, k, v)

    return base


def throughput_config(**overrides) -> ThroughputConfig:

    base: ThroughputConfig = OmegaConf.to_object(gpuletsched_config.throughput)

    for k, v in overrides.items():

        setattr(base, k, v)

    return base


def recurse_dict(d, tree) -> None:

    for k, v in d.items():

        if (type(v) == dict) or isinstance(v, DictConfig):

            branch = tree.add(
                k, guide_style="bold medium_orchid", style="bold medium_orchid"
            )

            recurse_dict(v, branch)

        else:

            tree.add(
                f"{k}: [blink cornflower_blue]{v}",
                guide_style="medium_spring_green",
                style="medium_spring_green",
            )

    return


def show_configuration() -> Tree:

    tree = Tree(
        "config", guide_style="bold medium_orchid", style="bold medium_orchid"
    )

    recurse_dict(gpuletsched_config, tree)

    return tree
