from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Union

from omegaconf import OmegaConf
from omegaconf.errors import OmegaConfBaseException

from ..errors import ConfigurationError


@dataclass
class ModelEntry:

    name: str = ""
    slo_ms: float = 0.0
    rate: float = 0.0


@dataclass
class WorkloadFile:

    models: List[ModelEntry] = field(default_factory=list)
    num_gpus: int = 4
    mode: str = "gpulet+int"
    grid: List[int] = field(default_factory=lambda: [20, 40, 50, 60, 80, 100])


@dataclass
class ArchetypeEntry:

    name: str = ""
    slo_ms: float = 0.0
    alpha: float = 1.0
    beta: float = 1.0
    saturation: float = 1.0
    l2_util: float = 0.3
    mem_bw_util: float = 0.3


@dataclass
class ArchetypeFile:

    batches: List[int] = field(default_factory=lambda: [1, 2, 4, 8, 16, 32])
    models: List[ArchetypeEntry] = field(default_factory=list)


def _read(file_name: Union[str, Path], base):

    try:

        user_input = OmegaConf.load(file_name)

        final_input = OmegaConf.merge(OmegaConf.structured(base), user_input)

    except (OmegaConfBaseException, OSError) as e:

        raise ConfigurationError(f"could not read {file_name}: {e}")

    return OmegaConf.to_object(final_input)


def read_workload_file(file_name: Union[str, Path]) -> WorkloadFile:

    return _read(file_name, WorkloadFile)


def read_archetype_file(file_name: Union[str, Path]) -> ArchetypeFile:

    return _read(file_name, ArchetypeFile)
