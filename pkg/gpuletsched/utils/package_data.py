from importlib import resources
from pathlib import Path


def get_path_of_data_dir() -> Path:
    """
    get the path of the package data directory

    :returns:

    """
    return Path(str(resources.files("gpuletsched") / "data"))


def get_path_of_data_file(data_file: str) -> Path:
    """
    get the path of a data file

    :param data_file: name of the data file
    :type data_file: str
    :returns:

    """
    file_path: Path = get_path_of_data_dir() / data_file

    return file_path


__all__ = [
    "get_path_of_data_file",
    "get_path_of_data_dir",
]
