"""
CSV codecs for every file the package reads or writes.

Readers return pandas frames with typed columns; a row that cannot be
converted raises ProfileParseError with its 1-based line number in the
file, comment and blank lines included. Writers accept an optional header
that is emitted as ``# `` lines.
"""
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import pandas as pd

from ..errors import ProfileParseError
from ..utils.logging import setup_logger

log = setup_logger(__name__)

PathLike = Union[str, Path]

PROFILE_COLUMNS: Dict[str, str] = {
    "model": "str",
    "batch": "int",
    "partition_pct": "int",
    "latency_ms": "float",
    "l2_util": "float",
    "mem_bw_util": "float",
}

CORUN_COLUMNS: Dict[str, str] = {
    "l2_a": "float",
    "l2_b": "float",
    "mem_a": "float",
    "mem_b": "float",
    "observed_factor": "float",
}

TRACE_COLUMNS: Dict[str, str] = {
    "time_s": "float",
    "model": "str",
    "rate": "float",
}

FACTOR_COLUMNS: Dict[str, str] = {
    "model_a": "str",
    "model_b": "str",
    "factor": "float",
}

REPORT_COLUMNS = [
    "period",
    "model",
    "throughput",
    "violation_rate",
    "utilized_partition_sum",
]


def physical_lines(path: Path) -> List[int]:
    """
    1-based line numbers of the header and the data rows, skipping blank
    lines and lines holding only a comment
    """

    numbers = []

    with path.open() as f:

        for number, text in enumerate(f, start=1):

            if text.split("#", 1)[0].strip():

                numbers.append(number)

    return numbers


def read_table(source: PathLike, columns: Dict[str, str]) -> pd.DataFrame:
    """
    read a headed CSV file and convert its columns

    :param source: path of the file
    :param columns: column name -> "str" | "int" | "float"
    :returns: typed frame

    """
    path = Path(source)

    try:

        raw = pd.read_csv(path, dtype=str, keep_default_na=False, comment="#")

    except pd.errors.ParserError as e:

        log.error(f"could not parse {path}")

        raise ProfileParseError(f"{path}: {e}")

    except pd.errors.EmptyDataError:

        raise ProfileParseError(f"{path} is empty", line=1)

    raw.columns = [c.strip() for c in raw.columns]

    missing = [c for c in columns if c not in raw.columns]

    if missing:

        raise ProfileParseError(
            f"{path} is missing the column(s) {', '.join(missing)}",
            line=physical_lines(path)[0],
        )

    out = pd.DataFrame(index=raw.index)

    for name, kind in columns.items():

        values = raw[name].fillna("").str.strip()

        if kind == "str":

            bad = values == ""

            out[name] = values

        else:

            converted = pd.to_numeric(values, errors="coerce")

            bad = converted.isna()

            if kind == "int":

                bad = bad | (converted.fillna(0) % 1 != 0)

            out[name] = converted

        if bad.any():

            row = int(bad.to_numpy().nonzero()[0][0])

            # the header takes the first counted line
            line = physical_lines(path)[row + 1]

            raise ProfileParseError(
                f"{path}: bad {name} value {raw[name].iloc[row]!r}", line=line
            )

        if kind == "int":

            out[name] = out[name].astype(int)

    log.debug(f"read {len(out)} rows from {path}")

    return out


def write_table(
    frame: pd.DataFrame,
    destination: PathLike,
    header: Optional[str] = None,
) -> Path:
    """
    write a frame as CSV, prefixing every header line with ``# ``

    """
    path = Path(destination)

    path.parent.mkdir(parents=True, exist_ok=True)

    with path.open("w") as f:

        if header:

            for line in header.rstrip("\n").splitlines():

                f.write(f"# {line}\n")

        frame.to_csv(f, index=False)

    log.debug(f"wrote {len(frame)} rows to {path}")

    return path


def read_profile_table(source: PathLike) -> pd.DataFrame:

    return read_table(source, PROFILE_COLUMNS)


def read_corun_table(source: PathLike) -> pd.DataFrame:

    return read_table(source, CORUN_COLUMNS)


def read_trace_table(source: PathLike) -> pd.DataFrame:

    return read_table(source, TRACE_COLUMNS)


def read_factor_table(source: PathLike) -> pd.DataFrame:

    return read_table(source, FACTOR_COLUMNS)


def ordered(frame: pd.DataFrame, columns: Sequence[str]) -> pd.DataFrame:

    return frame.loc[:, list(columns)]
