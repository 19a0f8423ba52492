from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Tuple, Union

import numpy as np
import pandas as pd

from ..errors import ConfigurationError
from ..io.csv_files import TRACE_COLUMNS, ordered, read_trace_table, write_table

ARRIVAL_KINDS = ("poisson", "deterministic")


@dataclass(frozen=True)
class RateTrace:
    """
    piecewise-constant request rate: segments of (start_s, rate) where each
    rate holds until the next start
    """

    segments: Tuple[Tuple[float, float], ...]

    def __post_init__(self):

        segments = tuple((float(s), float(r)) for s, r in self.segments)

        if not segments:

            raise ConfigurationError("a rate trace needs at least one segment")

        starts = [s for s, _ in segments]

        if starts != sorted(set(starts)) or starts[0] < 0:

            raise ConfigurationError(f"segment starts must increase from >= 0, got {starts}")

        if any(r < 0 for _, r in segments):

            raise ConfigurationError("rates must be >= 0")

        if starts[0] > 0:

            segments = ((0.0, 0.0),) + segments

        object.__setattr__(self, "segments", segments)

    @classmethod
    def constant(cls, rate: float) -> "RateTrace":

        return cls(((0.0, rate),))

    def rate_at(self, t: float) -> float:

        rate = 0.0

        for start, r in self.segments:

            if start > t:

                break

            rate = r

        return rate

    def pieces(self, duration_s: float) -> List[Tuple[float, float, float]]:
        """
        (start, end, rate) of every segment inside [0, duration_s)
        """

        out = []

        for i, (start, rate) in enumerate(self.segments):

            if start >= duration_s:

                break

            end = self.segments[i + 1][0] if i + 1 < len(self.segments) else duration_s

            out.append((start, min(end, duration_s), rate))

        return out

    def mean_rate(self, start_s: float, end_s: float) -> float:

        if end_s <= start_s:

            return 0.0

        total = 0.0

        for a, b, rate in self.pieces(end_s):

            lo, hi = max(a, start_s), min(b, end_s)

            if hi > lo:

                total += rate * (hi - lo)

        return total / (end_s - start_s)

    def scaled(self, multiplier: float) -> "RateTrace":

        return RateTrace(tuple((s, r * multiplier) for s, r in self.segments))


@dataclass(frozen=True)
class RequestStream:

    model: str
    trace: RateTrace
    seed: int = 0


def generate_arrivals(stream: RequestStream, duration_s: float) -> np.ndarray:
    """
    Poisson arrival times in seconds: exponential gaps drawn by inversion
    from the stream's own generator, restarted in every segment

    """
    rng = np.random.default_rng(stream.seed)

    chunks: List[np.ndarray] = []

    for start, end, rate in stream.trace.pieces(duration_s):

        if rate <= 0:

            continue

        t = start

        while True:

            n = max(16, int(rate * (end - t) * 1.2) + 16)

            gaps = -np.log1p(-rng.random(n)) / rate

            times = t + np.cumsum(gaps)

            inside = times[times < end]

            chunks.append(inside)

            if len(inside) < n:

                break

            t = float(times[-1])

    if not chunks:

        return np.empty(0)

    return np.concatenate(chunks)


def deterministic_arrivals(rate: float, duration_s: float, start_s: float = 0.0) -> np.ndarray:
    """
    one request every 1 / rate seconds from start_s on
    """

    if rate <= 0 or duration_s <= start_s:

        return np.empty(0)

    n = int(np.ceil((duration_s - start_s) * rate - 1e-9))

    times = start_s + np.arange(n) / rate

    return times[times < duration_s]


def arrivals_for(stream: RequestStream, duration_s: float, kind: str = "poisson") -> np.ndarray:

    if kind == "poisson":

        return generate_arrivals(stream, duration_s)

    if kind == "deterministic":

        parts = [
            deterministic_arrivals(rate, end, start)
            for start, end, rate in stream.trace.pieces(duration_s)
        ]

        return np.concatenate(parts) if parts else np.empty(0)

    raise ConfigurationError(f"unknown arrival process {kind}; pick one of {ARRIVAL_KINDS}")


def ewma_rate(previous: float, observed: float, alpha: float) -> float:

    if not 0.0 < alpha <= 1.0:

        raise ConfigurationError(f"ewma alpha {alpha} must be in (0, 1]")

    return alpha * observed + (1.0 - alpha) * previous


def streams_for(
    rates: Mapping[str, Union[float, RateTrace]], seed: int = 0
) -> List[RequestStream]:
    """
    one stream per model, seeds derived from seed and the model's position
    """

    out = []

    for i, (model, rate) in enumerate(sorted(rates.items())):

        trace = rate if isinstance(rate, RateTrace) else RateTrace.constant(float(rate))

        out.append(RequestStream(model=model, trace=trace, seed=seed * 1000 + i))

    return out


def traces_from_frame(frame: pd.DataFrame) -> Dict[str, RateTrace]:

    traces: Dict[str, RateTrace] = {}

    for model, rows in frame.groupby("model", sort=True):

        rows = rows.sort_values("time_s")

        traces[model] = RateTrace(
            tuple(zip(rows["time_s"].astype(float), rows["rate"].astype(float)))
        )

    return traces


def load_traces(source: Union[str, Path]) -> Dict[str, RateTrace]:

    return traces_from_frame(read_trace_table(source))


def traces_frame(traces: Mapping[str, RateTrace]) -> pd.DataFrame:

    rows = [
        dict(time_s=start, model=model, rate=rate)
        for model, trace in sorted(traces.items())
        for start, rate in trace.segments
    ]

    return ordered(pd.DataFrame(rows, columns=list(TRACE_COLUMNS)), TRACE_COLUMNS)


def write_traces(
    traces: Mapping[str, RateTrace], destination: Union[str, Path], header: Optional[str] = None
) -> Path:

    return write_table(traces_frame(traces), destination, header=header)
