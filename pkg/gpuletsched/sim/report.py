import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from ..io.csv_files import REPORT_COLUMNS, write_table


@dataclass
class PeriodCounts:

    arrived: int = 0
    completed: int = 0
    # completed after the SLO
    late: int = 0
    dropped: int = 0

    @property
    def violations(self) -> int:

        return self.late + self.dropped


@dataclass(frozen=True)
class ReorgEvent:
    """
    a new plan decided at decided_s that starts serving at activated_s
    """

    decided_s: float
    activated_s: float
    rates: Dict[str, float]
    utilized_before: int
    utilized_after: int


@dataclass
class SimulationReport:
    """
    per model and scheduling period counters of one simulation; a request
    is booked in the period it arrived in
    """

    models: Tuple[str, ...]
    period_s: float
    duration_s: float
    counts: Dict[Tuple[int, str], PeriodCounts] = field(default_factory=dict)
    latencies: Dict[str, List[float]] = field(default_factory=dict)
    reorganizations: List[ReorgEvent] = field(default_factory=list)
    # (time, utilized partition sum) whenever the serving plan changes
    utilization: List[Tuple[float, int]] = field(default_factory=list)

    @property
    def num_periods(self) -> int:

        return max(1, int(math.ceil(self.duration_s / self.period_s - 1e-9)))

    def period_of(self, t: float) -> int:

        return min(int(t // self.period_s), self.num_periods - 1)

    def period_length(self, period: int) -> float:

        return min(self.period_s, self.duration_s - period * self.period_s)

    def _counts(self, period: int, model: str) -> PeriodCounts:

        key = (period, model)

        if key not in self.counts:

            self.counts[key] = PeriodCounts()

        return self.counts[key]

    def record_arrival(self, model: str, arrival_s: float) -> None:

        self._counts(self.period_of(arrival_s), model).arrived += 1

    def record_completion(self, model: str, arrival_s: float, latency_ms: float, slo_ms: float) -> None:

        counts = self._counts(self.period_of(arrival_s), model)

        counts.completed += 1

        if latency_ms > slo_ms + 1e-6:

            counts.late += 1

        self.latencies.setdefault(model, []).append(latency_ms)

    def record_drop(self, model: str, arrival_s: float) -> None:

        self._counts(self.period_of(arrival_s), model).dropped += 1

    def record_plan(self, t: float, utilized: int) -> None:

        self.utilization.append((t, utilized))

    def _total(self, what: str, model: Optional[str] = None, period: Optional[int] = None) -> int:

        return sum(
            getattr(c, what)
            for (p, m), c in self.counts.items()
            if (model is None or m == model) and (period is None or p == period)
        )

    def arrivals(self, model: Optional[str] = None, period: Optional[int] = None) -> int:

        return self._total("arrived", model, period)

    def completed(self, model: Optional[str] = None, period: Optional[int] = None) -> int:

        return self._total("completed", model, period)

    def violations(self, model: Optional[str] = None, period: Optional[int] = None) -> int:

        return self._total("violations", model, period)

    def dropped(self, model: Optional[str] = None, period: Optional[int] = None) -> int:

        return self._total("dropped", model, period)

    def violation_rate(self, model: Optional[str] = None, period: Optional[int] = None) -> float:
        """
        late plus dropped requests over arrivals, 0 without arrivals
        """

        arrived = self.arrivals(model, period)

        if arrived == 0:

            return 0.0

        return self.violations(model, period) / arrived

    def throughput(self, model: Optional[str] = None, period: Optional[int] = None) -> float:
        """
        completed requests per second, over one period or the whole run
        """

        length = self.duration_s if period is None else self.period_length(period)

        if length <= 0:

            return 0.0

        return self.completed(model, period) / length

    def utilized_partition_sum(self, period: int) -> float:
        """
        time-weighted sum of the sizes of the gpulets with lanes
        """

        start = period * self.period_s
        end = start + self.period_length(period)

        if not self.utilization or end <= start:

            return 0.0

        total = 0.0

        changes = sorted(self.utilization) + [(math.inf, 0)]

        for (t, value), (t_next, _) in zip(changes[:-1], changes[1:]):

            lo, hi = max(t, start), min(t_next, end)

            if hi > lo:

                total += value * (hi - lo)

        return total / (end - start)

    def latency_percentile(self, model: str, q: float) -> float:

        values = self.latencies.get(model, [])

        if not values:

            return 0.0

        return float(np.percentile(values, q))

    def frame(self) -> pd.DataFrame:

        rows = []

        for period in range(self.num_periods):

            utilized = self.utilized_partition_sum(period)

            for model in self.models:

                rows.append(
                    dict(
                        period=period,
                        model=model,
                        throughput=self.throughput(model, period),
                        violation_rate=self.violation_rate(model, period),
                        utilized_partition_sum=utilized,
                    )
                )

        return pd.DataFrame(rows, columns=REPORT_COLUMNS)

    def system_frame(self) -> pd.DataFrame:
        """
        one row per period: offered and served load, violations, utilization
        """

        rows = []

        for period in range(self.num_periods):

            length = self.period_length(period)

            rows.append(
                dict(
                    period=period,
                    start_s=period * self.period_s,
                    offered=self.arrivals(period=period) / length if length > 0 else 0.0,
                    throughput=self.throughput(period=period),
                    violation_rate=self.violation_rate(period=period),
                    utilized_partition_sum=self.utilized_partition_sum(period),
                )
            )

        return pd.DataFrame(rows)

    def reorganization_frame(self) -> pd.DataFrame:

        return pd.DataFrame(
            [
                dict(
                    decided_s=e.decided_s,
                    activated_s=e.activated_s,
                    utilized_before=e.utilized_before,
                    utilized_after=e.utilized_after,
                )
                for e in self.reorganizations
            ],
            columns=["decided_s", "activated_s", "utilized_before", "utilized_after"],
        )

    def write(self, destination: Union[str, Path], header: Optional[str] = None) -> Path:

        return write_table(self.frame(), destination, header=header)


def empty_report(models: Sequence[str], period_s: float, duration_s: float) -> SimulationReport:

    return SimulationReport(models=tuple(models), period_s=period_s, duration_s=duration_s)
