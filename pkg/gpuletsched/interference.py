from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Dict, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from omegaconf import OmegaConf

from .errors import ConfigurationError, FitError
from .io.csv_files import CORUN_COLUMNS, ordered, read_corun_table, read_factor_table, write_table
from .profile import LatencyProfile, lookup_latency
from .utils.logging import setup_logger

log = setup_logger(__name__)

# (model name, size of the gpulet it runs on)
Partner = Tuple[str, int]

FactorFn = Callable[[str, int, Sequence[Partner]], float]


@dataclass(frozen=True)
class CoRunSample:

    l2_a: float
    l2_b: float
    mem_a: float
    mem_b: float
    observed_factor: float

    def __post_init__(self):

        for name in ("l2_a", "l2_b", "mem_a", "mem_b"):

            value = getattr(self, name)

            if not 0.0 <= value <= 1.0:

                raise ConfigurationError(f"{name}={value} is not a utilization in [0, 1]")

        if not self.observed_factor > 0:

            raise ConfigurationError(
                f"observed_factor={self.observed_factor} must be positive"
            )


@dataclass(frozen=True)
class SoloStats:

    l2: float
    mem: float


@dataclass(frozen=True)
class InterferenceModel:
    """
    interference_factor = c1 l2_a + c2 l2_b + c3 mem_a + c4 mem_b + c5
    """

    c1: float
    c2: float
    c3: float
    c4: float
    c5: float

    @classmethod
    def from_coefficients(cls, coefficients: Sequence[float]) -> "InterferenceModel":

        if len(coefficients) != 5:

            raise ConfigurationError("the interference model has five coefficients")

        return cls(*(float(c) for c in coefficients))

    @classmethod
    def from_file(cls, file_name: Union[str, Path]) -> "InterferenceModel":

        raw = OmegaConf.load(file_name)

        try:

            return cls(**{k: float(raw[k]) for k in ("c1", "c2", "c3", "c4", "c5")})

        except KeyError as e:

            raise ConfigurationError(f"{file_name} lacks coefficient {e}")

    def save(self, file_name: Union[str, Path]) -> None:

        OmegaConf.save(config=OmegaConf.create(asdict(self)), f=str(file_name))

    @property
    def coefficients(self) -> np.ndarray:

        return np.array([self.c1, self.c2, self.c3, self.c4, self.c5])

    def raw(self, a: SoloStats, b: SoloStats) -> float:

        return (
            self.c1 * a.l2 + self.c2 * b.l2 + self.c3 * a.mem + self.c4 * b.mem + self.c5
        )

    def predict(self, a: SoloStats, b: SoloStats) -> float:

        # a co-run never speeds execution up
        return max(1.0, self.raw(a, b))


@dataclass
class FitResult:

    model: InterferenceModel
    cdf: pd.DataFrame
    train_design: np.ndarray
    train_residuals: np.ndarray
    n_train: int
    n_validation: int

    def error_at(self, percentile: float) -> float:

        return float(np.interp(percentile, self.cdf["percentile"], self.cdf["relative_error"]))


def predict(model: InterferenceModel, a: SoloStats, b: SoloStats) -> float:

    return model.predict(a, b)


def solo_stats(profile: LatencyProfile, p: int) -> SoloStats:

    return SoloStats(l2=profile.l2_at(p), mem=profile.mem_at(p))


def overhead_ms(
    model: Optional[InterferenceModel],
    profile_a: LatencyProfile,
    profile_b: Optional[LatencyProfile],
    b: int,
    p: int,
    p_partner: Optional[int] = None,
) -> float:
    """
    extra latency of a batch of profile_a on a p% gpulet while profile_b runs
    on the other gpulet of the same GPU (of size 100 - p unless given)

    """
    if model is None or profile_b is None:

        return 0.0

    partner_size = p_partner if p_partner is not None else 100 - p

    factor = model.predict(solo_stats(profile_a, p), solo_stats(profile_b, partner_size))

    return lookup_latency(profile_a, b, p) * (factor - 1.0)


def samples_frame(samples: Sequence[CoRunSample]) -> pd.DataFrame:

    return pd.DataFrame([asdict(s) for s in samples], columns=list(CORUN_COLUMNS))


def samples_from_frame(frame: pd.DataFrame) -> Tuple[CoRunSample, ...]:

    return tuple(
        CoRunSample(**{k: float(row[k]) for k in CORUN_COLUMNS})
        for _, row in frame.iterrows()
    )


def load_samples(source: Union[str, Path]) -> Tuple[CoRunSample, ...]:

    return samples_from_frame(read_corun_table(source))


def write_samples(samples: Sequence[CoRunSample], destination: Union[str, Path]) -> Path:

    return write_table(ordered(samples_frame(samples), CORUN_COLUMNS), destination)


def _design(frame: pd.DataFrame) -> np.ndarray:

    return np.column_stack(
        [
            frame["l2_a"].to_numpy(float),
            frame["l2_b"].to_numpy(float),
            frame["mem_a"].to_numpy(float),
            frame["mem_b"].to_numpy(float),
            np.ones(len(frame)),
        ]
    )


def fit(
    samples: Sequence[CoRunSample], split: float = 0.7, seed: int = 0
) -> FitResult:
    """
    ordinary least squares fit of the five coefficients on a random training
    split; the rest of the samples give the relative-error CDF

    :param samples: co-run observations
    :param split: fraction of the samples used for training
    :param seed: seed of the train / validation shuffle
    :returns: FitResult

    """
    if not 0.0 < split <= 1.0:

        raise ConfigurationError(f"train fraction {split} must be in (0, 1]")

    frame = samples_frame(samples)

    n = len(frame)

    order = np.random.default_rng(seed).permutation(n)

    n_train = int(round(split * n))

    if n_train < 5:

        log.error(f"only {n_train} training samples for five coefficients")

        raise FitError(
            f"at least 5 training samples are needed, got {n_train}; provide more samples"
        )

    train = frame.iloc[order[:n_train]]
    validation = frame.iloc[order[n_train:]]

    x = _design(train)
    y = train["observed_factor"].to_numpy(float)

    if np.linalg.matrix_rank(x) < x.shape[1]:

        log.error("the co-run design matrix is rank deficient")

        raise FitError(
            "the samples do not determine all five coefficients; "
            "collect more diverse co-run samples"
        )

    solution, _, _, _ = np.linalg.lstsq(x, y, rcond=None)

    model = InterferenceModel.from_coefficients(solution)

    log.info(f"fitted interference model {model}")

    if len(validation):

        predicted = np.maximum(1.0, _design(validation) @ solution)
        observed = validation["observed_factor"].to_numpy(float)

        relative = np.abs(predicted - observed) / observed

        percentiles = np.arange(1, 101, dtype=float)

        cdf = pd.DataFrame(
            {
                "percentile": percentiles,
                "relative_error": np.percentile(relative, percentiles),
            }
        )

    else:

        cdf = pd.DataFrame({"percentile": [], "relative_error": []})

    return FitResult(
        model=model,
        cdf=cdf,
        train_design=x,
        train_residuals=y - x @ solution,
        n_train=n_train,
        n_validation=len(validation),
    )


def no_interference(model: str, size: int, partners: Sequence[Partner]) -> float:

    return 1.0


class FittedFactor:
    """
    co-location factor predicted by a fitted model; a gpulet facing several
    lanes on its sibling sees the highest of their utilizations
    """

    def __init__(
        self, model: InterferenceModel, profiles: Mapping[str, LatencyProfile]
    ) -> None:

        self._model: InterferenceModel = model
        self._profiles: Mapping[str, LatencyProfile] = profiles

    @property
    def model(self) -> InterferenceModel:

        return self._model

    def __call__(self, model: str, size: int, partners: Sequence[Partner]) -> float:

        if not partners:

            return 1.0

        own = solo_stats(self._profiles[model], size)

        stats = [solo_stats(self._profiles[m], s) for m, s in partners]

        partner = SoloStats(l2=max(s.l2 for s in stats), mem=max(s.mem for s in stats))

        return self._model.predict(own, partner)


class FactorTable:
    """
    measured (or made up) factor of model_a when co-running with model_b
    """

    def __init__(
        self, factors: Mapping[Tuple[str, str], float], default: float = 1.0
    ) -> None:

        self._factors: Dict[Tuple[str, str], float] = dict(factors)
        self._default: float = default

    @classmethod
    def from_file(cls, source: Union[str, Path], default: float = 1.0) -> "FactorTable":

        frame = read_factor_table(source)

        return cls(
            {
                (row["model_a"], row["model_b"]): float(row["factor"])
                for _, row in frame.iterrows()
            },
            default=default,
        )

    def __call__(self, model: str, size: int, partners: Sequence[Partner]) -> float:

        if not partners:

            return 1.0

        return max(
            max(1.0, self._factors.get((model, m), self._default)) for m, _ in partners
        )
