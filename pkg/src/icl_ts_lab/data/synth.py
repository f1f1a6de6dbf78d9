"""Synthetic AR_d(q) series: normalized recursion, burn-in, seasonality, datasets.

The target variate follows

    x_t^0 = 1/(q d) * sum_i sum_j a[i][j] x_{t-i}^j + eps_t,   eps_t ~ N(0, sigma^2)

while the covariates j >= 1 are i.i.d. standard normal drivers.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from pydantic import BaseModel, Field, field_validator, model_validator

from icl_ts_lab.core.config import settings
from icl_ts_lab.core.errors import DivergenceError, LagError
from icl_ts_lab.core.numerics import Matrix
from icl_ts_lab.core.serialization import read_json, write_json
from icl_ts_lab.data.encoding import TimeSeries, read_series_csv, write_series_csv

logger = logging.getLogger(__name__)

MAX_REDRAWS = 1000


class ArRanges(BaseModel):
    """Sampling ranges for pretraining/test series."""

    d_choices: list[int] = Field(default_factory=lambda: [1, 2, 3, 4, 5])
    q_choices: list[int] = Field(default_factory=lambda: [1, 2, 3, 4, 5])
    sigma2_low: float = 0.1
    sigma2_high: float = 1.0
    normalized: bool = True
    stationary: bool = False  # redraw coefficients until the target recursion is stable
    seasonality_amplitude: tuple[float, float] | None = None  # e.g. (0.0, 1.5)
    seasonality_frequency: int = Field(default_factory=lambda: settings.seasonality_frequency)

    @field_validator("d_choices", "q_choices")
    @classmethod
    def _positive_choices(cls, v: list[int]) -> list[int]:
        if not v or any(c < 1 for c in v):
            raise ValueError("choices must be a non-empty list of integers >= 1")
        return sorted(set(v))

    @model_validator(mode="after")
    def _ordered(self) -> ArRanges:
        if not 0 <= self.sigma2_low <= self.sigma2_high:
            raise ValueError("need 0 <= sigma2_low <= sigma2_high")
        if self.seasonality_frequency < 1:
            raise ValueError("seasonality frequency must be >= 1")
        if self.seasonality_amplitude is not None and self.seasonality_amplitude[0] > self.seasonality_amplitude[1]:
            raise ValueError("seasonality amplitude range is reversed")
        return self


@dataclass(frozen=True, slots=True)
class SeasonalitySpec:
    amplitude: float
    frequency: int = 30

    def __post_init__(self) -> None:
        if self.frequency < 1:
            raise ValueError(f"frequency must be >= 1, got {self.frequency}")


@dataclass(frozen=True, slots=True)
class ArParams:
    d: int
    q: int
    coeffs: Matrix  # q x d, coeffs[i-1, j] multiplies x_{t-i}^j
    noise_var: float
    normalized: bool = True
    seed: int = 0
    seasonality: SeasonalitySpec | None = None

    def __post_init__(self) -> None:
        coeffs = np.asarray(self.coeffs, dtype=np.float64).reshape(self.q, self.d)
        object.__setattr__(self, "coeffs", coeffs)
        if self.noise_var < 0:
            raise ValueError(f"noise variance must be >= 0, got {self.noise_var}")
        if self.q < 1 or self.d < 1:
            raise LagError(f"need q, d >= 1, got q={self.q}, d={self.d}")

    @property
    def scale(self) -> float:
        return 1.0 / (self.q * self.d) if self.normalized else 1.0

    @property
    def spectral_radius(self) -> float:
        """Largest |root| of the target's own-lag recursion; covariates are exogenous."""
        companion = np.eye(self.q, k=-1)
        companion[0] = self.scale * self.coeffs[:, 0]
        return float(np.abs(np.linalg.eigvals(companion)).max())

    @property
    def w_star(self) -> np.ndarray:
        """Effective regression weights, variate-major then lag."""
        return self.scale * self.coeffs.T.ravel()

    def to_dict(self) -> dict[str, Any]:
        return {
            "d": self.d,
            "q": self.q,
            "coeffs": self.coeffs.tolist(),
            "sigma2": self.noise_var,
            "normalized": self.normalized,
            "seed": self.seed,
            "seasonality": None
            if self.seasonality is None
            else {"amplitude": self.seasonality.amplitude, "frequency": self.seasonality.frequency},
        }

    @classmethod
    def from_dict(cls, obj: dict[str, Any]) -> ArParams:
        season = obj.get("seasonality")
        return cls(
            d=int(obj["d"]),
            q=int(obj["q"]),
            coeffs=np.asarray(obj["coeffs"], dtype=np.float64),
            noise_var=float(obj["sigma2"]),
            normalized=bool(obj.get("normalized", True)),
            seed=int(obj.get("seed", 0)),
            seasonality=None if season is None else SeasonalitySpec(float(season["amplitude"]), int(season["frequency"])),
        )


@dataclass(frozen=True, slots=True)
class ArSample:
    """A generated series with the noise draws that produced its target."""

    series: TimeSeries
    noise: np.ndarray  # length T, eps_t after burn-in (0 for initial steps)


def simulate_ar(
    params: ArParams, T: int, burn_in: int | None = None, *, initial: np.ndarray | None = None
) -> ArSample:
    if T < 1:
        raise ValueError(f"T must be >= 1, got {T}")
    burn_in = settings.burn_in if burn_in is None else burn_in
    d, q = params.d, params.q
    total = T + burn_in
    rng = np.random.default_rng(params.seed)

    x = np.zeros((d, total))
    if initial is not None:
        init = np.asarray(initial, dtype=np.float64).reshape(d, -1)[:, :q]
    else:
        init = rng.standard_normal((d, q))
    n0 = min(q, total)
    x[:, :n0] = init[:, :n0]
    if d > 1:
        x[1:, q:] = rng.standard_normal((d - 1, max(total - q, 0)))
    sigma = float(np.sqrt(params.noise_var))
    noise = np.zeros(total)
    noise[q:] = sigma * rng.standard_normal(max(total - q, 0))

    # coeffs[i-1, j] pairs with x[j, t-i]; reverse lags so a window slice lines up
    a = params.coeffs[::-1].T * params.scale  # d x q, column k <-> lag q-k
    for t in range(q, total):
        x[0, t] = float(np.sum(a * x[:, t - q : t])) + noise[t]
        if not np.isfinite(x[0, t]):
            raise DivergenceError(f"non-finite value at step {t}", step=t)

    series = TimeSeries(x[:, burn_in:])
    if params.seasonality is not None:
        series = add_seasonality(series, params.seasonality)
    return ArSample(series=series, noise=noise[burn_in:])


def gen_ar(params: ArParams, T: int, burn_in: int | None = None, *, initial: np.ndarray | None = None) -> TimeSeries:
    return simulate_ar(params, T, burn_in, initial=initial).series


def _stable(coeffs: np.ndarray, q: int, d: int, normalized: bool) -> bool:
    return ArParams(d=d, q=q, coeffs=coeffs, noise_var=0.0, normalized=normalized).spectral_radius < 1.0


def sample_ar_params(ranges: ArRanges, rng: np.random.Generator) -> ArParams:
    d = int(rng.choice(ranges.d_choices))
    q = int(rng.choice(ranges.q_choices))
    coeffs = rng.standard_normal((q, d))
    for _ in range(MAX_REDRAWS):
        if not ranges.stationary or _stable(coeffs, q, d, ranges.normalized):
            break
        coeffs = rng.standard_normal((q, d))
    else:
        logger.warning("No stationary draw for d=%d q=%d after %d tries", d, q, MAX_REDRAWS)
    sigma2 = float(rng.uniform(ranges.sigma2_low, ranges.sigma2_high))
    season = None
    if ranges.seasonality_amplitude is not None:
        lo, hi = ranges.seasonality_amplitude
        season = SeasonalitySpec(float(rng.uniform(lo, hi)), ranges.seasonality_frequency)
    seed = int(rng.integers(0, 2**63 - 1))
    return ArParams(
        d=d, q=q, coeffs=coeffs, noise_var=sigma2, normalized=ranges.normalized, seed=seed, seasonality=season
    )


def add_seasonality(series: TimeSeries, spec: SeasonalitySpec) -> TimeSeries:
    """Add a*sin(2*pi*t/f) to every variate, t the 0-based time index."""
    t = np.arange(series.T)
    return TimeSeries(series.values + spec.amplitude * np.sin(2 * np.pi * t / spec.frequency))


def realized_bx(series: TimeSeries, q: int) -> float:
    """Largest Euclidean norm of a stacked lag-feature window."""
    if q >= series.T:
        raise LagError(f"lag q={q} must be < T={series.T}")
    windows = sliding_window_view(series.values[:, :-1], q, axis=1)  # d x (T-q) x q
    return float(np.sqrt((windows**2).sum(axis=(0, 2))).max())


@dataclass(slots=True)
class Dataset:
    series: list[TimeSeries]
    params: list[ArParams]
    meta: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if len(self.series) != len(self.params):
            raise ValueError("series and params must align one-to-one")

    def __len__(self) -> int:
        return len(self.series)

    def bx(self) -> list[float]:
        return [realized_bx(s, p.q) for s, p in zip(self.series, self.params, strict=True)]


def gen_dataset(
    n: int, ranges: ArRanges, master_seed: int, T: int, burn_in: int | None = None
) -> Dataset:
    """n independent series; series i draws from the i-th child of the master seed."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if T < 1:
        raise ValueError(f"T must be >= 1, got {T}")
    series, params = [], []
    for i, child in enumerate(np.random.SeedSequence(master_seed).spawn(n)):
        p = sample_ar_params(ranges, np.random.default_rng(child))
        try:
            series.append(gen_ar(p, T, burn_in))
        except DivergenceError as exc:
            raise DivergenceError(str(exc), step=exc.step, series_index=i) from exc
        params.append(p)
    logger.info("Generated %d series (T=%d, master seed %d)", n, T, master_seed)
    meta = {
        "master_seed": master_seed,
        "n": n,
        "T": T,
        "burn_in": settings.burn_in if burn_in is None else burn_in,
        "ranges": ranges.model_dump(),
    }
    return Dataset(series=series, params=params, meta=meta)


def gen_test_series(d: int, q: int, T: int = 5000, sigma2: float = 1.0, seed: int = 0) -> tuple[ArParams, TimeSeries]:
    """The single long evaluation series (unit noise by default, stable coefficients)."""
    ranges = ArRanges(d_choices=[d], q_choices=[q], sigma2_low=sigma2, sigma2_high=sigma2, stationary=True)
    params = sample_ar_params(ranges, np.random.default_rng(seed))
    return params, gen_ar(params, T)


# -- files ------------------------------------------------------------------


def write_dataset(ds: Dataset, out_dir: Path) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, (s, p) in enumerate(zip(ds.series, ds.params, strict=True)):
        name = f"series_{i:04d}.csv"
        write_series_csv(s, out_dir / name)
        entries.append({**p.to_dict(), "file": name, "bx": realized_bx(s, p.q) if p.q < s.T else None})
    return write_json({**ds.meta, "series": entries}, out_dir / "manifest.json")


def read_dataset(path: Path) -> Dataset:
    """Load from a dataset directory or its manifest file."""
    manifest = path / "manifest.json" if path.is_dir() else path
    if not manifest.exists():
        raise FileNotFoundError(f"no dataset manifest at {manifest}")
    obj = read_json(manifest)
    entries = obj.pop("series")
    obj.pop("schema", None)
    params = [ArParams.from_dict(e) for e in entries]
    series = [read_series_csv(manifest.parent / e["file"]) for e in entries]
    return Dataset(series=series, params=params, meta=obj)
