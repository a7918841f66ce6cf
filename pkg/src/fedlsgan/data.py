"""Site time series ingestion, normalization, windowing and synthetic fleets.

A window is 576 consecutive 5-minute samples (two days) reshaped row-major
into a 24x24 grid; cell ``(r, c)`` holds sample ``24 * r + c``.
"""
from __future__ import annotations

import csv
import logging
import math
import warnings
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.signal import lfilter

logger = logging.getLogger(__name__)

STEP = timedelta(minutes=5)
GRID_SIDE = 24
WINDOW_LEN = GRID_SIDE * GRID_SIDE
SAMPLES_PER_DAY = 288
TRAIN_FRACTION = 0.8
MIN_WINDOWS = 5


class DataError(Exception):
    """Base class for data ingestion problems."""


class ParseError(DataError):
    def __init__(self, path, line: int, reason: str):
        super().__init__(f"{path}:{line}: {reason}")
        self.line = line


class CadenceError(DataError):
    def __init__(self, index: int, step: timedelta):
        super().__init__(f"non 5-minute step {step} between samples {index} and {index + 1}")
        self.index = index


class DegenerateSeriesError(DataError):
    pass


class TooFewWindowsError(DataError):
    pass


@dataclass(frozen=True)
class TimeSeries:
    site_id: str
    t0: datetime
    values: np.ndarray
    step: timedelta = STEP
    n_clamped: int = 0

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1 or len(values) < 1:
            raise ValueError("a time series needs at least one sample")
        if not np.all(np.isfinite(values)):
            raise ValueError(f"site {self.site_id}: non-finite samples")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def __len__(self):
        return len(self.values)


@dataclass(frozen=True)
class NormStats:
    vmin: float
    vmax: float

    def __post_init__(self):
        if not self.vmax > self.vmin:
            raise DegenerateSeriesError(f"degenerate range vmin={self.vmin} vmax={self.vmax}")


@dataclass(frozen=True)
class ScenarioWindow:
    grid: np.ndarray
    site_id: str
    start: datetime

    def flat(self) -> np.ndarray:
        return self.grid.reshape(-1)


@dataclass(frozen=True)
class ClientDataset:
    client_id: int
    train: tuple[ScenarioWindow, ...]
    test: tuple[ScenarioWindow, ...]
    stats: NormStats
    label: np.ndarray = field(default_factory=lambda: np.zeros(0))
    site_id: str = ""

    @cached_property
    def train_array(self) -> np.ndarray:
        """Training grids stacked as ``(n, 24, 24)``."""
        return stack_grids(self.train)

    @cached_property
    def test_array(self) -> np.ndarray:
        return stack_grids(self.test)


def stack_grids(windows: Sequence[ScenarioWindow]) -> np.ndarray:
    if not windows:
        return np.zeros((0, GRID_SIDE, GRID_SIDE))
    return np.stack([w.grid for w in windows])


def load_site_csv(path, site_id: str | None = None) -> TimeSeries:
    """Read a ``timestamp,power_mw`` file at 5-minute cadence.

    Negative powers are clamped to zero; the count is kept on the returned
    series as ``n_clamped``.
    """
    path = Path(path)
    site_id = site_id if site_id is not None else path.stem
    stamps: list[datetime] = []
    values: list[float] = []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip().lower() for h in header] != ["timestamp", "power_mw"]:
            raise ParseError(path, 1, f"expected header 'timestamp,power_mw', got {header!r}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise ParseError(path, lineno, f"expected 2 fields, got {len(row)}")
            try:
                stamps.append(datetime.fromisoformat(row[0].strip()))
                values.append(float(row[1]))
            except ValueError as exc:
                raise ParseError(path, lineno, str(exc)) from None
            if not math.isfinite(values[-1]):
                raise ParseError(path, lineno, "non-finite power value")
    if not values:
        raise ParseError(path, 2, "no data rows")
    for i in range(len(stamps) - 1):
        step = stamps[i + 1] - stamps[i]
        if step != STEP:
            raise CadenceError(i, step)
    arr = np.asarray(values)
    n_neg = int(np.sum(arr < 0))
    if n_neg:
        logger.warning("site %s: clamped %d negative samples to zero", site_id, n_neg)
        arr = np.maximum(arr, 0.0)
    return TimeSeries(site_id=site_id, t0=stamps[0], values=arr, n_clamped=n_neg)


def write_site_csv(series: TimeSeries, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["timestamp", "power_mw"])
        for i, v in enumerate(series.values):
            writer.writerow([(series.t0 + i * series.step).isoformat(), repr(float(v))])


def fit_norm(series: TimeSeries, train_fraction: float = TRAIN_FRACTION) -> NormStats:
    """Min/max over the first ``floor(train_fraction * len)`` samples."""
    if not 0 < train_fraction <= 1:
        raise ValueError(f"train_fraction must be in (0, 1], got {train_fraction}")
    n = max(1, math.floor(train_fraction * len(series)))
    head = series.values[:n]
    return NormStats(float(head.min()), float(head.max()))


def normalize(series: TimeSeries, stats: NormStats) -> TimeSeries:
    scaled = np.clip((series.values - stats.vmin) / (stats.vmax - stats.vmin), 0.0, 1.0)
    return TimeSeries(series.site_id, series.t0, scaled, series.step, series.n_clamped)


def denormalize(values, stats: NormStats) -> np.ndarray:
    return np.asarray(values) * (stats.vmax - stats.vmin) + stats.vmin


def window(series: TimeSeries) -> list[ScenarioWindow]:
    """Cut into non-overlapping 24x24 windows; the trailing remainder is dropped."""
    n = len(series) // WINDOW_LEN
    if n == 0:
        warnings.warn(f"site {series.site_id}: {len(series)} samples is shorter than one window")
        return []
    grids = series.values[: n * WINDOW_LEN].reshape(n, GRID_SIDE, GRID_SIDE)
    span = WINDOW_LEN * series.step
    return [ScenarioWindow(grids[i].copy(), series.site_id, series.t0 + i * span) for i in range(n)]


def split(windows: Sequence[ScenarioWindow]) -> tuple[list[ScenarioWindow], list[ScenarioWindow]]:
    """Temporal 80/20 split, first ``floor(0.8 n)`` windows for training."""
    if len(windows) < MIN_WINDOWS:
        raise TooFewWindowsError(f"need at least {MIN_WINDOWS} windows, got {len(windows)}")
    ordered = sorted(windows, key=lambda w: w.start)
    n_train = math.floor(TRAIN_FRACTION * len(ordered))
    return ordered[:n_train], ordered[n_train:]


def one_hot(index: int, n: int) -> np.ndarray:
    vec = np.zeros(n)
    vec[index] = 1.0
    return vec


def build_client(series: TimeSeries, client_id: int, n_clients: int) -> ClientDataset:
    """Normalize on the training windows only, then window and split."""
    n_windows = len(series) // WINDOW_LEN
    if n_windows < MIN_WINDOWS:
        raise TooFewWindowsError(
            f"site {series.site_id}: need at least {MIN_WINDOWS} windows, got {n_windows}"
        )
    n_train = math.floor(TRAIN_FRACTION * n_windows)
    stats = fit_norm(series, n_train * WINDOW_LEN / len(series))
    train, test = split(window(normalize(series, stats)))
    return ClientDataset(
        client_id=client_id,
        train=tuple(train),
        test=tuple(test),
        stats=stats,
        label=one_hot(client_id, n_clients),
        site_id=series.site_id,
    )


# -- synthetic fleets ---------------------------------------------------------

@dataclass(frozen=True)
class SiteParams:
    """Knobs for one synthetic site.

    ``mix`` is the weight on the fleet-wide weather driver; the remainder
    ``sqrt(1 - mix**2)`` goes to site-local noise, so two sites with mix 1
    see the same weather.
    """

    site_id: str
    kind: str = "wind"
    index: int = 0
    capacity: float = 20.0
    mix: float = 0.7
    # wind
    persistence_hours: float = 6.0
    mean_speed: float = 8.0
    speed_sd: float = 3.5
    cut_in: float = 3.0
    rated: float = 13.0
    ramp_rate_per_day: float = 0.5
    ramp_size: float = 1.2
    # solar
    sunrise: float = 6.0
    sunset: float = 18.0
    cloud_depth: float = 0.8
    cloud_hours: float = 3.0


def _ar1(rng: np.random.Generator, n: int, phi: float) -> np.ndarray:
    """Stationary unit-variance AR(1) path."""
    noise = rng.standard_normal(n) * math.sqrt(1.0 - phi * phi)
    noise[0] = rng.standard_normal()
    return lfilter([1.0], [1.0, -phi], noise)


def _phi(hours: float) -> float:
    return math.exp(-1.0 / (hours * 12.0))


def _ramps(rng: np.random.Generator, n: int, rate_per_day: float, size: float) -> np.ndarray:
    """Sum of smooth one-hour steps at Poisson-distributed times."""
    level = np.zeros(n)
    n_events = rng.poisson(rate_per_day * n / SAMPLES_PER_DAY)
    starts = rng.integers(0, n, n_events)
    amps = rng.normal(0.0, size, n_events)
    ramp = np.linspace(0.0, 1.0, 12)
    for s, a in zip(starts, amps):
        seg = min(12, n - s)
        level[s : s + seg] += a * ramp[:seg]
        level[s + seg :] += a
    # pull the level back so ramps are episodes, not a random walk
    return lfilter([1.0], [1.0, -_phi(24.0)], np.diff(level, prepend=0.0))


def _latent(seed: int, n: int, params: SiteParams, phi: float) -> np.ndarray:
    shared = _ar1(np.random.default_rng([seed, 0]), n, phi)
    local = _ar1(np.random.default_rng([seed, 1, params.index]), n, phi)
    mix = float(np.clip(params.mix, -1.0, 1.0))
    return mix * shared + math.sqrt(1.0 - mix * mix) * local


def synth_wind(seed: int, n_days: int, params: SiteParams, t0: datetime | None = None) -> TimeSeries:
    if n_days < 1:
        raise ValueError("n_days must be >= 1")
    n = n_days * SAMPLES_PER_DAY
    x = _latent(seed, n, params, _phi(params.persistence_hours))
    x = x + _ramps(np.random.default_rng([seed, 2]), n, params.ramp_rate_per_day, params.ramp_size)
    speed = params.mean_speed + params.speed_sd * x
    frac = np.clip((speed - params.cut_in) / (params.rated - params.cut_in), 0.0, 1.0) ** 3
    power = np.clip(params.capacity * frac, 0.0, params.capacity)
    return TimeSeries(params.site_id, t0 or datetime(2012, 1, 1), power)


def daylight_shape(hours: np.ndarray, sunrise: float, sunset: float) -> np.ndarray:
    inside = (hours > sunrise) & (hours < sunset)
    shape = np.sin(math.pi * (hours - sunrise) / (sunset - sunrise))
    return np.where(inside, np.maximum(shape, 0.0), 0.0)


def synth_solar(seed: int, n_days: int, params: SiteParams, t0: datetime | None = None) -> TimeSeries:
    if n_days < 1:
        raise ValueError("n_days must be >= 1")
    n = n_days * SAMPLES_PER_DAY
    t0 = t0 or datetime(2012, 1, 1)
    x = _latent(seed, n, params, _phi(params.cloud_hours))
    cloud = 1.0 - params.cloud_depth / (1.0 + np.exp(-2.0 * x))
    start_hour = t0.hour + t0.minute / 60.0
    hours = (start_hour + np.arange(n) / 12.0) % 24.0
    power = params.capacity * daylight_shape(hours, params.sunrise, params.sunset) * cloud
    return TimeSeries(params.site_id, t0, np.clip(power, 0.0, params.capacity))


def synth_site(seed: int, n_days: int, params: SiteParams) -> TimeSeries:
    if params.kind == "wind":
        return synth_wind(seed, n_days, params)
    if params.kind == "solar":
        return synth_solar(seed, n_days, params)
    raise ValueError(f"unknown site kind {params.kind!r}")


def load_fleet_dir(root) -> list[TimeSeries]:
    """Load ``<root>/<fleet>/<site_id>.csv`` files in sorted order."""
    root = Path(root)
    if not root.is_dir():
        raise FileNotFoundError(f"data directory not found: {root}")
    paths = sorted(root.glob("*/*.csv"))
    if not paths:
        raise DataError(f"no <fleet>/<site>.csv files under {root}")
    return [load_site_csv(p, p.stem) for p in paths]
