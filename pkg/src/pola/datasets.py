"""Loaders for the monthly sunspot and household power series, plus a
piecewise-AR generator for drift tests."""

from __future__ import annotations

import csv
import datetime as dt
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .windowing import Series

log = logging.getLogger(__name__)


class DataError(ValueError):
    pass


@dataclass(frozen=True)
class DatasetSpec:
    name: str
    window_len: int
    horizon: int
    dims: int


DATASETS = {
    "sunspot": DatasetSpec("sunspot", window_len=48, horizon=5, dims=1),
    "power": DatasetSpec("power", window_len=28, horizon=3, dims=3),
    "synthetic": DatasetSpec("synthetic", window_len=12, horizon=3, dims=1),
}

SUNSPOT_FIRST = (1749, 1)
SUNSPOT_LAST = (2020, 7)
SUNSPOT_LENGTH = 3259

POWER_FIRST = dt.date(2006, 12, 16)
POWER_LAST = dt.date(2010, 11, 26)
POWER_COLUMNS = ("Global_active_power", "Global_intensity", "Voltage")


def load_sunspot(path, first=SUNSPOT_FIRST, last=SUNSPOT_LAST, strict: bool = False) -> Series:
    """Read a SILSO monthly mean total sunspot number file.

    Accepts both the whitespace-separated ``.txt`` and semicolon-separated
    ``.csv`` releases (year, month, decimal year, value, std, #obs, flag).
    Rows outside ``first..last`` (inclusive (year, month) pairs) are dropped.
    """
    values, index = [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            cols = line.replace(";", " ").split()
            if len(cols) < 4:
                raise DataError(f"{path}:{lineno}: expected at least 4 columns, got {len(cols)}")
            try:
                year, month, value = int(cols[0]), int(cols[1]), float(cols[3])
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: malformed row {line!r}") from exc
            if not 1 <= month <= 12:
                raise DataError(f"{path}:{lineno}: month {month} out of range")
            if (year, month) < tuple(first) or (year, month) > tuple(last):
                continue
            if value == -1:
                raise DataError(f"{path}:{lineno}: missing value marker for {year}-{month:02d}")
            if index and (year, month) <= index[-1]:
                raise DataError(f"{path}:{lineno}: rows not in increasing month order")
            values.append(value)
            index.append((year, month))
    if not values:
        raise DataError(f"{path}: no rows in requested range")
    for (y0, m0), (y1, m1) in zip(index, index[1:]):
        if (y1 * 12 + m1) - (y0 * 12 + m0) != 1:
            raise DataError(f"{path}: gap between {y0}-{m0:02d} and {y1}-{m1:02d}")
    if strict and len(values) != SUNSPOT_LENGTH:
        raise DataError(f"{path}: expected {SUNSPOT_LENGTH} monthly values, got {len(values)}")
    return Series.from_values(values, index=[f"{y}-{m:02d}" for y, m in index])


def load_power(path, first: dt.date = POWER_FIRST, last: dt.date = POWER_LAST, strict: bool = False) -> Series:
    """Daily means of active power, intensity and voltage from the UCI minute file.

    Missing minutes ("?") are ignored in the daily mean; a day (or a
    variable within a day) with no readings is forward-filled from the
    previous day.
    """
    import pandas as pd

    try:
        df = pd.read_csv(path, sep=";", usecols=["Date", *POWER_COLUMNS], na_values=["?"],
                         dtype={c: "float64" for c in POWER_COLUMNS}, low_memory=False)
    except (ValueError, KeyError) as exc:
        raise DataError(f"{path}: {exc}") from exc
    try:
        day = pd.to_datetime(df["Date"], format="%d/%m/%Y").dt.date
    except (ValueError, TypeError) as exc:
        raise DataError(f"{path}: malformed Date column ({exc})") from exc
    daily = df[list(POWER_COLUMNS)].groupby(day).mean()
    days = pd.Index([first + dt.timedelta(days=i) for i in range((last - first).days + 1)])
    daily = daily.reindex(days)
    if daily.iloc[0].isna().any():
        bad = [c for c in POWER_COLUMNS if np.isnan(daily.iloc[0][c])]
        raise DataError(f"{path}: cannot forward-fill {bad} on first day {first}")
    n_filled = int(daily.isna().any(axis=1).sum())
    if n_filled:
        log.info("forward-filled %d day(s) with missing readings", n_filled)
    daily = daily.ffill()
    if strict and len(daily) != (POWER_LAST - POWER_FIRST).days + 1:
        raise DataError(f"{path}: unexpected series length {len(daily)}")
    return Series.from_values(daily.to_numpy(dtype=np.float64), index=[d.isoformat() for d in daily.index])


def load_csv(path, columns: Sequence[str] | None = None) -> Series:
    """Read a ``date,value[,value...]`` CSV (header row required)."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataError(f"{path}: empty file")
        if columns is None:
            keep = list(range(1, len(header)))
        else:
            try:
                keep = [header.index(c) for c in columns]
            except ValueError as exc:
                raise DataError(f"{path}: {exc}") from exc
        index, rows = [], []
        for lineno, row in enumerate(reader, 2):
            if not row:
                continue
            try:
                rows.append([float(row[i]) for i in keep])
            except (ValueError, IndexError) as exc:
                raise DataError(f"{path}:{lineno}: malformed row {row!r}") from exc
            index.append(row[0])
    if not rows:
        raise DataError(f"{path}: no data rows")
    return Series.from_values(rows, index=index)


def dump_csv(series: Series, path, standardized: bool = False) -> None:
    vals = series.standardized_values() if standardized else series.values
    index = series.index or tuple(str(i) for i in range(len(series)))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["date", *[f"dim{j}" for j in range(series.dims)]])
        for label, row in zip(index, vals):
            w.writerow([label, *[repr(float(v)) for v in row]])


def load_dataset(name: str, path) -> Series:
    loaders = {"sunspot": load_sunspot, "power": load_power, "csv": load_csv}
    if name == "synthetic":
        return gen_synthetic(DEFAULT_SYNTHETIC, seed=0)
    if name not in loaders:
        raise ValueError(f"unknown dataset {name!r}")
    if path is None or not Path(path).exists():
        raise FileNotFoundError(f"data file for {name!r} not found: {path}")
    return loaders[name](path)


# -- synthetic drift --------------------------------------------------------

@dataclass(frozen=True)
class Segment:
    length: int
    coeffs: tuple[float, ...]
    noise_sd: float
    mean: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "coeffs", tuple(float(c) for c in self.coeffs))
        if self.length < 1:
            raise ValueError("segment length must be >= 1")
        if self.noise_sd < 0:
            raise ValueError("noise_sd must be >= 0")
        if self.coeffs:
            # stable iff all roots of z^p - a1 z^(p-1) - ... - ap lie inside the unit circle
            roots = np.roots([1.0, *(-c for c in self.coeffs)])
            if np.any(np.abs(roots) >= 1.0):
                raise ValueError(f"unstable AR coefficients {self.coeffs}")


DEFAULT_SYNTHETIC = (
    Segment(600, (1.2, -0.5), 0.3, 0.0),
    Segment(400, (0.5,), 0.3, 2.0),
    Segment(400, (1.6, -0.8), 0.3, -1.0),
)


def gen_synthetic(segments: Sequence[Segment], seed: int, init: Sequence[float] = (), dims: int = 1) -> Series:
    """Piecewise-stationary AR series; each segment continues the previous history.

    ``init`` supplies observations preceding the first output value (most
    recent last); missing history is taken as the first segment's mean.
    With ``dims > 1`` the channels are independent draws.
    """
    segments = [s if isinstance(s, Segment) else Segment(*s) for s in segments]
    if not segments:
        raise ValueError("at least one segment required")
    rng = np.random.default_rng(seed)
    total = sum(s.length for s in segments)
    p_max = max((len(s.coeffs) for s in segments), default=0)
    out = np.empty((total, dims))
    for j in range(dims):
        hist = [segments[0].mean] * p_max + [float(v) for v in init]
        pos = 0
        for seg in segments:
            noise = rng.normal(0.0, seg.noise_sd, size=seg.length) if seg.noise_sd > 0 else np.zeros(seg.length)
            for i in range(seg.length):
                v = seg.mean + noise[i]
                for lag, a in enumerate(seg.coeffs, 1):
                    v += a * (hist[-lag] - seg.mean)
                hist.append(v)
                out[pos, j] = v
                pos += 1
    return Series.from_values(out)


__all__ = [
    "DataError", "DatasetSpec", "DATASETS", "Segment", "DEFAULT_SYNTHETIC",
    "load_sunspot", "load_power", "load_csv", "dump_csv", "load_dataset", "gen_synthetic",
]
