"""Sliding-window samples and update-batch index sets.

Time indices follow 1-based stream time: observation ``z_t`` is
``series.values[t - 1]`` and the sample labelled ``t`` has its last input
observation at time ``t``.  Array positions exposed by :class:`Windows`
are 0-based (``pos = t - window_len``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class Series:
    """A time-ordered (N, d) block of observations plus per-dimension stats."""

    values: np.ndarray
    per_dim_mean: np.ndarray
    per_dim_std: np.ndarray
    index: tuple | None = None

    @classmethod
    def from_values(cls, values, index=None) -> "Series":
        arr = np.asarray(values, dtype=np.float64)
        if arr.ndim == 1:
            arr = arr[:, None]
        if arr.ndim != 2 or arr.shape[0] == 0:
            raise ValueError("series values must be a non-empty (N,) or (N, d) array")
        if not np.all(np.isfinite(arr)):
            raise ValueError("series contains non-finite values")
        mean = arr.mean(axis=0)
        std = arr.std(axis=0)  # population (1/N) convention
        if np.any(std <= 0):
            bad = [int(i) for i in np.flatnonzero(std <= 0)]
            raise ValueError(f"constant series dimension(s) {bad} rejected")
        arr.setflags(write=False)
        if index is not None:
            index = tuple(index)
            if len(index) != arr.shape[0]:
                raise ValueError("index length does not match series length")
        return cls(arr, mean, std, index)

    def __len__(self) -> int:
        return self.values.shape[0]

    @property
    def dims(self) -> int:
        return self.values.shape[1]

    def standardize(self, arr):
        return (np.asarray(arr) - self.per_dim_mean) / self.per_dim_std

    def destandardize(self, arr):
        return np.asarray(arr) * self.per_dim_std + self.per_dim_mean

    def standardized_values(self) -> np.ndarray:
        return self.standardize(self.values)


@dataclass(frozen=True)
class Sample:
    t: int
    x: np.ndarray  # (window_len, d)
    y: np.ndarray  # (horizon, d)


@dataclass(frozen=True)
class BatchIndices:
    all: tuple[int, ...]
    train: tuple[int, ...]
    val: tuple[int, ...]


def make_sample(series: Series | np.ndarray, t: int, m: int, n: int) -> Sample:
    values = series.values if isinstance(series, Series) else np.asarray(series, dtype=np.float64)
    if values.ndim == 1:
        values = values[:, None]
    if m < 1 or n < 1:
        raise ValueError("window_len and horizon must be >= 1")
    if t < m or t + n > values.shape[0]:
        raise IndexError(f"sample t={t} not formable with m={m}, n={n}, length {values.shape[0]}")
    return Sample(t, values[t - m:t].copy(), values[t:t + n].copy())


def batch_indices(t: int, n: int, b: int, m: int | None = None) -> BatchIndices:
    """Update batch I_t and its meta split for stream time ``t``.

    The older ``b - ceil(b/2)`` samples form the meta-training part and the
    newest ``ceil(b/2)`` the meta-validation part.
    """
    if b < 2:
        raise ValueError("online batch size must be > 1")
    lo = t - n - b + 1
    if lo < (m if m is not None else 1):
        raise ValueError(f"insufficient history for batch at t={t} (first index {lo})")
    n_val = math.ceil(b / 2)
    all_ = tuple(range(lo, t - n + 1))
    train = tuple(t - n - j for j in range(b - 1, n_val - 1, -1))
    val = tuple(t - n - j for j in range(n_val - 1, -1, -1))
    return BatchIndices(all_, train, val)


def count_samples(series_len: int, m: int, n: int) -> int:
    return max(0, series_len - m - n + 1)


@dataclass(frozen=True)
class SampleBatch:
    """Stacked samples: ``x`` is (B, m, d), ``y`` is (B, n, d)."""

    x: np.ndarray
    y: np.ndarray
    t: np.ndarray

    def __len__(self) -> int:
        return self.x.shape[0]


def as_batch(samples) -> SampleBatch:
    if isinstance(samples, SampleBatch):
        return samples
    if isinstance(samples, Sample):
        samples = [samples]
    samples = list(samples)
    if not samples:
        raise ValueError("empty batch")
    return SampleBatch(
        np.stack([s.x for s in samples]).astype(np.float64, copy=False),
        np.stack([s.y for s in samples]).astype(np.float64, copy=False),
        np.array([s.t for s in samples]),
    )


class Windows:
    """All stride-1 samples of a value block, addressable by stream time."""

    def __init__(self, values: np.ndarray, m: int, n: int):
        values = np.asarray(values, dtype=np.float64)
        if values.ndim == 1:
            values = values[:, None]
        if count_samples(values.shape[0], m, n) == 0:
            raise ValueError("series too short for a single sample")
        self.values = values
        self.m = m
        self.n = n
        # (count, d, m) views; transpose to (count, m, d)
        self.x_all = np.lib.stride_tricks.sliding_window_view(values[:-n], m, axis=0).transpose(0, 2, 1)
        self.y_all = np.lib.stride_tricks.sliding_window_view(values[m:], n, axis=0).transpose(0, 2, 1)

    @property
    def first_t(self) -> int:
        return self.m

    @property
    def last_t(self) -> int:
        return self.values.shape[0] - self.n

    def __len__(self) -> int:
        return self.x_all.shape[0]

    def pos(self, t) -> np.ndarray | int:
        return np.asarray(t) - self.m

    def sample(self, t: int) -> Sample:
        p = t - self.m
        if not 0 <= p < len(self):
            raise IndexError(f"no sample at t={t}")
        return Sample(t, self.x_all[p].copy(), self.y_all[p].copy())

    def batch(self, ts: Sequence[int]) -> SampleBatch:
        ts = np.asarray(ts, dtype=np.int64)
        p = ts - self.m
        if p.size == 0:
            raise ValueError("empty batch")
        if p.min() < 0 or p.max() >= len(self):
            raise IndexError("batch index out of range")
        return SampleBatch(self.x_all[p], self.y_all[p], ts)

    def span(self, t_lo: int, t_hi: int) -> SampleBatch:
        """Samples with t_lo <= t <= t_hi."""
        return self.batch(np.arange(t_lo, t_hi + 1))
