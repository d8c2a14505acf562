"""Seeded streams, point-process sampling, and ensemble statistics.

Random streams are counter-based (Philox) and keyed by ``(seed,
stream_id)``, so trajectory ``i`` of an ensemble draws the same numbers no
matter how trajectories are batched or distributed across workers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.stats

from .exceptions import (
    BinSpecError,
    DataError,
    DomainError,
    StepTooCoarseError,
)

MAX_STEP_PROBABILITY = 0.1


def stream(seed: int, stream_id: int = 0) -> np.random.Generator:
    """Independent random stream for one trajectory.

    Same ``(seed, stream_id)`` always yields the same sample sequence;
    distinct stream ids are statistically independent.
    """
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(stream_id),))
    return np.random.Generator(np.random.Philox(ss))


def poisson_thinning_times(
    rate_fn: Callable[[np.ndarray], np.ndarray],
    T: float,
    dt: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """Sample an inhomogeneous Poisson process on the ``dt`` grid.

    Each step fires independently with probability ``rate_fn(t) * dt``
    (left endpoint).  The count distribution converges to
    Poisson(integral of the rate) as dt -> 0.
    """
    if not (np.isfinite(T) and T >= 0.0):
        raise DomainError(f"need T >= 0, got {T}")
    if not (np.isfinite(dt) and dt > 0.0):
        raise DomainError(f"need dt > 0, got {dt}")
    n_steps = round(T / dt)
    times = np.arange(n_steps) * dt
    try:
        rates = np.asarray(rate_fn(times), dtype=float)
        if rates.shape != times.shape:
            raise ValueError
    except (TypeError, ValueError):
        rates = np.fromiter((float(rate_fn(t)) for t in times), float, n_steps)
    if rates.size and (np.min(rates) < 0.0 or not np.all(np.isfinite(rates))):
        raise DomainError("rate function must be finite and nonnegative")
    if rates.size and np.max(rates) * dt > MAX_STEP_PROBABILITY:
        raise StepTooCoarseError(
            f"max rate*dt = {np.max(rates) * dt} exceeds {MAX_STEP_PROBABILITY}"
        )
    hits = rng.random(n_steps) < rates * dt
    return times[hits]


@dataclass(frozen=True)
class Histogram:
    """Binned counts plus the bin spec that produced them."""

    edges: np.ndarray
    counts: np.ndarray

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=float)
        counts = np.asarray(self.counts, dtype=float)
        if edges.ndim != 1 or counts.ndim != 1 or edges.size != counts.size + 1:
            raise BinSpecError(
                f"edges ({edges.size}) must be one longer than counts ({counts.size})"
            )
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "counts", counts)

    @classmethod
    def from_samples(cls, samples: np.ndarray, edges: np.ndarray) -> "Histogram":
        samples = np.asarray(samples, dtype=float)
        edges = np.asarray(edges, dtype=float)
        if samples.size and (
            np.min(samples) < edges[0] or np.max(samples) >= edges[-1]
        ):
            raise BinSpecError("samples fall outside the bin edges")
        counts, _ = np.histogram(samples, bins=edges)
        return cls(edges=edges, counts=counts.astype(float))

    @property
    def total(self) -> float:
        return float(np.sum(self.counts))

    def normalized(self) -> np.ndarray:
        total = self.total
        if total == 0.0:
            raise DataError("empty histogram")
        return self.counts / total


def integer_edges(n_max: int) -> np.ndarray:
    """Edges putting each integer 0..n_max in its own bin."""
    return np.arange(n_max + 2) - 0.5


def two_sample_tv(hist_a: Histogram, hist_b: Histogram) -> float:
    """Total-variation distance between two normalized histograms."""
    if not np.array_equal(hist_a.edges, hist_b.edges):
        raise BinSpecError("histograms use different bin edges")
    return float(0.5 * np.sum(np.abs(hist_a.normalized() - hist_b.normalized())))


def chi_square_gof(
    hist: Histogram, probs: np.ndarray, min_expected: float = 5.0
) -> float:
    """Chi-square goodness-of-fit p-value of counts against a model pmf.

    Bins whose expected count falls below ``min_expected`` are merged,
    smallest expectation first (the usual tail merge), before the test.
    """
    counts = hist.counts
    total = float(np.sum(counts))
    if total == 0.0:
        raise DataError("empty histogram")
    probs = np.asarray(probs, dtype=float)
    if probs.shape != counts.shape:
        raise BinSpecError(
            f"pmf length {probs.size} does not match bin count {counts.size}"
        )
    if np.min(probs) < -1e-12:
        raise DomainError("model pmf has negative entries")
    probs = np.clip(probs, 0.0, None)
    norm = float(np.sum(probs))
    if norm <= 0.0:
        raise DomainError("model pmf sums to zero")
    expected = total * probs / norm
    obs = counts.astype(float).tolist()
    exp = expected.tolist()
    while len(exp) > 1 and min(exp) < min_expected:
        i = int(np.argmin(exp))
        spill_e = exp.pop(i)
        spill_o = obs.pop(i)
        j = i - 1 if i > 0 else 0
        exp[j] += spill_e
        obs[j] += spill_o
    if len(exp) < 2:
        raise DataError("fewer than two bins survive the expected-count rule")
    stat, p_value = scipy.stats.chisquare(obs, exp)
    return float(p_value)


@dataclass(frozen=True)
class EnsembleSummary:
    """First two moments plus a histogram of an ensemble of samples."""

    count: int
    mean: complex
    second_moment: float
    histogram: Histogram = field(repr=False)

    def __post_init__(self):
        if self.count != round(self.histogram.total):
            raise DataError(
                f"count {self.count} != histogram mass {self.histogram.total}"
            )
        if self.second_moment < abs(self.mean) ** 2 - 1e-12:
            raise DataError("second moment below |mean|^2")

    @classmethod
    def from_samples(
        cls,
        values: np.ndarray,
        edges: np.ndarray,
        binned: np.ndarray | None = None,
    ) -> "EnsembleSummary":
        """Summarize samples; complex values are binned on their real part
        unless an explicit 1-D projection is supplied."""
        values = np.asarray(values)
        if values.size == 0:
            raise DataError("empty sample set")
        if binned is None:
            binned = values.real if np.iscomplexobj(values) else values
        hist = Histogram.from_samples(np.asarray(binned, dtype=float), edges)
        return cls(
            count=values.size,
            mean=complex(np.mean(values)),
            second_moment=float(np.mean(np.abs(values) ** 2)),
            histogram=hist,
        )
