"""Confidence intervals for simulation output: batch means and replications."""

from __future__ import annotations

import numpy as np
from scipy import stats


def batch_means(x, batches: int = 20, level: float = 0.95) -> tuple[float, float]:
    """Mean of ``x`` and the CI half-width from non-overlapping batch means.

    Trailing samples that do not fill a whole batch are dropped from the
    variance estimate but kept in the mean.
    """
    x = np.asarray(x, dtype=float)
    if x.size == 0:
        raise ValueError("no samples")
    mean = float(x.mean())
    size = x.size // batches
    if batches < 2 or size == 0:
        return mean, float("nan")
    means = x[: size * batches].reshape(batches, size).mean(axis=1)
    sd = means.std(ddof=1)
    half = stats.t.ppf(0.5 + level / 2, batches - 1) * sd / np.sqrt(batches)
    return mean, float(half)


def replication_ci(values, level: float = 0.95) -> tuple[float, float]:
    """Mean and t-based CI half-width over independent replications."""
    x = np.asarray(values, dtype=float)
    if x.size < 2:
        raise ValueError("need at least two replications")
    half = stats.t.ppf(0.5 + level / 2, x.size - 1) * x.std(ddof=1) / np.sqrt(x.size)
    return float(x.mean()), float(half)


def intervals_overlap(a: float, ha: float, b: float, hb: float) -> bool:
    return abs(a - b) <= ha + hb
