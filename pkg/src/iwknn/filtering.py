"""Asymmetric outlier bounds for per-(point, AP) RSSI sample series.

Samples are kept when they fall in the closed interval
``[mu - g_inf * sigma, mu + g_sup * sigma]``. The two multipliers are fitted
offline by exhaustive grid search: minimise ``g_inf + g_sup`` subject to the
interval retaining at least ``1 - epsilon`` of the fitting samples.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

G_MAX = 6.0
GRID_STEP = 0.01
MIN_FIT_SAMPLES = 10


class TooFewSamplesError(ValueError):
    pass


@dataclass(frozen=True)
class SampleStats:
    mu: float
    sigma: float
    count: int


@dataclass(frozen=True)
class FilterParams:
    g_inf: float
    g_sup: float
    epsilon: float
    mu: float
    sigma: float

    @property
    def lower(self) -> float:
        return self.mu - self.g_inf * self.sigma

    @property
    def upper(self) -> float:
        return self.mu + self.g_sup * self.sigma

    def rebased(self, stats: SampleStats) -> "FilterParams":
        """Same multipliers, centred on different sample statistics."""
        return replace(self, mu=stats.mu, sigma=stats.sigma)


def empirical_stats(samples) -> SampleStats:
    """Mean and population standard deviation of the received samples."""
    x = np.asarray(samples, dtype=float)
    if x.size == 0:
        raise ValueError("cannot compute statistics of an empty sample set")
    if np.all(x == x[0]):
        return SampleStats(float(x[0]), 0.0, int(x.size))
    mu = float(np.mean(x))
    sigma = float(np.sqrt(np.mean((x - mu) ** 2)))
    return SampleStats(mu, sigma, int(x.size))


def required_count(n: int, epsilon: float) -> int:
    """Smallest retained count c with c / n >= 1 - epsilon."""
    target = 1.0 - epsilon
    c = min(n, max(0, int(np.ceil(target * n))))
    while c > 0 and (c - 1) / n >= target:
        c -= 1
    while c < n and c / n < target:
        c += 1
    return c


def grid(grid_step: float = GRID_STEP, g_max: float = G_MAX) -> np.ndarray:
    steps = int(round(g_max / grid_step))
    return np.arange(steps + 1) * grid_step


def fit_asymmetric_bounds(samples, epsilon: float, grid_step: float = GRID_STEP,
                          g_max: float = G_MAX) -> FilterParams:
    """Fit (g_inf, g_sup) on the grid {0, step, ..., g_max}.

    Among all grid pairs meeting the coverage constraint the one with the
    smallest sum wins; ties go to the smaller g_sup, then the smaller g_inf.
    If no grid pair reaches the coverage (possible only for tiny epsilon and
    extreme outliers), the widest bounds (g_max, g_max) are returned.

    Raises TooFewSamplesError below MIN_FIT_SAMPLES samples; callers should
    fall back to symmetric 3-sigma bounds.
    """
    x = np.sort(np.asarray(samples, dtype=float))
    n = x.size
    if n < MIN_FIT_SAMPLES:
        raise TooFewSamplesError(
            f"need at least {MIN_FIT_SAMPLES} samples to fit bounds, got {n}; "
            "fall back to symmetric 3-sigma bounds")
    if not 0.0 < epsilon < 1.0:
        raise ValueError("epsilon must lie in (0, 1)")
    if grid_step <= 0:
        raise ValueError("grid_step must be positive")
    stats = empirical_stats(x)
    mu, sigma = stats.mu, stats.sigma
    if sigma == 0.0:
        return FilterParams(0.0, 0.0, epsilon, mu, sigma)

    g = grid(grid_step, g_max)
    below = np.searchsorted(x, mu - g * sigma, side="left")   # samples < lower bound
    upto = np.searchsorted(x, mu + g * sigma, side="right")   # samples <= upper bound
    need = required_count(n, epsilon)
    # for each g_inf index, the first g_sup index whose interval holds `need` samples
    j = np.searchsorted(upto, below + need, side="left")
    feasible = j < g.size
    if not feasible.any():
        return FilterParams(float(g[-1]), float(g[-1]), epsilon, mu, sigma)
    i = np.arange(g.size)
    objective = np.where(feasible, i + j, np.iinfo(np.int64).max)
    best = objective.min()
    # equal objective: the largest g_inf index has the smallest g_sup
    i_best = int(np.flatnonzero(objective == best)[-1])
    return FilterParams(float(g[i_best]), float(g[j[i_best]]), epsilon, mu, sigma)


def retained_mask(samples, params: FilterParams) -> np.ndarray:
    x = np.asarray(samples, dtype=float)
    return (x >= params.mu - params.g_inf * params.sigma) & (x <= params.mu + params.g_sup * params.sigma)


def apply_filter(samples, params: FilterParams) -> np.ndarray:
    """Samples inside the closed acceptance interval, in input order.

    May be empty when `params` were not fitted on these samples.
    """
    x = np.asarray(samples, dtype=float)
    return x[retained_mask(x, params)]


def filtered_mean(samples, params: FilterParams) -> float:
    kept = apply_filter(samples, params)
    if kept.size == 0:
        return params.mu
    return float(np.mean(kept))
