"""AP selection: loss and fluctuation gates, offline radio-map build, online window."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .core import RSSI_MIN, ApRegistry, RadioMap, ReferencePoint, RssiVector
from .filtering import (G_MAX, GRID_STEP, FilterParams, TooFewSamplesError, empirical_stats,
                        filtered_mean, fit_asymmetric_bounds)

# symmetric fallback when a series is too short to fit
FALLBACK_G = 3.0


class MissingSeriesError(KeyError):
    pass


@dataclass(frozen=True)
class RawSampleSeries:
    point_id: int
    ap_index: int
    samples: np.ndarray

    def __post_init__(self):
        arr = np.array(self.samples, dtype=float)
        if arr.ndim != 1 or arr.size == 0:
            raise ValueError("a sample series needs at least one sample")
        arr.flags.writeable = False
        object.__setattr__(self, "samples", arr)


@dataclass(frozen=True)
class SelectionThresholds:
    """Gate settings.

    theta1 above 1 disables the loss gate and an infinite theta2 disables the
    fluctuation gate.
    """

    theta1: float
    theta2: float
    epsilon: float
    rssi_min: float = RSSI_MIN

    def __post_init__(self):
        if not self.theta1 > 0:
            raise ValueError("theta1 must be positive")
        if not self.theta2 > 0:
            raise ValueError("theta2 must be positive")
        if not 0.0 < self.epsilon < 1.0:
            raise ValueError("epsilon must lie in (0, 1)")


@dataclass(frozen=True)
class Elimination:
    m: int
    n: int
    gate: str
    statistic: float
    threshold: float


@dataclass(frozen=True)
class Campaign:
    """Every raw series collected over one venue."""

    registry: ApRegistry
    coords: tuple[tuple[float, float], ...]
    bounds: tuple[float, float, float, float]
    series: Mapping[tuple[int, int], RawSampleSeries]
    rssi_min: float = RSSI_MIN
    meta: Mapping[str, str] = field(default_factory=dict)

    @property
    def n_points(self) -> int:
        return len(self.coords)

    @property
    def n_aps(self) -> int:
        return len(self.registry)

    @property
    def samples_per_series(self) -> int:
        lengths = {s.samples.size for s in self.series.values()}
        if len(lengths) > 1:
            raise ValueError(f"inconsistent series lengths {sorted(lengths)}")
        return lengths.pop() if lengths else 0


def loss_rate(series, rssi_min: float = RSSI_MIN) -> float:
    """Fraction of entries that are exactly the missing-signal sentinel."""
    x = np.asarray(series, dtype=float)
    if x.size == 0:
        raise ValueError("empty series")
    return float(np.count_nonzero(x == rssi_min)) / x.size


def fluctuation_ratio(received) -> float:
    """J / L for the received sub-series.

    L is the 1-norm of the series and J = ||S' r - sum(r)||_2, a scaled
    spread of the samples around their mean.
    """
    r = np.asarray(received, dtype=float)
    if r.size == 0:
        raise ValueError("empty series")
    total = float(np.sum(r))
    j = float(np.sqrt(np.sum((r.size * r - total) ** 2)))
    if j == 0.0:
        return 0.0
    l1 = float(np.sum(np.abs(r)))
    return math.inf if l1 == 0.0 else j / l1


def fluctuation_excessive(received, theta2: float) -> bool:
    r = np.asarray(received, dtype=float)
    if r.size == 0:
        raise ValueError("empty series")
    total = float(np.sum(r))
    j = float(np.sqrt(np.sum((r.size * r - total) ** 2)))
    if j == 0.0:
        return False
    return j >= theta2 * float(np.sum(np.abs(r)))


def q9(value: float) -> float:
    """Round to the 9 significant digits the map store keeps."""
    return float(f"{value:.9g}")


def _quantized(p: FilterParams) -> FilterParams:
    return FilterParams(q9(p.g_inf), q9(p.g_sup), q9(p.epsilon), q9(p.mu), q9(p.sigma))


def select_entry(samples: np.ndarray, m: int, n: int, thresholds: SelectionThresholds, *,
                 fixed_bounds: tuple[float, float] | None = None,
                 grid_step: float = GRID_STEP, g_max: float = G_MAX):
    """Run the three gates on one series.

    Returns ``(value, params, elimination)``; exactly one of params and
    elimination is None.
    """
    rssi_min = thresholds.rssi_min
    lr = loss_rate(samples, rssi_min)
    received = samples[samples != rssi_min]
    if lr >= thresholds.theta1 or received.size == 0:
        return rssi_min, None, Elimination(m, n, "loss", lr, thresholds.theta1)
    ratio = fluctuation_ratio(received)
    if fluctuation_excessive(received, thresholds.theta2):
        return rssi_min, None, Elimination(m, n, "fluctuation", ratio, thresholds.theta2)
    if fixed_bounds is not None:
        stats = empirical_stats(received)
        params = FilterParams(fixed_bounds[0], fixed_bounds[1], thresholds.epsilon, stats.mu, stats.sigma)
    else:
        try:
            params = fit_asymmetric_bounds(received, thresholds.epsilon, grid_step, g_max)
        except TooFewSamplesError:
            stats = empirical_stats(received)
            params = FilterParams(FALLBACK_G, FALLBACK_G, thresholds.epsilon, stats.mu, stats.sigma)
    return filtered_mean(received, params), params, None


def offline_select(campaign: Campaign, thresholds: SelectionThresholds, *,
                   fixed_bounds: tuple[float, float] | None = None,
                   grid_step: float = GRID_STEP, g_max: float = G_MAX) -> RadioMap:
    """Build the radio map from raw offline series.

    `fixed_bounds` skips the fit and applies the given (g_inf, g_sup) to
    every entry; ``(G_MAX, G_MAX)`` effectively disables filtering. Stored
    numbers are rounded to 9 significant digits so the map survives a
    save/load round trip unchanged.
    """
    if thresholds.rssi_min != campaign.rssi_min:
        raise ValueError("thresholds and campaign disagree on the missing-signal sentinel")
    n_points, n_aps = campaign.n_points, campaign.n_aps
    missing = [(m, n) for m in range(n_points) for n in range(n_aps) if (m, n) not in campaign.series]
    if missing:
        m, n = missing[0]
        raise MissingSeriesError(
            f"no raw series for point m={m}, AP n={n} ({len(missing)} gaps in total)")
    s = campaign.samples_per_series

    values = np.empty((n_points, n_aps))
    params: dict[tuple[int, int], FilterParams] = {}
    provenance: list[Elimination] = []
    for m in range(n_points):
        for n in range(n_aps):
            v, p, elim = select_entry(campaign.series[m, n].samples, m, n, thresholds,
                                      fixed_bounds=fixed_bounds, grid_step=grid_step, g_max=g_max)
            if elim is not None:
                provenance.append(Elimination(m, n, elim.gate, q9(elim.statistic), q9(elim.threshold)))
                values[m, n] = thresholds.rssi_min
            else:
                params[m, n] = _quantized(p)
                values[m, n] = q9(v)

    reg = campaign.registry
    points = tuple(
        ReferencePoint(m, q9(x), q9(y), RssiVector(values[m], reg.registry_id))
        for m, (x, y) in enumerate(campaign.coords))
    meta = dict(campaign.meta)
    meta.update(S=str(s), theta1=repr(thresholds.theta1), theta2=repr(thresholds.theta2),
                epsilon=repr(thresholds.epsilon))
    return RadioMap(reg, points, tuple(q9(b) for b in campaign.bounds), thresholds.rssi_min,
                    params, tuple(provenance), meta)


class OnlineWindow:
    """Ring buffer of the last `capacity` query slots.

    Alongside the raw rows it keeps a received-mask and a zero-filled copy
    (sentinel entries replaced by 0) so per-AP reductions need no masking
    work at query time.
    """

    def __init__(self, capacity: int, n_aps: int, rssi_min: float = RSSI_MIN):
        if capacity < 1:
            raise ValueError("window capacity must be at least 1")
        self.capacity = capacity
        self.n_aps = n_aps
        self.rssi_min = rssi_min
        self._buf = np.empty((capacity, n_aps))
        self._recv = np.zeros((capacity, n_aps))     # 1.0 where received
        self._zeroed = np.zeros((capacity, n_aps))
        self._ts = [0.0] * capacity
        self._head = 0      # next write position
        self._count = 0
        self._last_ts = None

    def __len__(self) -> int:
        return self._count

    def push(self, timestamp: float, values) -> None:
        if self._last_ts is not None and not timestamp > self._last_ts:
            raise ValueError(f"timestamps must be strictly increasing ({timestamp} after {self._last_ts})")
        row = values.values if isinstance(values, RssiVector) else np.asarray(values, dtype=float)
        if row.shape != (self.n_aps,):
            raise ValueError(f"expected {self.n_aps} values per slot")
        h = self._head
        self._buf[h] = row
        recv = row != self.rssi_min
        self._recv[h] = recv
        self._zeroed[h] = row * recv
        self._ts[h] = timestamp
        self._head = (h + 1) % self.capacity
        self._count = min(self._count + 1, self.capacity)
        self._last_ts = timestamp

    def active(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(values, received, zero-filled) views of the filled rows, in buffer order.

        `received` is 1.0 where the AP was heard and 0.0 at the sentinel.
        """
        c = self._count
        return self._buf[:c], self._recv[:c], self._zeroed[:c]

    def matrix(self) -> np.ndarray:
        """Copy of the buffered slots as a (len, n_aps) array, oldest first."""
        if self._count < self.capacity:
            return self._buf[:self._count].copy()
        return np.concatenate((self._buf[self._head:], self._buf[:self._head]))

    def timestamps(self) -> list[float]:
        if self._count < self.capacity:
            return self._ts[:self._count]
        return self._ts[self._head:] + self._ts[:self._head]


def received_mean(window: OnlineWindow) -> np.ndarray:
    """Per-AP mean of received (non-sentinel) window values; sentinel where none."""
    _, recv, xr = window.active()
    cnt = np.add.reduce(recv, axis=0)
    out = np.add.reduce(xr, axis=0) / np.maximum(cnt, 1.0)
    out[cnt == 0] = window.rssi_min
    return out


def multipliers_from(params: Sequence[FilterParams | None]) -> tuple[np.ndarray, np.ndarray]:
    """Per-AP (g_inf, g_sup) arrays from cached params; NaN where params are missing."""
    g_inf = np.array([np.nan if p is None else p.g_inf for p in params], dtype=float)
    g_sup = np.array([np.nan if p is None else p.g_sup for p in params], dtype=float)
    return g_inf, g_sup


def online_select(window: OnlineWindow, thresholds: SelectionThresholds,
                  multipliers: tuple[np.ndarray, np.ndarray] | None,
                  diagnostics: Counter | None = None) -> np.ndarray:
    """Processed query vector from the current window.

    Per AP: if the missing fraction over the window reaches theta1 the entry
    is the sentinel. Otherwise the received values are filtered with the
    cached offline multipliers ``(g_inf, g_sup)`` (see `multipliers_from` and
    `RadioMap.multipliers`) centred on the window's own mean and spread, and
    the mean of the retained values is returned. Where an AP has no cached
    multipliers (NaN) or nothing is retained, the unfiltered received mean is
    used and counted under ``diagnostics["fallback"]``. ``multipliers=None``
    disables filtering.
    """
    if len(window) == 0:
        raise ValueError("online window is empty")
    rssi_min = thresholds.rssi_min
    if window.rssi_min != rssi_min:
        raise ValueError("window and thresholds disagree on the missing-signal sentinel")
    x, recv, xr = window.active()
    t = float(x.shape[0])
    # counts are exact small integers held as floats; float reductions are
    # much cheaper than count_nonzero on arrays this small
    cnt = np.add.reduce(recv, axis=0)
    abandon = (t - cnt) / t >= thresholds.theta1
    abandon |= cnt == 0.0
    safe_cnt = np.maximum(cnt, 1.0)
    mu = np.add.reduce(xr, axis=0) / safe_cnt
    if multipliers is None:
        out = mu
    else:
        g_inf, g_sup = multipliers
        dev = (x - mu) * recv
        sigma = np.sqrt(np.einsum("ij,ij->j", dev, dev) / safe_cnt)
        keep = (x >= mu - g_inf * sigma) & (x <= mu + g_sup * sigma)
        keep = keep * recv
        kc = np.add.reduce(keep, axis=0)
        out = np.add.reduce(xr * keep, axis=0) / np.maximum(kc, 1.0)
        unusable = kc == 0.0          # includes every AP with NaN multipliers
        if unusable.any():
            out = np.where(unusable, mu, out)
            if diagnostics is not None:
                diagnostics["fallback"] += int(np.count_nonzero(unusable & ~abandon))
    if abandon.any():
        out = np.where(abandon, rssi_min, out)
    return out
