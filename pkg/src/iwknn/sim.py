"""Synthetic venue: log-distance path loss with a fade/dropout noise mixture.

All randomness derives from one integer seed. Each offline series draws from
its own generator seeded with (seed, 0, m, n), the online stream from
(seed, 1) and the trajectory from (seed, 2), so generation order never
changes the output.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .core import RSSI_MIN, ApRegistry, RssiVector
from .selection import Campaign, RawSampleSeries

RSSI_FLOOR = -100.0
RSSI_CEIL = 0.0


@dataclass(frozen=True)
class AccessPoint:
    x: float
    y: float
    tx_power: float


@dataclass(frozen=True)
class VenueLayout:
    width: float
    height: float
    grid_pitch: float
    aps: tuple[AccessPoint, ...]

    def __post_init__(self):
        if self.grid_pitch <= 0 or self.width < self.grid_pitch or self.height < self.grid_pitch:
            raise ValueError("venue must hold at least one grid cell")
        for ap in self.aps:
            if not (0 <= ap.x <= self.width and 0 <= ap.y <= self.height):
                raise ValueError(f"access point {ap} lies outside the venue")

    @cached_property
    def reference_points(self) -> tuple[tuple[float, float], ...]:
        """Cell centres of the grid, centred in the venue, row by row."""
        nx = int(math.floor(self.width / self.grid_pitch + 1e-9))
        ny = int(math.floor(self.height / self.grid_pitch + 1e-9))
        ox = (self.width - nx * self.grid_pitch) / 2 + self.grid_pitch / 2
        oy = (self.height - ny * self.grid_pitch) / 2 + self.grid_pitch / 2
        return tuple((ox + i * self.grid_pitch, oy + j * self.grid_pitch)
                     for j in range(ny) for i in range(nx))

    @cached_property
    def registry(self) -> ApRegistry:
        return ApRegistry.synthetic(len(self.aps))

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        return (0.0, 0.0, self.width, self.height)

    @property
    def grid_bounds(self) -> tuple[float, float, float, float]:
        xs = [p[0] for p in self.reference_points]
        ys = [p[1] for p in self.reference_points]
        return (min(xs), min(ys), max(xs), max(ys))


def perimeter_aps(width: float, height: float, count: int, tx_power: float,
                  inset: float = 0.5) -> tuple[AccessPoint, ...]:
    """`count` APs spaced evenly along the wall, `inset` metres inside it."""
    w, h = width - 2 * inset, height - 2 * inset
    perimeter = 2 * (w + h)
    aps = []
    for i in range(count):
        s = (i + 0.5) * perimeter / count
        if s < w:
            x, y = s, 0.0
        elif s < w + h:
            x, y = w, s - w
        elif s < 2 * w + h:
            x, y = w - (s - w - h), h
        else:
            x, y = 0.0, h - (s - 2 * w - h)
        aps.append(AccessPoint(x + inset, y + inset, tx_power))
    return tuple(aps)


def default_layout(width: float = 50.0, height: float = 30.0, grid_pitch: float = 2.45,
                   n_aps: int = 10, tx_power: float = -30.0) -> VenueLayout:
    return VenueLayout(width, height, grid_pitch, perimeter_aps(width, height, n_aps, tx_power))


@dataclass(frozen=True)
class NoiseModel:
    """Per-sample noise mixture.

    Defaults are calibrated so raw single-slot WKNN on the default venue
    lands near 2.5-3 m mean error; they are not measured values.
    """

    sigma_dbm: float = 1.0
    p_loss: float = 0.01
    p_fade: float = 0.05
    fade_depth_dbm: float = 12.0
    fade_sigma_dbm: float = 3.0

    def __post_init__(self):
        if not (0 <= self.p_loss <= 1 and 0 <= self.p_fade <= 1):
            raise ValueError("probabilities must lie in [0, 1]")
        if self.p_loss + self.p_fade > 1:
            raise ValueError("p_loss + p_fade must not exceed 1")
        if min(self.sigma_dbm, self.fade_depth_dbm, self.fade_sigma_dbm) < 0:
            raise ValueError("noise magnitudes must be nonnegative")


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray       # (Q,)
    xy: np.ndarray          # (Q, 2)
    speed_mps: float

    def __len__(self) -> int:
        return self.times.shape[0]


def path_loss_rssi(ap: AccessPoint, pos, exponent: float = 2.4, d0: float = 1.0) -> float:
    """Mean received power (dBm) under the log-distance model."""
    if not 1.5 <= exponent <= 4.5:
        raise ValueError("path-loss exponent must lie in [1.5, 4.5]")
    d = math.hypot(pos[0] - ap.x, pos[1] - ap.y)
    return ap.tx_power - 10.0 * exponent * math.log10(max(d, d0) / d0)


def sample_series(mean: float, model: NoiseModel, rng: np.random.Generator, size: int) -> np.ndarray:
    """`size` noisy draws around `mean`; NaN marks a missed measurement."""
    u = rng.random(size)
    normal = rng.standard_normal(size)
    lost = u < model.p_loss
    faded = ~lost & (u < model.p_loss + model.p_fade)
    out = np.where(faded,
                   mean - model.fade_depth_dbm + model.fade_sigma_dbm * normal,
                   mean + model.sigma_dbm * normal)
    out = np.clip(out, RSSI_FLOOR, RSSI_CEIL)
    out[lost] = np.nan
    return out


def sample_rssi(mean: float, model: NoiseModel, rng: np.random.Generator) -> float | None:
    """One draw; None when the AP was not heard."""
    v = sample_series(mean, model, rng, 1)[0]
    return None if np.isnan(v) else float(v)


def _with_sentinel(x: np.ndarray, rssi_min: float) -> np.ndarray:
    return np.where(np.isnan(x), rssi_min, x)


def generate_offline_campaign(layout: VenueLayout, model: NoiseModel, samples: int, seed: int, *,
                              exponent: float = 2.4, d0: float = 1.0,
                              rssi_min: float = RSSI_MIN) -> Campaign:
    if samples < 1:
        raise ValueError("need at least one sample per series")
    series = {}
    for m, pos in enumerate(layout.reference_points):
        for n, ap in enumerate(layout.aps):
            rng = np.random.default_rng((seed, 0, m, n))
            mean = path_loss_rssi(ap, pos, exponent, d0)
            series[m, n] = RawSampleSeries(m, n, _with_sentinel(sample_series(mean, model, rng, samples), rssi_min))
    meta = {"seed": str(seed), "grid_pitch": repr(layout.grid_pitch)}
    return Campaign(layout.registry, layout.reference_points, layout.bounds, series, rssi_min, meta)


def random_waypoint_trajectory(layout: VenueLayout, n_slots: int, dt: float, speed: float,
                               seed: int) -> Trajectory:
    """Constant-speed walk between uniformly drawn waypoints inside the reference grid."""
    if n_slots < 1 or dt <= 0 or speed <= 0:
        raise ValueError("need n_slots >= 1, dt > 0 and speed > 0")
    rng = np.random.default_rng((seed, 2))
    xmin, ymin, xmax, ymax = layout.grid_bounds

    def draw():
        return np.array([rng.uniform(xmin, xmax), rng.uniform(ymin, ymax)])

    pos = draw()
    target = draw()
    step = speed * dt
    xy = np.empty((n_slots, 2))
    xy[0] = pos
    for q in range(1, n_slots):
        remaining = step
        while True:
            leg = np.linalg.norm(target - pos)
            if leg >= remaining:
                pos = pos + (target - pos) * (remaining / leg)
                break
            remaining -= leg
            pos = target
            target = draw()
        xy[q] = pos
    return Trajectory(np.arange(n_slots) * dt, xy, speed)


@dataclass(frozen=True)
class StreamSlot:
    timestamp: float
    truth: tuple[float, float] | None    # None when ground truth is unknown
    rssi: RssiVector


def generate_online_stream(layout: VenueLayout, model: NoiseModel, trajectory: Trajectory, seed: int, *,
                           exponent: float = 2.4, d0: float = 1.0,
                           rssi_min: float = RSSI_MIN) -> list[StreamSlot]:
    rng = np.random.default_rng((seed, 1))
    reg = layout.registry
    out = []
    for t, (x, y) in zip(trajectory.times, trajectory.xy):
        means = [path_loss_rssi(ap, (x, y), exponent, d0) for ap in layout.aps]
        values = np.array([sample_series(mu, model, rng, 1)[0] for mu in means])
        out.append(StreamSlot(float(t), (float(x), float(y)),
                              RssiVector(_with_sentinel(values, rssi_min), reg.registry_id)))
    return out
