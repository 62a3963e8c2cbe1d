"""Benchmark harness: run the three pipelines on one stream and summarise them."""

from __future__ import annotations

import csv
import gc
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import RSSI_MIN, PositionEstimate, RadioMap
from .locator import LocatorState, default_candidate_radius, locate, locate_baseline
from .selection import Campaign, SelectionThresholds, offline_select
from .sim import (NoiseModel, StreamSlot, VenueLayout, default_layout, generate_offline_campaign,
                  generate_online_stream, random_waypoint_trajectory)

ALGORITHMS = ("iwknn", "wknn", "knn")
WARMUP_CALLS = 50
HIST_BIN_M = 0.25
UNDER_M = 2.0


@dataclass(frozen=True)
class LocatorSettings:
    k: int
    window: int
    thresholds: SelectionThresholds
    candidate_radius: float
    history_depth: int = 3
    filtering: bool = True

    def new_state(self, radio_map: RadioMap) -> LocatorState:
        return LocatorState.create(radio_map, k=self.k, window=self.window, thresholds=self.thresholds,
                                   candidate_radius=self.candidate_radius,
                                   history_depth=self.history_depth, filtering=self.filtering)


@dataclass(frozen=True)
class Scenario:
    """Everything needed to synthesise one venue, campaign and walk."""

    width: float = 50.0
    height: float = 30.0
    grid_pitch: float = 2.45
    n_aps: int = 10
    tx_power: float = -30.0
    exponent: float = 2.4
    d0: float = 1.0
    noise: NoiseModel = NoiseModel()
    samples: int = 200
    queries: int = 1000
    slot_interval: float = 0.05
    speed: float = 3.0
    rssi_min: float = RSSI_MIN

    @property
    def layout(self) -> VenueLayout:
        return default_layout(self.width, self.height, self.grid_pitch, self.n_aps, self.tx_power)


def simulate(scenario: Scenario, seed: int) -> tuple[Campaign, list[StreamSlot]]:
    layout = scenario.layout
    campaign = generate_offline_campaign(layout, scenario.noise, scenario.samples, seed,
                                         exponent=scenario.exponent, d0=scenario.d0,
                                         rssi_min=scenario.rssi_min)
    traj = random_waypoint_trajectory(layout, scenario.queries, scenario.slot_interval, scenario.speed, seed)
    stream = generate_online_stream(layout, scenario.noise, traj, seed, exponent=scenario.exponent,
                                    d0=scenario.d0, rssi_min=scenario.rssi_min)
    return campaign, stream


def _step(state: LocatorState, slot: StreamSlot, algorithm: str) -> PositionEstimate:
    if algorithm == "iwknn":
        return locate(state, slot.rssi, slot.timestamp)
    return locate_baseline(state, slot.rssi, algorithm)


def run_stream(radio_map: RadioMap, slots: Sequence[StreamSlot], algorithm: str,
               settings: LocatorSettings, *, warmup: int = WARMUP_CALLS) -> list[PositionEstimate]:
    """Locate every slot in order with a fresh session.

    `warmup` calls on a throwaway session precede the measured run so the
    returned estimates do not depend on the warm-up. The garbage collector
    is paused during the measured loop.
    """
    if algorithm not in ALGORITHMS:
        raise ValueError(f"unknown algorithm {algorithm!r}; expected one of {ALGORITHMS}")
    if warmup and slots:
        scratch = settings.new_state(radio_map)
        for q in range(warmup):
            s = slots[q % len(slots)]
            # wrap-around timestamps must keep increasing in the throwaway window
            shifted = StreamSlot(q * 1.0, s.truth, s.rssi)
            _step(scratch, shifted, algorithm)
    state = settings.new_state(radio_map)
    was_enabled = gc.isenabled()
    gc.disable()
    try:
        return [_step(state, s, algorithm) for s in slots]
    finally:
        if was_enabled:
            gc.enable()


@dataclass(frozen=True)
class ErrorSummary:
    mean: float
    p50: float
    p95: float
    frac_under_2m: float
    count: int

    @classmethod
    def of(cls, errors: np.ndarray) -> "ErrorSummary":
        if errors.size == 0:
            raise ValueError("no errors to summarise")
        return cls(float(errors.mean()), float(np.percentile(errors, 50)), float(np.percentile(errors, 95)),
                   float(np.count_nonzero(errors < UNDER_M)) / errors.size, int(errors.size))


@dataclass(frozen=True)
class LatencySummary:
    """Latency in microseconds; the 20% partitions hold floor(0.2 * Q) samples each."""

    mean: float
    median: float
    best20_mean: float
    worst20_mean: float
    tail_count: int
    count: int

    @classmethod
    def of(cls, latencies: np.ndarray) -> "LatencySummary":
        if latencies.size == 0:
            raise ValueError("no latencies to summarise")
        x = np.sort(latencies)
        tail = math.floor(0.2 * x.size)
        best = float(x[:tail].mean()) if tail else math.nan
        worst = float(x[x.size - tail:].mean()) if tail else math.nan
        return cls(float(x.mean()), float(np.median(x)), best, worst, tail, int(x.size))


def position_errors(slots: Sequence[StreamSlot], estimates: Sequence[PositionEstimate]) -> np.ndarray:
    if any(s.truth is None for s in slots):
        raise ValueError("stream has slots without ground truth; errors are undefined")
    return np.array([math.hypot(e.x - s.truth[0], e.y - s.truth[1]) for s, e in zip(slots, estimates)])


def error_cdf(errors: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    x = np.sort(errors)
    return x, np.arange(1, x.size + 1) / x.size


def error_histogram(errors: np.ndarray, bin_width: float = HIST_BIN_M,
                    n_bins: int | None = None) -> np.ndarray:
    """Counts of errors in [i*w, (i+1)*w); `n_bins` pads to a shared length."""
    idx = np.floor(errors / bin_width).astype(int)
    need = int(idx.max()) + 1 if idx.size else 0
    return np.bincount(idx, minlength=max(need, n_bins or 0))


@dataclass(frozen=True)
class AlgorithmResult:
    algorithm: str
    estimates: tuple[PositionEstimate, ...]
    errors: np.ndarray
    latencies_us: np.ndarray
    error_summary: ErrorSummary
    latency_summary: LatencySummary


@dataclass(frozen=True)
class BenchReport:
    slots: tuple[StreamSlot, ...]
    results: dict[str, AlgorithmResult]

    def mean_error(self, algorithm: str) -> float:
        return self.results[algorithm].error_summary.mean


def bench(radio_map: RadioMap, slots: Sequence[StreamSlot], settings: LocatorSettings, *,
          algorithms: Sequence[str] = ALGORITHMS, warmup: int = WARMUP_CALLS) -> BenchReport:
    """Run each algorithm sequentially on the identical stream."""
    results = {}
    for algo in algorithms:
        est = run_stream(radio_map, slots, algo, settings, warmup=warmup)
        errors = position_errors(slots, est)
        lat = np.array([e.elapsed_us for e in est])
        results[algo] = AlgorithmResult(algo, tuple(est), errors, lat, ErrorSummary.of(errors),
                                        LatencySummary.of(lat))
    return BenchReport(tuple(slots), results)


def run_scenario(seed: int, scenario: Scenario, settings: LocatorSettings, *,
                 algorithms: Sequence[str] = ALGORITHMS, warmup: int = WARMUP_CALLS) -> BenchReport:
    """Simulate, train and benchmark one seed end to end."""
    campaign, stream = simulate(scenario, seed)
    radio_map = offline_select(campaign, settings.thresholds)
    return bench(radio_map, stream, settings, algorithms=algorithms, warmup=warmup)


def scenario_settings(scenario: Scenario, thresholds: SelectionThresholds, *, k: int = 5,
                      window: int = 20) -> LocatorSettings:
    radius = default_candidate_radius(scenario.speed, scenario.slot_interval, scenario.grid_pitch)
    return LocatorSettings(k, window, thresholds, radius)


def _g(v: float) -> str:
    return repr(float(v))


def write_report(report: BenchReport, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    res = report.results

    with open(out / "error_cdf.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["algorithm", "error_m", "cumulative_fraction"])
        for algo, r in res.items():
            xs, fs = error_cdf(r.errors)
            w.writerows([algo, _g(x), _g(f)] for x, f in zip(xs, fs))

    n_bins = max(error_histogram(r.errors).size for r in res.values())
    with open(out / "error_hist.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["algorithm", "bin_lo_m", "bin_hi_m", "count"])
        for algo, r in res.items():
            for i, c in enumerate(error_histogram(r.errors, n_bins=n_bins)):
                w.writerow([algo, _g(i * HIST_BIN_M), _g((i + 1) * HIST_BIN_M), int(c)])

    with open(out / "latency.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["algorithm", "mean_us", "median_us", "best20_mean_us", "worst20_mean_us",
                    "tail_count", "queries"])
        for algo, r in res.items():
            s = r.latency_summary
            w.writerow([algo, f"{s.mean:.3f}", f"{s.median:.3f}", f"{s.best20_mean:.3f}",
                        f"{s.worst20_mean:.3f}", s.tail_count, s.count])

    with open(out / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["algorithm", "mean_error_m", "p50_error_m", "p95_error_m", "frac_under_2m", "queries"])
        for algo, r in res.items():
            s = r.error_summary
            w.writerow([algo, _g(s.mean), _g(s.p50), _g(s.p95), _g(s.frac_under_2m), s.count])

    with open(out / "errors.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["query", "timestamp", "algorithm", "x", "y", "true_x", "true_y", "error_m", "elapsed_us"])
        for algo, r in res.items():
            for q, (s, e, err) in enumerate(zip(report.slots, r.estimates, r.errors)):
                w.writerow([q, _g(s.timestamp), algo, _g(e.x), _g(e.y), _g(s.truth[0]), _g(s.truth[1]),
                            _g(err), f"{e.elapsed_us:.3f}"])
