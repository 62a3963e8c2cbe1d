"""Online positioning: window -> AP selection -> candidate restriction -> WKNN."""

from __future__ import annotations

import math
import time
from collections import Counter, deque
from dataclasses import dataclass, field

import numpy as np

from .core import (PositionEstimate, RadioMap, RssiVector, ContractError, knn_weights, scan_distances, scan_values,
                   weighted_centroid, wknn_weights)
from .selection import OnlineWindow, SelectionThresholds, online_select, received_mean

MIN_CANDIDATES = 8
EXPANSION = 1.5


class NoUsableApsError(RuntimeError):
    pass


def default_candidate_radius(max_speed: float, slot_interval: float, grid_pitch: float) -> float:
    return 2.0 * max_speed * slot_interval + grid_pitch


@dataclass
class LocatorState:
    """Session state for one tracked user. Not thread-safe; one per user."""

    radio_map: RadioMap
    k: int
    window: OnlineWindow
    thresholds: SelectionThresholds
    candidate_radius: float
    history_depth: int = 3
    filtering: bool = True
    history: deque = field(init=False)
    diagnostics: Counter = field(init=False)

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be a positive integer")
        if not self.candidate_radius > 0:
            raise ValueError("candidate_radius must be positive")
        if self.window.n_aps != self.radio_map.n_aps:
            raise ContractError("window width does not match the map registry")
        if len(self.radio_map) == 0:
            raise ValueError("radio map is empty")
        self.history = deque(maxlen=self.history_depth)
        self.diagnostics = Counter()

    @classmethod
    def create(cls, radio_map: RadioMap, *, k: int, window: int, thresholds: SelectionThresholds,
               candidate_radius: float, history_depth: int = 3, filtering: bool = True) -> "LocatorState":
        return cls(radio_map, k, OnlineWindow(window, radio_map.n_aps, thresholds.rssi_min), thresholds,
                   candidate_radius, history_depth, filtering)


def _geometry(state: LocatorState):
    """Candidate ids plus the point nearest the last estimate (None on cold start)."""
    rmap = state.radio_map
    m = len(rmap)
    if not state.history:
        return range(m), None
    last = state.history[-1]
    xy = rmap.xy
    d = np.hypot(xy[:, 0] - last.x, xy[:, 1] - last.y)
    anchor = int(np.argmin(d))
    radius = state.candidate_radius
    if math.isinf(radius):
        return range(m), anchor
    floor = min(max(state.k, MIN_CANDIDATES), m)
    inside = d <= radius
    while np.count_nonzero(inside) < floor:
        radius *= EXPANSION
        inside = d <= radius
    return np.flatnonzero(inside).tolist(), anchor


def candidate_set(state: LocatorState) -> list[int]:
    """Reference points near the most recent estimate; all of them on cold start.

    The radius grows by 1.5x until at least max(k, 8) points qualify.
    """
    return list(_geometry(state)[0])


def _multipliers(state: LocatorState, anchor):
    if not state.filtering:
        return None
    rmap = state.radio_map
    if anchor is None:
        # cold start: point whose fingerprint best matches the raw window mean
        probe = RssiVector(received_mean(state.window), rmap.registry.registry_id)
        anchor = min(scan_distances(probe, rmap), key=lambda p: (p[1], p[0]))[0]
    return rmap.multipliers(anchor)


def _check_slot(state: LocatorState, raw_slot: RssiVector) -> None:
    reg = state.radio_map.registry
    if raw_slot.registry_id != reg.registry_id or len(raw_slot) != len(reg):
        raise ContractError("query slot is not bound to the map registry")


def locate(state: LocatorState, raw_slot: RssiVector, timestamp: float) -> PositionEstimate:
    """One I-WKNN step; appends the estimate to the session history."""
    t0 = time.perf_counter_ns()
    _check_slot(state, raw_slot)
    state.window.push(timestamp, raw_slot.values)
    ids, anchor = _geometry(state)
    query = online_select(state.window, state.thresholds, _multipliers(state, anchor), state.diagnostics)
    rmap = state.radio_map
    dists = scan_values(query.tolist(), rmap, ids)
    if not math.isfinite(math.fsum(d for _, d in dists)):
        raise NoUsableApsError("no usable APs: candidate distances are not finite")
    weights = wknn_weights(dists, state.k)
    x, y = weighted_centroid(weights, rmap)
    elapsed = (time.perf_counter_ns() - t0) / 1000.0
    est = PositionEstimate(x, y, tuple(i for i, _ in weights), tuple(w for _, w in weights), elapsed)
    state.history.append(est)
    return est


def locate_baseline(state: LocatorState, raw_slot: RssiVector, algorithm: str) -> PositionEstimate:
    """Full-map KNN or WKNN on the raw slot; no window, gates, filter or restriction.

    Leaves the session state untouched.
    """
    t0 = time.perf_counter_ns()
    if algorithm == "wknn":
        weigh = wknn_weights
    elif algorithm == "knn":
        weigh = knn_weights
    else:
        raise ValueError(f"unknown baseline {algorithm!r}")
    _check_slot(state, raw_slot)
    rmap = state.radio_map
    dists = scan_values(raw_slot.values.tolist(), rmap)
    if not math.isfinite(math.fsum(d for _, d in dists)):
        raise NoUsableApsError("no usable APs: candidate distances are not finite")
    weights = weigh(dists, state.k)
    x, y = weighted_centroid(weights, rmap)
    elapsed = (time.perf_counter_ns() - t0) / 1000.0
    return PositionEstimate(x, y, tuple(i for i, _ in weights), tuple(w for _, w in weights), elapsed)
