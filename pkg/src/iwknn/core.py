"""Fingerprint types and the nearest-neighbour estimation math.

Everything here is pure: functions take immutable inputs and never touch
module state, so they can be shared between concurrent sessions.
"""

from __future__ import annotations

import hashlib
import heapq
import math
import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

RSSI_MIN = -100.0

_MAC_RE = re.compile(r"^[0-9a-f]{2}([:\-]?[0-9a-f]{2}){5}$")


class ContractError(ValueError):
    """Raised when two vectors are not bound to the same AP ordering."""


def canonical_mac(mac: str) -> str:
    text = mac.strip().lower()
    if not _MAC_RE.match(text):
        raise ValueError(f"not a 48-bit MAC address: {mac!r}")
    digits = re.sub(r"[:\-]", "", text)
    return ":".join(digits[i:i + 2] for i in range(0, 12, 2))


@dataclass(frozen=True)
class ApRegistry:
    """Ordered, immutable set of access points; position in `macs` is the AP index."""

    macs: tuple[str, ...]

    def __post_init__(self):
        macs = tuple(canonical_mac(m) for m in self.macs)
        if len(set(macs)) != len(macs):
            raise ValueError("duplicate MAC address in registry")
        object.__setattr__(self, "macs", macs)
        digest = hashlib.sha1(",".join(macs).encode("ascii")).hexdigest()[:16]
        object.__setattr__(self, "_id", digest)
        object.__setattr__(self, "_index", {m: i for i, m in enumerate(macs)})

    @classmethod
    def synthetic(cls, n: int) -> "ApRegistry":
        # locally administered unicast range
        return cls(tuple(f"02:00:00:00:{i >> 8:02x}:{i & 0xff:02x}" for i in range(n)))

    @property
    def registry_id(self) -> str:
        return self._id

    def index(self, mac: str) -> int:
        return self._index[canonical_mac(mac)]

    def __len__(self) -> int:
        return len(self.macs)

    def vector(self, values: Sequence[float] | np.ndarray) -> "RssiVector":
        vec = RssiVector(values, self.registry_id)
        if len(vec) != len(self):
            raise ContractError(f"expected {len(self)} values, got {len(vec)}")
        return vec


@dataclass(frozen=True, eq=False)
class RssiVector:
    """Per-AP signal strengths (dBm) in registry order."""

    values: np.ndarray
    registry_id: str

    def __post_init__(self):
        arr = np.array(self.values, dtype=float)
        if arr.ndim != 1:
            raise ValueError("RSSI vector must be one-dimensional")
        if not np.all(np.isfinite(arr)):
            raise ValueError("RSSI vector contains non-finite values; use the RSSI_MIN sentinel")
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)

    def __len__(self) -> int:
        return self.values.shape[0]

    def __eq__(self, other):
        if not isinstance(other, RssiVector):
            return NotImplemented
        return self.registry_id == other.registry_id and np.array_equal(self.values, other.values)

    __hash__ = None


@dataclass(frozen=True)
class ReferencePoint:
    id: int
    x: float
    y: float
    fingerprint: RssiVector

    @property
    def coord(self) -> tuple[float, float]:
        return (self.x, self.y)


@dataclass(frozen=True)
class PositionEstimate:
    x: float
    y: float
    neighbor_ids: tuple[int, ...]
    weights: tuple[float, ...]
    elapsed_us: float = 0.0

    @property
    def coord(self) -> tuple[float, float]:
        return (self.x, self.y)


@dataclass(frozen=True, eq=False)
class RadioMap:
    """The fingerprint database.

    `params` maps (point id, AP index) to the offline filter parameters;
    `provenance` lists every entry replaced by the sentinel and the gate
    responsible. `bounds` is the venue box (xmin, ymin, xmax, ymax).
    """

    registry: ApRegistry
    points: tuple[ReferencePoint, ...]
    bounds: tuple[float, float, float, float]
    rssi_min: float = RSSI_MIN
    params: Mapping = field(default_factory=dict)
    provenance: tuple = ()
    meta: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        points = tuple(self.points)
        object.__setattr__(self, "points", points)
        ids = [p.id for p in points]
        if ids != list(range(len(points))):
            raise ValueError("reference point ids must be 0..M-1 in order")
        xmin, ymin, xmax, ymax = self.bounds
        n = len(self.registry)
        for p in points:
            if p.fingerprint.registry_id != self.registry.registry_id or len(p.fingerprint) != n:
                raise ContractError(f"fingerprint of point {p.id} is not bound to the map registry")
            if not (xmin <= p.x <= xmax and ymin <= p.y <= ymax):
                raise ValueError(f"reference point {p.id} lies outside the venue bounds")
        fp = np.array([p.fingerprint.values for p in points], dtype=float).reshape(len(points), n)
        fp.flags.writeable = False
        xy = np.array([[p.x, p.y] for p in points], dtype=float).reshape(len(points), 2)
        xy.flags.writeable = False
        object.__setattr__(self, "fingerprints", fp)
        object.__setattr__(self, "xy", xy)
        # plain tuples make the per-candidate linear scan cheap (math.dist)
        object.__setattr__(self, "rows", tuple(tuple(r) for r in fp.tolist()))
        g = np.full((len(points), n, 2), np.nan)
        for (m, a), p in self.params.items():
            g[m, a] = (p.g_inf, p.g_sup)
        g.flags.writeable = False
        object.__setattr__(self, "_multipliers", g)

    def __len__(self) -> int:
        return len(self.points)

    @property
    def n_aps(self) -> int:
        return len(self.registry)

    def point(self, ref_id: int) -> ReferencePoint:
        return self.points[ref_id]

    def multipliers(self, ref_id: int) -> tuple[np.ndarray, np.ndarray]:
        """Cached (g_inf, g_sup) per AP for one point; NaN where the entry was eliminated."""
        g = self._multipliers[ref_id]
        return g[:, 0], g[:, 1]

    def as_lookup(self) -> dict[int, ReferencePoint]:
        return {p.id: p for p in self.points}


def _check_bound(a: RssiVector, b: RssiVector) -> None:
    if a.registry_id != b.registry_id:
        raise ContractError("vectors are bound to different AP registries")
    if len(a) != len(b):
        raise ContractError(f"length mismatch: {len(a)} != {len(b)}")


def euclidean_distance(fingerprint: RssiVector, query: RssiVector) -> float:
    """2-norm of the per-AP difference, in dB."""
    _check_bound(fingerprint, query)
    return math.dist(fingerprint.values.tolist(), query.values.tolist())


def scan_distances(query: RssiVector, radio_map: RadioMap,
                   ids: Iterable[int] | None = None) -> list[tuple[int, float]]:
    """Linear scan of `query` against the map fingerprints listed in `ids` (default: all)."""
    if query.registry_id != radio_map.registry.registry_id or len(query) != radio_map.n_aps:
        raise ContractError("query is not bound to the map registry")
    return scan_values(query.values.tolist(), radio_map, ids)


def scan_values(q: Sequence[float], radio_map: RadioMap,
                ids: Iterable[int] | None = None) -> list[tuple[int, float]]:
    """`scan_distances` on plain values already known to be in registry order."""
    rows = radio_map.rows
    if ids is None:
        return [(i, math.dist(r, q)) for i, r in enumerate(rows)]
    return [(i, math.dist(rows[i], q)) for i in ids]


def nearest(distances: Sequence[tuple[int, float]], k: int) -> list[tuple[int, float]]:
    """The k smallest (ref_id, distance) pairs, ties broken by smaller ref_id.

    If k exceeds the number of candidates every candidate is returned.
    """
    if not distances:
        raise ValueError("empty candidate list")
    if k < 1:
        raise ValueError("k must be a positive integer")
    return heapq.nsmallest(k, distances, key=lambda p: (p[1], p[0]))


def wknn_weights(distances: Sequence[tuple[int, float]], k: int) -> list[tuple[int, float]]:
    """Inverse-squared-distance weights over the k nearest candidates.

    Returns only the selected (ref_id, weight) pairs in ascending distance
    order; every other candidate implicitly has weight 0. Candidates at
    distance exactly 0 share all of the weight equally.
    """
    chosen = nearest(distances, k)
    exact = [i for i, d in chosen if d == 0.0]
    if exact:
        share = 1.0 / len(exact)
        return [(i, share if d == 0.0 else 0.0) for i, d in chosen]
    # normalising by the smallest distance keeps 1/d^2 away from overflow
    d0 = chosen[0][1]
    raw = [(d0 / d) ** 2 for _, d in chosen]
    total = math.fsum(raw)
    return [(i, r / total) for (i, _), r in zip(chosen, raw)]


def weighted_centroid(weights: Sequence[tuple[int, float]],
                      points: Mapping[int, ReferencePoint] | RadioMap) -> tuple[float, float]:
    x = 0.0
    y = 0.0
    for ref_id, w in weights:
        try:
            p = points[ref_id] if not isinstance(points, RadioMap) else points.points[ref_id]
        except (KeyError, IndexError):
            raise KeyError(f"unknown reference point id {ref_id}") from None
        x += w * p.x
        y += w * p.y
    return (x, y)


def knn_weights(distances: Sequence[tuple[int, float]], k: int) -> list[tuple[int, float]]:
    chosen = nearest(distances, k)
    w = 1.0 / len(chosen)
    return [(i, w) for i, _ in chosen]


def _estimate(weights, radio_map) -> PositionEstimate:
    x, y = weighted_centroid(weights, radio_map)
    return PositionEstimate(x, y, tuple(i for i, _ in weights), tuple(w for _, w in weights))


def knn_estimate(query: RssiVector, radio_map: RadioMap, k: int) -> PositionEstimate:
    """Equal-weight mean of the k nearest reference coordinates (regression form)."""
    if len(radio_map) == 0:
        raise ValueError("radio map is empty")
    return _estimate(knn_weights(scan_distances(query, radio_map), k), radio_map)


def wknn_estimate(query: RssiVector, radio_map: RadioMap, k: int) -> PositionEstimate:
    if len(radio_map) == 0:
        raise ValueError("radio map is empty")
    return _estimate(wknn_weights(scan_distances(query, radio_map), k), radio_map)
