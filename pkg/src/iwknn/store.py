"""Line-oriented text formats for radio maps, campaigns, streams and traces.

Radio map layout::

    #HEADER key=value            (format, version, bounds, macs, M, N, S, thresholds...)
    FP,m,x,y,n,rssi              one per (point, AP), M*N lines
    FILT,m,n,mu,sigma,g_inf,g_sup,epsilon
    PROV,m,n,gate,statistic,threshold
    #END records=<number of FP/FILT/PROV lines>

Map numbers are written with 9 significant digits. Campaign and stream
files use the same ``#HEADER`` convention followed by a CSV header row and
keep full float precision (shortest round-trip repr).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .core import ApRegistry, PositionEstimate, RadioMap, ReferencePoint, RssiVector
from .filtering import FilterParams
from .selection import Campaign, Elimination, RawSampleSeries
from .sim import StreamSlot

MAP_FORMAT = "iwknn-radiomap"
CAMPAIGN_FORMAT = "iwknn-campaign"
STREAM_FORMAT = "iwknn-stream"
VERSION = 1

TRACE_COLUMNS = ["timestamp", "x", "y", "true_x", "true_y", "error_m", "elapsed_us", "algorithm"]
PROVENANCE_COLUMNS = ["m", "n", "gate", "statistic", "threshold"]


class StoreError(ValueError):
    pass


class StoreParseError(StoreError):
    def __init__(self, path, line_no: int, message: str):
        super().__init__(f"{path}:{line_no}: {message}")
        self.line_no = line_no


class StoreVersionError(StoreError):
    pass


class TruncatedStoreError(StoreError):
    pass


class CountMismatchError(StoreError):
    pass


def _g9(v: float) -> str:
    return f"{v:.9g}"


def _header_lines(header: dict[str, str]) -> list[str]:
    return [f"#HEADER {k}={v}" for k, v in header.items()]


def _read_header(lines: Sequence[str], path, fmt: str) -> tuple[dict[str, str], int]:
    """Parse leading ``#HEADER`` lines; returns (header, index of first body line)."""
    header: dict[str, str] = {}
    i = 0
    while i < len(lines) and lines[i].startswith("#HEADER"):
        text = lines[i][len("#HEADER"):].strip()
        key, sep, value = text.partition("=")
        if not sep or not key:
            raise StoreParseError(path, i + 1, f"malformed header line {lines[i]!r}")
        header[key.strip()] = value.strip()
        i += 1
    if header.get("format") != fmt:
        raise StoreError(f"{path}: not a {fmt} file (format={header.get('format')!r})")
    try:
        version = int(header.get("version", ""))
    except ValueError:
        raise StoreVersionError(f"{path}: missing or malformed version") from None
    if version != VERSION:
        raise StoreVersionError(f"{path}: unsupported {fmt} version {version} (expected {VERSION})")
    return header, i


def _require(header, key, path):
    try:
        return header[key]
    except KeyError:
        raise StoreError(f"{path}: header is missing {key!r}") from None


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(";")] if text else []


# -- radio map ---------------------------------------------------------------

def save_radiomap(radio_map: RadioMap, path) -> None:
    meta = dict(radio_map.meta)
    header = {
        "format": MAP_FORMAT,
        "version": str(VERSION),
        "bounds": ";".join(_g9(b) for b in radio_map.bounds),
        "macs": ";".join(radio_map.registry.macs),
        "M": str(len(radio_map)),
        "N": str(radio_map.n_aps),
        "rssi_min": _g9(radio_map.rssi_min),
    }
    for k, v in meta.items():
        header.setdefault(k, v)
    body = []
    for p in radio_map.points:
        x, y = _g9(p.x), _g9(p.y)
        for n, v in enumerate(p.fingerprint.values):
            body.append(f"FP,{p.id},{x},{y},{n},{_g9(v)}")
    for (m, n), fp in sorted(radio_map.params.items()):
        body.append(f"FILT,{m},{n},{_g9(fp.mu)},{_g9(fp.sigma)},{_g9(fp.g_inf)},"
                    f"{_g9(fp.g_sup)},{_g9(fp.epsilon)}")
    for e in radio_map.provenance:
        body.append(f"PROV,{e.m},{e.n},{e.gate},{_g9(e.statistic)},{_g9(e.threshold)}")
    lines = _header_lines(header) + body + [f"#END records={len(body)}"]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_radiomap(path) -> RadioMap:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    header, start = _read_header(lines, path, MAP_FORMAT)
    if not lines or not lines[-1].startswith("#END"):
        raise TruncatedStoreError(f"{path}: missing #END trailer, file is truncated")
    try:
        declared = int(lines[-1].split("records=", 1)[1])
    except (IndexError, ValueError):
        raise StoreParseError(path, len(lines), "malformed #END trailer") from None
    body = lines[start:-1]
    if len(body) != declared:
        raise TruncatedStoreError(f"{path}: trailer declares {declared} records, found {len(body)}")

    macs = tuple(m for m in _require(header, "macs", path).split(";") if m)
    registry = ApRegistry(macs)
    m_count = int(_require(header, "M", path))
    n_count = int(_require(header, "N", path))
    if n_count != len(registry):
        raise CountMismatchError(f"{path}: header N={n_count} but {len(registry)} MACs listed")
    bounds = tuple(_floats(_require(header, "bounds", path)))
    if len(bounds) != 4:
        raise StoreError(f"{path}: bounds must have four values")
    rssi_min = float(_require(header, "rssi_min", path))

    values = np.full((m_count, n_count), np.nan)
    coords: dict[int, tuple[float, float]] = {}
    params: dict[tuple[int, int], FilterParams] = {}
    provenance: list[Elimination] = []
    fp_count = 0
    for offset, line in enumerate(body):
        line_no = start + offset + 1
        fields = line.split(",")
        tag = fields[0]
        try:
            if tag == "FP" and len(fields) == 6:
                m, n = int(fields[1]), int(fields[4])
                if not (0 <= m < m_count and 0 <= n < n_count):
                    raise StoreParseError(path, line_no, f"index out of range in {line!r}")
                xy = (float(fields[2]), float(fields[3]))
                if coords.setdefault(m, xy) != xy:
                    raise StoreParseError(path, line_no, f"inconsistent coordinates for point {m}")
                values[m, n] = float(fields[5])
                fp_count += 1
            elif tag == "FILT" and len(fields) == 8:
                m, n = int(fields[1]), int(fields[2])
                mu, sigma, g_inf, g_sup, eps = map(float, fields[3:])
                params[m, n] = FilterParams(g_inf, g_sup, eps, mu, sigma)
            elif tag == "PROV" and len(fields) == 6:
                provenance.append(Elimination(int(fields[1]), int(fields[2]), fields[3],
                                              float(fields[4]), float(fields[5])))
            else:
                raise StoreParseError(path, line_no, f"unrecognised record {line!r}")
        except ValueError as exc:
            if isinstance(exc, StoreParseError):
                raise
            raise StoreParseError(path, line_no, f"bad number in {line!r}") from None
    if fp_count != m_count * n_count or np.isnan(values).any():
        raise CountMismatchError(
            f"{path}: expected {m_count * n_count} fingerprint records (M*N), found {fp_count}")

    points = tuple(ReferencePoint(m, coords[m][0], coords[m][1], RssiVector(values[m], registry.registry_id))
                   for m in range(m_count))
    core_keys = {"format", "version", "bounds", "macs", "M", "N", "rssi_min"}
    meta = {k: v for k, v in header.items() if k not in core_keys}
    return RadioMap(registry, points, bounds, rssi_min, params, tuple(provenance), meta)


def write_provenance(provenance: Iterable[Elimination], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(PROVENANCE_COLUMNS)
        for e in provenance:
            w.writerow([e.m, e.n, e.gate, _g9(e.statistic), _g9(e.threshold)])


# -- campaign ----------------------------------------------------------------

def save_campaign(campaign: Campaign, path) -> None:
    header = {
        "format": CAMPAIGN_FORMAT,
        "version": str(VERSION),
        "bounds": ";".join(repr(float(b)) for b in campaign.bounds),
        "macs": ";".join(campaign.registry.macs),
        "M": str(campaign.n_points),
        "N": str(campaign.n_aps),
        "S": str(campaign.samples_per_series),
        "rssi_min": repr(float(campaign.rssi_min)),
    }
    for k, v in campaign.meta.items():
        header.setdefault(k, v)
    lines = _header_lines(header) + ["m,n,x,y,samples"]
    for (m, n), series in sorted(campaign.series.items()):
        x, y = campaign.coords[m]
        lines.append(f"{m},{n},{float(x)!r},{float(y)!r},"
                     + ";".join(repr(v) for v in series.samples.tolist()))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_campaign(path) -> Campaign:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    header, start = _read_header(lines, path, CAMPAIGN_FORMAT)
    registry = ApRegistry(tuple(m for m in _require(header, "macs", path).split(";") if m))
    m_count = int(_require(header, "M", path))
    s_count = int(_require(header, "S", path))
    if int(_require(header, "N", path)) != len(registry):
        raise CountMismatchError(f"{path}: header N does not match the MAC list")
    if start >= len(lines) or lines[start] != "m,n,x,y,samples":
        raise StoreParseError(path, start + 1, "expected column header 'm,n,x,y,samples'")
    coords: dict[int, tuple[float, float]] = {}
    series = {}
    for offset, line in enumerate(lines[start + 1:]):
        line_no = start + offset + 2
        fields = line.split(",")
        if len(fields) != 5:
            raise StoreParseError(path, line_no, "expected 5 columns")
        try:
            m, n = int(fields[0]), int(fields[1])
            coords.setdefault(m, (float(fields[2]), float(fields[3])))
            samples = _floats(fields[4])
        except ValueError:
            raise StoreParseError(path, line_no, f"bad number in {line[:60]!r}") from None
        if len(samples) != s_count:
            raise CountMismatchError(f"{path}:{line_no}: expected {s_count} samples, found {len(samples)}")
        series[m, n] = RawSampleSeries(m, n, np.array(samples))
    if sorted(coords) != list(range(m_count)):
        raise CountMismatchError(f"{path}: expected points 0..{m_count - 1}")
    bounds = tuple(_floats(_require(header, "bounds", path)))
    core_keys = {"format", "version", "bounds", "macs", "M", "N", "S", "rssi_min"}
    meta = {k: v for k, v in header.items() if k not in core_keys}
    return Campaign(registry, tuple(coords[m] for m in range(m_count)), bounds, series,
                    float(_require(header, "rssi_min", path)), meta)


# -- online stream -----------------------------------------------------------

@dataclass(frozen=True)
class Stream:
    registry: ApRegistry
    slots: tuple[StreamSlot, ...]
    rssi_min: float
    meta: dict

    def __len__(self) -> int:
        return len(self.slots)


def save_stream(slots: Sequence[StreamSlot], registry: ApRegistry, path, *,
                rssi_min: float, meta: dict | None = None) -> None:
    header = {"format": STREAM_FORMAT, "version": str(VERSION), "macs": ";".join(registry.macs),
              "rssi_min": repr(float(rssi_min))}
    for k, v in (meta or {}).items():
        header.setdefault(k, str(v))
    cols = ["timestamp", "true_x", "true_y"] + [f"rssi_{n}" for n in range(len(registry))]
    lines = _header_lines(header) + [",".join(cols)]
    for s in slots:
        truth = ("", "") if s.truth is None else (repr(float(s.truth[0])), repr(float(s.truth[1])))
        lines.append(",".join([repr(float(s.timestamp)), *truth, *(repr(v) for v in s.rssi.values.tolist())]))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_stream(path) -> Stream:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    header, start = _read_header(lines, path, STREAM_FORMAT)
    registry = ApRegistry(tuple(m for m in _require(header, "macs", path).split(";") if m))
    n = len(registry)
    if start >= len(lines) or not lines[start].startswith("timestamp,true_x,true_y"):
        raise StoreParseError(path, start + 1, "expected stream column header")
    slots = []
    for offset, line in enumerate(lines[start + 1:]):
        line_no = start + offset + 2
        fields = line.split(",")
        if len(fields) != 3 + n:
            raise StoreParseError(path, line_no, f"expected {3 + n} columns, found {len(fields)}")
        try:
            ts = float(fields[0])
            truth = None if fields[1] == "" else (float(fields[1]), float(fields[2]))
            values = [float(v) for v in fields[3:]]
        except ValueError:
            raise StoreParseError(path, line_no, "bad number") from None
        slots.append(StreamSlot(ts, truth, RssiVector(values, registry.registry_id)))
    core_keys = {"format", "version", "macs", "rssi_min"}
    return Stream(registry, tuple(slots), float(_require(header, "rssi_min", path)),
                  {k: v for k, v in header.items() if k not in core_keys})


# -- traces ------------------------------------------------------------------

def trace_rows(slots: Sequence[StreamSlot], estimates: Sequence[PositionEstimate], algorithm: str):
    for s, e in zip(slots, estimates):
        if s.truth is None:
            yield [repr(s.timestamp), repr(e.x), repr(e.y), "", "", "", f"{e.elapsed_us:.3f}", algorithm]
        else:
            err = math.hypot(e.x - s.truth[0], e.y - s.truth[1])
            yield [repr(s.timestamp), repr(e.x), repr(e.y), repr(s.truth[0]), repr(s.truth[1]),
                   repr(err), f"{e.elapsed_us:.3f}", algorithm]


def write_trace(slots: Sequence[StreamSlot], estimates: Sequence[PositionEstimate], algorithm: str,
                path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(TRACE_COLUMNS)
        w.writerows(trace_rows(slots, estimates, algorithm))
