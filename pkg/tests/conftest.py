import math

import numpy as np
import pytest
from hypothesis import settings

from iwknn.core import ApRegistry, RadioMap, ReferencePoint
from iwknn.filtering import fit_asymmetric_bounds
from iwknn.selection import SelectionThresholds

settings.register_profile("repro", derandomize=True, deadline=None)
settings.load_profile("repro")

_ACCEPTANCE: list[tuple[str, bool, str]] = []


@pytest.fixture
def acceptance():
    """Record one acceptance line; printed in the terminal summary."""
    def record(name: str, passed: bool, detail: str = "") -> None:
        _ACCEPTANCE.append((name, bool(passed), detail))
    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in _ACCEPTANCE:
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {name}  {detail}")


def make_map(coords, fingerprints, *, bounds=None, fit_samples=None, epsilon=0.05) -> RadioMap:
    """Small hand-built map; optional per-(m, n) sample arrays get fitted params."""
    fps = np.asarray(fingerprints, dtype=float)
    reg = ApRegistry.synthetic(fps.shape[1])
    if bounds is None:
        xs = [c[0] for c in coords]
        ys = [c[1] for c in coords]
        bounds = (min(xs), min(ys), max(xs), max(ys))
    points = tuple(ReferencePoint(i, float(x), float(y), reg.vector(fps[i])) for i, (x, y) in enumerate(coords))
    params = {}
    if fit_samples is not None:
        for key, samples in fit_samples.items():
            params[key] = fit_asymmetric_bounds(samples, epsilon)
    return RadioMap(reg, points, bounds, -100.0, params)


def grid_map(nx: int, ny: int, pitch: float, n_aps: int = 3, seed: int = 0) -> RadioMap:
    rng = np.random.default_rng(seed)
    coords = [(i * pitch, j * pitch) for j in range(ny) for i in range(nx)]
    fps = rng.uniform(-90, -40, size=(len(coords), n_aps))
    return make_map(coords, fps, bounds=(0.0, 0.0, (nx - 1) * pitch, (ny - 1) * pitch))


@pytest.fixture
def default_thresholds():
    return SelectionThresholds(0.3, 2.0, 0.05)


def oracle_dist(a, b) -> float:
    total = 0.0
    for x, y in zip(a, b):
        total += (x - y) * (x - y)
    return math.sqrt(total)
