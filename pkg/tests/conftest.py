"""Shared fixtures and builders."""
from __future__ import annotations

import time

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from stylegraph.io import TrajectoryPoint, TrajectorySet

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def episode(tracks: dict, frame_rate: float = 10.0, agent_type: str = "car") -> TrajectorySet:
    """Build a TrajectorySet from ``{agent: [(t, x, y), ...]}``."""
    points = [TrajectoryPoint(t, a, agent_type, float(x), float(y)) for a, rows in tracks.items() for t, x, y in rows]
    points.sort(key=lambda p: p.t)
    return TrajectorySet.from_points(points, frame_rate)


def random_episode(rng: np.random.Generator, n_agents: int, n_frames: int, spread: float = 30.0,
                   gaps: bool = True) -> TrajectorySet:
    """Agents with random entry/exit frames and jittery straight-line motion."""
    tracks = {}
    for i in range(n_agents):
        start = int(rng.integers(0, max(1, n_frames // 2))) if gaps else 0
        stop = int(rng.integers(start + 1, n_frames + 1)) if gaps else n_frames
        x, y = rng.uniform(-spread, spread), rng.uniform(-spread / 4, spread / 4)
        vx = rng.uniform(0.0, 3.0)
        rows = []
        for t in range(start, stop):
            x += vx + rng.normal(0, 0.3)
            y += rng.normal(0, 0.2)
            rows.append((t, x, y))
        tracks[f"a{i}"] = rows
    return episode(tracks)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# Acceptance reporting ---------------------------------------------------------------

_CRITERIA: dict[int, str] = {}


class _Criterion:
    """Collects sub-checks for one acceptance criterion and enforces its runtime limit."""

    def __init__(self, number: int, title: str, limit_s: float) -> None:
        self.number, self.title, self.limit_s = number, title, limit_s
        self.failures: list[str] = []
        self.notes: list[str] = []

    def check(self, ok: bool, what: str) -> None:
        (self.notes if ok else self.failures).append(what)

    def __enter__(self):
        self._t0 = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc, tb):
        elapsed = time.perf_counter() - self._t0
        if exc_type is not None:
            self.failures.append(f"error: {exc_type.__name__}: {exc}")
        self.check(elapsed < self.limit_s, f"runtime {elapsed:.1f}s < {self.limit_s:g}s")
        status = "PASS" if not self.failures else "FAIL"
        detail = "; ".join(self.failures)
        if self.notes:
            detail += (" | ok: " if detail else "") + "; ".join(self.notes)
        line = f"criterion {self.number} {status}: {self.title} ({detail})"
        _CRITERIA[self.number] = line
        print(line)
        if exc_type is None:
            assert not self.failures, line
        return False


@pytest.fixture
def criterion():
    return _Criterion


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for n in sorted(_CRITERIA):
            terminalreporter.write_line(_CRITERIA[n])
