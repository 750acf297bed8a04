"""Degree and closeness centrality time-series."""
from __future__ import annotations

import heapq
from dataclasses import dataclass
from typing import Hashable, Iterable, Sequence

import numpy as np

from .errors import AgentLookupError, DomainError, WindowRangeError
from .graph import (
    DEFAULT_CAPACITY,
    DEFAULT_DWELL,
    DEFAULT_MU,
    MIN_WEIGHT,
    AdjacencyState,
    GraphSnapshot,
    build_snapshot,
    replay_adjacency,
)
from .io import TrajectorySet

KINDS = ("degree", "closeness")


@dataclass
class CentralitySeries:
    """Discrete centrality values, one per frame of ``window`` (inclusive)."""

    agent_id: Hashable
    kind: str
    values: np.ndarray
    window: tuple[int, int]

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise DomainError(f"unknown centrality kind {self.kind!r}")
        self.values = np.asarray(self.values, dtype=float)
        t0, t1 = self.window
        if len(self.values) != t1 - t0 + 1:
            raise DomainError(f"{len(self.values)} values for window {self.window}")

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.window[0], self.window[1] + 1)

    def __len__(self) -> int:
        return len(self.values)


def degree_series(states: Sequence[AdjacencyState], agent) -> CentralitySeries:
    """Row nonzero count of ``agent`` in each state.

    ``states`` must be consecutive per-frame snapshots (``state.t`` set).
    """
    if not states:
        raise DomainError("no adjacency states given")
    values = [s.degree(agent) for s in states]
    return CentralitySeries(agent, "degree", np.asarray(values, float), (states[0].t, states[-1].t))


def degree_table(
    ts: TrajectorySet,
    mu: float = DEFAULT_MU,
    capacity: int = DEFAULT_CAPACITY,
    dwell: int = DEFAULT_DWELL,
) -> dict[Hashable, dict[int, int]]:
    """Degree of every present agent at every frame, from one adjacency replay."""
    table: dict[Hashable, dict[int, int]] = {a: {} for a in ts.agent_index}
    for t, state, snap in replay_adjacency(ts, mu, capacity, dwell):
        for a, d in zip(snap.vertices, state.degrees(snap.vertices).tolist()):
            table[a][t] = d
    return table


def closeness(snapshot: GraphSnapshot, agent) -> float:
    """Scaled weighted closeness of ``agent`` in one snapshot.

    ``((r - 1) / (n - 1)) * (r - 1) / sum(d)`` over the ``r - 1`` vertices
    reachable from ``agent``; 0 when isolated or alone.
    """
    if agent not in snapshot.vertices:
        raise AgentLookupError(f"agent {agent!r} not in snapshot")
    n = len(snapshot.vertices)
    if n < 2:
        return 0.0
    dist = _dijkstra(snapshot.adjacency_list(), agent)
    reach = len(dist) - 1
    if reach == 0:
        return 0.0
    total = sum(dist[v] for v in snapshot.vertices if v != agent and v in dist)
    return (reach / (n - 1)) * reach / total


def _dijkstra(nbrs: dict, source) -> dict:
    dist = {source: 0.0}
    done = set()
    heap = [(0.0, 0, source)]
    tie = 1
    while heap:
        d, _, u = heapq.heappop(heap)
        if u in done:
            continue
        done.add(u)
        for v, w in nbrs[u]:
            nd = d + max(w, MIN_WEIGHT)
            if nd < dist.get(v, float("inf")):
                dist[v] = nd
                heapq.heappush(heap, (nd, tie, v))
                tie += 1
    return dist


def agent_span(ts: TrajectorySet, agent) -> tuple[int, int]:
    if agent not in ts.agent_index:
        raise AgentLookupError(f"unknown agent {agent!r}")
    times, _ = ts.track(agent)
    return int(times[0]), int(times[-1])


def _check_window(ts: TrajectorySet, agent, window: tuple[int, int] | None) -> tuple[int, int]:
    span = agent_span(ts, agent)
    if window is None:
        window = span
    t0, t1 = int(window[0]), int(window[1])
    if t1 < t0:
        raise WindowRangeError(f"empty window {window}")
    times, _ = ts.track(agent)
    lo = int(np.searchsorted(times, t0))
    hi = int(np.searchsorted(times, t1, side="right"))
    if hi - lo != t1 - t0 + 1:
        raise WindowRangeError(f"agent {agent!r} is not present in every frame of {window}")
    return t0, t1


def closeness_series(
    ts: TrajectorySet, mu: float, agent, window: tuple[int, int] | None = None
) -> CentralitySeries:
    """Per-frame snapshot closeness for ``agent`` over ``window`` (default: its full span)."""
    t0, t1 = _check_window(ts, agent, window)
    values = [closeness(build_snapshot(ts.frames[t], mu, t), agent) for t in range(t0, t1 + 1)]
    return CentralitySeries(agent, "closeness", np.asarray(values, float), (t0, t1))


def degree_series_from_table(
    table: dict[Hashable, dict[int, int]], agent, window: tuple[int, int]
) -> CentralitySeries:
    t0, t1 = window
    try:
        row = table[agent]
        values = [row[t] for t in range(t0, t1 + 1)]
    except KeyError:
        raise WindowRangeError(f"agent {agent!r} has no degree for every frame of {window}") from None
    return CentralitySeries(agent, "degree", np.asarray(values, float), (t0, t1))


def degree_series_for(
    ts: TrajectorySet,
    agent,
    window: tuple[int, int] | None = None,
    mu: float = DEFAULT_MU,
    capacity: int = DEFAULT_CAPACITY,
    dwell: int = DEFAULT_DWELL,
) -> CentralitySeries:
    """Convenience wrapper: replay the episode and extract one agent's degree series."""
    window = _check_window(ts, agent, window)
    return degree_series_from_table(degree_table(ts, mu, capacity, dwell), agent, window)


def is_monotone_within_epochs(values: Iterable[float], epochs: Iterable[int]) -> bool:
    prev_v, prev_e = None, None
    for v, e in zip(values, epochs):
        if prev_e == e and v < prev_v:
            return False
        prev_v, prev_e = v, e
    return True
