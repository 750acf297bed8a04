"""Traffic-graph snapshots and the cumulative adjacency matrix.

A snapshot connects two vehicles when their Euclidean distance is below
``mu``. The cumulative matrix ``A`` keeps every edge ever formed (weight =
distance at first encounter) until the agent capacity overflows and ``A``
is re-initialised to the identity.
"""
from __future__ import annotations

import heapq
import io as _stdio
from dataclasses import dataclass, field
from typing import Hashable, Iterator, Mapping

import numpy as np

from .errors import AgentLookupError, CapacityError, DomainError
from .io import TrajectorySet

DEFAULT_MU = 10.0
DEFAULT_CAPACITY = 1000
DEFAULT_DWELL = 10
SPEED_WINDOW = 3
# Coincident vehicles still need a nonzero matrix entry to register an edge.
MIN_WEIGHT = 1e-9


def pair_distance(p: tuple[float, float], q: tuple[float, float]) -> float:
    # np.hypot, not math.hypot: must agree bit-for-bit with the vectorised snapshot
    return float(np.hypot(p[0] - q[0], p[1] - q[1]))


@dataclass(frozen=True)
class GraphSnapshot:
    """Undirected proximity graph at one frame.

    ``edges`` holds ``(i, j, w)`` with ``i`` listed before ``j`` in ``vertices``.
    """

    vertices: tuple
    edges: tuple
    mu: float
    t: int | None = None

    def adjacency_list(self) -> dict[Hashable, list[tuple[Hashable, float]]]:
        nbrs: dict[Hashable, list[tuple[Hashable, float]]] = {v: [] for v in self.vertices}
        for i, j, w in self.edges:
            nbrs[i].append((j, w))
            nbrs[j].append((i, w))
        return nbrs


def build_snapshot(
    positions: Mapping[Hashable, tuple[float, float]], mu: float = DEFAULT_MU, t: int | None = None
) -> GraphSnapshot:
    """Connect every pair closer than ``mu`` metres; weight is the distance."""
    if not mu > 0:
        raise DomainError(f"mu must be > 0, got {mu}")
    verts = tuple(positions)
    pts = np.array([positions[v] for v in verts], dtype=float).reshape(-1, 2)
    if not np.isfinite(pts).all():
        bad = verts[int(np.nonzero(~np.isfinite(pts).all(axis=1))[0][0])]
        raise DomainError(f"non-finite position for {bad!r}")
    i, j = np.triu_indices(len(verts), 1)
    w = np.hypot(pts[i, 0] - pts[j, 0], pts[i, 1] - pts[j, 1])
    keep = np.nonzero(w < mu)[0]
    edges = [(verts[a], verts[b], d) for a, b, d in zip(i[keep].tolist(), j[keep].tolist(), w[keep].tolist())]
    return GraphSnapshot(verts, tuple(edges), float(mu), t)


@dataclass
class AdjacencyState:
    """Cumulative N x N adjacency with the agent -> row mapping.

    Single writer: :func:`update_adjacency` mutates the state in place.
    """

    A: np.ndarray
    capacity: int
    mu: float = DEFAULT_MU
    dwell: int = DEFAULT_DWELL
    t: int | None = None
    epoch: int = 0
    row_of: dict = field(default_factory=dict)
    last_speed: dict = field(default_factory=dict)
    last_seen: dict = field(default_factory=dict)
    _free: list = field(default_factory=list, repr=False)
    _next_row: int = field(default=0, repr=False)

    @classmethod
    def empty(cls, capacity: int = DEFAULT_CAPACITY, mu: float = DEFAULT_MU, dwell: int = DEFAULT_DWELL):
        if capacity < 1:
            raise DomainError(f"capacity must be >= 1, got {capacity}")
        if not mu > 0:
            raise DomainError(f"mu must be > 0, got {mu}")
        if dwell < 0:
            raise DomainError(f"dwell must be >= 0, got {dwell}")
        return cls(np.eye(capacity), int(capacity), float(mu), int(dwell))

    def row(self, agent) -> int:
        try:
            return self.row_of[agent]
        except KeyError:
            raise AgentLookupError(f"agent {agent!r} is not mapped at t={self.t}") from None

    def degree(self, agent) -> int:
        """Nonzero off-diagonal entries in the agent's row."""
        # rows/columns past _next_row are never written
        return int(np.count_nonzero(self.A[self.row(agent), : self._next_row])) - 1

    def degrees(self, agents) -> np.ndarray:
        """Vectorised :meth:`degree` for several agents."""
        rows = [self.row(a) for a in agents]
        return np.count_nonzero(self.A[rows, : self._next_row], axis=1) - 1

    def copy(self) -> "AdjacencyState":
        return AdjacencyState(
            self.A.copy(), self.capacity, self.mu, self.dwell, self.t, self.epoch,
            dict(self.row_of), dict(self.last_speed), dict(self.last_seen),
            list(self._free), self._next_row,
        )

    def reinitialise(self) -> None:
        self.A = np.eye(self.capacity)
        self.row_of.clear()
        self.last_speed.clear()
        self.last_seen.clear()
        self._free.clear()
        self._next_row = 0
        self.epoch += 1

    def _assign(self, agent) -> int:
        r = heapq.heappop(self._free) if self._free else self._next_row
        if r == self._next_row:
            self._next_row += 1
        self.row_of[agent] = r
        return r

    def _release(self, agent) -> None:
        r = self.row_of.pop(agent)
        self.last_speed.pop(agent, None)
        self.last_seen.pop(agent, None)
        heapq.heappush(self._free, r)


def update_adjacency(
    state: AdjacencyState,
    snapshot: GraphSnapshot,
    speeds: Mapping[Hashable, float],
    t: int | None = None,
) -> AdjacencyState:
    """Advance ``state`` by one frame and return it (mutated in place).

    A snapshot edge is recorded only when the pair has no prior entry and one
    endpoint is strictly faster: the faster vehicle sees the slower one as
    new. Each new encounter is a symmetric rank-2 update ``d e_r^T + e_r d^T``
    on the slower vehicle's row ``r``.

    Raises:
        CapacityError: more vehicles in this frame than ``state.capacity``.
    """
    if t is None:
        t = snapshot.t if snapshot.t is not None else (0 if state.t is None else state.t + 1)
    present = snapshot.vertices
    if len(present) > state.capacity:
        raise CapacityError(f"{len(present)} agents at t={t} exceed capacity {state.capacity}")

    present_set = set(present)
    for agent in [a for a in state.row_of if a not in present_set]:
        if t - state.last_seen.get(agent, t) > state.dwell and state.degree(agent) == 0:
            state._release(agent)

    newcomers = [v for v in present if v not in state.row_of]
    if len(state.row_of) + len(newcomers) > state.capacity:
        state.reinitialise()
        newcomers = list(present)
    for v in newcomers:
        state._assign(v)

    A = state.A
    seen_by: dict = {}
    for i, j, w in snapshot.edges:
        ri, rj = state.row_of[i], state.row_of[j]
        if A[ri, rj] != 0:
            continue
        si, sj = speeds.get(i, 0.0), speeds.get(j, 0.0)
        if si > sj:
            seen_by.setdefault(j, []).append((ri, w))
        elif sj > si:
            seen_by.setdefault(i, []).append((rj, w))
    for seen, entries in seen_by.items():
        r = state.row_of[seen]
        rows = [e[0] for e in entries]
        d = [max(e[1], MIN_WEIGHT) for e in entries]
        # support of d e_r^T + e_r d^T; every touched entry is still zero
        A[rows, r] += d
        A[r, rows] += d

    for v in present:
        state.last_seen[v] = t
        state.last_speed[v] = float(speeds.get(v, 0.0))
    state.t = t
    return state


def speed_track(ts: TrajectorySet, agent, window: int = SPEED_WINDOW) -> np.ndarray:
    """Speed (m/s) at each of the agent's observations, backward difference over ``window`` of them."""
    key = ("speed", agent, window)
    cached = ts._tracks.get(key)
    if cached is not None:
        return cached
    times, xy = ts.track(agent)
    idx = np.arange(times.size)
    lo = np.maximum(0, idx - (window - 1))
    dt = (times - times[lo]).astype(float)
    d = np.hypot(xy[:, 0] - xy[lo, 0], xy[:, 1] - xy[lo, 1])
    with np.errstate(invalid="ignore", divide="ignore"):
        speed = np.where(idx == lo, 0.0, d / dt * ts.frame_rate_hz)
    ts._tracks[key] = speed
    return speed


def estimate_speed(ts: TrajectorySet, agent, t: int, window: int = SPEED_WINDOW) -> float:
    """Backward finite-difference speed (m/s) over the last ``window`` observations up to ``t``.

    A single observation gives 0.
    """
    if agent not in ts.agent_index:
        raise AgentLookupError(f"unknown agent {agent!r}")
    times, _ = ts.track(agent)
    k = int(np.searchsorted(times, t, side="right"))
    if k == 0:
        raise AgentLookupError(f"agent {agent!r} has no observation at or before t={t}")
    return float(speed_track(ts, agent, window)[k - 1])


def frame_speeds(ts: TrajectorySet, t: int) -> dict:
    return {a: estimate_speed(ts, a, t) for a in ts.positions_at(t)}


def replay_adjacency(
    ts: TrajectorySet,
    mu: float = DEFAULT_MU,
    capacity: int = DEFAULT_CAPACITY,
    dwell: int = DEFAULT_DWELL,
) -> Iterator[tuple[int, AdjacencyState, GraphSnapshot]]:
    """Yield ``(t, state, snapshot)`` per frame. ``state`` is the same live object each time."""
    state = AdjacencyState.empty(capacity, mu, dwell)
    seen: dict = {}  # observations consumed per agent, indexes its speed track
    for t in ts.frame_ids:
        positions = ts.frames[t]
        snap = build_snapshot(positions, mu, t)
        speeds = {}
        for a in positions:
            k = seen.get(a, 0)
            speeds[a] = float(speed_track(ts, a)[k])
            seen[a] = k + 1
        update_adjacency(state, snap, speeds, t)
        yield t, state, snap


def rebuild_reference(
    ts: TrajectorySet,
    mu: float = DEFAULT_MU,
    capacity: int = DEFAULT_CAPACITY,
    dwell: int = DEFAULT_DWELL,
    upto: int | None = None,
) -> AdjacencyState:
    """Recompute ``A`` at frame ``upto`` from scratch, pair by pair.

    Test oracle for :func:`update_adjacency`: it keeps an explicit edge dict
    instead of a matrix and only materialises ``A`` at the end.
    """
    if capacity < 1:
        raise DomainError(f"capacity must be >= 1, got {capacity}")
    rows: dict = {}
    free: list[int] = []
    next_row = 0
    edges: dict[frozenset, float] = {}
    last_seen: dict = {}
    epoch = 0
    t_last = None
    for t in ts.frame_ids:
        if upto is not None and t > upto:
            break
        pos = ts.frames[t]
        present = list(pos)
        if len(present) > capacity:
            raise CapacityError(f"{len(present)} agents at t={t} exceed capacity {capacity}")
        linked = {a for pair in edges for a in pair}
        for a in list(rows):
            if a not in pos and t - last_seen[a] > dwell and a not in linked:
                heapq.heappush(free, rows.pop(a))
                del last_seen[a]
        newcomers = [a for a in present if a not in rows]
        if len(rows) + len(newcomers) > capacity:
            rows, free, next_row, edges, last_seen = {}, [], 0, {}, {}
            epoch += 1
            newcomers = present
        for a in newcomers:
            if free:
                rows[a] = heapq.heappop(free)
            else:
                rows[a] = next_row
                next_row += 1
        speed = {a: estimate_speed(ts, a, t) for a in present}
        for ia, a in enumerate(present):
            for b in present[ia + 1:]:
                key = frozenset((a, b))
                if key in edges or speed[a] == speed[b]:
                    continue
                d = pair_distance(pos[a], pos[b])
                if d < mu:
                    edges[key] = max(d, MIN_WEIGHT)
        for a in present:
            last_seen[a] = t
        t_last = t
    state = AdjacencyState.empty(capacity, mu, dwell)
    for key, w in edges.items():
        a, b = tuple(key)
        state.A[rows[a], rows[b]] = w
        state.A[rows[b], rows[a]] = w
    state.row_of = rows
    state.last_seen = last_seen
    state.t = t_last
    state.epoch = epoch
    return state


def adjacency_csv(state: AdjacencyState, size: int | None = None) -> str:
    """Dense dump of the leading ``size`` x ``size`` block (debugging aid)."""
    n = size if size is not None else max(state._next_row, 1)
    buf = _stdio.StringIO()
    np.savetxt(buf, state.A[:n, :n], delimiter=",", fmt="%.17g")
    return buf.getvalue()
