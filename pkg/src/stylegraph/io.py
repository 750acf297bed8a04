"""Trajectory ingestion, serialization and controlled noise injection.

The on-disk trajectory format is a UTF-8 CSV with the fixed column order
``t,agent_id,agent_type,x,y`` (header optional). ``t`` is an integer frame
index, ``x``/``y`` are metres in a global frame.
"""
from __future__ import annotations

import copy
import csv
import dataclasses
import io as _stdio
import json
import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Iterable, Mapping, Sequence

import numpy as np

from .errors import DomainError, EmptyInputError, OrderingError, ParseError

if TYPE_CHECKING:
    from .centrality import CentralitySeries

AGENT_TYPES = ("car", "bus", "truck", "other")
CSV_COLUMNS = ("t", "agent_id", "agent_type", "x", "y")


@dataclass(frozen=True)
class TrajectoryPoint:
    t: int
    agent_id: str
    agent_type: str
    x: float
    y: float


@dataclass
class TrajectorySet:
    """Time-indexed agent positions.

    Attributes:
        frames: frame index -> {agent_id: (x, y)}, keys in ascending order.
        frame_rate_hz: Sampling rate ``f`` in frames per second.
        agent_index: agent_id -> dense row index (first-appearance order).
        agent_types: agent_id -> type tag. Carried through, never used by the math.
    """

    frames: dict[int, dict[str, tuple[float, float]]]
    frame_rate_hz: float
    agent_index: dict[str, int]
    agent_types: dict[str, str] = field(default_factory=dict)
    _tracks: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if not self.frame_rate_hz > 0:
            raise DomainError(f"frame_rate_hz must be > 0, got {self.frame_rate_hz}")
        self.frames = dict(sorted(self.frames.items()))

    @property
    def frame_ids(self) -> list[int]:
        return list(self.frames)

    @property
    def agents(self) -> list[str]:
        return sorted(self.agent_index, key=self.agent_index.__getitem__)

    def __len__(self) -> int:
        return len(self.frames)

    def positions_at(self, t: int) -> dict[str, tuple[float, float]]:
        return self.frames.get(t, {})

    def track(self, agent_id: str) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(times, xy)`` arrays for one agent, cached."""
        cached = self._tracks.get(agent_id)
        if cached is not None:
            return cached
        times, xy = [], []
        for t, positions in self.frames.items():
            p = positions.get(agent_id)
            if p is not None:
                times.append(t)
                xy.append(p)
        out = (np.asarray(times, dtype=np.int64), np.asarray(xy, dtype=float).reshape(-1, 2))
        self._tracks[agent_id] = out
        return out

    def points(self) -> Iterable[TrajectoryPoint]:
        for t, positions in self.frames.items():
            for agent in sorted(positions, key=self.agent_index.__getitem__):
                x, y = positions[agent]
                yield TrajectoryPoint(t, agent, self.agent_types.get(agent, "other"), x, y)

    @classmethod
    def from_points(cls, points: Iterable[TrajectoryPoint], frame_rate_hz: float) -> "TrajectorySet":
        """Build a set from already-validated points (used by the simulator)."""
        frames: dict[int, dict[str, tuple[float, float]]] = {}
        first_seen: dict[str, tuple[int, int]] = {}
        types: dict[str, str] = {}
        for k, p in enumerate(points):
            frames.setdefault(p.t, {})[p.agent_id] = (float(p.x), float(p.y))
            first_seen.setdefault(p.agent_id, (p.t, k))
            types.setdefault(p.agent_id, p.agent_type)
        order = sorted(first_seen, key=first_seen.__getitem__)
        return cls(frames, frame_rate_hz, {a: i for i, a in enumerate(order)}, types)


def _normalise_type(tag: str) -> str:
    tag = tag.strip().lower()
    return tag if tag in AGENT_TYPES else "other"


def parse_trajectory_csv(text: str | _stdio.TextIOBase, frame_rate_hz: float) -> TrajectorySet:
    """Parse ``t,agent_id,agent_type,x,y`` rows into a :class:`TrajectorySet`.

    Dense indices follow first appearance (earliest frame, then file order).

    Raises:
        ParseError: malformed row, with its 1-based line number.
        OrderingError: an agent's frame index goes backwards.
        EmptyInputError: no data rows.
        DomainError: non-positive frame rate.
    """
    if not frame_rate_hz > 0:
        raise DomainError(f"frame_rate_hz must be > 0, got {frame_rate_hz}")
    stream = _stdio.StringIO(text) if isinstance(text, str) else text
    frames: dict[int, dict[str, tuple[float, float]]] = {}
    last_t: dict[str, int] = {}
    first_seen: dict[str, tuple[int, int]] = {}
    types: dict[str, str] = {}
    n_rows = 0
    for lineno, row in enumerate(csv.reader(stream), start=1):
        if not row or all(not cell.strip() for cell in row):
            continue
        if n_rows == 0 and lineno == 1 and row[0].strip().lower() == "t":
            continue
        if len(row) != 5:
            raise ParseError(f"expected 5 fields, got {len(row)}", lineno)
        t_raw, agent, tag, x_raw, y_raw = (cell.strip() for cell in row)
        try:
            t = int(t_raw)
            x = float(x_raw)
            y = float(y_raw)
        except ValueError as exc:
            raise ParseError(f"bad numeric field ({exc})", lineno) from None
        if t < 0:
            raise ParseError(f"negative frame index {t}", lineno)
        if not (math.isfinite(x) and math.isfinite(y)):
            raise ParseError("non-finite coordinate", lineno)
        if not agent:
            raise ParseError("empty agent_id", lineno)
        prev = last_t.get(agent)
        if prev is not None:
            if t == prev:
                raise ParseError(f"duplicate row for agent {agent!r} at t={t}", lineno)
            if t < prev:
                raise OrderingError(f"agent {agent!r} goes back from t={prev} to t={t}", lineno)
        last_t[agent] = t
        first_seen.setdefault(agent, (t, lineno))
        types.setdefault(agent, _normalise_type(tag))
        frames.setdefault(t, {})[agent] = (x, y)
        n_rows += 1
    if n_rows == 0:
        raise EmptyInputError("no trajectory rows")
    order = sorted(first_seen, key=first_seen.__getitem__)
    return TrajectorySet(frames, frame_rate_hz, {a: i for i, a in enumerate(order)}, types)


def trajectory_to_csv(ts: TrajectorySet, header: bool = True) -> str:
    """Serialize losslessly (floats via ``repr``); inverse of :func:`parse_trajectory_csv`."""
    buf = _stdio.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    if header:
        writer.writerow(CSV_COLUMNS)
    for p in ts.points():
        writer.writerow((p.t, p.agent_id, p.agent_type, repr(p.x), repr(p.y)))
    return buf.getvalue()


def inject_position_noise(ts: TrajectorySet, sigma: float, seed: int) -> TrajectorySet:
    """Perturb every (x, y) with i.i.d. N(0, sigma^2) draws.

    Draw order is frame-major then dense agent index, so the result is a
    pure function of ``(ts, sigma, seed)``.
    """
    if sigma < 0 or not math.isfinite(sigma):
        raise DomainError(f"sigma must be a finite value >= 0, got {sigma}")
    if sigma == 0:
        return copy.deepcopy(ts)
    rng = np.random.default_rng(seed)
    frames: dict[int, dict[str, tuple[float, float]]] = {}
    for t, positions in ts.frames.items():
        agents = sorted(positions, key=ts.agent_index.__getitem__)
        noise = rng.normal(0.0, sigma, size=(len(agents), 2))
        frames[t] = {
            a: (positions[a][0] + float(dx), positions[a][1] + float(dy))
            for a, (dx, dy) in zip(agents, noise)
        }
    return TrajectorySet(frames, ts.frame_rate_hz, dict(ts.agent_index), dict(ts.agent_types))


def inject_series_noise(series: "CentralitySeries", epsilon: float, seed: int) -> "CentralitySeries":
    """Return ``values + u`` with ``u ~ U[-epsilon, epsilon]`` i.i.d. per sample."""
    if epsilon < 0 or not math.isfinite(epsilon):
        raise DomainError(f"epsilon must be a finite value >= 0, got {epsilon}")
    values = np.asarray(series.values, dtype=float)
    if epsilon == 0:
        return dataclasses.replace(series, values=values.copy())
    rng = np.random.default_rng(seed)
    return dataclasses.replace(series, values=values + rng.uniform(-epsilon, epsilon, size=values.shape))


def write_plot_csv(times: Sequence[int], values: Sequence[float], peak: int | None = None) -> str:
    """Plot data as ``t,value`` rows; ``peak`` becomes a leading ``# t_sle,<frame>`` comment."""
    buf = _stdio.StringIO()
    if peak is not None:
        buf.write(f"# t_sle,{int(peak)}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(("t", "value"))
    for t, v in zip(times, values):
        writer.writerow((int(t), repr(float(v))))
    return buf.getvalue()


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, Mapping):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def dumps_json(obj) -> str:
    """Deterministic JSON text (sorted keys, non-finite floats as null)."""
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"
