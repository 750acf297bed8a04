"""Synthetic multi-lane highway episodes with ground-truth maneuvers.

Longitudinal motion is point-mass IDM car following. Lateral motion is a
quintic lane-change spline or a weaving oscillation; lane changes are only
started when a MOBIL-style safety check on the new follower passes.
Vehicle ``v0`` is the subject whose behaviour the parameters describe; the
other vehicles are conservative background traffic.
"""
from __future__ import annotations

import dataclasses
import io as _stdio
import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .config import RunConfig
from .errors import CalibrationError, DomainError, PlacementError
from .io import TrajectoryPoint, TrajectorySet
from .styles import EpisodeAnalysis, StyleKind, StyleReport

LANE_WIDTH = 3.5
VEHICLE_LENGTH = 4.5
VEHICLE_WIDTH = 1.8
SAME_LANE = 2.5  # lateral offset below which two vehicles share a lane
SUBJECT = "v0"
DEFAULT_HORIZON = 300
MIN_HORIZON = 50

# IDM constants (background); the subject gets A_SUBJECT.
A_MAX = 1.5
A_SUBJECT = 3.0
B_COMF = 2.0
B_SAFE = 4.0
S0 = 2.0
IDM_DELTA = 4

BASE_LC_SECONDS = 4.0  # lane-change duration at lateral_jerk_scale = 1
SUDDEN_SECONDS = 2.0  # shorter lane changes count as sudden
BURST_SIGMA_S = 3.0
OVERSPEED_SPACING = 12.0
OVERSPEED_BUMP = 10.0  # m/s
PLATOON_SIZE = 10
SCRIPT_SPEED = 25.0
SUDDEN_SCRIPT_S = 1.3
OVERTAKE_SCRIPT_S = 3.0
TRAFFIC_SPAN = 150.0  # traffic is placed in [-span, span] metres around the subject
LABELS = ("aggressive", "conservative")


@dataclass(frozen=True)
class GeneratorParams:
    """Episode parameters.

    ``desired_speed``, ``speed_spread``, ``lane_change_rate``,
    ``lateral_jerk_scale`` and ``weave_amplitude`` describe the subject;
    background vehicles drive at ``traffic_speed`` with per-vehicle
    spread ``traffic_spread``.

    Attributes:
        lanes: Lane count, 2 to 8.
        n_vehicles: Total vehicles including the subject.
        desired_speed: Subject cruise speed, m/s.
        speed_spread: Peak extra speed of the subject's burst (0 = none), m/s.
        headway_time: IDM time headway, s.
        lane_change_rate: Subject lane-change requests per 100 frames.
        lateral_jerk_scale: Lateral jerk multiplier; duration scales as its -1/3 power.
        weave_amplitude: Lateral weaving amplitude in metres (0 = none).
        seed: Seed for placement and event timing.
        traffic_speed: Background desired speed, m/s.
        traffic_spread: Standard deviation of background desired speeds, m/s.
        road_length: Length of the initial placement stretch, m.
        weave_cycles: Full oscillations per weaving segment.
        weave_period: Frames per oscillation.
    """

    lanes: int = 4
    n_vehicles: int = 20
    desired_speed: float = 25.0
    speed_spread: float = 0.0
    headway_time: float = 1.5
    lane_change_rate: float = 0.0
    lateral_jerk_scale: float = 1.0
    weave_amplitude: float = 0.0
    seed: int = 0
    traffic_speed: float = 25.0
    traffic_spread: float = 0.3
    road_length: float = 300.0
    weave_cycles: int = 3
    weave_period: int = 40

    def __post_init__(self) -> None:
        if not 2 <= self.lanes <= 8:
            raise DomainError(f"lanes must be in 2..8 (lateral styles need a second lane), got {self.lanes}")
        if self.n_vehicles < 1:
            raise DomainError(f"n_vehicles must be >= 1, got {self.n_vehicles}")
        for name in ("desired_speed", "speed_spread", "headway_time", "lane_change_rate",
                     "lateral_jerk_scale", "weave_amplitude", "traffic_speed", "traffic_spread"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise DomainError(f"{name} must be a finite value >= 0, got {v}")
        if self.lateral_jerk_scale == 0:
            raise DomainError("lateral_jerk_scale must be > 0")
        if not self.road_length > 0:
            raise DomainError("road_length must be > 0")
        if self.weave_cycles < 1 or self.weave_period < 4:
            raise DomainError("weave_cycles must be >= 1 and weave_period >= 4")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


PRESETS = {
    "conservative": GeneratorParams(),
    "aggressive": GeneratorParams(
        desired_speed=35.0, speed_spread=10.0, lane_change_rate=1.0, lateral_jerk_scale=3.0, weave_amplitude=1.5
    ),
}


@dataclass(frozen=True)
class Maneuver:
    agent_id: str
    style: StyleKind
    start: int
    peak: int
    end: int
    count: int = 0  # lateral extrema incl. entry and exit troughs, weaving only


@dataclass
class EpisodeTruth:
    labels: dict[str, str]
    maneuvers: list[Maneuver]
    collisions: int = 0
    subject: str = SUBJECT

    def for_agent(self, agent: str, style=None) -> list[Maneuver]:
        style = StyleKind.parse(style) if style is not None else None
        return [m for m in self.maneuvers if m.agent_id == agent and (style is None or m.style is style)]

    def labels_csv(self) -> str:
        buf = _stdio.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("agent_id", "label"))
        for a, lab in self.labels.items():
            w.writerow((a, lab))
        return buf.getvalue()

    def maneuvers_csv(self) -> str:
        buf = _stdio.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("agent_id", "style", "start", "peak", "end"))
        for m in self.maneuvers:
            w.writerow((m.agent_id, m.style.value, m.start, m.peak, m.end))
        return buf.getvalue()


def idm_acceleration(v, v0, gap, dv, headway: float, a_max, b: float = B_COMF, s0: float = S0):
    """IDM acceleration; ``gap`` is bumper-to-bumper (``inf`` = free road), ``dv = v - v_leader``."""
    v = np.asarray(v, dtype=float)
    v0 = np.maximum(np.asarray(v0, dtype=float), 1e-6)
    s_star = s0 + np.maximum(0.0, v * headway + v * dv / (2.0 * np.sqrt(a_max * b)))
    with np.errstate(divide="ignore", invalid="ignore"):
        interaction = np.where(np.isfinite(gap), (s_star / np.maximum(gap, 0.1)) ** 2, 0.0)
    return a_max * (1.0 - (v / v0) ** IDM_DELTA - interaction)


def quintic(s):
    """Minimum-jerk blend from 0 to 1 on ``s`` in [0, 1]."""
    s = np.clip(s, 0.0, 1.0)
    return s**3 * (10 - 15 * s + 6 * s * s)


def lane_change_frames(jerk_scale: float, frame_rate: float) -> int:
    return max(4, int(round(BASE_LC_SECONDS / jerk_scale ** (1.0 / 3.0) * frame_rate)))


@dataclass
class _LateralPlan:
    start: int
    frames: int
    y0: float
    y1: float = 0.0
    amplitude: float = 0.0
    cycles: int = 0

    @property
    def end(self) -> int:
        return self.start + self.frames

    def y(self, k: int) -> float:
        s = (k - self.start) / self.frames
        if self.cycles:  # one-sided weave from y0; the envelope makes the middle crest the largest
            s = min(max(s, 0.0), 1.0)
            env = 0.6 + 0.4 * math.sin(math.pi * s)
            return self.y0 + self.amplitude * env * (1 - math.cos(2 * math.pi * self.cycles * s)) / 2
        return self.y0 + (self.y1 - self.y0) * float(quintic(s))


@dataclass
class _World:
    """Mutable simulation state; index 0 is the subject."""

    ids: list[str]
    x: np.ndarray
    y: np.ndarray
    v: np.ndarray
    v0: np.ndarray
    a_max: np.ndarray
    headway: float
    frame_rate: float
    speed_profile: Callable[[int], float] | None = None
    plan: _LateralPlan | None = None
    collisions: int = 0
    fixed: np.ndarray | None = None  # vehicles moving at constant speed

    def leaders(self, x=None, y=None):
        x = self.x if x is None else x
        y = self.y if y is None else y
        dx = x[None, :] - x[:, None]
        same = np.abs(y[None, :] - y[:, None]) < SAME_LANE
        ahead = same & (dx > 0)
        dx_m = np.where(ahead, dx, np.inf)
        j = np.argmin(dx_m, axis=1)
        gap = dx_m[np.arange(len(x)), j] - VEHICLE_LENGTH
        return j, gap

    def step(self, k: int) -> None:
        dt = 1.0 / self.frame_rate
        j, gap = self.leaders()
        dv = np.where(np.isfinite(gap), self.v - self.v[j], 0.0)
        acc = idm_acceleration(self.v, self.v0, gap, dv, self.headway, self.a_max)
        acc = np.maximum(acc, -9.0)
        if self.fixed is not None:
            acc = np.where(self.fixed, 0.0, acc)
        v_new = np.maximum(self.v + acc * dt, 0.0)
        if self.speed_profile is not None:
            v_new[0] = self.speed_profile(k + 1)
        self.x = self.x + 0.5 * (self.v + v_new) * dt
        self.v = v_new
        if self.plan is not None:
            self.y[0] = self.plan.y(k + 1)
            if k + 1 >= self.plan.end:
                self.plan = None
        dx = np.abs(self.x[None, :] - self.x[:, None])
        dy = np.abs(self.y[None, :] - self.y[:, None])
        hit = np.triu((dx < VEHICLE_LENGTH) & (dy < VEHICLE_WIDTH), 1)
        self.collisions += int(hit.sum())

    def lane_change_safe(self, target_y: float) -> bool:
        """MOBIL-style safety: gaps above ``S0`` and the new follower brakes no harder than ``B_SAFE``."""
        x0, v0 = self.x[0], self.v[0]
        others = np.abs(self.y[1:] - target_y) < SAME_LANE
        if not others.any():
            return True
        xs, vs = self.x[1:][others], self.v[1:][others]
        v0s = self.v0[1:][others]
        front = xs >= x0
        if front.any() and (xs[front].min() - x0 - VEHICLE_LENGTH) < S0:
            return False
        back = ~front
        if back.any():
            f = int(np.argmax(np.where(back, xs, -np.inf)))
            gap = x0 - xs[f] - VEHICLE_LENGTH
            if gap < S0:
                return False
            acc = idm_acceleration(vs[f], v0s[f], gap, vs[f] - v0, self.headway, A_MAX)
            if acc < -B_SAFE:
                return False
        return True

    def record(self, k: int, points: list[TrajectoryPoint]) -> None:
        for i, a in enumerate(self.ids):
            points.append(TrajectoryPoint(k, a, "car", float(self.x[i]), float(self.y[i])))


def _place(params: GeneratorParams, rng: np.random.Generator, subject_lane: int) -> tuple[np.ndarray, np.ndarray]:
    """Rejection-sample background positions with an equilibrium-ish minimum spacing."""
    n = params.n_vehicles
    xs = np.zeros(n)
    lanes = np.zeros(n, dtype=int)
    lanes[0] = subject_lane
    spacing = VEHICLE_LENGTH + S0 + 0.5 * params.headway_time * params.traffic_speed
    half = params.road_length / 2.0
    for i in range(1, n):
        for _ in range(500):
            lane = int(rng.integers(params.lanes))
            x = float(rng.uniform(-half, half))
            clash = (lanes[:i] == lane) & (np.abs(xs[:i] - x) < spacing)
            # the subject's lane stays clear ahead so its desired speed is reachable
            if not clash.any() and not (lane == subject_lane and x > -spacing):
                xs[i], lanes[i] = x, lane
                break
        else:
            raise PlacementError(
                f"cannot place {n} vehicles on {params.lanes} lanes x {params.road_length} m "
                f"with {spacing:.1f} m spacing"
            )
    return xs, lanes.astype(float) * LANE_WIDTH


def _label_agents(ids: Sequence[str], maneuvers: Sequence[Maneuver]) -> dict[str, str]:
    busy = {m.agent_id for m in maneuvers}
    return {a: ("aggressive" if a in busy else "conservative") for a in ids}


def _gauss_bump(center: float, sigma: float, amplitude: float, base: float) -> Callable[[int], float]:
    return lambda k: base + amplitude * math.exp(-0.5 * ((k - center) / sigma) ** 2)


def simulate(
    params: GeneratorParams, horizon: int = DEFAULT_HORIZON, frame_rate: float = 10.0, capacity: int = 1000
) -> tuple[TrajectorySet, EpisodeTruth]:
    """Run one seeded episode.

    Raises:
        DomainError: horizon below 50 frames or more vehicles than ``capacity``.
        PlacementError: the vehicles do not fit on the road with safe spacing.
    """
    if horizon < MIN_HORIZON:
        raise DomainError(f"horizon must be >= {MIN_HORIZON}, got {horizon}")
    if params.n_vehicles > capacity:
        raise DomainError(f"n_vehicles {params.n_vehicles} exceeds capacity {capacity}")
    rng = np.random.default_rng(params.seed)
    subject_lane = int(rng.integers(params.lanes))
    x, y = _place(params, rng, subject_lane)
    n = params.n_vehicles
    v0 = np.concatenate([[params.desired_speed], params.traffic_speed + params.traffic_spread * rng.standard_normal(n - 1)])
    v0 = np.maximum(v0, 1.0)
    a_max = np.full(n, A_MAX)
    a_max[0] = A_SUBJECT
    world = _World([f"v{i}" for i in range(n)], x, y, v0.copy(), v0, a_max, params.headway_time, frame_rate)
    maneuvers: list[Maneuver] = []

    # Event schedule: burst, weaving segment, lane-change requests
    sigma = BURST_SIGMA_S * frame_rate
    burst_peak = None
    if params.speed_spread > 0:
        burst_peak = int(rng.integers(int(horizon * 0.3), int(horizon * 0.7) + 1))
        base, amp = params.desired_speed, params.speed_spread
        bump = _gauss_bump(burst_peak, sigma, amp, base)
        world.speed_profile = None
        world_v0_profile = bump
    else:
        world_v0_profile = None
    weave_start = None
    weave_frames = params.weave_cycles * params.weave_period
    if params.weave_amplitude > 0 and weave_frames < horizon - 20:
        weave_start = int(rng.integers(10, horizon - weave_frames - 10 + 1))
    n_requests = rng.poisson(params.lane_change_rate * horizon / 100.0)
    requests = sorted(int(r) for r in rng.integers(5, horizon - 5, size=n_requests))
    lc_frames = lane_change_frames(params.lateral_jerk_scale, frame_rate)

    points: list[TrajectoryPoint] = []
    pending: list[int] = list(requests)
    lane = subject_lane
    direction = 1 if lane < params.lanes - 1 else -1
    for k in range(horizon):
        world.record(k, points)
        if world_v0_profile is not None:
            world.v0[0] = world_v0_profile(k)
        if world.plan is None and weave_start is not None and k == weave_start:
            world.plan = _LateralPlan(k, weave_frames, world.y[0], amplitude=params.weave_amplitude * direction,
                                      cycles=params.weave_cycles)
            maneuvers.append(Maneuver(SUBJECT, StyleKind.WEAVING, k, k + weave_frames // 2, k + weave_frames,
                                      2 * params.weave_cycles + 1))
        if world.plan is None and pending and pending[0] <= k and k + lc_frames < horizon:
            if weave_start is not None and k < weave_start + weave_frames and k + lc_frames > weave_start:
                pass  # keep the weaving segment free of lane changes
            else:
                if not 0 <= lane + direction < params.lanes:
                    direction = -direction
                target = (lane + direction) * LANE_WIDTH
                if world.lane_change_safe(target):
                    world.plan = _LateralPlan(k, lc_frames, world.y[0], target)
                    style = (StyleKind.SUDDEN_LANE_CHANGE if lc_frames < SUDDEN_SECONDS * frame_rate
                             else StyleKind.OVERTAKING)
                    maneuvers.append(Maneuver(SUBJECT, style, k, k + lc_frames // 2, k + lc_frames))
                    lane += direction
                    pending.pop(0)
                elif k - pending[0] > 5 * frame_rate:
                    pending.pop(0)  # gap never opened
        world.step(k)
    if burst_peak is not None:
        maneuvers.append(Maneuver(SUBJECT, StyleKind.OVERSPEEDING, max(0, int(burst_peak - 2 * sigma)), burst_peak,
                                  min(horizon - 1, int(burst_peak + 2 * sigma))))
    maneuvers.sort(key=lambda m: (m.peak, m.style.value))
    ts = TrajectorySet.from_points(points, frame_rate)
    return ts, EpisodeTruth(_label_agents(world.ids, maneuvers), maneuvers, world.collisions)


# Scripted single-maneuver episodes -------------------------------------------------

SCRIPTED_STYLES = (
    StyleKind.OVERSPEEDING,
    StyleKind.OVERTAKING,
    StyleKind.SUDDEN_LANE_CHANGE,
    StyleKind.WEAVING,
)


def scripted_episode(
    style,
    seed: int,
    *,
    n_vehicles: int = 10,
    lanes: int = 4,
    horizon: int = DEFAULT_HORIZON,
    frame_rate: float = 10.0,
    traffic_spread: float = 0.0,
    peak: int | None = None,
) -> tuple[TrajectorySet, EpisodeTruth]:
    """One subject maneuver of ``style`` with a known peak frame.

    The subject ``v0`` starts in the middle lane (rounded down) and moves
    toward the next lane up. The scene has three parts: the subject; a fixed scripted cast
    (two anchors travelling beside the subject for lateral styles, a
    platoon on the neighbouring lanes for overspeeding); and
    ``n_vehicles`` traffic vehicles placed at random at least 30 m from the
    subject. Traffic cruises at the subject's base speed when
    ``traffic_spread`` is 0 (no interaction with the maneuver); otherwise
    it follows IDM with spread desired speeds and drifts through the scene.
    """
    style = StyleKind.parse(style)
    if style not in SCRIPTED_STYLES:
        raise DomainError(f"no script for {style.value}")
    if not 2 <= lanes <= 8:
        raise DomainError(f"lanes must be in 2..8, got {lanes}")
    if horizon < MIN_HORIZON:
        raise DomainError(f"horizon must be >= {MIN_HORIZON}, got {horizon}")
    if n_vehicles < 0:
        raise DomainError(f"n_vehicles must be >= 0, got {n_vehicles}")
    rng = np.random.default_rng([seed, SCRIPTED_STYLES.index(style)])
    base = SCRIPT_SPEED
    if peak is None:
        peak = int(rng.integers(int(horizon * 0.4), int(horizon * 0.6) + 1))

    speed_profile = None
    plan = None
    home = (lanes - 1) // 2  # subject lane: the middle, leaning left
    if style is StyleKind.OVERSPEEDING:
        sigma = BURST_SIGMA_S * frame_rate
        speed_profile = _gauss_bump(peak, sigma, OVERSPEED_BUMP, base)
        maneuver = Maneuver(SUBJECT, style, max(0, int(peak - 2 * sigma)), peak,
                            min(horizon - 1, int(peak + 2 * sigma)))
        # regular platoons on the neighbouring lanes so encounters track the gain smoothly
        pool = [lane for lane in (home - 1, home + 1) if 0 <= lane < lanes]
        cast_x, cast_y = [], []
        for i in range(PLATOON_SIZE):
            lane = pool[i % len(pool)]
            slot = i // len(pool)
            offset = OVERSPEED_SPACING * (i % len(pool)) / len(pool)
            cast_x.append(12.0 + offset + slot * OVERSPEED_SPACING + float(rng.uniform(-1.0, 1.0)))
            cast_y.append(lane * LANE_WIDTH)
        gain = OVERSPEED_BUMP * sigma / frame_rate * math.sqrt(2 * math.pi)
        clear_ahead = gain + 40.0
    else:
        target_lane, anchor_dx = home + 1, 8.0
        if style is StyleKind.WEAVING:
            # weave toward the next lane, anchors one lane further out when it exists
            cycles, period = 3, 40
            frames = cycles * period
            start = peak - frames // 2
            target_lane = min(home + 2, lanes - 1)
            wide = target_lane == home + 2
            anchor_dx = 4.5 if wide else 5.5
            amp = 3.0 if wide else 1.6
            plan = _LateralPlan(start, frames, home * LANE_WIDTH, amplitude=amp, cycles=cycles)
            maneuver = Maneuver(SUBJECT, style, start, peak, start + frames, 2 * cycles + 1)
        else:
            seconds = SUDDEN_SCRIPT_S if style is StyleKind.SUDDEN_LANE_CHANGE else OVERTAKE_SCRIPT_S
            frames = int(round(seconds * frame_rate))
            frames += frames % 2  # even, so the midpoint is a frame
            start = peak - frames // 2
            plan = _LateralPlan(start, frames, home * LANE_WIDTH, target_lane * LANE_WIDTH)
            maneuver = Maneuver(SUBJECT, style, start, peak, start + frames)
        cast_x = [anchor_dx + rng.uniform(-0.25, 0.25), -anchor_dx + rng.uniform(-0.25, 0.25)]
        cast_y = [target_lane * LANE_WIDTH] * 2
        clear_ahead = 30.0

    tx, ty, tv = _traffic(rng, n_vehicles, lanes, home, base, traffic_spread, clear_ahead,
                          list(zip(cast_x, cast_y)))
    n_cast = len(cast_x)
    total = 1 + n_cast + n_vehicles
    ids = [f"v{i}" for i in range(total)]
    x = np.array([0.0] + cast_x + tx)
    y = np.array([home * LANE_WIDTH] + cast_y + ty, dtype=float)
    v = np.array([base] * (1 + n_cast) + tv)
    fixed = np.array([True] * (1 + n_cast) + [traffic_spread == 0] * n_vehicles)
    world = _World(ids, x, y, v.copy(), v, np.full(total, A_MAX), 1.5, frame_rate,
                   speed_profile=speed_profile, fixed=fixed)
    if speed_profile is not None:
        world.v[0] = speed_profile(0)
    points: list[TrajectoryPoint] = []
    for k in range(horizon):
        world.record(k, points)
        if plan is not None and k == plan.start:
            world.plan = plan
        world.step(k)
    ts = TrajectorySet.from_points(points, frame_rate)
    return ts, EpisodeTruth(_label_agents(ids, [maneuver]), [maneuver], world.collisions)


def _traffic(rng, n: int, lanes: int, home: int, base: float, spread: float, clear_ahead: float, occupied=()):
    """Random traffic at least 30 m from the subject; its lane stays clear ``clear_ahead`` metres ahead."""
    spacing = VEHICLE_LENGTH + S0 + 3.5
    taken = list(occupied)
    xs: list[float] = []
    ys: list[float] = []
    vs: list[float] = []
    for _ in range(n):
        for _ in range(1000):
            lane = int(rng.integers(lanes))
            xv = float(rng.uniform(-TRAFFIC_SPAN, TRAFFIC_SPAN))
            if abs(xv) < 30.0 or (lane == home and 0.0 <= xv < clear_ahead):
                continue
            if any(abs(xv - a) < spacing and abs(lane * LANE_WIDTH - b) < SAME_LANE for a, b in taken):
                continue
            xs.append(xv)
            ys.append(lane * LANE_WIDTH)
            taken.append((xv, lane * LANE_WIDTH))
            vs.append(base + spread * float(rng.standard_normal()))
            break
        else:
            raise PlacementError(f"cannot place {n} traffic vehicles on {lanes} lanes")
    return xs, ys, vs


# Calibration ------------------------------------------------------------------------

MEASURES = ("overspeeding_sle", "lateral_sle", "lateral_sie", "weave_count")
TUNABLE = ("speed_spread", "lane_change_rate", "lateral_jerk_scale", "weave_amplitude", "desired_speed")
_SEED_VALUE = {"speed_spread": 2.0, "lane_change_rate": 0.2, "lateral_jerk_scale": 1.0, "weave_amplitude": 0.5,
               "desired_speed": 25.0}


@dataclass
class CalibrationResult:
    params: GeneratorParams
    measurements: dict[str, float]
    iterations: int
    converged: bool
    history: list[dict] = field(default_factory=list)


def measure(report: StyleReport) -> dict[str, float]:
    """Summary statistics of a subject report used by calibration."""
    lat = report.curves[StyleKind.OVERTAKING]
    return {
        "overspeeding_sle": report.sle_max(StyleKind.OVERSPEEDING),
        "lateral_sle": lat.sle_max,
        "lateral_sie": float(lat.sie.max()),
        "weave_count": float(report.weave_count),
    }


def measure_params(params: GeneratorParams, seeds: Sequence[int], horizon: int = DEFAULT_HORIZON,
                   config: RunConfig | None = None) -> dict[str, float]:
    """Mean subject measurements over episodes with the given seeds."""
    config = config or RunConfig()
    rows = []
    for s in seeds:
        ts, _ = simulate(dataclasses.replace(params, seed=s), horizon, config.frame_rate, config.capacity)
        rows.append(measure(EpisodeAnalysis(ts, config).report(SUBJECT)))
    return {k: float(np.mean([r[k] for r in rows])) for k in MEASURES}


def _band_distance(m: Mapping[str, float], bands: Mapping[str, tuple[float, float]]) -> float:
    total = 0.0
    for key, (lo, hi) in bands.items():
        scale = max(abs(lo) if math.isfinite(lo) else 0.0, abs(hi) if math.isfinite(hi) else 0.0, 1e-9)
        total += max(0.0, lo - m[key], m[key] - hi) / scale
    return total


def calibrate(
    target: str,
    thresholds: Mapping[str, tuple[float, float]],
    max_iters: int = 20,
    *,
    base: GeneratorParams | None = None,
    seeds: Sequence[int] = (0, 1, 2),
    horizon: int = DEFAULT_HORIZON,
    config: RunConfig | None = None,
    step: float = 2.0,
) -> CalibrationResult:
    """Coordinate search on the subject parameters until measurements fall in ``thresholds``.

    ``thresholds`` maps measurement names (see :data:`MEASURES`) to
    ``(lo, hi)`` bands. Each iteration scales one parameter, round robin,
    by ``step`` (aggressive target) or ``1/step`` (conservative target) and
    keeps the change only if the band distance does not grow. Speed moves
    by ``step ** 0.25`` and never drops below the traffic speed.

    Raises:
        DomainError: bad target, non-finite band edges with no finite side, or ``max_iters < 1``.
        CalibrationError: no convergence; ``.best`` holds the best result.
    """
    if target not in LABELS:
        raise DomainError(f"target must be one of {LABELS}, got {target!r}")
    if max_iters < 1:
        raise DomainError(f"max_iters must be >= 1, got {max_iters}")
    for key, band in thresholds.items():
        if key not in MEASURES:
            raise DomainError(f"unknown measurement {key!r}; expected one of {MEASURES}")
        lo, hi = band
        if math.isnan(lo) or math.isnan(hi) or lo > hi or not (math.isfinite(lo) or math.isfinite(hi)):
            raise DomainError(f"invalid band {band} for {key}")
    params = base or (PRESETS["aggressive"] if target == "conservative" else PRESETS["conservative"])
    grow = target == "aggressive"
    m = measure_params(params, seeds, horizon, config)
    dist = _band_distance(m, thresholds)
    history = [{"params": params.to_dict(), "measurements": m, "distance": dist}]
    best = CalibrationResult(params, m, 0, dist == 0.0, history)
    if dist == 0.0:
        return best
    coords = list(TUNABLE)
    for it in range(1, max_iters + 1):
        name = coords[(it - 1) % len(coords)]
        old = getattr(params, name)
        factor = step ** 0.25 if name == "desired_speed" else step
        if grow:
            new = old * factor if old > 0 else _SEED_VALUE[name]
        else:
            new = old / factor
            if name == "desired_speed":
                new = max(new, params.traffic_speed)
            elif name == "lateral_jerk_scale":
                new = max(new, 0.25)
            elif new < 0.05 * _SEED_VALUE[name]:
                new = 0.0
        trial = dataclasses.replace(params, **{name: new})
        m_trial = measure_params(trial, seeds, horizon, config)
        d_trial = _band_distance(m_trial, thresholds)
        history.append({"params": trial.to_dict(), "measurements": m_trial, "distance": d_trial})
        if d_trial <= dist:
            params, m, dist = trial, m_trial, d_trial
            best = CalibrationResult(params, m, it, dist == 0.0, history)
        if dist == 0.0:
            best.iterations = it
            return best
    best.iterations = max_iters
    raise CalibrationError(f"no convergence in {max_iters} iterations (band distance {dist:.3g})", best)
