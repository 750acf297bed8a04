"""Style likelihood (SLE) and intensity (SIE) estimates, weaving detection.

SLE is the magnitude of the first time-derivative of a centrality
polynomial, SIE the magnitude of the second. Overspeeding reads the degree
centrality; overtaking and sudden lane changes read closeness. Weaving is
detected from repeated sharp critical points of closeness.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Hashable, Iterable, Mapping, Sequence

import numpy as np

from .centrality import (
    CentralitySeries,
    _check_window,
    closeness,
    degree_series_from_table,
)
from .config import RunConfig
from .errors import DomainError, StyleKindError
from .graph import build_snapshot, replay_adjacency
from .io import TrajectorySet, inject_series_noise, write_plot_csv
from .polyfit import CentralityPolynomial, eval_poly, fit_values, select_alpha, sliding_fit


class StyleKind(str, enum.Enum):
    """Specific styles plus the conservative global label."""

    OVERSPEEDING = "overspeeding"
    OVERTAKING = "overtaking"
    SUDDEN_LANE_CHANGE = "sudden_lane_change"
    WEAVING = "weaving"
    CONSERVATIVE = "conservative"

    @classmethod
    def parse(cls, value: "str | StyleKind") -> "StyleKind":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("-", "_").replace(" ", "_")
        for kind in cls:
            if kind.value == key or kind.name.lower() == key:
                return kind
        raise DomainError(f"unknown style {value!r}")


SPECIFIC_STYLES = (
    StyleKind.OVERSPEEDING,
    StyleKind.OVERTAKING,
    StyleKind.SUDDEN_LANE_CHANGE,
    StyleKind.WEAVING,
)
# Overtaking and sudden lane changes share the closeness estimator.
CENTRALITY_OF = {
    StyleKind.OVERSPEEDING: "degree",
    StyleKind.OVERTAKING: "closeness",
    StyleKind.SUDDEN_LANE_CHANGE: "closeness",
    StyleKind.WEAVING: "closeness",
}


def _require_kind(p_kind: str | None, style: StyleKind) -> None:
    style = StyleKind.parse(style)
    if style not in CENTRALITY_OF or style is StyleKind.WEAVING:
        raise StyleKindError(f"{style.value} has no polynomial likelihood estimator")
    want = CENTRALITY_OF[style]
    if p_kind is not None and p_kind != want:
        raise StyleKindError(f"{style.value} needs a {want} polynomial, got {p_kind}")


def argmax_earliest(values: Sequence[float]) -> int:
    """Index of the maximum; ties resolve to the earliest index."""
    return int(np.argmax(np.asarray(values)))  # np.argmax already returns the first hit


@dataclass
class StyleCurve:
    """Per-frame SLE/SIE samples with the maximum and its frame."""

    times: np.ndarray
    sle: np.ndarray
    sie: np.ndarray
    sle_max: float = 0.0
    t_sle: int = 0

    @classmethod
    def from_samples(cls, times, sle, sie) -> "StyleCurve":
        times = np.asarray(times, dtype=np.int64)
        sle = np.abs(np.asarray(sle, dtype=float))
        sie = np.abs(np.asarray(sie, dtype=float))
        if times.size == 0:
            raise DomainError("empty curve")
        k = argmax_earliest(sle)
        return cls(times, sle, sie, float(sle[k]), int(times[k]))

    def to_dict(self) -> dict:
        return {
            "sle_max": self.sle_max,
            "t_sle": self.t_sle,
            "sie_max": float(self.sie.max()),
            "sie_mean": float(self.sie.mean()),
        }


@dataclass(frozen=True)
class CriticalPoint:
    t_c: float
    sharpness: float


def style_likelihood(p: CentralityPolynomial, kind) -> StyleCurve:
    """``|p'(t)|`` sampled at every frame of ``p.window`` (SIE filled alongside)."""
    _require_kind(p.kind, StyleKind.parse(kind))
    t = np.arange(p.window[0], p.window[1] + 1)
    return StyleCurve.from_samples(t, eval_poly(p, t, 1), eval_poly(p, t, 2))


def style_intensity(p: CentralityPolynomial, kind) -> np.ndarray:
    """``|p''(t)|`` sampled at every frame of ``p.window``."""
    _require_kind(p.kind, StyleKind.parse(kind))
    t = np.arange(p.window[0], p.window[1] + 1)
    return np.abs(np.asarray(eval_poly(p, t, 2), dtype=float) * np.ones(t.size))


def detect_weaving(
    series: CentralitySeries,
    window_len: int = 11,
    stride: int = 2,
    eps_ball: float = 2,
    sharp_tol: float = 1e-3,
) -> list[CriticalPoint]:
    """Sharp critical points of sliding quadratic fits.

    Each window's vertex ``t_c`` is admitted when it lies strictly inside
    the window and its sharpness ``max_{|t - t_c| <= eps} |p(t) - p(t_c)| / eps``
    (``|beta_2| * eps`` for a quadratic), divided by the mean absolute
    level of the series, exceeds ``sharp_tol``. The level normalisation
    makes admission independent of the centrality's units and of how many
    vehicles share the frame; the reported sharpness stays in series units.
    Points closer than ``eps_ball`` to a sharper one are dropped.

    Raises:
        StyleKindError: series is not closeness.
        DomainError: bad stride, ball, or a window longer than the series.
    """
    if series.kind != "closeness":
        raise StyleKindError(f"weaving reads closeness, got {series.kind}")
    if stride <= 0:
        raise DomainError(f"stride must be > 0, got {stride}")
    if not eps_ball > 0:
        raise DomainError(f"eps_ball must be > 0, got {eps_ball}")
    if window_len < 3:
        raise DomainError(f"window_len must be >= 3 for a quadratic, got {window_len}")
    n = len(series)
    if window_len > n:
        raise DomainError(f"window_len {window_len} exceeds series length {n}")
    y = series.values
    t0 = series.window[0]
    level = float(np.mean(np.abs(y))) or 1.0
    half = (window_len - 1) / 2.0
    u = np.arange(window_len) - half
    candidates: list[CriticalPoint] = []
    for s in range(0, n - window_len + 1, stride):
        p = fit_values(u, y[s : s + window_len], 2, origin=0.0)
        b1, b2 = p.beta[1], p.beta[2]
        if b2 == 0:
            continue
        uc = -b1 / (2.0 * b2)
        if not -half < uc < half:
            continue
        sharpness = abs(b2) * eps_ball
        if sharpness / level > sharp_tol:
            candidates.append(CriticalPoint(float(t0 + s + half + uc), float(sharpness)))
    kept: list[CriticalPoint] = []
    for c in sorted(candidates, key=lambda c: (-c.sharpness, c.t_c)):
        if all(abs(c.t_c - k.t_c) > eps_ball for k in kept):
            kept.append(c)
    return sorted(kept, key=lambda c: c.t_c)


def weaving_curve(points: Sequence[CriticalPoint], window: tuple[int, int]) -> StyleCurve:
    """Impulse train: each admitted point's sharpness at its nearest frame."""
    t = np.arange(window[0], window[1] + 1)
    values = np.zeros(t.size)
    for c in points:
        k = min(max(int(math.floor(c.t_c + 0.5)) - window[0], 0), t.size - 1)
        values[k] = max(values[k], c.sharpness)
    return StyleCurve.from_samples(t, values, values)


@dataclass
class StyleReport:
    """Per-agent SLE/SIE evidence for every specific style."""

    agent_id: Hashable
    window: tuple[int, int]
    curves: dict[StyleKind, StyleCurve]
    critical_points: list[CriticalPoint]
    polynomials: dict[str, CentralityPolynomial]
    conservative_flag: bool | None = None
    tolerance: dict[str, float] | None = None

    @property
    def weave_count(self) -> int:
        return len(self.critical_points)

    def sle_max(self, style) -> float:
        return self.curves[StyleKind.parse(style)].sle_max

    def t_sle(self, style) -> int:
        return self.curves[StyleKind.parse(style)].t_sle

    def to_dict(self) -> dict:
        return {
            "agent_id": str(self.agent_id),
            "window": list(self.window),
            "styles": {k.value: c.to_dict() for k, c in self.curves.items()},
            "critical_points": [[c.t_c, c.sharpness] for c in self.critical_points],
            "weave_count": self.weave_count,
            "conservative_flag": self.conservative_flag,
            "tolerance": self.tolerance,
            "polynomials": {k: p.to_dict() for k, p in self.polynomials.items()},
        }

    def curve_csv(self, style, which: str = "sle") -> str:
        c = self.curves[StyleKind.parse(style)]
        values = c.sle if which == "sle" else c.sie
        return write_plot_csv(c.times, values, c.t_sle)


def classify_conservative(report: StyleReport, tol: float | Mapping[str, float]) -> bool:
    """True iff every non-weaving ``sle_max <= tol`` (inclusive) and no weaving point was admitted.

    ``tol`` is one bound for all styles or a per-style mapping keyed by style value.
    """
    for kind, curve in report.curves.items():
        if kind is StyleKind.WEAVING:
            continue
        bound = tol[kind.value] if isinstance(tol, Mapping) else tol
        if curve.sle_max > bound:
            return False
    return report.weave_count == 0


class EpisodeAnalysis:
    """Shares the adjacency replay and snapshots across agents of one episode."""

    def __init__(self, ts: TrajectorySet, config: RunConfig | None = None) -> None:
        self.ts = ts
        self.config = config or RunConfig()
        self._degrees: dict | None = None
        self._snapshots: dict = {}

    @property
    def degrees(self) -> dict:
        if self._degrees is None:
            c = self.config
            table: dict = {a: {} for a in self.ts.agent_index}
            for t, state, snap in replay_adjacency(self.ts, c.mu, c.capacity, c.dwell):
                self._snapshots[t] = snap
                for a, d in zip(snap.vertices, state.degrees(snap.vertices).tolist()):
                    table[a][t] = d
            self._degrees = table
        return self._degrees

    def snapshot(self, t: int):
        snap = self._snapshots.get(t)
        if snap is None:
            snap = self._snapshots[t] = build_snapshot(self.ts.frames[t], self.config.mu, t)
        return snap

    def series(self, agent, kind: str, window: tuple[int, int] | None = None) -> CentralitySeries:
        window = _check_window(self.ts, agent, window)
        if kind == "degree":
            s = degree_series_from_table(self.degrees, agent, window)
        elif kind == "closeness":
            values = [closeness(self.snapshot(t), agent) for t in range(window[0], window[1] + 1)]
            s = CentralitySeries(agent, "closeness", np.asarray(values, float), window)
        else:
            raise DomainError(f"unknown centrality kind {kind!r}")
        eps = self.config.series_noise
        if eps > 0:
            s = inject_series_noise(s, eps, self._noise_seed(agent, kind))
        return s

    def _noise_seed(self, agent, kind: str) -> int:
        key = [self.config.seed, self.ts.agent_index[agent], 0 if kind == "degree" else 1]
        return int(np.random.SeedSequence(key).generate_state(1)[0])

    def report(self, agent, window: tuple[int, int] | None = None) -> StyleReport:
        """Report without the conservative flag (see :func:`style_report`)."""
        c = self.config
        deg = self.series(agent, "degree", window)
        clo = self.series(agent, "closeness", deg.window)
        curves = {}
        polys = {}
        for series in (deg, clo):
            polys[series.kind] = global_fit(series, c.degree, c.delta)
            curve = local_curve(series, c.sle_window, c.degree, c.delta)
            for style, kind in CENTRALITY_OF.items():
                if kind == series.kind and style is not StyleKind.WEAVING:
                    curves[style] = curve
        if len(clo) >= c.weave_window:
            points = detect_weaving(clo, c.weave_window, c.stride, c.eps_ball, c.sharp_tol)
        else:
            points = []
        curves[StyleKind.WEAVING] = weaving_curve(points, clo.window)
        curves = {k: curves[k] for k in SPECIFIC_STYLES}
        return StyleReport(agent, deg.window, curves, points, polys)


def global_fit(series: CentralitySeries, d: int = 2, delta: float = 2.0) -> CentralityPolynomial:
    """Whole-window Tikhonov fit on centred, ``[-1, 1]``-scaled time with demeaned values."""
    T = len(series)
    t0, t1 = series.window
    half = max((t1 - t0) / 2.0, 1.0)
    if T < d + 1:
        beta = np.zeros(d + 1)
        beta[0] = float(series.values.mean())
        return CentralityPolynomial(beta, d, 0.0, series.window, math.nan, (t0 + t1) / 2.0, half, series.kind)
    alpha = select_alpha(T, d, delta, centered=True)
    return fit_values(
        series.times, series.values, d, alpha,
        origin=(t0 + t1) / 2.0, scale=half, demean=True, window=series.window, kind=series.kind,
    )


def local_curve(series: CentralitySeries, length: int, d: int = 2, delta: float | None = 2.0) -> StyleCurve:
    """SLE/SIE from a fixed-length local fit around each frame."""
    fit = sliding_fit(series.values, length, d, delta, t0=series.window[0])
    return StyleCurve.from_samples(series.times, fit.derivative(1), fit.derivative(2))


def style_report(
    ts: TrajectorySet,
    agent,
    config: RunConfig | None = None,
    window: tuple[int, int] | None = None,
    *,
    analysis: EpisodeAnalysis | None = None,
) -> StyleReport:
    """Full pipeline for one agent, including the conservative flag.

    With ``config.conservative_tol`` unset the bound is 5% of the episode
    median ``sle_max`` per style, which requires analysing every agent.
    """
    analysis = analysis or EpisodeAnalysis(ts, config)
    report = analysis.report(agent, window)
    tol = resolve_tolerance(analysis, [report])
    report.tolerance = tol
    report.conservative_flag = classify_conservative(report, tol)
    return report


def resolve_tolerance(analysis: EpisodeAnalysis, known: Iterable[StyleReport] = ()) -> dict[str, float]:
    fixed = analysis.config.conservative_tol
    styles = [s for s in SPECIFIC_STYLES if s is not StyleKind.WEAVING]
    if fixed is not None:
        return {s.value: float(fixed) for s in styles}
    reports = {r.agent_id: r for r in known}
    for agent in analysis.ts.agents:
        if agent not in reports:
            try:
                reports[agent] = analysis.report(agent)
            except (DomainError, IndexError):
                continue  # agents with gaps have no full-span report
    return {
        s.value: 0.05 * float(np.median([r.sle_max(s) for r in reports.values()])) for s in styles
    }


def episode_reports(
    ts: TrajectorySet, config: RunConfig | None = None, agents: Sequence | None = None
) -> dict[Hashable, StyleReport]:
    """Reports for ``agents`` (default: all with a gap-free span), sharing one tolerance."""
    analysis = EpisodeAnalysis(ts, config)
    reports = {}
    for agent in agents if agents is not None else ts.agents:
        try:
            reports[agent] = analysis.report(agent)
        except (DomainError, IndexError):
            if agents is not None:
                raise
    tol = resolve_tolerance(analysis, reports.values())
    for r in reports.values():
        r.tolerance = tol
        r.conservative_flag = classify_conservative(r, tol)
    return reports
