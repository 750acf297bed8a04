"""Annotation aggregation, the time deviation error (TDE) and batch evaluation."""
from __future__ import annotations

import csv
import io as _stdio
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

import numpy as np

from .config import RunConfig
from .errors import DomainError, ParseError
from .io import TrajectorySet
from .styles import SPECIFIC_STYLES, EpisodeAnalysis, StyleKind


@dataclass(frozen=True)
class AnnotationSet:
    """Closed frame intervals ``[s_m, e_m]``, one per participant."""

    intervals: tuple[tuple[int, int], ...]

    def __post_init__(self) -> None:
        if not self.intervals:
            raise DomainError("an annotation set needs at least one participant")
        clean = []
        for s, e in self.intervals:
            s, e = int(s), int(e)
            if s > e:
                raise DomainError(f"interval start {s} is after end {e}")
            clean.append((s, e))
        object.__setattr__(self, "intervals", tuple(clean))

    @classmethod
    def single(cls, start: int, end: int | None = None) -> "AnnotationSet":
        return cls(((start, start if end is None else end),))

    def __len__(self) -> int:
        return len(self.intervals)


@dataclass(frozen=True)
class Aggregate:
    """Per-frame counts ``c_t`` over ``[s*, e*]`` and the induced PMF and expectation."""

    frames: np.ndarray
    counts: np.ndarray
    expected_exact: Fraction

    @property
    def pmf(self) -> np.ndarray:
        return self.counts / self.counts.sum()

    @property
    def expected(self) -> float:
        return float(self.expected_exact)

    @property
    def s_star(self) -> int:
        return int(self.frames[0])

    @property
    def e_star(self) -> int:
        return int(self.frames[-1])


def aggregate_annotations(a: AnnotationSet) -> Aggregate:
    """Count annotators covering each frame, normalise, and take the expectation.

    The expectation is computed in exact rational arithmetic.
    """
    if not isinstance(a, AnnotationSet):
        a = AnnotationSet(tuple(a))
    s_star = min(s for s, _ in a.intervals)
    e_star = max(e for _, e in a.intervals)
    frames = np.arange(s_star, e_star + 1)
    counts = np.zeros(frames.size, dtype=np.int64)
    for s, e in a.intervals:
        counts[s - s_star : e - s_star + 1] += 1
    total = int(counts.sum())
    weighted = sum(int(t) * int(c) for t, c in zip(frames, counts))
    return Aggregate(frames, counts, Fraction(weighted, total))


def tde(t_sle: float, expected_t: float, f: float) -> float:
    """``|t_sle - E[T]| / f`` in seconds."""
    if not f > 0:
        raise DomainError(f"frame rate must be > 0, got {f}")
    return abs(float(t_sle) - float(expected_t)) / f


@dataclass(frozen=True)
class EvalRecord:
    style: StyleKind
    t_sle: int | None
    expected_t: float | None
    frame_rate: float
    tde_seconds: float | None
    agent_id: str | None = None
    warning: str | None = None

    @property
    def skipped(self) -> bool:
        return self.tde_seconds is None

    def to_dict(self) -> dict:
        return {
            "style": self.style.value,
            "agent_id": self.agent_id,
            "t_sle": self.t_sle,
            "expected_t": self.expected_t,
            "frame_rate": self.frame_rate,
            "tde_seconds": self.tde_seconds,
            "warning": self.warning,
        }


def parse_annotations_csv(text: str) -> dict[StyleKind, AnnotationSet]:
    """Parse ``participant,style,start_frame,end_frame`` rows (header optional)."""
    grouped: dict[StyleKind, list[tuple[int, int]]] = {}
    for lineno, row in enumerate(csv.reader(_stdio.StringIO(text)), start=1):
        if not row or all(not c.strip() for c in row):
            continue
        if lineno == 1 and row[0].strip().lower() == "participant":
            continue
        if len(row) != 4:
            raise ParseError(f"expected 4 fields, got {len(row)}", lineno)
        _, style, s, e = (c.strip() for c in row)
        try:
            kind = StyleKind.parse(style)
            start, end = int(s), int(e)
        except (ValueError, DomainError) as exc:
            raise ParseError(str(exc), lineno) from None
        if start > end or start < 0:
            raise ParseError(f"bad interval [{start}, {end}]", lineno)
        grouped.setdefault(kind, []).append((start, end))
    return {k: AnnotationSet(tuple(v)) for k, v in grouped.items()}


def annotations_csv(annotations: Mapping[StyleKind, AnnotationSet]) -> str:
    buf = _stdio.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("participant", "style", "start_frame", "end_frame"))
    for kind, a in annotations.items():
        for m, (s, e) in enumerate(a.intervals, start=1):
            w.writerow((m, StyleKind.parse(kind).value, s, e))
    return buf.getvalue()


def evaluate_episode(
    ts: TrajectorySet,
    annotations: Mapping,
    config: RunConfig | None = None,
    agent: str | None = None,
    styles: Sequence | None = None,
) -> list[EvalRecord]:
    """Pair each style's ``t_sle`` for ``agent`` with the annotation expectation.

    ``styles`` defaults to the annotated styles; a requested style without
    annotations yields a skipped record carrying a warning.
    """
    config = config or RunConfig()
    agent = agent if agent is not None else ts.agents[0]
    annotations = {StyleKind.parse(k): v for k, v in annotations.items()}
    wanted = [StyleKind.parse(s) for s in styles] if styles is not None else list(annotations)
    report = EpisodeAnalysis(ts, config).report(agent)
    out = []
    for kind in wanted:
        if kind not in SPECIFIC_STYLES:
            raise DomainError(f"{kind.value} is not a specific style")
        if kind not in annotations:
            out.append(EvalRecord(kind, None, None, config.frame_rate, None, agent, "no annotations for style"))
            continue
        expected = aggregate_annotations(annotations[kind]).expected
        t_sle = report.t_sle(kind)
        out.append(EvalRecord(kind, t_sle, expected, config.frame_rate, tde(t_sle, expected, config.frame_rate), agent))
    return out


def summarize(records: Iterable[EvalRecord]) -> dict:
    """Mean TDE per style and overall, with counts; skipped records are only counted."""
    per: dict[str, list[float]] = {}
    skipped = 0
    for r in records:
        if r.skipped:
            skipped += 1
            continue
        per.setdefault(r.style.value, []).append(r.tde_seconds)
    every = [v for vals in per.values() for v in vals]
    return {
        "mean_tde": {k: float(np.mean(v)) for k, v in sorted(per.items())},
        "n": {k: len(v) for k, v in sorted(per.items())},
        "overall_mean_tde": float(np.mean(every)) if every else math.nan,
        "skipped": skipped,
    }


# Scripted-episode evaluation ---------------------------------------------------------

def truth_annotations(truth, agent: str) -> dict[StyleKind, AnnotationSet]:
    """One annotator marking each generator maneuver peak."""
    return {m.style: AnnotationSet.single(m.peak) for m in truth.for_agent(agent)}


def scripted_tde(style, seed: int, config: RunConfig | None = None, **episode_kwargs) -> EvalRecord:
    """TDE of the subject on one scripted episode against its truth peak."""
    from .synthgen import SUBJECT, scripted_episode

    config = config or RunConfig()
    ts, truth = scripted_episode(style, seed, frame_rate=config.frame_rate, **episode_kwargs)
    (record,) = evaluate_episode(ts, truth_annotations(truth, SUBJECT), config, SUBJECT, [style])
    return record


def _sweep_cell(args) -> float:
    style, seed, config, kwargs = args
    return scripted_tde(style, seed, config, **kwargs).tde_seconds


SWEEPS = ("density", "noise", "lanes")


def sweep_levels(kind: str, level, base: RunConfig, lanes: int = 4, per_lane: float = 2.5) -> tuple[RunConfig, dict]:
    """Config and episode arguments for one sweep level.

    ``density`` sets the vehicle count on ``lanes`` lanes, ``noise`` the
    series noise amplitude, ``lanes`` the lane count at ``per_lane``
    vehicles per lane.
    """
    if kind == "density":
        return base, {"n_vehicles": int(level), "lanes": lanes}
    if kind == "noise":
        return replace(base, series_noise=float(level)), {}
    if kind == "lanes":
        return base, {"lanes": int(level), "n_vehicles": max(3, int(round(per_lane * int(level))))}
    raise DomainError(f"unknown sweep {kind!r}; expected one of {SWEEPS}")


def run_sweep(
    kind: str,
    levels: Sequence,
    seeds: Sequence[int],
    styles: Sequence = SPECIFIC_STYLES,
    config: RunConfig | None = None,
    traffic_spread: float = 0.3,
    jobs: int | None = None,
) -> list[float]:
    """Mean TDE (seconds) per level over ``seeds`` x ``styles`` scripted episodes."""
    config = config or RunConfig()
    jobs = jobs or config.jobs
    means = []
    for level in levels:
        cfg, kwargs = sweep_levels(kind, level, config)
        kwargs["traffic_spread"] = traffic_spread
        cells = [(StyleKind.parse(st), s, replace(cfg, seed=s), kwargs) for st in styles for s in seeds]
        if jobs > 1:
            with ProcessPoolExecutor(jobs) as pool:
                values = list(pool.map(_sweep_cell, cells, chunksize=8))
        else:
            values = [_sweep_cell(c) for c in cells]
        means.append(float(np.mean(values)))
    return means
