"""Run configuration: every tunable default in one serialisable document."""
from __future__ import annotations

import dataclasses
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError

CONFIG_ENV = "STYLEGRAPH_CONFIG"
FEATURE_LAYOUTS = ("coefficients", "extended")


@dataclass(frozen=True)
class RunConfig:
    """Pipeline parameters.

    Attributes:
        mu: Proximity threshold in metres for a traffic-graph edge.
        capacity: Rows of the cumulative adjacency matrix.
        dwell: Frames an absent, edge-free agent keeps its row.
        degree: Polynomial degree of every centrality fit.
        delta: Target bound on the regularised condition number.
        sle_window: Frames per local fit when sampling SLE/SIE curves.
        weave_window: Frames per sliding quadratic in weaving detection.
        stride: Step between weaving windows.
        eps_ball: Radius (frames) of the sharpness ball and dedupe distance.
        sharp_tol: Minimum sharpness of an admitted critical point.
        conservative_tol: Absolute SLE bound for the conservative flag;
            ``None`` means 5% of the episode median.
        frame_rate: Sampling rate ``f`` in Hz.
        seed: Seed for every stochastic step.
        feature_layout: ``coefficients`` (2(d+1) values) or ``extended``.
        series_noise: Uniform noise amplitude added to centrality series
            before fitting (robustness experiments; 0 disables).
        jobs: Worker bound for per-agent / per-episode work.
        paths: Free-form named paths (inputs/outputs), carried verbatim.
    """

    mu: float = 10.0
    capacity: int = 1000
    dwell: int = 10
    degree: int = 2
    delta: float = 2.0
    sle_window: int = 51
    weave_window: int = 11
    stride: int = 2
    eps_ball: int = 2
    sharp_tol: float = 1e-3
    conservative_tol: float | None = None
    frame_rate: float = 10.0
    seed: int = 0
    feature_layout: str = "coefficients"
    series_noise: float = 0.0
    jobs: int = 1
    paths: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        checks = [
            (self.mu > 0 and math.isfinite(self.mu), "mu must be a finite value > 0"),
            (self.capacity >= 1, "capacity must be >= 1"),
            (self.dwell >= 0, "dwell must be >= 0"),
            (self.degree >= 2, "degree must be >= 2 (SIE needs a second derivative)"),
            (self.delta > 1, "delta must be > 1"),
            (self.sle_window >= self.degree + 1, "sle_window must be >= degree + 1"),
            (self.weave_window >= 3, "weave_window must be >= 3"),
            (self.stride >= 1, "stride must be >= 1"),
            (self.eps_ball >= 1, "eps_ball must be >= 1"),
            (self.sharp_tol >= 0, "sharp_tol must be >= 0"),
            (self.conservative_tol is None or self.conservative_tol >= 0, "conservative_tol must be >= 0"),
            (self.frame_rate > 0, "frame_rate must be > 0"),
            (self.feature_layout in FEATURE_LAYOUTS, f"feature_layout must be one of {FEATURE_LAYOUTS}"),
            (self.series_noise >= 0, "series_noise must be >= 0"),
            (self.jobs >= 1, "jobs must be >= 1"),
        ]
        for ok, message in checks:
            if not ok:
                raise ConfigError(message)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {unknown}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("config document must be a JSON object")
        return cls.from_dict(data)

    def replace(self, **overrides) -> "RunConfig":
        """Copy with the non-``None`` overrides applied (flags win over the document)."""
        return dataclasses.replace(self, **{k: v for k, v in overrides.items() if v is not None})


def load_config(path: str | os.PathLike | None = None) -> RunConfig:
    """Read a config document; falls back to ``$STYLEGRAPH_CONFIG`` then defaults."""
    if path is None:
        path = os.environ.get(CONFIG_ENV) or None
    if path is None:
        return RunConfig()
    return RunConfig.from_json(Path(path).read_text(encoding="utf-8"))
