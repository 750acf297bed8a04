"""Polynomial fits of centrality series (OLS and Tikhonov) and conditioning diagnostics.

All solves go through one SVD of the Vandermonde design ``M``: ordinary
least squares inverts the singular values, Tikhonov replaces ``1/s`` with
``s / (s**2 + alpha**2)``.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numpy.polynomial import polynomial as npoly

from .centrality import CentralitySeries
from .errors import DomainError, SingularFitError

DEFAULT_DEGREE = 2
DEFAULT_DELTA = 2.0
_GRID_STEP = 0.01  # decades


@dataclass(frozen=True)
class DesignMatrix:
    """``T x (d+1)`` monomial design, row ``r`` = ``[1, t_r, ..., t_r**d]``."""

    entries: np.ndarray
    times: np.ndarray

    @property
    def T(self) -> int:
        return self.entries.shape[0]

    @property
    def d(self) -> int:
        return self.entries.shape[1] - 1


@dataclass(frozen=True)
class CentralityPolynomial:
    """Fitted coefficients in the local coordinate ``u = (t - origin) / scale``."""

    beta: np.ndarray
    degree: int
    alpha: float = 0.0
    window: tuple[int, int] = (0, 0)
    kappa: float = math.nan
    origin: float = 0.0
    scale: float = 1.0
    kind: str | None = None
    meta: dict = field(default_factory=dict, compare=False)

    def to_dict(self) -> dict:
        return {
            "beta": [float(b) for b in self.beta],
            "degree": self.degree,
            "alpha": self.alpha,
            "window": list(self.window),
            "kappa": self.kappa,
            "origin": self.origin,
            "scale": self.scale,
            "kind": self.kind,
        }


def vandermonde(times: Sequence[float], d: int) -> DesignMatrix:
    t = np.asarray(times, dtype=float).ravel()
    if t.size == 0:
        raise DomainError("vandermonde needs at least one time value")
    if d < 0:
        raise DomainError(f"degree must be >= 0, got {d}")
    return DesignMatrix(t[:, None] ** np.arange(d + 1)[None, :], t)


def design_times(T: int, centered: bool = False) -> np.ndarray:
    """Frame offsets ``0..T-1``; ``centered`` maps them onto ``[-1, 1]``."""
    t = np.arange(T, dtype=float)
    if centered and T > 1:
        half = (T - 1) / 2.0
        t = (t - half) / half
    return t


def _singular_values(m) -> np.ndarray:
    entries = m.entries if isinstance(m, DesignMatrix) else np.asarray(m, dtype=float)
    return np.linalg.svd(entries, compute_uv=False)


def _rank_deficient(s: np.ndarray, shape: tuple[int, int]) -> bool:
    if s.size < shape[1]:
        return True
    return s[-1] <= s[0] * max(shape) * np.finfo(float).eps


def _kappa(s: np.ndarray, alpha) -> np.ndarray | float:
    smax2, smin2 = s[0] ** 2, s[-1] ** 2
    a2 = np.asarray(alpha, dtype=float) ** 2
    return (smax2 + a2) / (smin2 + a2)


def condition_number(m, alpha: float = 0.0) -> float:
    """``kappa(M^T M)``, or ``(s_max^2 + a^2) / (s_min^2 + a^2)`` when ``alpha > 0``.

    Returns ``inf`` for a rank-deficient design with ``alpha == 0``.
    """
    if alpha < 0:
        raise DomainError(f"alpha must be >= 0, got {alpha}")
    entries = m.entries if isinstance(m, DesignMatrix) else np.asarray(m, dtype=float)
    s = _singular_values(entries)
    if alpha == 0 and _rank_deficient(s, entries.shape):
        return math.inf
    if entries.shape[0] < entries.shape[1]:
        s = np.concatenate([s, np.zeros(entries.shape[1] - s.size)])
    return float(_kappa(s, alpha))


@functools.lru_cache(maxsize=None)
def select_alpha(T: int, d: int = DEFAULT_DEGREE, delta: float = DEFAULT_DELTA, centered: bool = False) -> float:
    """Smallest alpha on a log grid (0.01-decade steps) with ``kappa_alpha <= delta``.

    The design is the one used for a window of ``T`` frames (see
    :func:`design_times`). Returns 0 when no regularisation is needed.
    """
    if not delta > 1:
        raise DomainError(f"delta must be > 1, got {delta}")
    if T < 1 or d < 0:
        raise DomainError(f"need T >= 1 and d >= 0, got T={T}, d={d}")
    m = vandermonde(design_times(T, centered), d)
    s = _singular_values(m.entries)
    if s.size < d + 1:
        s = np.concatenate([s, np.zeros(d + 1 - s.size)])
    if not _rank_deficient(s, m.entries.shape) and _kappa(s, 0.0) <= delta:
        return 0.0
    # kappa_alpha -> 1 as alpha/s_max grows, so the grid always has a hit
    exponents = np.arange(-12.0, 3.0 + 1e-9, _GRID_STEP)
    grid = s[0] * 10.0 ** exponents
    ok = np.nonzero(_kappa(s, grid) <= delta)[0]
    return float(grid[ok[0]])


def _solve(M: np.ndarray, y: np.ndarray, alpha: float) -> np.ndarray:
    U, s, Vt = np.linalg.svd(M, full_matrices=False)
    if alpha == 0:
        if _rank_deficient(s, M.shape):
            raise SingularFitError("design matrix is rank deficient (repeated or too few times)")
        filt = 1.0 / s
    else:
        filt = s / (s**2 + alpha**2)
    return Vt.T @ (filt * (U.T @ y))


def fit_values(
    times: Sequence[float],
    values: Sequence[float],
    d: int = DEFAULT_DEGREE,
    alpha: float = 0.0,
    *,
    origin: float | None = None,
    scale: float = 1.0,
    demean: bool = False,
    window: tuple[int, int] | None = None,
    kind: str | None = None,
) -> CentralityPolynomial:
    """Fit ``values(times)`` with a degree-``d`` polynomial.

    ``origin`` defaults to the first time so the design starts at 0. With
    ``demean`` the values are centred before the solve and the mean is
    restored into ``beta[0]`` (the intercept escapes the shrinkage).
    """
    if alpha < 0:
        raise DomainError(f"alpha must be >= 0, got {alpha}")
    if not scale > 0:
        raise DomainError(f"scale must be > 0, got {scale}")
    t = np.asarray(times, dtype=float)
    y = np.asarray(values, dtype=float)
    if t.shape != y.shape or t.ndim != 1:
        raise DomainError("times and values must be 1-D and of equal length")
    if alpha == 0 and t.size < d + 1:
        raise SingularFitError(f"{t.size} samples cannot determine a degree-{d} polynomial")
    if origin is None:
        origin = float(t[0])
    m = vandermonde((t - origin) / scale, d)
    mean = float(y.mean()) if demean else 0.0
    beta = _solve(m.entries, y - mean, alpha)
    beta[0] += mean
    if window is None:
        window = (int(round(t[0])), int(round(t[-1])))
    return CentralityPolynomial(
        beta, d, float(alpha), window, condition_number(m, alpha), float(origin), float(scale), kind
    )


def fit_ols(series: CentralitySeries, d: int = DEFAULT_DEGREE, **kwargs) -> CentralityPolynomial:
    """Ordinary least squares; raises :class:`SingularFitError` on a rank-deficient design."""
    if len(series) < d + 1:
        raise DomainError(f"series of length {len(series)} is too short for degree {d}")
    return fit_values(series.times, series.values, d, 0.0, window=series.window, kind=series.kind, **kwargs)


def fit_tikhonov(series: CentralitySeries, d: int = DEFAULT_DEGREE, alpha: float = 0.0, **kwargs) -> CentralityPolynomial:
    """``beta = (M^T M + alpha^2 I)^-1 M^T zeta``; ``alpha = 0`` is exactly :func:`fit_ols`."""
    if alpha < 0:
        raise DomainError(f"alpha must be >= 0, got {alpha}")
    if alpha == 0:
        return fit_ols(series, d, **kwargs)
    return fit_values(series.times, series.values, d, alpha, window=series.window, kind=series.kind, **kwargs)


def eval_poly(p: CentralityPolynomial, t, order: int = 0):
    """Value (order 0) or time derivative (order 1, 2, ...) of ``p`` at absolute frame ``t``."""
    if order < 0:
        raise DomainError(f"order must be >= 0, got {order}")
    u = (np.asarray(t, dtype=float) - p.origin) / p.scale
    if order > p.degree:
        return np.zeros_like(u) if u.ndim else 0.0
    coeffs = npoly.polyder(p.beta, order) if order else p.beta
    out = npoly.polyval(u, coeffs) / p.scale**order
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class SlidingFit:
    """Coefficients of one fixed-length local fit per frame.

    Frame ``k`` of the series is covered by the window starting at
    ``starts[k]``; coefficients are in that window's ``[-1, 1]`` coordinate.
    """

    beta: np.ndarray  # (n_frames, d + 1)
    starts: np.ndarray
    length: int
    alpha: float
    t0: int

    @property
    def half(self) -> float:
        return max((self.length - 1) / 2.0, 1.0) if self.length > 1 else 1.0

    def local_u(self) -> np.ndarray:
        k = np.arange(self.beta.shape[0])
        if self.length <= 1:
            return np.zeros(k.size)
        return (k - self.starts - (self.length - 1) / 2.0) / self.half

    def derivative(self, order: int) -> np.ndarray:
        """Time derivative (per frame) of each frame's local fit, evaluated at that frame."""
        d = self.beta.shape[1] - 1
        if order > d:
            return np.zeros(self.beta.shape[0])
        u = self.local_u()
        out = np.zeros(self.beta.shape[0])
        for k in range(order, d + 1):
            out += math.perm(k, order) * self.beta[:, k] * u ** (k - order)
        return out / self.half**order

    def polynomial(self, k: int, kind: str | None = None) -> CentralityPolynomial:
        start = int(self.starts[k]) + self.t0
        return CentralityPolynomial(
            self.beta[k].copy(), self.beta.shape[1] - 1, self.alpha,
            (start, start + self.length - 1), math.nan,
            start + (self.length - 1) / 2.0, self.half, kind,
        )


def sliding_fit(
    values: Sequence[float], length: int, d: int = DEFAULT_DEGREE, delta: float | None = DEFAULT_DELTA, t0: int = 0
) -> SlidingFit:
    """Tikhonov fit over a ``length``-frame window around every frame.

    Windows are clamped inside the series, so each covers exactly
    ``min(length, len(values))`` samples. Time is centred and scaled to
    ``[-1, 1]`` per window and the values are demeaned, which keeps the
    regulariser from leaking the series level into the slope.
    ``delta=None`` means plain OLS.
    """
    y = np.asarray(values, dtype=float)
    n = y.size
    L = min(int(length), n)
    if L < d + 1:
        return SlidingFit(np.zeros((n, d + 1)), np.zeros(n, dtype=int), L, 0.0, t0)
    alpha = 0.0 if delta is None else select_alpha(L, d, delta, centered=True)
    M = vandermonde(design_times(L, centered=True), d).entries
    U, s, Vt = np.linalg.svd(M, full_matrices=False)
    filt = 1.0 / s if alpha == 0 else s / (s**2 + alpha**2)
    F = Vt.T @ (filt[:, None] * U.T)  # (d+1, L)
    k = np.arange(n)
    starts = np.clip(k - (L - 1) // 2, 0, n - L)
    idx = starts[:, None] + np.arange(L)[None, :]
    Y = y[idx]
    means = Y.mean(axis=1)
    beta = (Y - means[:, None]) @ F.T
    beta[:, 0] += means
    return SlidingFit(beta, starts, L, alpha, t0)


def condition_study(d: int = DEFAULT_DEGREE, t_max: int = 20, delta: float = DEFAULT_DELTA) -> list[dict]:
    """Rows of ``T, kappa_unregularized, kappa_regularized, alpha`` for ``T = d+1 .. t_max``."""
    rows = []
    for T in range(d + 1, t_max + 1):
        m = vandermonde(design_times(T), d)
        alpha = select_alpha(T, d, delta)
        rows.append({
            "T": T,
            "kappa_unregularized": condition_number(m, 0.0),
            "kappa_regularized": condition_number(m, alpha),
            "alpha": alpha,
        })
    return rows
