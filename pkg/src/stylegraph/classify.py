"""Centrality-feature classification into aggressive / conservative.

The perceptron is a small numpy MLP (two rectifier hidden layers, softmax
output) trained by full-batch gradient descent on the squared loss
``sum_i ||y_i - p_i||^2`` against one-hot targets. A logistic-regression
baseline (no hidden layer, cross-entropy) shares the interface.
"""
from __future__ import annotations

import dataclasses
import json
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import DegenerateDatasetError, DimensionError, DomainError, IncompleteInputError
from .config import RunConfig
from .styles import SPECIFIC_STYLES, EpisodeAnalysis, StyleReport
from .synthgen import DEFAULT_HORIZON, SUBJECT, simulate

LABELS = ("aggressive", "conservative")
TIE_LABEL = "conservative"
MODEL_FORMAT = "stylegraph-model"
MODEL_VERSION = 1
KINDS = ("mlp", "logistic")


def feature_names(d: int = 2, layout: str = "coefficients") -> tuple[str, ...]:
    names = [f"closeness_b{k}" for k in range(d + 1)] + [f"degree_b{k}" for k in range(d + 1)]
    if layout == "extended":
        names += [f"sle_max_{s.value}" for s in SPECIFIC_STYLES] + ["weave_count"]
    elif layout != "coefficients":
        raise DomainError(f"unknown feature layout {layout!r}")
    return tuple(names)


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray
    names: tuple[str, ...]

    def __len__(self) -> int:
        return len(self.values)


def extract_features(report: StyleReport, polys: Mapping | None = None, layout: str = "coefficients") -> FeatureVector:
    """Concatenate the closeness and degree fit coefficients (plus SLE summaries when extended).

    Raises:
        IncompleteInputError: a centrality fit is missing.
        DomainError: a feature is not finite.
    """
    polys = report.polynomials if polys is None else polys
    missing = [k for k in ("closeness", "degree") if k not in polys or polys[k] is None]
    if missing:
        raise IncompleteInputError(f"missing centrality fit(s): {missing}")
    d = polys["closeness"].degree
    if polys["degree"].degree != d:
        raise IncompleteInputError("closeness and degree fits have different degrees")
    values = list(polys["closeness"].beta) + list(polys["degree"].beta)
    if layout == "extended":
        values += [report.sle_max(s) for s in SPECIFIC_STYLES] + [float(report.weave_count)]
    names = feature_names(d, layout)
    arr = np.asarray(values, dtype=float)
    if not np.isfinite(arr).all():
        raise DomainError("non-finite feature value")
    return FeatureVector(arr, names)


@dataclass(frozen=True)
class Standardizer:
    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, X: np.ndarray) -> "Standardizer":
        sd = X.std(axis=0)
        return cls(X.mean(axis=0), np.where(sd > 0, sd, 1.0))

    def transform(self, X: np.ndarray) -> np.ndarray:
        return (X - self.mean) / self.scale


@dataclass(frozen=True)
class TrainConfig:
    """Optimiser settings; ``lr`` is per example (the gradient is a batch mean)."""

    kind: str = "mlp"
    hidden: tuple[int, ...] = (32, 32)
    lr: float = 0.05
    epochs: int = 2000
    seed: int = 0
    standardize: bool = True

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise DomainError(f"kind must be one of {KINDS}")
        if not self.lr > 0 or self.epochs < 0:
            raise DomainError("lr must be > 0 and epochs >= 0")


@dataclass
class PerceptronModel:
    """Layer weights/biases plus everything needed to score raw feature vectors."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    config: TrainConfig
    standardizer: Standardizer | None = None
    feature_names: tuple[str, ...] = ()
    loss_trace: list[float] = field(default_factory=list)

    @property
    def n_inputs(self) -> int:
        return self.weights[0].shape[0]

    @property
    def kind(self) -> str:
        return self.config.kind

    def params(self) -> list[np.ndarray]:
        return [p for pair in zip(self.weights, self.biases) for p in pair]

    def _prepare(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.n_inputs:
            raise DimensionError(f"expected {self.n_inputs} features, got {X.shape[1]}")
        return self.standardizer.transform(X) if self.standardizer is not None else X

    def scores(self, X) -> np.ndarray:
        """Softmax scores, columns in :data:`LABELS` order."""
        return _forward(self.weights, self.biases, self._prepare(X))[-1]

    def to_json(self) -> str:
        doc = {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "labels": list(LABELS),
            "config": {**self.config.__dict__, "hidden": list(self.config.hidden)},
            "feature_names": list(self.feature_names),
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
            "standardizer": None if self.standardizer is None else {
                "mean": self.standardizer.mean.tolist(), "scale": self.standardizer.scale.tolist()},
            "loss_trace": self.loss_trace,
        }
        return json.dumps(doc, indent=1, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "PerceptronModel":
        doc = json.loads(text)
        if doc.get("format") != MODEL_FORMAT:
            raise DomainError("not a stylegraph model document")
        if doc.get("version") != MODEL_VERSION:
            raise DomainError(f"unsupported model version {doc.get('version')}")
        cfg = doc["config"]
        cfg["hidden"] = tuple(cfg["hidden"])
        std = doc["standardizer"]
        return cls(
            [np.asarray(w, dtype=float) for w in doc["weights"]],
            [np.asarray(b, dtype=float) for b in doc["biases"]],
            TrainConfig(**cfg),
            None if std is None else Standardizer(np.asarray(std["mean"]), np.asarray(std["scale"])),
            tuple(doc["feature_names"]),
            list(doc["loss_trace"]),
        )


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _forward(weights, biases, X) -> list[np.ndarray]:
    acts = [X]
    h = X
    for k, (W, b) in enumerate(zip(weights, biases)):
        z = h @ W + b
        h = _softmax(z) if k == len(weights) - 1 else np.maximum(z, 0.0)
        acts.append(h)
    return acts


def init_model(n_inputs: int, config: TrainConfig | None = None, feature_names: Sequence[str] = ()) -> PerceptronModel:
    """Seeded He-normal initialisation, zero biases."""
    config = config or TrainConfig()
    rng = np.random.default_rng(config.seed)
    sizes = [n_inputs] + (list(config.hidden) if config.kind == "mlp" else []) + [len(LABELS)]
    weights = [rng.normal(0.0, math.sqrt(2.0 / a), size=(a, b)) for a, b in zip(sizes[:-1], sizes[1:])]
    biases = [np.zeros(b) for b in sizes[1:]]
    return PerceptronModel(weights, biases, config, None, tuple(feature_names))


def one_hot(labels: Sequence) -> np.ndarray:
    idx = [_label_index(lab) for lab in labels]
    Y = np.zeros((len(idx), len(LABELS)))
    Y[np.arange(len(idx)), idx] = 1.0
    return Y


def _label_index(label) -> int:
    if isinstance(label, (int, np.integer)) and 0 <= label < len(LABELS):
        return int(label)
    try:
        return LABELS.index(str(label).lower())
    except ValueError:
        raise DomainError(f"unknown label {label!r}") from None


def loss_and_gradient(model: PerceptronModel, X: np.ndarray, Y: np.ndarray, scale: float = 1.0):
    """Total loss and its gradient w.r.t. every parameter, on already-standardised ``X``.

    The MLP uses the squared loss; the logistic baseline uses cross-entropy.
    ``scale`` multiplies the loss (and therefore every gradient component).
    """
    acts = _forward(model.weights, model.biases, X)
    P = acts[-1]
    if model.kind == "mlp":
        loss = float(np.sum((Y - P) ** 2))
        g = 2.0 * (P - Y)
        delta = P * (g - np.sum(P * g, axis=1, keepdims=True))  # softmax Jacobian
    else:
        loss = float(-np.sum(Y * np.log(np.clip(P, 1e-300, None))))
        delta = P - Y
    delta = delta * scale
    grads_w: list[np.ndarray] = [None] * len(model.weights)
    grads_b: list[np.ndarray] = [None] * len(model.weights)
    for k in range(len(model.weights) - 1, -1, -1):
        grads_w[k] = acts[k].T @ delta
        grads_b[k] = delta.sum(axis=0)
        if k:
            delta = (delta @ model.weights[k].T) * (acts[k] > 0)
    return loss * scale, grads_w, grads_b


def train(features, labels: Sequence, config: TrainConfig | None = None) -> PerceptronModel:
    """Full-batch gradient descent; deterministic given ``config.seed``.

    ``features`` is an ``(n, k)`` array or a sequence of :class:`FeatureVector`.

    Raises:
        DegenerateDatasetError: fewer than two examples of some class.
    """
    config = config or TrainConfig()
    names: tuple[str, ...] = ()
    if len(features) and isinstance(features[0], FeatureVector):
        names = features[0].names
        X = np.vstack([f.values for f in features])
    else:
        X = np.atleast_2d(np.asarray(features, dtype=float))
    if X.shape[0] != len(labels):
        raise DomainError(f"{X.shape[0]} feature rows but {len(labels)} labels")
    if not np.isfinite(X).all():
        raise DomainError("non-finite feature value")
    Y = one_hot(labels)
    counts = Counter(int(i) for i in Y.argmax(axis=1))
    if any(counts.get(c, 0) < 2 for c in range(len(LABELS))):
        raise DegenerateDatasetError(f"need >= 2 examples per class, got {dict(counts)}")
    model = init_model(X.shape[1], config, names)
    if config.standardize:
        model.standardizer = Standardizer.fit(X)
    Xs = model._prepare(X)
    n = X.shape[0]
    step = config.lr / n
    for _ in range(config.epochs):
        loss, gw, gb = loss_and_gradient(model, Xs, Y)
        model.loss_trace.append(loss)
        for k in range(len(model.weights)):
            model.weights[k] = model.weights[k] - step * gw[k]
            model.biases[k] = model.biases[k] - step * gb[k]
    if config.epochs:
        model.loss_trace.append(loss_and_gradient(model, Xs, Y)[0])
    return model


def train_logistic(features, labels: Sequence, **kwargs) -> PerceptronModel:
    """Logistic-regression baseline behind the perceptron interface."""
    return train(features, labels, TrainConfig(kind="logistic", hidden=(), **kwargs))


def predict(model: PerceptronModel, fv) -> tuple[str, np.ndarray]:
    """Label with the highest score; an exact tie goes to conservative."""
    values = fv.values if isinstance(fv, FeatureVector) else np.asarray(fv, dtype=float)
    if values.ndim != 1:
        raise DimensionError("predict takes one feature vector")
    scores = model.scores(values)[0]
    return label_from_scores(scores), scores


def label_from_scores(scores: Sequence[float]) -> str:
    scores = np.asarray(scores, dtype=float)
    best = np.flatnonzero(scores == scores.max())
    if len(best) > 1:
        return TIE_LABEL
    return LABELS[int(best[0])]


def predict_batch(model: PerceptronModel, X) -> list[str]:
    return [label_from_scores(row) for row in model.scores(X)]


def gradient_check(model: PerceptronModel, sample, h: float = 1e-5, floor: float = 1e-6) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``sample`` is ``(X, labels)`` in raw feature units. Relative error is
    ``|a - n| / max(|a| + |n|, floor)``.
    """
    if not h > 0:
        raise DomainError(f"h must be > 0, got {h}")
    X, labels = sample
    Xs = model._prepare(X)
    Y = one_hot(labels)
    _, gw, gb = loss_and_gradient(model, Xs, Y)
    analytic = [g for pair in zip(gw, gb) for g in pair]
    worst = 0.0
    for p, a in zip(model.params(), analytic):
        flat = p.reshape(-1)  # view into the live parameter
        a_flat = a.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = loss_and_gradient(model, Xs, Y)[0]
            flat[i] = orig - h
            down = loss_and_gradient(model, Xs, Y)[0]
            flat[i] = orig
            num = (up - down) / (2 * h)
            err = abs(a_flat[i] - num) / max(abs(a_flat[i]) + abs(num), floor)
            worst = max(worst, err)
    return worst


def weighted_accuracy(preds: Sequence, labels: Sequence) -> float:
    """``sum_c freq(c) * recall(c)`` with class frequencies from the true labels."""
    if len(preds) != len(labels):
        raise DomainError(f"{len(preds)} predictions for {len(labels)} labels")
    if len(labels) == 0:
        raise DomainError("empty label list")
    n = len(labels)
    total = 0.0
    for c, count in Counter(labels).items():
        hits = sum(1 for p, y in zip(preds, labels) if y == c and p == c)
        total += (count / n) * (hits / count)
    return total


# Synthetic labeled sets -------------------------------------------------------------

@dataclass(frozen=True)
class Dataset:
    """Feature matrix with subject truth labels and the episode seed of every row."""

    X: np.ndarray
    labels: tuple[str, ...]
    seeds: tuple[int, ...]
    names: tuple[str, ...]

    def split(self, holdout: float = 1 / 3, seed: int = 0) -> tuple["Dataset", "Dataset"]:
        """Seeded random ``(train, test)`` split with ``round(n * holdout)`` test rows."""
        if not 0 < holdout < 1:
            raise DomainError(f"holdout must be in (0, 1), got {holdout}")
        n = len(self.labels)
        idx = np.random.default_rng(seed).permutation(n)
        n_test = int(round(n * holdout))
        return self._take(idx[n_test:]), self._take(idx[:n_test])

    def _take(self, idx) -> "Dataset":
        idx = np.sort(idx)
        return Dataset(self.X[idx], tuple(self.labels[i] for i in idx), tuple(self.seeds[i] for i in idx), self.names)


def synthetic_dataset(
    generators: Mapping[str, object],
    n_per_generator: int,
    config: RunConfig | None = None,
    *,
    first_seed: int = 10_000,
    horizon: int | None = None,
) -> Dataset:
    """Simulate ``n_per_generator`` episodes per generator and featurise the subject.

    ``generators`` maps a name to :class:`~stylegraph.synthgen.GeneratorParams`;
    each row is labeled with the subject's truth label, not the generator name.
    """
    config = config or RunConfig()
    horizon = horizon or DEFAULT_HORIZON
    rows, labels, seeds = [], [], []
    for offset, params in enumerate(generators.values()):
        for k in range(n_per_generator):
            seed = first_seed + offset * n_per_generator + k
            ts, truth = simulate(dataclasses.replace(params, seed=seed), horizon, config.frame_rate, config.capacity)
            report = EpisodeAnalysis(ts, config).report(SUBJECT)
            rows.append(extract_features(report, layout=config.feature_layout).values)
            labels.append(truth.labels[SUBJECT])
            seeds.append(seed)
    names = feature_names(config.degree, config.feature_layout)
    return Dataset(np.vstack(rows), tuple(labels), tuple(seeds), names)
