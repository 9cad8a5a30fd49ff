"""Multinomial logistic regression over embedding features, with nested
cross-validation for the joint choice of embedding model and regularization
strength.

The loss and gradient are written out explicitly (softmax cross-entropy
plus an L2 penalty of ``1/(2C) * ||W||^2`` on the weights, bias exempt) so
they can be checked against finite differences; only the minimizer itself
is delegated to L-BFGS. Features are standardized on the training split and
the scaling is folded back into the returned weights, so trained models
always consume raw feature vectors.

Nested CV keeps model selection honest: an inner loop over folds of each
outer training split picks the (model tag, C) pair by mean micro-F1, an
outer refit scores it on held-out data, and the per-fold choices are
reported rather than aggregated away. All fold assignments derive from
seeded generators, so a report is reproducible end to end.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy.optimize import minimize
from scipy.special import logsumexp

logger = logging.getLogger(__name__)


class Label(enum.IntEnum):
    """Page-element classes, in a fixed code order that every confusion
    matrix and serialized model refers back to."""

    BLANK_PAGE = 0
    SEGMENTATION_ANOMALY = 1
    ILLUSTRATION_OR_PHOTOGRAPH = 2
    MUSICAL_NOTATION = 3
    MAP = 4
    MATHEMATICAL_CHART = 5
    GRAPHICAL_ELEMENT = 6

    @property
    def display_name(self) -> str:
        return _DISPLAY_NAMES[self]

    @classmethod
    def from_display_name(cls, name: str) -> "Label":
        try:
            return _DISPLAY_TO_LABEL[name]
        except KeyError:
            raise ValueError(f"unknown label {name!r}") from None


_DISPLAY_NAMES = {
    Label.BLANK_PAGE: "Blank page",
    Label.SEGMENTATION_ANOMALY: "Segmentation anomaly",
    Label.ILLUSTRATION_OR_PHOTOGRAPH: "Illustration or photograph",
    Label.MUSICAL_NOTATION: "Musical notation",
    Label.MAP: "Map",
    Label.MATHEMATICAL_CHART: "Mathematical chart",
    Label.GRAPHICAL_ELEMENT: "Graphical element",
}
_DISPLAY_TO_LABEL = {name: label for label, name in _DISPLAY_NAMES.items()}


def complexity_grid() -> np.ndarray:
    """Ten log-spaced regularization values from 1e-4 to 1e4 inclusive."""
    return np.logspace(-4.0, 4.0, 10)


def loss_and_gradient(
    weights: np.ndarray,
    bias: np.ndarray,
    features: np.ndarray,
    labels: np.ndarray,
    complexity: float,
) -> tuple[float, np.ndarray, np.ndarray]:
    """Summed negative log-likelihood plus ``1/(2C) * ||W||^2``, with its
    exact gradient. ``labels`` are class indices 0..K-1 matching the rows
    of ``weights``."""
    w = np.asarray(weights, dtype=np.float64)
    b = np.asarray(bias, dtype=np.float64)
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels)
    n_classes, n_features = w.shape
    if x.shape[1] != n_features or b.shape != (n_classes,):
        raise ValueError("weight, bias and feature shapes disagree")
    if complexity <= 0:
        raise ValueError("complexity must be positive")

    logits = x @ w.T + b
    lse = logsumexp(logits, axis=1)
    rows = np.arange(x.shape[0])
    loss = float(np.sum(lse - logits[rows, y]) + (0.5 / complexity) * np.sum(w * w))

    residual = np.exp(logits - lse[:, None])
    residual[rows, y] -= 1.0
    grad_w = residual.T @ x + w / complexity
    grad_b = residual.sum(axis=0)
    return loss, grad_w, grad_b


@dataclass
class TrainedModel:
    """Fitted multinomial model operating on raw (unstandardized) features.

    ``classes`` holds the ascending label codes present at fit time; row k
    of ``weights`` belongs to ``classes[k]``.
    """

    weights: np.ndarray
    bias: np.ndarray
    classes: np.ndarray
    final_loss: float
    converged: bool
    objective_history: list[float] | None = None

    def predict_proba(self, features: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(features, dtype=np.float64))
        logits = x @ self.weights.T + self.bias
        logits -= logits.max(axis=1, keepdims=True)
        p = np.exp(logits)
        p /= p.sum(axis=1, keepdims=True)
        return p

    def predict(self, features: np.ndarray) -> np.ndarray:
        p = self.predict_proba(features)
        # argmax takes the first maximum, so probability ties resolve to
        # the smallest class code.
        return self.classes[np.argmax(p, axis=1)]

    def predict_one(self, features: np.ndarray) -> tuple[int, np.ndarray]:
        """Predicted class code and its probability vector for one example."""
        p = self.predict_proba(np.asarray(features).reshape(1, -1))[0]
        return int(self.classes[np.argmax(p)]), p

    def to_dict(self) -> dict:
        return {
            "weights": self.weights.tolist(),
            "bias": self.bias.tolist(),
            "classes": [int(c) for c in self.classes],
            "final_loss": self.final_loss,
            "converged": self.converged,
        }

    @classmethod
    def from_dict(cls, payload: Mapping) -> "TrainedModel":
        return cls(
            weights=np.asarray(payload["weights"], dtype=np.float64),
            bias=np.asarray(payload["bias"], dtype=np.float64),
            classes=np.asarray(payload["classes"], dtype=np.int64),
            final_loss=float(payload["final_loss"]),
            converged=bool(payload["converged"]),
        )


def fit_logistic(
    features: np.ndarray,
    labels: np.ndarray,
    complexity: float,
    *,
    standardize: bool = True,
    max_iter: int = 1000,
    record_history: bool = False,
) -> TrainedModel:
    """Fit by L-BFGS from a zero start. Deterministic: no randomness enters
    the optimization, so identical inputs give identical models."""
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValueError("features must be a non-empty 2-d array")
    if y.shape != (x.shape[0],):
        raise ValueError("labels must align with feature rows")
    if not np.isfinite(x).all():
        raise ValueError("features contain non-finite values")

    classes = np.unique(y)
    encoded = np.searchsorted(classes, y)
    n_classes = classes.size
    n_features = x.shape[1]

    if n_classes == 1:
        # Degenerate input: the softmax over one class is identically 1, so
        # the zero model is the exact optimum (loss 0, no penalty).
        return TrainedModel(
            weights=np.zeros((1, n_features)),
            bias=np.zeros(1),
            classes=classes,
            final_loss=0.0,
            converged=True,
            objective_history=[0.0] if record_history else None,
        )

    if standardize:
        mean = x.mean(axis=0)
        scale = x.std(axis=0)
        scale[scale == 0.0] = 1.0
        x_fit = (x - mean) / scale
    else:
        mean = np.zeros(n_features)
        scale = np.ones(n_features)
        x_fit = x

    span = n_classes * n_features

    def objective(theta: np.ndarray) -> tuple[float, np.ndarray]:
        w = theta[:span].reshape(n_classes, n_features)
        b = theta[span:]
        loss, grad_w, grad_b = loss_and_gradient(w, b, x_fit, encoded, complexity)
        return loss, np.concatenate([grad_w.ravel(), grad_b])

    history: list[float] = []
    callback = (lambda theta: history.append(objective(theta)[0])) if record_history else None

    result = minimize(
        objective,
        np.zeros(span + n_classes),
        jac=True,
        method="L-BFGS-B",
        callback=callback,
        options={"maxiter": max_iter, "ftol": 1e-14, "gtol": 1e-9},
    )
    w = result.x[:span].reshape(n_classes, n_features)
    b = result.x[span:]
    # Fold the standardization into the weights: W_raw = W/s and
    # b_raw = b - W_raw @ mean reproduce the fitted logits on raw inputs.
    w_raw = w / scale
    b_raw = b - w_raw @ mean
    return TrainedModel(
        weights=w_raw,
        bias=b_raw,
        classes=classes,
        final_loss=float(result.fun),
        converged=bool(result.success),
        objective_history=history if record_history else None,
    )


def micro_f1(y_true: np.ndarray, y_pred: np.ndarray) -> float:
    """Micro-averaged F1 from pooled per-class true/false positive and
    false negative counts."""
    t = np.asarray(y_true)
    p = np.asarray(y_pred)
    if t.shape != p.shape or t.size == 0:
        raise ValueError("label arrays must be non-empty and aligned")
    tp = fp = fn = 0
    for code in np.unique(np.concatenate([t, p])):
        tp += int(np.sum((p == code) & (t == code)))
        fp += int(np.sum((p == code) & (t != code)))
        fn += int(np.sum((t == code) & (p != code)))
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def confusion_matrix(
    y_true: np.ndarray, y_pred: np.ndarray, n_classes: int = len(Label)
) -> np.ndarray:
    """Counts with predicted class on rows and true class on columns."""
    t = np.asarray(y_true, dtype=np.int64)
    p = np.asarray(y_pred, dtype=np.int64)
    if t.shape != p.shape:
        raise ValueError("label arrays must be aligned")
    if t.size and (t.min() < 0 or p.min() < 0 or t.max() >= n_classes or p.max() >= n_classes):
        raise ValueError("label code out of range")
    matrix = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(matrix, (p, t), 1)
    return matrix


def stratified_folds(
    labels: np.ndarray, n_folds: int, rng: np.random.Generator
) -> list[np.ndarray]:
    """Split indices into ``n_folds`` disjoint test folds with near-equal
    class proportions: each class is shuffled, then dealt round-robin with
    a cursor that carries across classes so fold sizes differ by at most
    one. Returned index arrays are sorted."""
    y = np.asarray(labels)
    if n_folds < 2:
        raise ValueError("need at least 2 folds")
    folds: list[list[int]] = [[] for _ in range(n_folds)]
    cursor = 0
    for code in np.unique(y):
        members = np.flatnonzero(y == code)
        if members.size < n_folds:
            raise ValueError(
                f"class {int(code)} has {members.size} members, fewer than {n_folds} folds"
            )
        for ix in rng.permutation(members).tolist():
            folds[cursor % n_folds].append(ix)
            cursor += 1
    return [np.asarray(sorted(fold), dtype=np.int64) for fold in folds]


@dataclass(frozen=True)
class FoldResult:
    fold: int
    selected_tag: str
    selected_complexity: float
    inner_mean_f1: float
    outer_f1: float
    test_size: int

    def to_dict(self) -> dict:
        return {
            "fold": self.fold,
            "selected_tag": self.selected_tag,
            "selected_complexity": self.selected_complexity,
            "inner_mean_f1": self.inner_mean_f1,
            "outer_f1": self.outer_f1,
            "test_size": self.test_size,
        }


@dataclass(frozen=True)
class CvReport:
    folds: list[FoldResult]
    mean_f1: float
    std_f1: float
    selections: dict[str, int]
    # Outer-fold predictions pooled over the whole dataset; rows are the
    # predicted class, columns the true class.
    confusion: np.ndarray
    tags: list[str]
    complexity_grid: list[float]
    outer_folds: int
    inner_folds: int
    seed: int

    def to_dict(self) -> dict:
        return {
            "folds": [f.to_dict() for f in self.folds],
            "mean_f1": self.mean_f1,
            "std_f1": self.std_f1,
            "selections": self.selections,
            "confusion": self.confusion.tolist(),
            "tags": self.tags,
            "complexity_grid": self.complexity_grid,
            "outer_folds": self.outer_folds,
            "inner_folds": self.inner_folds,
            "seed": self.seed,
        }


def nested_cv(
    features_by_tag: Mapping[str, np.ndarray],
    labels: Sequence[int] | np.ndarray,
    *,
    outer_folds: int = 20,
    inner_folds: int = 10,
    seed: int = 0,
    grid: Sequence[float] | None = None,
) -> CvReport:
    """Nested cross-validation over embedding tags and the regularization
    grid.

    Outer folds come from ``default_rng([seed])``; the inner folds for
    outer fold i come from ``default_rng([seed, i])`` over that fold's
    training indices only, so no test row ever influences selection. The
    best (tag, C) maximizes mean inner micro-F1, with ties going to the
    smaller C and then the lexicographically smaller tag.
    """
    tags = sorted(features_by_tag)
    if not tags:
        raise ValueError("need at least one feature matrix")
    y = np.asarray(labels, dtype=np.int64)
    n = y.shape[0]
    matrices: dict[str, np.ndarray] = {}
    for tag in tags:
        x = np.asarray(features_by_tag[tag], dtype=np.float64)
        if x.ndim != 2 or x.shape[0] != n:
            raise ValueError(f"feature matrix {tag!r} does not align with labels")
        matrices[tag] = x
    grid_values = (
        complexity_grid().tolist() if grid is None else [float(c) for c in grid]
    )

    outer_rng = np.random.default_rng([seed])
    outer = stratified_folds(y, outer_folds, outer_rng)
    everything = np.arange(n)
    fold_results: list[FoldResult] = []
    pooled_true: list[np.ndarray] = []
    pooled_pred: list[np.ndarray] = []

    for fold_ix, test_idx in enumerate(outer):
        train_idx = np.setdiff1d(everything, test_idx)
        y_train = y[train_idx]
        inner_rng = np.random.default_rng([seed, fold_ix])
        inner = stratified_folds(y_train, inner_folds, inner_rng)
        local = np.arange(train_idx.size)

        best_key: tuple[float, float, str] | None = None
        best: tuple[str, float, float] | None = None
        for tag in tags:
            x_train = matrices[tag][train_idx]
            for c in grid_values:
                scores = []
                for inner_test in inner:
                    inner_train = np.setdiff1d(local, inner_test)
                    model = fit_logistic(x_train[inner_train], y_train[inner_train], c)
                    predicted = model.predict(x_train[inner_test])
                    scores.append(micro_f1(y_train[inner_test], predicted))
                mean_score = float(np.mean(scores))
                key = (-mean_score, c, tag)
                if best_key is None or key < best_key:
                    best_key = key
                    best = (tag, c, mean_score)

        assert best is not None
        sel_tag, sel_c, sel_mean = best
        refit = fit_logistic(matrices[sel_tag][train_idx], y_train, sel_c)
        outer_pred = refit.predict(matrices[sel_tag][test_idx])
        outer_score = micro_f1(y[test_idx], outer_pred)
        pooled_true.append(y[test_idx])
        pooled_pred.append(outer_pred)
        fold_results.append(
            FoldResult(
                fold=fold_ix,
                selected_tag=sel_tag,
                selected_complexity=sel_c,
                inner_mean_f1=sel_mean,
                outer_f1=outer_score,
                test_size=int(test_idx.size),
            )
        )
        logger.info(
            "fold %d: %s C=%.4g inner=%.4f outer=%.4f",
            fold_ix,
            sel_tag,
            sel_c,
            sel_mean,
            outer_score,
        )

    outer_scores = np.array([f.outer_f1 for f in fold_results])
    selections = {tag: 0 for tag in tags}
    for f in fold_results:
        selections[f.selected_tag] += 1
    n_codes = max(len(Label), int(y.max()) + 1)
    confusion = confusion_matrix(
        np.concatenate(pooled_true), np.concatenate(pooled_pred), n_classes=n_codes
    )
    return CvReport(
        folds=fold_results,
        mean_f1=float(outer_scores.mean()),
        std_f1=float(outer_scores.std()),
        selections=selections,
        confusion=confusion,
        tags=tags,
        complexity_grid=grid_values,
        outer_folds=outer_folds,
        inner_folds=inner_folds,
        seed=seed,
    )


def estimate_distribution(
    model: TrainedModel, features: np.ndarray
) -> dict[int, tuple[int, float]]:
    """Classify every row and return, per class code of the model, the
    predicted (count, fraction). Codes the model knows but never predicts
    appear with count 0."""
    predictions = model.predict(np.asarray(features, dtype=np.float64))
    total = predictions.shape[0]
    distribution: dict[int, tuple[int, float]] = {}
    for code in (int(c) for c in model.classes):
        count = int(np.sum(predictions == code))
        distribution[code] = (count, count / total if total else 0.0)
    return distribution


DEFAULT_DROP_LABELS = frozenset({Label.BLANK_PAGE, Label.SEGMENTATION_ANOMALY})


@dataclass(frozen=True)
class FilterReport:
    total: int
    kept: int
    dropped: int
    dropped_fraction: float
    drop_labels: tuple[int, ...]

    def to_dict(self) -> dict:
        return {
            "total": self.total,
            "kept": self.kept,
            "dropped": self.dropped,
            "dropped_fraction": self.dropped_fraction,
            "drop_labels": list(self.drop_labels),
        }


def filter_anomalies(
    element_ids: Sequence[str],
    features: np.ndarray,
    model: TrainedModel,
    drop: frozenset[Label] | set[Label] = DEFAULT_DROP_LABELS,
) -> tuple[list[str], FilterReport]:
    """Keep only elements whose predicted label is outside ``drop``.

    Returns the surviving ids in input order plus a report with the
    dropped fraction (the storage-saving estimate when dropping blanks
    and segmentation noise)."""
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] != len(element_ids):
        raise ValueError("features must align with element_ids")
    drop_codes = {int(label) for label in drop}
    if len(element_ids) == 0:
        report = FilterReport(0, 0, 0, 0.0, tuple(sorted(drop_codes)))
        return [], report
    predictions = model.predict(x)
    kept = [
        eid for eid, code in zip(element_ids, predictions.tolist()) if code not in drop_codes
    ]
    dropped = len(element_ids) - len(kept)
    report = FilterReport(
        total=len(element_ids),
        kept=len(kept),
        dropped=dropped,
        dropped_fraction=dropped / len(element_ids),
        drop_labels=tuple(sorted(drop_codes)),
    )
    return kept, report
