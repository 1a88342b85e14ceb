#!/usr/bin/env python
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING

import numpy as np

from actkit._utils import format_float
from actkit.augmentation import sample_pair
from actkit.encoder import forward
from actkit.exceptions import DataError

if TYPE_CHECKING:
    from collections.abc import Sequence

    from actkit.augmentation import AugmentationSet
    from actkit.encoder import EncoderParams

# this_file: src/actkit/downstream.py
"""Few-shot evaluation of a frozen encoder on labeled target data.

Two classifiers are provided: the template probe, whose row k is the mean
representation of class-k augmented views, and Euclidean k-nearest
neighbours in representation space. Both predict on un-augmented queries.

Classes are numbered from 0, so the first class of a K-class problem is
label 0 and predictions lie in 0..K-1.
"""

logger = logging.getLogger(__name__)

REPORT_COLUMNS = ("protocol", "k", "class_counts", "error", "accuracy")


@dataclass(frozen=True, eq=False)
class LabeledSet:
    """Samples (rows) with class labels in 0..K-1."""

    samples: np.ndarray
    labels: np.ndarray
    n_classes: int

    def __post_init__(self) -> None:
        samples = np.atleast_2d(np.asarray(self.samples, dtype=np.float64))
        labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if samples.shape[0] != labels.shape[0]:
            msg = f"{samples.shape[0]} samples but {labels.shape[0]} labels"
            raise DataError(msg)
        if self.n_classes < 1:
            msg = f"n_classes must be positive, got {self.n_classes}"
            raise DataError(msg)
        if labels.size and (labels.min() < 0 or labels.max() >= self.n_classes):
            msg = f"labels must lie in [0, {self.n_classes - 1}]"
            raise DataError(msg)
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.n_classes)


@dataclass(frozen=True, eq=False)
class ProbeModel:
    """Template probe: row k of ``W_hat`` is μ̂_t(k)."""

    W_hat: np.ndarray
    class_counts: tuple[int, ...]

    @property
    def n_classes(self) -> int:
        return int(self.W_hat.shape[0])


def fit_linear_probe(
    f: EncoderParams,
    target: LabeledSet,
    aug_set: AugmentationSet,
    rng: np.random.Generator,
    *,
    project: bool = True,
) -> ProbeModel:
    """μ̂_t(k) = (1/2n_t(k)) Σ_{y_i = k} (f(z₁⁽ⁱ⁾) + f(z₂⁽ⁱ⁾)).

    One augmented pair is drawn per sample, in sample order.

    Raises:
        DataError: If some class has no labeled sample.
    """
    counts = target.class_counts()
    empty = np.flatnonzero(counts == 0)
    if empty.size:
        msg = f"class {int(empty[0])} has no labeled target samples"
        raise DataError(msg)

    sums = np.zeros((target.n_classes, f.d_star))
    for z, y in zip(target.samples, target.labels, strict=True):
        z1, z2 = sample_pair(aug_set, z, rng)
        sums[y] += forward(f, z1, project=project) + forward(f, z2, project=project)
    W_hat = sums / (2.0 * counts[:, None])
    W_hat.setflags(write=False)
    return ProbeModel(W_hat, tuple(int(c) for c in counts))


def predict_probe(probe: ProbeModel, f: EncoderParams, z: np.ndarray, *, project: bool = True) -> int:
    """argmax_k (Ŵ f(z))_k; ties go to the smallest class index."""
    return int(np.argmax(probe.W_hat @ forward(f, np.asarray(z, dtype=np.float64), project=project)))


def predict_probe_batch(probe: ProbeModel, f: EncoderParams, queries: np.ndarray, *, project: bool = True) -> np.ndarray:
    """:func:`predict_probe` for every row of ``queries``."""
    scores = forward(f, np.atleast_2d(queries), project=project) @ probe.W_hat.T
    return np.argmax(scores, axis=1)


def _vote(labels: np.ndarray, distances: np.ndarray) -> int:
    """Majority label; a vote tie goes to the tied class whose nearest member is closest."""
    classes, votes = np.unique(labels, return_counts=True)
    tied = classes[votes == votes.max()]
    if tied.size == 1:
        return int(tied[0])
    # neighbours arrive sorted by distance, so the first tied label wins
    for label in labels:
        if label in tied:
            return int(label)
    return int(tied[0])


def knn_predict(train_reps: np.ndarray, train_labels: Sequence[int] | np.ndarray, query: np.ndarray, k: int) -> int:
    """Euclidean k-NN majority vote in representation space.

    Distance ties are broken by the smaller training index.

    Raises:
        DataError: If the training set is empty or k is out of range.
    """
    train_reps = np.atleast_2d(np.asarray(train_reps, dtype=np.float64))
    train_labels = np.asarray(train_labels, dtype=np.int64)
    n = train_labels.shape[0]
    if n == 0:
        msg = "k-NN needs a nonempty training set"
        raise DataError(msg)
    if not 1 <= k <= n:
        msg = f"k={k} must lie in [1, {n}] (training set size)"
        raise DataError(msg)
    diff = train_reps - np.asarray(query, dtype=np.float64)
    dist = np.sqrt(np.sum(diff * diff, axis=1))
    nearest = np.argsort(dist, kind="stable")[:k]
    return _vote(train_labels[nearest], dist[nearest])


def knn_predict_batch(train_reps: np.ndarray, train_labels: np.ndarray, queries: np.ndarray, k: int) -> np.ndarray:
    """:func:`knn_predict` for every row of ``queries``."""
    return np.array([knn_predict(train_reps, train_labels, q, k) for q in np.atleast_2d(queries)], dtype=np.int64)


def error_rate(predictions: Sequence[int] | np.ndarray, truth: Sequence[int] | np.ndarray) -> float:
    """Fraction of positions where prediction and truth differ."""
    predictions = np.asarray(predictions)
    truth = np.asarray(truth)
    if predictions.shape != truth.shape:
        msg = f"{predictions.size} predictions for {truth.size} labels"
        raise DataError(msg)
    if truth.size == 0:
        msg = "cannot score an empty prediction set"
        raise DataError(msg)
    return float(np.mean(predictions != truth))


@dataclass(frozen=True)
class EvaluationRow:
    protocol: str
    k: int
    class_counts: tuple[int, ...]
    error: float

    @property
    def accuracy(self) -> float:
        return 1.0 - self.error


def evaluate_downstream(
    f: EncoderParams,
    target: LabeledSet,
    test: LabeledSet,
    aug_set: AugmentationSet,
    rng: np.random.Generator,
    *,
    knn_k: int = 5,
    project: bool = True,
) -> list[EvaluationRow]:
    """Probe and k-NN test errors for a frozen encoder.

    The k-NN reference set is the un-augmented labeled target set.
    """
    if test.n_classes != target.n_classes:
        msg = f"test set has {test.n_classes} classes, target set has {target.n_classes}"
        raise DataError(msg)
    counts = tuple(int(c) for c in target.class_counts())
    probe = fit_linear_probe(f, target, aug_set, rng, project=project)
    probe_error = error_rate(predict_probe_batch(probe, f, test.samples, project=project), test.labels)
    reps = forward(f, target.samples, project=project)
    knn_preds = knn_predict_batch(reps, target.labels, forward(f, test.samples, project=project), knn_k)
    knn_error = error_rate(knn_preds, test.labels)
    logger.info("probe error %.4f, %d-NN error %.4f on %d test points", probe_error, knn_k, knn_error, len(test))
    return [
        EvaluationRow("probe", 0, counts, probe_error),
        EvaluationRow("knn", knn_k, counts, knn_error),
    ]


def write_report(rows: Sequence[EvaluationRow], path: str | Path) -> Path:
    """Write evaluation rows; class counts are ``;``-joined."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(REPORT_COLUMNS)
        for row in rows:
            counts = ";".join(str(c) for c in row.class_counts)
            writer.writerow([row.protocol, row.k, counts, format_float(row.error), format_float(row.accuracy)])
    return path
