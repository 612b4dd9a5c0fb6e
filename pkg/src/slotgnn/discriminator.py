"""Entrance-line discriminator over ordered point pairs.

Every ordered pair (i, j) of detected points is scored with the probability
that i -> j is a slot entrance line, directed so the slot interior lies to
a consistent side. Pair features are built with constant selection
matrices, so the whole N x N grid is two matmuls and one MLP pass.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .detector import MarkingPoint
from .errors import DataError, DimensionError
from .params import LossWeights, ModelParams

PROB_EPS = 1e-7


@dataclass
class SlotPrediction:
    """A detected slot: directed entrance line from (x1, y1) to (x2, y2)."""

    x1: float
    y1: float
    x2: float
    y2: float
    t: float  # confidence of the entrance line


@lru_cache(maxsize=8)
def _pair_selection(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Constant (n*n, n) matrices picking the left and right member of every
    ordered pair in row-major (i, j) order."""
    left = np.zeros((n * n, n))
    right = np.zeros((n * n, n))
    idx = np.arange(n * n)
    left[idx, idx // n] = 1.0
    right[idx, idx % n] = 1.0
    return left, right


def pair_probabilities(nodes: Tensor, params: ModelParams, training: bool = False,
                       rng: np.random.Generator | None = None) -> Tensor:
    """Score all ordered pairs of node features -> (N, N) probabilities.

    Row i, column j holds P(i -> j is an entrance line). The diagonal is
    produced like any other pair and simply never labeled positive.
    """
    if nodes.ndim != 2:
        raise DimensionError(f"expected (N, F) node features, got {nodes.shape}")
    n = nodes.shape[0]
    if n == 0:
        return Tensor(np.zeros((0, 0)))
    left, right = _pair_selection(n)
    pairs = ad.concat([ad.matmul(Tensor(left), nodes), ad.matmul(Tensor(right), nodes)])
    hidden = ad.relu(ad.add(ad.matmul(pairs, params["disc.fc0.weight"]),
                            params["disc.fc0.bias"]))
    if training:
        if rng is None:
            raise DataError("training-mode pair scoring needs a random generator")
        hidden = ad.dropout(hidden, params.config.pair_dropout, training, rng)
    logits = ad.add(ad.matmul(hidden, params["disc.fc1.weight"]), params["disc.fc1.bias"])
    return ad.reshape(ad.sigmoid(logits), (n, n))


def prediction_matrix(points: list[MarkingPoint], probs: np.ndarray,
                      pair_threshold: float = 0.5) -> np.ndarray:
    """Rows (x1, y1, x2, y2, t) for every ordered pair above threshold,
    in descending confidence (ties in row-major pair order)."""
    n = len(points)
    if probs.shape != (n, n):
        raise DimensionError(f"pair matrix {probs.shape} does not match {n} points")
    rows = []
    for i in range(n):
        for j in range(n):
            if i != j and probs[i, j] >= pair_threshold:
                rows.append((points[i].x, points[i].y,
                             points[j].x, points[j].y, float(probs[i, j])))
    rows.sort(key=lambda r: -r[4])
    return np.asarray(rows, dtype=float).reshape(-1, 5)


def assemble_predictions(points: list[MarkingPoint], probs: np.ndarray,
                         pair_threshold: float = 0.5) -> list[SlotPrediction]:
    """Final slots from the pair grid. When both directions of a pair pass
    the threshold only the more confident one survives, so each undirected
    pair yields at most one slot."""
    kept: dict[tuple[int, int], tuple[int, int, float]] = {}
    n = len(points)
    if probs.shape != (n, n):
        raise DimensionError(f"pair matrix {probs.shape} does not match {n} points")
    for i in range(n):
        for j in range(n):
            if i == j or probs[i, j] < pair_threshold:
                continue
            key = (min(i, j), max(i, j))
            best = kept.get(key)
            if best is None or probs[i, j] > best[2]:
                kept[key] = (i, j, float(probs[i, j]))
    slots = [SlotPrediction(points[i].x, points[i].y, points[j].x, points[j].y, t)
             for i, j, t in kept.values()]
    slots.sort(key=lambda s: -s.t)
    return slots


def pair_label_matrix(n: int, pairs: set[tuple[int, int]] | list[tuple[int, int]]) -> np.ndarray:
    """Dense (n, n) 0/1 labels from directed entrance pairs."""
    labels = np.zeros((n, n))
    for i, j in pairs:
        if not (0 <= i < n and 0 <= j < n) or i == j:
            raise DataError(f"pair ({i}, {j}) invalid for {n} points")
        labels[i, j] = 1.0
    return labels


def line_loss(probs: Tensor, labels: np.ndarray) -> Tensor:
    """Mean binary cross-entropy over all N^2 ordered pairs, probabilities
    clamped away from 0 and 1 for finite logs."""
    if probs.shape != labels.shape:
        raise DimensionError(f"probabilities {probs.shape} vs labels {labels.shape}")
    n2 = probs.data.size
    if n2 == 0:
        return Tensor(np.zeros(()))
    y = Tensor(labels)
    ones = Tensor(np.ones(probs.shape))
    p = ad.clip(probs, PROB_EPS, 1.0 - PROB_EPS)
    pos = ad.mul(y, ad.log(p))
    neg = ad.mul(ad.sub(ones, y), ad.log(ad.sub(ones, p)))
    return ad.scale(ad.sum_all(ad.add(pos, neg)), -1.0 / n2)


def total_loss(point_term: Tensor, line_term: Tensor, weights: LossWeights) -> Tensor:
    """Weighted sum of the detector and discriminator losses."""
    return ad.add(ad.scale(point_term, weights.point), ad.scale(line_term, weights.line))
