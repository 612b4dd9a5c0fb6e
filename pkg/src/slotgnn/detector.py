"""Convolutional backbone and grid-cell marking-point detector.

The detector divides the image into grid_size x grid_size cells. Each cell
predicts (confidence, dx, dy) where the offsets locate a point inside the
cell. A point at normalized (x, y) belongs to cell (row i, col j) with
j = floor(x * S), i = floor(y * S), and decodes back as x = (j + dx) / S.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import DataError, DimensionError
from .params import ModelParams


@dataclass
class MarkingPoint:
    """One detected slot corner in normalized image coordinates."""

    x: float
    y: float
    confidence: float


@dataclass
class GridMap:
    """Per-cell detector output, shape (S, S, 3): confidence, dx, dy."""

    cells: Tensor
    grid_size: int

    def __post_init__(self):
        s = self.grid_size
        if self.cells.shape != (s, s, 3):
            raise DimensionError(
                f"grid map must have shape ({s}, {s}, 3), got {self.cells.shape}")


def backbone_forward(image: Tensor, params: ModelParams) -> Tensor:
    """Four stride-2 3x3 conv+ReLU stages: (..., 256, 256, 3) -> (..., 16, 16, 64)."""
    cfg = params.config
    size = cfg.image_size
    spatial = image.shape[1:3] if image.ndim == 4 else image.shape[0:2]
    if image.ndim not in (3, 4) or spatial != (size, size):
        raise DimensionError(
            f"backbone expects a (..., {size}, {size}, 3) image, got shape {image.shape}")
    x = image
    for i in range(len(cfg.backbone_channels)):
        x = ad.conv2d(x, params[f"backbone.conv{i}.kernel"],
                      params[f"backbone.conv{i}.bias"], stride=2, padding=1)
        x = ad.relu(x)
    return x


def detector_head(features: Tensor, params: ModelParams) -> Tensor:
    """Map backbone features to per-cell (confidence, dx, dy) in (0, 1)."""
    x = ad.conv2d(features, params["detector.conv0.kernel"],
                  params["detector.conv0.bias"], stride=1, padding=1)
    x = ad.relu(x)
    x = ad.conv2d(x, params["detector.conv1.kernel"],
                  params["detector.conv1.bias"], stride=1, padding=1)
    return ad.sigmoid(x)


def detector_forward(features: Tensor, params: ModelParams) -> GridMap:
    if features.ndim != 3:
        raise DimensionError(
            f"detector_forward expects a single (S, S, C) feature map, got {features.shape}")
    return GridMap(detector_head(features, params), params.config.grid_size)


def decode_points(gmap: GridMap, conf_threshold: float = 0.5,
                  nms_radius: float = 0.0625, max_points: int = 16) -> list[MarkingPoint]:
    """Threshold cells, decode to normalized coordinates, then greedy NMS:
    keep candidates in descending confidence, drop any within nms_radius
    (Euclidean) of an already kept point. Ties break on (row, col) so the
    result is deterministic."""
    s = gmap.grid_size
    cells = gmap.cells.data
    rows, cols = np.nonzero(cells[:, :, 0] >= conf_threshold)
    if rows.size == 0:
        return []
    conf = cells[rows, cols, 0]
    xs = (cols + cells[rows, cols, 1]) / s
    ys = (rows + cells[rows, cols, 2]) / s
    order = np.lexsort((cols, rows, -conf))
    kept: list[MarkingPoint] = []
    for idx in order:
        x, y, c = xs[idx], ys[idx], conf[idx]
        if any((x - p.x) ** 2 + (y - p.y) ** 2 < nms_radius ** 2 for p in kept):
            continue
        kept.append(MarkingPoint(float(x), float(y), float(c)))
        if len(kept) >= max_points:
            break
    return kept


def point_cell(x: float, y: float, grid_size: int) -> tuple[int, int, float, float]:
    """Cell (row, col) owning a normalized point, plus in-cell offsets."""
    col = min(int(x * grid_size), grid_size - 1)
    row = min(int(y * grid_size), grid_size - 1)
    return row, col, x * grid_size - col, y * grid_size - row


def point_targets(points: np.ndarray, grid_size: int) -> tuple[np.ndarray, np.ndarray]:
    """Regression target and mask for one scene.

    Returns (target, mask), both (S, S, 3). Occupied cells carry
    (1, dx, dy) and mask 1 on all three channels; empty cells are
    supervised on confidence only (target 0). Two points in one cell is a
    labeling error."""
    s = grid_size
    target = np.zeros((s, s, 3))
    mask = np.zeros((s, s, 3))
    mask[:, :, 0] = 1.0
    for x, y in np.asarray(points, dtype=float).reshape(-1, 2):
        if not (0.0 <= x <= 1.0 and 0.0 <= y <= 1.0):
            raise DataError(f"point ({x}, {y}) outside the unit square")
        row, col, dx, dy = point_cell(x, y, s)
        if target[row, col, 0] == 1.0:
            raise DataError(f"two points fall in grid cell ({row}, {col})")
        target[row, col] = (1.0, dx, dy)
        mask[row, col] = 1.0
    return target, mask


def point_loss_masked(pred: Tensor, target: Tensor, mask: Tensor) -> Tensor:
    """Sum of squared errors over supervised channels, averaged per scene.

    Accepts (S, S, 3) or batched (B, S, S, 3) maps; the constant target and
    mask must match. Offsets contribute only where a point exists."""
    if pred.shape != target.shape or pred.shape != mask.shape:
        raise DimensionError(
            f"prediction {pred.shape}, target {target.shape} and mask {mask.shape} must match")
    diff = ad.sub(pred, target)
    masked = ad.mul(ad.mul(diff, diff), mask)
    scenes = pred.shape[0] if pred.ndim == 4 else 1
    return ad.scale(ad.sum_all(masked), 1.0 / scenes)


def point_loss(gmap: GridMap, points: np.ndarray) -> Tensor:
    """Single-scene detector loss against ground-truth normalized points."""
    target, mask = point_targets(points, gmap.grid_size)
    return point_loss_masked(gmap.cells, Tensor(target), Tensor(mask))
