"""End-to-end forward passes that stitch the stages together.

Training runs the backbone and both heads over a whole batch, then walks
scenes one by one through sampling, attention and pair scoring (node counts
differ per scene). Inference is the same path with decoded detections in
place of ground-truth positions and dropout off.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .detector import (GridMap, MarkingPoint, backbone_forward, decode_points,
                       detector_head)
from .discriminator import SlotPrediction, assemble_predictions, pair_probabilities
from .encoder import encode_points, encoder_forward
from .errors import DimensionError
from .gnn import gnn_forward
from .params import ModelParams


def image_tensor(image: np.ndarray, size: int) -> Tensor:
    image = np.asarray(image, dtype=np.float64)
    if image.shape != (size, size, 3):
        raise DimensionError(f"expected a ({size}, {size}, 3) image, got {image.shape}")
    return Tensor(image)


def batch_tensor(images: list[np.ndarray], size: int) -> Tensor:
    stack = np.stack([np.asarray(im, dtype=np.float64) for im in images])
    if stack.shape[1:] != (size, size, 3):
        raise DimensionError(
            f"expected ({size}, {size}, 3) images, got {stack.shape[1:]}")
    return Tensor(stack)


def shared_maps(images: Tensor, params: ModelParams) -> tuple[Tensor, Tensor]:
    """Backbone once, then both heads: returns (detector map, encoder map)."""
    features = backbone_forward(images, params)
    return detector_head(features, params), encoder_forward(features, params)


def scene_pair_probabilities(enc_map: Tensor, positions: np.ndarray,
                             params: ModelParams, training: bool = False,
                             rng: np.random.Generator | None = None,
                             weights: np.ndarray | None = None) -> Tensor:
    """Sample one scene's encoder map at the given positions and score all
    ordered point pairs."""
    nodes = encode_points(enc_map, positions, params, weights)
    relational = gnn_forward(nodes.features, params)
    return pair_probabilities(relational, params, training, rng)


def infer_image(image: np.ndarray, params: ModelParams
                ) -> tuple[list[MarkingPoint], np.ndarray, list[SlotPrediction]]:
    """Full detection on one image: decoded points, the pair-probability
    matrix, and the assembled slots. Deterministic; dropout off."""
    cfg = params.config
    x = image_tensor(image, cfg.image_size)
    features = backbone_forward(x, params)
    gmap = GridMap(detector_head(features, params), cfg.grid_size)
    points = decode_points(gmap, cfg.conf_threshold, cfg.nms_radius, cfg.max_points)
    if not points:
        return [], np.zeros((0, 0)), []
    positions = np.array([[p.x, p.y] for p in points])
    enc_map = encoder_forward(features, params)
    probs = scene_pair_probabilities(enc_map, positions, params).data
    slots = assemble_predictions(points, probs, cfg.pair_threshold)
    return points, probs, slots


def infer(image: np.ndarray, params: ModelParams) -> list[SlotPrediction]:
    return infer_image(image, params)[2]


def node_features_before_after(image: np.ndarray, positions: np.ndarray,
                               params: ModelParams) -> tuple[np.ndarray, np.ndarray]:
    """Node features entering and leaving the relational stage, teacher
    forced at the given positions. Used by the similarity diagnostics."""
    cfg = params.config
    x = image_tensor(image, cfg.image_size)
    features = backbone_forward(x, params)
    enc_map = encoder_forward(features, params)
    nodes = encode_points(enc_map, positions, params)
    after = gnn_forward(nodes.features, params)
    return nodes.features.data.copy(), after.data.copy()
