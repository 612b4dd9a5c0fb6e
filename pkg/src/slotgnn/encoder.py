"""Point-feature encoder: a conv head over backbone features, bilinear
sampling at detected point locations, and positional fusion.

Sampling positions come from the non-differentiable decode step (or from
ground truth during training), so they are treated as constants: gradients
flow into the feature map through the fixed interpolation weights, not into
the coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import DimensionError
from .params import ModelParams


@dataclass
class NodeFeatures:
    """Per-point descriptors (N, feature_dim) and their normalized positions (N, 2)."""

    features: Tensor
    positions: np.ndarray


def encoder_forward(features: Tensor, params: ModelParams) -> Tensor:
    """Four stride-1 padded 3x3 convs over (..., S, S, C); ReLU between
    layers, linear output so sampled descriptors are not clipped at zero."""
    for i in range(4):
        features = ad.conv2d(features, params[f"encoder.conv{i}.kernel"],
                             params[f"encoder.conv{i}.bias"], stride=1, padding=1)
        if i < 3:
            features = ad.relu(features)
    return features


def bilinear_matrix(positions: np.ndarray, grid_size: int) -> np.ndarray:
    """Constant (N, S*S) matrix whose rows hold the four interpolation
    weights of each sample position, so sampling is a single matmul.

    Normalized (x, y) maps to continuous grid coordinates x * (S - 1),
    y * (S - 1): corners of the unit square land exactly on corner cells.
    Positions are clamped to the map border."""
    pos = np.asarray(positions, dtype=float).reshape(-1, 2)
    s = grid_size
    n = pos.shape[0]
    weights = np.zeros((n, s * s))
    gx = np.clip(pos[:, 0], 0.0, 1.0) * (s - 1)
    gy = np.clip(pos[:, 1], 0.0, 1.0) * (s - 1)
    x0 = np.clip(np.floor(gx).astype(int), 0, s - 2)
    y0 = np.clip(np.floor(gy).astype(int), 0, s - 2)
    tx = gx - x0
    ty = gy - y0
    rows = np.arange(n)
    weights[rows, y0 * s + x0] += (1 - tx) * (1 - ty)
    weights[rows, y0 * s + x0 + 1] += tx * (1 - ty)
    weights[rows, (y0 + 1) * s + x0] += (1 - tx) * ty
    weights[rows, (y0 + 1) * s + x0 + 1] += tx * ty
    return weights


def bilinear_sample(fmap: Tensor, positions: np.ndarray,
                    weights: np.ndarray | None = None) -> Tensor:
    """Sample (S, S, C) map at N normalized positions -> (N, C) tensor.

    A precomputed bilinear_matrix can be passed to amortize repeated
    sampling at fixed positions."""
    if fmap.ndim != 3 or fmap.shape[0] != fmap.shape[1]:
        raise DimensionError(f"expected a square (S, S, C) map, got {fmap.shape}")
    s, _, channels = fmap.shape
    if weights is None:
        weights = bilinear_matrix(positions, s)
    flat = ad.reshape(fmap, (s * s, channels))
    return ad.matmul(Tensor(weights), flat)


def positional_encoding(positions: np.ndarray, params: ModelParams) -> Tensor:
    """Two-layer MLP lifting normalized (x, y) to the feature width."""
    layers = [
        (params["posenc.fc0.weight"], params["posenc.fc0.bias"], "relu"),
        (params["posenc.fc1.weight"], params["posenc.fc1.bias"], "identity"),
    ]
    pos = Tensor(np.asarray(positions, dtype=float).reshape(-1, 2))
    return ad.mlp_forward(pos, layers)


def fuse_position(sampled: Tensor, positions: np.ndarray,
                  params: ModelParams) -> NodeFeatures:
    """Add the positional encoding to sampled descriptors (skipped when the
    config disables it, leaving appearance-only features)."""
    positions = np.asarray(positions, dtype=float).reshape(-1, 2)
    if sampled.shape[0] != positions.shape[0]:
        raise DimensionError(
            f"{sampled.shape[0]} descriptors but {positions.shape[0]} positions")
    if params.config.use_positional_encoder and positions.shape[0] > 0:
        fused = ad.add(sampled, positional_encoding(positions, params))
    else:
        fused = sampled
    return NodeFeatures(fused, positions)


def encode_points(fmap: Tensor, positions: np.ndarray, params: ModelParams,
                  weights: np.ndarray | None = None) -> NodeFeatures:
    """Full path from encoder map to fused node features."""
    sampled = bilinear_sample(fmap, positions, weights)
    return fuse_position(sampled, positions, params)
