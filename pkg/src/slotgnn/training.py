"""Adam optimizer and the teacher-forced training loop.

Training is deterministic for a fixed seed: parameter init, epoch
shuffling and discriminator dropout all derive from it, batches run
single-threaded, and Adam visits parameters in sorted path order.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .detector import point_loss_masked, point_targets
from .discriminator import line_loss, pair_label_matrix, total_loss
from .encoder import bilinear_matrix
from .errors import DataError, TrainingError
from .params import ModelConfig, ModelParams, init_params
from .pipeline import scene_pair_probabilities, shared_maps
from .scenes import SceneRecord


@dataclass
class TrainConfig:
    epochs: int = 30
    batch_size: int = 24
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1:
            raise DataError(
                f"epochs must be >= 0 and batch size >= 1, "
                f"got {self.epochs} and {self.batch_size}")


class AdamState:
    """First/second moment buffers and step counter, one pair per parameter."""

    def __init__(self, params: ModelParams, config: TrainConfig):
        self.config = config
        self.steps = 0
        self.m = {path: np.zeros_like(t.data) for path, t in params.items()}
        self.v = {path: np.zeros_like(t.data) for path, t in params.items()}


def adam_step(params: ModelParams, state: AdamState) -> None:
    """Bias-corrected Adam update from the gradients currently stored on the
    parameters; a missing gradient counts as zero."""
    c = state.config
    state.steps += 1
    bc1 = 1.0 - c.beta1 ** state.steps
    bc2 = 1.0 - c.beta2 ** state.steps
    for path, tensor in params.items():
        g = tensor.grad
        if g is None:
            g = np.zeros_like(tensor.data)
        elif np.isnan(g).any():
            raise TrainingError(f"NaN gradient in parameter {path!r}")
        m = state.m[path]
        v = state.v[path]
        m *= c.beta1
        m += (1.0 - c.beta1) * g
        v *= c.beta2
        v += (1.0 - c.beta2) * g * g
        tensor.data -= c.lr * (m / bc1) / (np.sqrt(v / bc2) + c.eps)


@dataclass
class _SceneCache:
    """Per-scene constants that never change across epochs (positions are
    teacher forced, so sampling weights and labels are fixed)."""

    image: np.ndarray
    target: np.ndarray
    mask: np.ndarray
    positions: np.ndarray
    labels: np.ndarray
    sample_weights: np.ndarray


def _build_cache(records: list[SceneRecord], config: ModelConfig) -> list[_SceneCache]:
    cache = []
    for rec in records:
        target, mask = point_targets(rec.points, config.grid_size)
        labels = pair_label_matrix(rec.points.shape[0], rec.entrance_pairs)
        weights = bilinear_matrix(rec.points, config.grid_size)
        cache.append(_SceneCache(rec.image, target, mask, rec.points, labels, weights))
    return cache


@dataclass
class EpochStats:
    epoch: int
    point_loss: float
    line_loss: float
    total_loss: float
    seconds: float


def _batch_loss(batch: list[_SceneCache], params: ModelParams,
                dropout_rng: np.random.Generator) -> tuple[Tensor, float, float]:
    config = params.config
    images = Tensor(np.stack([s.image for s in batch]).astype(np.float64))
    grid, enc = shared_maps(images, params)
    point_term = point_loss_masked(
        grid, Tensor(np.stack([s.target for s in batch])),
        Tensor(np.stack([s.mask for s in batch])))
    line_terms = []
    for b, scene in enumerate(batch):
        if scene.positions.shape[0] == 0:
            continue
        probs = scene_pair_probabilities(
            ad.batch_item(enc, b), scene.positions, params,
            training=True, rng=dropout_rng, weights=scene.sample_weights)
        line_terms.append(line_loss(probs, scene.labels))
    if line_terms:
        acc = line_terms[0]
        for term in line_terms[1:]:
            acc = ad.add(acc, term)
        line_term = ad.scale(acc, 1.0 / len(batch))
    else:
        line_term = Tensor(np.zeros(()))
    loss = total_loss(point_term, line_term, config.loss_weights)
    return loss, point_term.item(), line_term.item()


def fit_records(records: list[SceneRecord], params: ModelParams,
                tconfig: TrainConfig,
                progress: Callable[[EpochStats], None] | None = None
                ) -> list[EpochStats]:
    """Train in place over the given scenes; returns per-epoch statistics."""
    if not records:
        raise DataError("cannot train on an empty dataset")
    cache = _build_cache(records, params.config)
    shuffle_rng, dropout_rng = np.random.default_rng(tconfig.seed).spawn(2)
    state = AdamState(params, tconfig)
    history = []
    for epoch in range(tconfig.epochs):
        started = time.monotonic()
        order = shuffle_rng.permutation(len(cache))
        sums = np.zeros(3)
        batches = 0
        for lo in range(0, len(order), tconfig.batch_size):
            batch = [cache[i] for i in order[lo:lo + tconfig.batch_size]]
            params.zero_grads()
            loss, point_val, line_val = _batch_loss(batch, params, dropout_rng)
            total_val = loss.item()
            if not np.isfinite(total_val):
                raise TrainingError(
                    f"training diverged: loss {total_val} in epoch {epoch}")
            loss.backward()
            adam_step(params, state)
            sums += (point_val, line_val, total_val)
            batches += 1
        stats = EpochStats(epoch, sums[0] / batches, sums[1] / batches,
                           sums[2] / batches, time.monotonic() - started)
        history.append(stats)
        if progress is not None:
            progress(stats)
    return history


def train(records: list[SceneRecord], model_config: ModelConfig,
          tconfig: TrainConfig,
          progress: Callable[[EpochStats], None] | None = None
          ) -> tuple[ModelParams, list[EpochStats]]:
    """Initialize from the training seed and fit; returns trained
    parameters and the loss history."""
    params = init_params(model_config, tconfig.seed)
    history = fit_records(records, params, tconfig, progress)
    return params, history
