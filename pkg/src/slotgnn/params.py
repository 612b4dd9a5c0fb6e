"""Model configuration, named parameter store, and binary checkpoint IO."""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, field, replace
from typing import Iterator

import numpy as np

from .autodiff import Tensor
from .binio import BinaryReader
from .errors import CheckpointError, FormatError, ParameterError

CHECKPOINT_MAGIC = b"PSCK"
CHECKPOINT_VERSION = 1


@dataclass
class GnnConfig:
    """Depth, head count and architecture variant of the aggregation stack."""

    layers: int = 3
    heads: int = 4
    variant: str = "attentional"  # "attentional" or "fcn_baseline"

    def __post_init__(self):
        if self.layers < 0:
            raise ParameterError(f"gnn layers must be >= 0, got {self.layers}")
        if self.heads < 1:
            raise ParameterError(f"gnn heads must be >= 1, got {self.heads}")
        if self.variant not in ("attentional", "fcn_baseline"):
            raise ParameterError(f"unknown gnn variant {self.variant!r}")


@dataclass
class LossWeights:
    """Multipliers for the point-regression and line-classification losses."""

    point: float = 100.0
    line: float = 1.0

    def __post_init__(self):
        if self.point < 0 or self.line < 0:
            raise ParameterError("loss weights must be non-negative")


@dataclass
class ModelConfig:
    image_size: int = 256
    grid_size: int = 16
    backbone_channels: tuple[int, ...] = (16, 32, 64, 64)
    feature_dim: int = 64
    detector_hidden: int = 32
    encoder_hidden: int = 32
    positional_hidden: int = 32
    pair_hidden: int = 64
    pair_dropout: float = 0.5
    use_positional_encoder: bool = True
    conf_threshold: float = 0.5
    nms_radius: float = 0.0625
    pair_threshold: float = 0.5
    max_points: int = 16
    gnn: GnnConfig = field(default_factory=GnnConfig)
    loss_weights: LossWeights = field(default_factory=LossWeights)

    def __post_init__(self):
        if self.feature_dim % self.gnn.heads != 0:
            raise ParameterError(
                f"feature dim {self.feature_dim} not divisible by {self.gnn.heads} heads")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        d["backbone_channels"] = tuple(d["backbone_channels"])
        d["gnn"] = GnnConfig(**d["gnn"])
        d["loss_weights"] = LossWeights(**d["loss_weights"])
        return cls(**d)

    def with_overrides(self, **kwargs) -> "ModelConfig":
        return replace(self, **kwargs)


def matched_fcn_hidden(feature_dim: int, heads: int) -> int:
    """Hidden width of a per-node residual MLP whose parameter count matches
    one attention layer, so the baseline isolates message passing rather
    than capacity."""
    f = feature_dim
    dh = f // heads
    attn = heads * 3 * (f * dh + dh) + (f * f + f) + (2 * f * 2 * f + 2 * f) + (2 * f * f + f)
    return int(round((attn - f) / (2 * f + 1)))


def _parameter_shapes(config: ModelConfig) -> list[tuple[str, tuple[int, ...], str]]:
    """Single source of truth: (path, shape, init kind) for every parameter.

    Init kinds: "he" for layers followed by ReLU, "linear" for linear or
    sigmoid outputs, "zeros" for biases.
    """
    f = config.feature_dim
    specs: list[tuple[str, tuple[int, ...], str]] = []

    cin = 3
    for i, cout in enumerate(config.backbone_channels):
        specs.append((f"backbone.conv{i}.kernel", (3, 3, cin, cout), "he"))
        specs.append((f"backbone.conv{i}.bias", (cout,), "zeros"))
        cin = cout

    dh = config.detector_hidden
    specs.append(("detector.conv0.kernel", (3, 3, cin, dh), "he"))
    specs.append(("detector.conv0.bias", (dh,), "zeros"))
    specs.append(("detector.conv1.kernel", (3, 3, dh, 3), "linear"))
    specs.append(("detector.conv1.bias", (3,), "zeros"))

    eh = config.encoder_hidden
    enc_channels = [(cin, eh), (eh, eh), (eh, eh), (eh, f)]
    for i, (ci, co) in enumerate(enc_channels):
        kind = "linear" if i == len(enc_channels) - 1 else "he"
        specs.append((f"encoder.conv{i}.kernel", (3, 3, ci, co), kind))
        specs.append((f"encoder.conv{i}.bias", (co,), "zeros"))

    ph = config.positional_hidden
    specs.append(("posenc.fc0.weight", (2, ph), "he"))
    specs.append(("posenc.fc0.bias", (ph,), "zeros"))
    specs.append(("posenc.fc1.weight", (ph, f), "linear"))
    specs.append(("posenc.fc1.bias", (f,), "zeros"))

    gnn = config.gnn
    head_dim = f // gnn.heads
    for layer in range(gnn.layers):
        base = f"gnn.layer{layer}"
        if gnn.variant == "attentional":
            for h in range(gnn.heads):
                for role in ("query", "key", "value"):
                    specs.append((f"{base}.head{h}.{role}.weight", (f, head_dim), "linear"))
                    specs.append((f"{base}.head{h}.{role}.bias", (head_dim,), "zeros"))
            specs.append((f"{base}.merge.weight", (f, f), "linear"))
            specs.append((f"{base}.merge.bias", (f,), "zeros"))
            specs.append((f"{base}.update.fc0.weight", (2 * f, 2 * f), "he"))
            specs.append((f"{base}.update.fc0.bias", (2 * f,), "zeros"))
            specs.append((f"{base}.update.fc1.weight", (2 * f, f), "linear"))
            specs.append((f"{base}.update.fc1.bias", (f,), "zeros"))
        else:
            width = matched_fcn_hidden(f, gnn.heads)
            specs.append((f"{base}.fc0.weight", (f, width), "he"))
            specs.append((f"{base}.fc0.bias", (width,), "zeros"))
            specs.append((f"{base}.fc1.weight", (width, f), "linear"))
            specs.append((f"{base}.fc1.bias", (f,), "zeros"))

    specs.append(("disc.fc0.weight", (2 * f, config.pair_hidden), "he"))
    specs.append(("disc.fc0.bias", (config.pair_hidden,), "zeros"))
    specs.append(("disc.fc1.weight", (config.pair_hidden, 1), "linear"))
    specs.append(("disc.fc1.bias", (1,), "zeros"))
    return specs


def _fan_in(shape: tuple[int, ...]) -> int:
    if len(shape) == 4:  # conv kernel (kh, kw, cin, cout)
        return shape[0] * shape[1] * shape[2]
    return shape[0]


class ModelParams:
    """Named map from parameter path to Tensor, plus the config snapshot."""

    def __init__(self, tensors: dict[str, Tensor], config: ModelConfig,
                 version: int = CHECKPOINT_VERSION):
        self._tensors = dict(tensors)
        self.config = config
        self.version = version

    def get(self, path: str) -> Tensor:
        try:
            return self._tensors[path]
        except KeyError:
            raise CheckpointError(f"missing parameter path {path!r}") from None

    def __getitem__(self, path: str) -> Tensor:
        return self.get(path)

    def __contains__(self, path: str) -> bool:
        return path in self._tensors

    def __len__(self) -> int:
        return len(self._tensors)

    def paths(self) -> list[str]:
        return sorted(self._tensors)

    def items(self) -> Iterator[tuple[str, Tensor]]:
        for path in self.paths():
            yield path, self._tensors[path]

    def zero_grads(self) -> None:
        for t in self._tensors.values():
            t.grad = None

    def count(self) -> int:
        return sum(t.data.size for t in self._tensors.values())


def init_params(config: ModelConfig, seed: int) -> ModelParams:
    """Create all learnable tensors, seeded and in a fixed creation order."""
    rng = np.random.default_rng(seed)
    tensors: dict[str, Tensor] = {}
    for path, shape, kind in _parameter_shapes(config):
        if kind == "zeros":
            data = np.zeros(shape)
        else:
            gain = 2.0 if kind == "he" else 1.0
            std = np.sqrt(gain / _fan_in(shape))
            data = rng.normal(0.0, std, size=shape)
        tensors[path] = Tensor(data, requires_grad=True)
    return ModelParams(tensors, config)


def validate_params(params: ModelParams) -> None:
    """Check that every path required by the config is present with the right shape."""
    expected = {path: shape for path, shape, _ in _parameter_shapes(params.config)}
    missing = sorted(set(expected) - set(params.paths()))
    if missing:
        raise CheckpointError(f"missing parameter paths: {', '.join(missing)}")
    extra = sorted(set(params.paths()) - set(expected))
    if extra:
        raise CheckpointError(f"unexpected parameter paths: {', '.join(extra)}")
    for path, shape in expected.items():
        got = params.get(path).shape
        if tuple(got) != tuple(shape):
            raise CheckpointError(f"parameter {path!r} has shape {got}, expected {shape}")


def save_checkpoint(params: ModelParams, path: str) -> None:
    """Write a versioned binary checkpoint; parameters in sorted path order
    so identical models produce byte-identical files."""
    cfg_blob = json.dumps(params.config.to_dict(), sort_keys=True,
                          separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", params.version))
        fh.write(struct.pack("<I", len(cfg_blob)))
        fh.write(cfg_blob)
        fh.write(struct.pack("<I", len(params._tensors)))
        for name, tensor in params.items():
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<I", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<I", tensor.ndim))
            fh.write(struct.pack(f"<{tensor.ndim}I", *tensor.shape))
            fh.write(np.ascontiguousarray(tensor.data, dtype="<f8").tobytes())


def load_checkpoint(path: str) -> ModelParams:
    with open(path, "rb") as fh:
        blob = fh.read()
    r = BinaryReader(blob, "checkpoint")
    r.expect_magic(CHECKPOINT_MAGIC)
    version = r.u32("version")
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"checkpoint: unsupported version {version} at byte offset 4")
    cfg_len = r.u32("config length")
    cfg_start = r.pos
    try:
        config = ModelConfig.from_dict(json.loads(r.take(cfg_len, "config blob")))
    except (ValueError, TypeError, KeyError) as exc:
        raise FormatError(
            f"checkpoint: invalid config blob at byte offset {cfg_start}: {exc}") from None
    count = r.u32("parameter count")
    tensors: dict[str, Tensor] = {}
    for _ in range(count):
        name_len = r.u32("path length")
        name = r.take(name_len, "path").decode("utf-8")
        ndim = r.u32("ndim")
        shape = struct.unpack(f"<{ndim}I", r.take(4 * ndim, f"shape of {name}"))
        size = int(np.prod(shape)) if ndim else 1
        raw = r.take(8 * size, f"data of {name}")
        data = np.frombuffer(raw, dtype="<f8").reshape(shape).copy()
        tensors[name] = Tensor(data, requires_grad=True)
    r.expect_end()
    params = ModelParams(tensors, config, version)
    validate_params(params)
    return params
