"""Fully connected multi-head attention over detected points.

Every point attends to every point (self-loops included); each layer mixes
the attention message back into the node through a residual MLP update.
A parameter-matched per-node MLP variant ("fcn_baseline") exists to measure
what the message passing itself contributes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import DimensionError, ParameterError
from .params import GnnConfig, ModelParams


@dataclass
class AttentionHead:
    query: tuple[Tensor, Tensor]
    key: tuple[Tensor, Tensor]
    value: tuple[Tensor, Tensor]


@dataclass
class GraphLayerParams:
    """Tensors of one layer, resolved from the named parameter store."""

    heads: list[AttentionHead]
    merge: tuple[Tensor, Tensor] | None
    update: list[tuple[Tensor, Tensor, str]]


def layer_params(params: ModelParams, layer: int) -> GraphLayerParams:
    cfg = params.config.gnn
    base = f"gnn.layer{layer}"
    if cfg.variant == "attentional":
        heads = []
        for h in range(cfg.heads):
            role = {}
            for name in ("query", "key", "value"):
                role[name] = (params[f"{base}.head{h}.{name}.weight"],
                              params[f"{base}.head{h}.{name}.bias"])
            heads.append(AttentionHead(role["query"], role["key"], role["value"]))
        merge = (params[f"{base}.merge.weight"], params[f"{base}.merge.bias"])
        update = [
            (params[f"{base}.update.fc0.weight"], params[f"{base}.update.fc0.bias"], "relu"),
            (params[f"{base}.update.fc1.weight"], params[f"{base}.update.fc1.bias"], "identity"),
        ]
        return GraphLayerParams(heads, merge, update)
    update = [
        (params[f"{base}.fc0.weight"], params[f"{base}.fc0.bias"], "relu"),
        (params[f"{base}.fc1.weight"], params[f"{base}.fc1.bias"], "identity"),
    ]
    return GraphLayerParams([], None, update)


def _affine(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    return ad.add(ad.matmul(x, weight), bias)


def _head_scores(nodes: Tensor, head: AttentionHead) -> Tensor:
    """Raw dot-product scores q k^T, (N, N). Unscaled on purpose: the
    projections are free to learn any temperature."""
    q = _affine(nodes, *head.query)
    k = _affine(nodes, *head.key)
    return ad.matmul(q, ad.transpose(k))


def attention_layer(nodes: Tensor, layer: GraphLayerParams) -> Tensor:
    """One attention layer: per-head softmax(q k^T) v, heads concatenated
    and merged, then a residual update x + MLP([x, message])."""
    messages = []
    for head in layer.heads:
        alpha = ad.softmax(_head_scores(nodes, head))
        v = _affine(nodes, *head.value)
        messages.append(ad.matmul(alpha, v))
    merged = _affine(ad.concat(messages), *layer.merge)
    update = ad.mlp_forward(ad.concat([nodes, merged]), layer.update)
    return ad.add(nodes, update)


def fcn_layer(nodes: Tensor, layer: GraphLayerParams) -> Tensor:
    """Per-node residual MLP with no cross-node exchange."""
    return ad.add(nodes, ad.mlp_forward(nodes, layer.update))


def gnn_forward(nodes: Tensor, params: ModelParams) -> Tensor:
    """Run all layers of the configured variant. Zero layers or zero nodes
    pass features through unchanged."""
    cfg = params.config.gnn
    if nodes.ndim != 2 or nodes.shape[1] != params.config.feature_dim:
        raise DimensionError(
            f"expected (N, {params.config.feature_dim}) node features, got {nodes.shape}")
    if nodes.shape[0] == 0:
        return nodes
    step = attention_layer if cfg.variant == "attentional" else fcn_layer
    for layer in range(cfg.layers):
        nodes = step(nodes, layer_params(params, layer))
    return nodes


def attention_weights(nodes: Tensor, params: ModelParams, layer: int,
                      head: int) -> np.ndarray:
    """Softmax attention matrix (N, N) of one head at the input of one
    layer, for inspection. Earlier layers are applied first so the matrix
    reflects what that layer actually sees."""
    cfg = params.config.gnn
    if cfg.variant != "attentional":
        raise ParameterError("attention weights exist only for the attentional variant")
    if not 0 <= layer < cfg.layers:
        raise ParameterError(f"layer {layer} out of range for {cfg.layers} layers")
    if not 0 <= head < cfg.heads:
        raise ParameterError(f"head {head} out of range for {cfg.heads} heads")
    for l in range(layer):
        nodes = attention_layer(nodes, layer_params(params, l))
    lp = layer_params(params, layer)
    scores = _head_scores(nodes, lp.heads[head])
    return ad.softmax(scores).data.copy()
