"""Dense float64 tensors with reverse-mode automatic differentiation.

Every learnable computation in the package is expressed through the ops in
this module.  Tensors record the op that produced them; calling
``backward()`` on a result materializes the tape (all recorded ancestor ops,
in creation order) and replays it once in reverse, accumulating gradients
into ``.grad`` buffers.  Tensors that do not participate in a tape are
plain immutable arrays and safe to share across threads.
"""

from __future__ import annotations

import itertools
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import DimensionError, ParameterError

_SEQ = itertools.count()


class Tensor:
    """A float64 array with optional gradient tracking.

    Attributes:
        data: the value, a C-contiguous float64 ndarray.
        grad: gradient buffer of the same shape, or None until backward.
        requires_grad: whether gradients should flow into this tensor.
    """

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.ascontiguousarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None
        self._seq = next(_SEQ)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        if self.data.size != 1:
            raise DimensionError(f"item() requires a single-element tensor, got {self.shape}")
        return float(self.data.reshape(-1)[0])

    def backward(self) -> None:
        """Run reverse-mode differentiation from this tensor.

        Seeds this tensor's gradient with ones, then walks the recorded
        ops in reverse creation order (a valid reverse-topological order,
        since ops are recorded eagerly), visiting each exactly once.
        """
        if not self.requires_grad:
            raise ParameterError("backward() called on a tensor with requires_grad=False")
        tape = _collect(self)
        self.grad = np.ones_like(self.data)
        for node in tape:
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other if isinstance(other, Tensor) else Tensor(other))

    def __sub__(self, other):
        return sub(self, other if isinstance(other, Tensor) else Tensor(other))

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return mul(self, other)

    __rmul__ = __mul__


def _collect(root: Tensor) -> list[Tensor]:
    """All tape ancestors of ``root``, sorted by descending creation order."""
    seen: set[int] = set()
    nodes: list[Tensor] = []
    stack = [root]
    while stack:
        t = stack.pop()
        if id(t) in seen:
            continue
        seen.add(id(t))
        if t._backward is not None:
            nodes.append(t)
        stack.extend(t._parents)
    nodes.sort(key=lambda t: t._seq, reverse=True)
    return nodes


def _give(t: Tensor, g: np.ndarray) -> None:
    """Accumulate a freshly allocated gradient; may take ownership."""
    if t.grad is None:
        t.grad = g
    else:
        t.grad += g


def _share(t: Tensor, g: np.ndarray) -> None:
    """Accumulate a gradient that aliases another buffer; copies on first use."""
    if t.grad is None:
        t.grad = g.copy()
    else:
        t.grad += g


def _make(data: np.ndarray, parents: tuple[Tensor, ...],
          backward: Callable[[np.ndarray], None] | None) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.requires_grad = backward is not None
    out._parents = parents if backward is not None else ()
    out._backward = backward
    out._seq = next(_SEQ)
    return out


def _needs_grad(*tensors: Tensor) -> bool:
    return any(t.requires_grad for t in tensors)


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum; also broadcasts a 1-D bias over the last axis."""
    if a.shape == b.shape:
        data = a.data + b.data

        def backward(g):
            if a.requires_grad:
                _share(a, g)
            if b.requires_grad:
                _share(b, g)

    elif b.ndim == 1 and a.ndim >= 1 and a.shape[-1] == b.shape[0]:
        data = a.data + b.data

        def backward(g):
            if a.requires_grad:
                _share(a, g)
            if b.requires_grad:
                _give(b, g.reshape(-1, g.shape[-1]).sum(axis=0))

    else:
        raise DimensionError(f"add: incompatible shapes {a.shape} and {b.shape}")
    return _make(data, (a, b), backward if _needs_grad(a, b) else None)


def sub(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise DimensionError(f"sub: incompatible shapes {a.shape} and {b.shape}")
    data = a.data - b.data

    def backward(g):
        if a.requires_grad:
            _share(a, g)
        if b.requires_grad:
            _give(b, -g)

    return _make(data, (a, b), backward if _needs_grad(a, b) else None)


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product of same-shape tensors."""
    if a.shape != b.shape:
        raise DimensionError(f"mul: incompatible shapes {a.shape} and {b.shape}")
    data = a.data * b.data

    def backward(g):
        if a.requires_grad:
            _give(a, g * b.data)
        if b.requires_grad:
            _give(b, g * a.data)

    return _make(data, (a, b), backward if _needs_grad(a, b) else None)


def scale(a: Tensor, s: float) -> Tensor:
    data = a.data * s

    def backward(g):
        _give(a, g * s)

    return _make(data, (a,), backward if a.requires_grad else None)


def neg(a: Tensor) -> Tensor:
    return scale(a, -1.0)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product of two 2-D tensors; dA = dC @ B^T, dB = A^T @ dC."""
    if a.ndim != 2 or b.ndim != 2:
        raise DimensionError(f"matmul expects 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: inner dimensions disagree, {a.shape} @ {b.shape}")
    data = a.data @ b.data

    def backward(g):
        if a.requires_grad:
            _give(a, g @ b.data.T)
        if b.requires_grad:
            _give(b, a.data.T @ g)

    return _make(data, (a, b), backward if _needs_grad(a, b) else None)


def relu(a: Tensor) -> Tensor:
    data = np.maximum(a.data, 0.0)

    def backward(g):
        _give(a, np.where(data > 0.0, g, 0.0))

    return _make(data, (a,), backward if a.requires_grad else None)


def sigmoid(a: Tensor) -> Tensor:
    """Elementwise logistic function, computed without overflow."""
    x = a.data
    data = np.empty_like(x)
    pos = x >= 0
    data[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    data[~pos] = ex / (1.0 + ex)

    def backward(g):
        _give(a, g * data * (1.0 - data))

    return _make(data, (a,), backward if a.requires_grad else None)


def log(a: Tensor) -> Tensor:
    data = np.log(a.data)

    def backward(g):
        _give(a, g / a.data)

    return _make(data, (a,), backward if a.requires_grad else None)


def clip(a: Tensor, lo: float, hi: float) -> Tensor:
    """Clamp values to [lo, hi]; gradient passes only strictly inside."""
    data = np.clip(a.data, lo, hi)

    def backward(g):
        _give(a, np.where((a.data > lo) & (a.data < hi), g, 0.0))

    return _make(data, (a,), backward if a.requires_grad else None)


def softmax(a: Tensor) -> Tensor:
    """Softmax over the last axis, stabilized by max subtraction."""
    if a.data.size == 0 or a.shape[-1] == 0:
        raise DimensionError(f"softmax: empty input of shape {a.shape}")
    shifted = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    data = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        inner = (g * data).sum(axis=-1, keepdims=True)
        _give(a, data * (g - inner))

    return _make(data, (a,), backward if a.requires_grad else None)


def sum_all(a: Tensor) -> Tensor:
    data = np.asarray(a.data.sum())

    def backward(g):
        _give(a, np.full(a.shape, float(g)))

    return _make(data, (a,), backward if a.requires_grad else None)


def mean_all(a: Tensor) -> Tensor:
    return scale(sum_all(a), 1.0 / a.data.size)


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    data = a.data.reshape(shape)

    def backward(g):
        _share(a, g.reshape(a.shape))

    return _make(data, (a,), backward if a.requires_grad else None)


def concat(tensors: Sequence[Tensor]) -> Tensor:
    """Concatenate 2-D tensors along the last axis."""
    tensors = list(tensors)
    if not tensors:
        raise DimensionError("concat: need at least one tensor")
    rows = tensors[0].shape[0]
    if any(t.ndim != 2 or t.shape[0] != rows for t in tensors):
        raise DimensionError(
            f"concat: incompatible shapes {[t.shape for t in tensors]}")
    data = np.concatenate([t.data for t in tensors], axis=1)
    edges = np.cumsum([0] + [t.shape[1] for t in tensors])

    def backward(g):
        for t, lo, hi in zip(tensors, edges, edges[1:]):
            if t.requires_grad:
                _share(t, g[:, lo:hi])

    return _make(data, tuple(tensors), backward if _needs_grad(*tensors) else None)


def transpose(a: Tensor) -> Tensor:
    """Transpose a 2-D tensor."""
    if a.ndim != 2:
        raise DimensionError(f"transpose expects a 2-D tensor, got {a.shape}")
    data = np.ascontiguousarray(a.data.T)

    def backward(g):
        _give(a, np.ascontiguousarray(g.T))

    return _make(data, (a,), backward if a.requires_grad else None)


def batch_item(a: Tensor, i: int) -> Tensor:
    """Select one item along the leading batch axis."""
    data = a.data[i]

    def backward(g):
        if a.grad is None:
            a.grad = np.zeros_like(a.data)
        a.grad[i] += g

    return _make(data, (a,), backward if a.requires_grad else None)


def dropout(a: Tensor, rate: float, training: bool, rng: np.random.Generator) -> Tensor:
    """Inverted dropout: zero with probability ``rate`` and rescale survivors.

    In inference mode (``training=False``) this is the exact identity; the
    input tensor is returned unchanged.
    """
    if not 0.0 <= rate < 1.0:
        raise ParameterError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return a
    keep = rng.random(a.shape) >= rate
    factor = 1.0 / (1.0 - rate)
    data = np.where(keep, a.data * factor, 0.0)

    def backward(g):
        _give(a, np.where(keep, g * factor, 0.0))

    return _make(data, (a,), backward if a.requires_grad else None)


def _extract_patches(x: np.ndarray, kh: int, kw: int, stride: int, padding: int):
    """im2col: gather all kernel windows into a (B*Ho*Wo, kh*kw*C) matrix."""
    b, h, w, c = x.shape
    if padding:
        xp = np.zeros((b, h + 2 * padding, w + 2 * padding, c))
        xp[:, padding:padding + h, padding:padding + w, :] = x
    else:
        xp = x
    ho = (h + 2 * padding - kh) // stride + 1
    wo = (w + 2 * padding - kw) // stride + 1
    if ho < 1 or wo < 1 or kh > h + 2 * padding or kw > w + 2 * padding:
        raise DimensionError(
            f"conv2d: kernel ({kh}x{kw}) larger than padded input "
            f"({h + 2 * padding}x{w + 2 * padding})")
    cols = np.empty((b, ho, wo, kh, kw, c))
    for i in range(kh):
        for j in range(kw):
            cols[:, :, :, i, j, :] = xp[:, i:i + stride * ho:stride, j:j + stride * wo:stride, :]
    return cols.reshape(b * ho * wo, kh * kw * c), ho, wo


def _fold_patches(dcols: np.ndarray, b: int, h: int, w: int, c: int,
                  kh: int, kw: int, stride: int, padding: int) -> np.ndarray:
    """col2im: scatter-add patch gradients back onto the input grid."""
    ho = (h + 2 * padding - kh) // stride + 1
    wo = (w + 2 * padding - kw) // stride + 1
    dxp = np.zeros((b, h + 2 * padding, w + 2 * padding, c))
    d6 = dcols.reshape(b, ho, wo, kh, kw, c)
    for i in range(kh):
        for j in range(kw):
            dxp[:, i:i + stride * ho:stride, j:j + stride * wo:stride, :] += d6[:, :, :, i, j, :]
    if padding:
        return np.ascontiguousarray(dxp[:, padding:padding + h, padding:padding + w, :])
    return dxp


def conv2d(x: Tensor, kernel: Tensor, bias: Tensor | None = None,
           stride: int = 1, padding: int = 0) -> Tensor:
    """2-D cross-correlation over channels-last input.

    Args:
        x: input of shape (H, W, Cin) or (B, H, W, Cin).
        kernel: weights of shape (kh, kw, Cin, Cout).
        bias: optional per-output-channel offset of shape (Cout,).
        stride: window step, >= 1.
        padding: zero rows/columns added to each border.

    Returns:
        Output of shape (..., H', W', Cout) with
        H' = (H + 2*padding - kh) // stride + 1.
    """
    if kernel.ndim != 4:
        raise DimensionError(f"conv2d: kernel must be 4-D, got {kernel.shape}")
    batched = x.ndim == 4
    if not batched and x.ndim != 3:
        raise DimensionError(f"conv2d: input must be 3-D or 4-D, got {x.shape}")
    xd = x.data if batched else x.data[None]
    b, h, w, cin = xd.shape
    kh, kw, kcin, cout = kernel.shape
    if kcin != cin:
        raise DimensionError(
            f"conv2d: input channels {cin} != kernel channels {kcin} "
            f"(input {x.shape}, kernel {kernel.shape})")
    if bias is not None and bias.shape != (cout,):
        raise DimensionError(f"conv2d: bias shape {bias.shape} != ({cout},)")
    cols, ho, wo = _extract_patches(xd, kh, kw, stride, padding)
    kflat = kernel.data.reshape(-1, cout)
    out = cols @ kflat
    if bias is not None:
        out += bias.data
    data = out.reshape(b, ho, wo, cout) if batched else out.reshape(ho, wo, cout)
    parents = (x, kernel) if bias is None else (x, kernel, bias)

    def backward(g):
        gflat = g.reshape(-1, cout)
        if bias is not None and bias.requires_grad:
            _give(bias, gflat.sum(axis=0))
        if kernel.requires_grad:
            _give(kernel, (cols.T @ gflat).reshape(kernel.shape))
        if x.requires_grad:
            dcols = gflat @ kflat.T
            dx = _fold_patches(dcols, b, h, w, cin, kh, kw, stride, padding)
            _give(x, dx if batched else dx[0])

    return _make(data, parents, backward if _needs_grad(*parents) else None)


_ACTIVATIONS = {
    "identity": lambda t: t,
    "relu": relu,
    "sigmoid": sigmoid,
}


def mlp_forward(x: Tensor, layers: Iterable[tuple[Tensor, Tensor, str]]) -> Tensor:
    """Apply a stack of affine layers: x @ W + b followed by an activation.

    Each layer is (weights, bias, activation) with activation one of
    "identity", "relu", "sigmoid".
    """
    out = x
    for weights, bias, activation in layers:
        if activation not in _ACTIVATIONS:
            raise ParameterError(f"unknown activation {activation!r}")
        out = _ACTIVATIONS[activation](add(matmul(out, weights), bias))
    return out


def grad_check(f: Callable[[Tensor], Tensor], x: Tensor, step: float = 1e-5,
               max_coords: int | None = None, rng: np.random.Generator | None = None,
               scale_floor: float = 1e-2) -> float:
    """Compare the tape gradient of a scalar function against central differences.

    Args:
        f: maps ``x`` to a scalar Tensor; re-evaluated per perturbation.
        x: the tensor to differentiate with respect to.
        step: central-difference step size.
        max_coords: if set, check only this many randomly chosen coordinates.
        rng: generator used when sampling coordinates.
        scale_floor: gradients smaller than this are compared absolutely
            against the floor, so a relative tolerance of 1e-4 implies an
            absolute tolerance of 1e-4 * scale_floor.

    Returns:
        The worst relative error over the checked coordinates.
    """
    x.requires_grad = True
    x.grad = None
    out = f(x)
    if out.data.size != 1:
        raise DimensionError(f"grad_check requires a scalar function, got shape {out.shape}")
    out.backward()
    analytic = x.grad.reshape(-1).copy()

    flat = x.data.reshape(-1)
    indices = np.arange(flat.size)
    if max_coords is not None and max_coords < flat.size:
        rng = rng or np.random.default_rng(0)
        indices = rng.choice(flat.size, size=max_coords, replace=False)

    worst = 0.0
    for idx in indices:
        orig = flat[idx]
        flat[idx] = orig + step
        fp = float(f(x).data)
        flat[idx] = orig - step
        fm = float(f(x).data)
        flat[idx] = orig
        numeric = (fp - fm) / (2.0 * step)
        a = analytic[idx]
        err = abs(a - numeric) / max(abs(a), abs(numeric), scale_floor)
        worst = max(worst, err)
    return worst
