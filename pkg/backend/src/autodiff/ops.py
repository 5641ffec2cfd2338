"""
Differentiable operations on Tensor.

Each op computes its forward value with numpy and registers an exact
backward closure. Broadcasting follows numpy; gradients are summed back to
the operand shape.
"""

from typing import Optional, Sequence, Tuple, Union

import numpy as np

from src.autodiff.tensor import Tensor, get_dtype, make_node
from src.utils.errors import ShapeError

Operand = Union[Tensor, float, int, np.ndarray]
IntPair = Union[int, Tuple[int, int]]


def as_tensor(x: Operand) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=get_dtype()), op="const")


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


def _pair(value: IntPair) -> Tuple[int, int]:
    if isinstance(value, int):
        return value, value
    a, b = value
    return int(a), int(b)


# --- elementwise arithmetic ------------------------------------------------


def add(xs: Sequence[Operand]) -> Tensor:
    tensors = [as_tensor(x) for x in xs]
    if not tensors:
        raise ShapeError("add() needs at least one operand")
    try:
        data = tensors[0].data
        for t in tensors[1:]:
            data = data + t.data
    except ValueError as e:
        raise ShapeError(f"add(): {e}") from e
    shapes = [t.shape for t in tensors]

    def backward_fn(g):
        return [_unbroadcast(g, s) for s in shapes]

    return make_node(data, tensors, backward_fn, "add")


def sub(a: Operand, b: Operand) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    try:
        data = a.data - b.data
    except ValueError as e:
        raise ShapeError(f"sub(): {e}") from e

    def backward_fn(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return make_node(data, (a, b), backward_fn, "sub")


def mul(a: Operand, b: Operand) -> Tensor:
    """Elementwise (Hadamard) product"""
    a, b = as_tensor(a), as_tensor(b)
    try:
        data = a.data * b.data
    except ValueError as e:
        raise ShapeError(f"mul(): {e}") from e

    def backward_fn(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return make_node(data, (a, b), backward_fn, "mul")


hadamard = mul


def div(a: Operand, b: Operand) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data / b.data

    def backward_fn(g):
        return (
            _unbroadcast(g / b.data, a.shape),
            _unbroadcast(-g * a.data / (b.data * b.data), b.shape),
        )

    return make_node(data, (a, b), backward_fn, "div")


def square(x: Tensor) -> Tensor:
    def backward_fn(g):
        return (2.0 * x.data * g,)

    return make_node(x.data * x.data, (x,), backward_fn, "square")


def sqrt(x: Tensor) -> Tensor:
    data = np.sqrt(x.data)

    def backward_fn(g):
        return (g / (2.0 * data),)

    return make_node(data, (x,), backward_fn, "sqrt")


def log(x: Tensor) -> Tensor:
    def backward_fn(g):
        return (g / x.data,)

    return make_node(np.log(x.data), (x,), backward_fn, "log")


def exp(x: Tensor) -> Tensor:
    data = np.exp(x.data)

    def backward_fn(g):
        return (g * data,)

    return make_node(data, (x,), backward_fn, "exp")


def clamp_min(x: Tensor, floor: float) -> Tensor:
    mask = x.data > floor

    def backward_fn(g):
        return (g * mask,)

    return make_node(np.maximum(x.data, floor), (x,), backward_fn, "clamp_min")


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0

    def backward_fn(g):
        return (g * mask,)

    return make_node(x.data * mask, (x,), backward_fn, "relu")


# --- reductions and layout -------------------------------------------------


def _normalize_axes(axis, ndim: int) -> Tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(a % ndim for a in axis)


def sum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    axes = _normalize_axes(axis, x.ndim)
    data = x.data.sum(axis=axes, keepdims=keepdims)

    def backward_fn(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, x.shape).copy(),)

    return make_node(data, (x,), backward_fn, "sum")


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _normalize_axes(axis, x.ndim)
    count = int(np.prod([x.shape[a] for a in axes])) if axes else 1
    data = x.data.mean(axis=axes, keepdims=keepdims)

    def backward_fn(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g / count, x.shape).copy(),)

    return make_node(data, (x,), backward_fn, "mean")


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    try:
        data = x.data.reshape(tuple(shape))
    except ValueError as e:
        raise ShapeError(f"reshape {x.shape} -> {tuple(shape)}: {e}") from e

    def backward_fn(g):
        return (g.reshape(x.shape),)

    return make_node(data, (x,), backward_fn, "reshape")


def transpose(x: Tensor, axes: Optional[Sequence[int]] = None) -> Tensor:
    axes = tuple(range(x.ndim))[::-1] if not axes else tuple(axes)
    inverse = tuple(np.argsort(axes))

    def backward_fn(g):
        return (g.transpose(inverse),)

    return make_node(x.data.transpose(axes), (x,), backward_fn, "transpose")


def concat(xs: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = [as_tensor(x) for x in xs]
    try:
        data = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as e:
        raise ShapeError(f"concat(): {e}") from e
    sizes = [t.shape[axis] for t in tensors]
    cuts = np.cumsum(sizes)[:-1]

    def backward_fn(g):
        return np.split(g, cuts, axis=axis)

    return make_node(data, tensors, backward_fn, "concat")


def take(x: Tensor, indices, axis: int = 0) -> Tensor:
    """Gather slices along one axis; repeated indices accumulate gradient"""
    idx = np.atleast_1d(np.asarray(indices, dtype=np.int64))
    axis = axis % x.ndim
    data = np.take(x.data, idx, axis=axis)

    def backward_fn(g):
        gx = np.zeros(x.shape, dtype=g.dtype)
        moved = np.moveaxis(gx, axis, 0)
        np.add.at(moved, idx, np.moveaxis(g, axis, 0))
        return (gx,)

    return make_node(data, (x,), backward_fn, "take")


# --- linear algebra --------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs rank >= 2 operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner dimensions differ: {a.shape} @ {b.shape}")
    data = np.matmul(a.data, b.data)

    def backward_fn(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return make_node(data, (a, b), backward_fn, "matmul")


def dense(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """x[..., in] @ W[in, out] (+ b[out])"""
    if x.shape[-1] != weight.shape[0]:
        raise ShapeError(f"dense: input width {x.shape[-1]} != weight rows {weight.shape[0]}")
    out = matmul(x, weight)
    if bias is not None:
        out = add([out, bias])
    return out


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=axis, keepdims=True)

    def backward_fn(g):
        return (s * (g - (g * s).sum(axis=axis, keepdims=True)),)

    return make_node(s, (x,), backward_fn, "softmax")


def dropout(x: Tensor, p: float, rng: np.random.Generator, train: bool = True) -> Tensor:
    """Inverted dropout; the identity when not training or p == 0"""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout probability must be in [0, 1), got {p}")
    if not train or p == 0.0:
        return x
    mask = (rng.random(x.shape) >= p).astype(x.data.dtype) / (1.0 - p)

    def backward_fn(g):
        return (g * mask,)

    return make_node(x.data * mask, (x,), backward_fn, "dropout")


# --- convolution and pooling -----------------------------------------------


def _same_pads(k: int) -> Tuple[int, int]:
    before = (k - 1) // 2
    return before, k - 1 - before


def _conv_padding(padding, kh: int, kw: int) -> Tuple[Tuple[int, int], Tuple[int, int]]:
    if padding == "same":
        return _same_pads(kh), _same_pads(kw)
    if padding == "valid":
        return (0, 0), (0, 0)
    ph, pw = _pair(padding)
    return (ph, ph), (pw, pw)


def conv2d(
    x: Tensor,
    kernel: Tensor,
    bias: Optional[Tensor] = None,
    stride: IntPair = 1,
    padding: Union[str, IntPair] = "same",
) -> Tensor:
    """
    2-D cross-correlation.

    x: [B, C, H, W], kernel: [O, C, kh, kw] -> [B, O, Ho, Wo].
    'same' padding puts the extra row/column of an even kernel at the
    bottom/right.
    """
    if x.ndim != 4 or kernel.ndim != 4:
        raise ShapeError(f"conv2d expects 4-D input and kernel, got {x.shape} and {kernel.shape}")
    batch, channels, height, width = x.shape
    out_ch, k_ch, kh, kw = kernel.shape
    if channels != k_ch:
        raise ShapeError(f"conv2d: input has {channels} channels, kernel expects {k_ch}")
    sh, sw = _pair(stride)
    (pt, pb), (pl, pr) = _conv_padding(padding, kh, kw)
    xp = np.pad(x.data, ((0, 0), (0, 0), (pt, pb), (pl, pr)))
    hp, wp = xp.shape[2], xp.shape[3]
    ho = (hp - kh) // sh + 1
    wo = (wp - kw) // sw + 1
    if ho <= 0 or wo <= 0:
        raise ShapeError(f"conv2d: kernel {kh}x{kw} larger than padded input {hp}x{wp}")

    w = kernel.data
    out = np.zeros((batch, ho, wo, out_ch), dtype=xp.dtype)
    for i in range(kh):
        for j in range(kw):
            patch = xp[:, :, i : i + sh * ho : sh, j : j + sw * wo : sw]
            out += np.tensordot(patch, w[:, :, i, j], axes=([1], [1]))
    out = out.transpose(0, 3, 1, 2)
    if bias is not None:
        out = out + bias.data.reshape(1, -1, 1, 1)

    def backward_fn(g):
        gt = g.transpose(0, 2, 3, 1)
        gw = np.zeros_like(w)
        gxp = np.zeros_like(xp)
        for i in range(kh):
            for j in range(kw):
                patch = xp[:, :, i : i + sh * ho : sh, j : j + sw * wo : sw]
                gw[:, :, i, j] = np.tensordot(gt, patch, axes=([0, 1, 2], [0, 2, 3]))
                gpatch = np.tensordot(gt, w[:, :, i, j], axes=([3], [0]))
                gxp[:, :, i : i + sh * ho : sh, j : j + sw * wo : sw] += gpatch.transpose(0, 3, 1, 2)
        gx = gxp[:, :, pt : pt + height, pl : pl + width]
        grads = [gx, gw]
        if bias is not None:
            grads.append(g.sum(axis=(0, 2, 3)))
        return grads

    parents = (x, kernel) if bias is None else (x, kernel, bias)
    return make_node(out, parents, backward_fn, "conv2d")


def _pool_geometry(x: Tensor, kernel: IntPair) -> Tuple[int, int, int, int]:
    if x.ndim != 4:
        raise ShapeError(f"pooling expects [B, C, H, W], got {x.shape}")
    kh, kw = _pair(kernel)
    ho, wo = x.shape[2] // kh, x.shape[3] // kw
    if ho == 0 or wo == 0:
        raise ShapeError(f"pooling window {kh}x{kw} exceeds input {x.shape[2]}x{x.shape[3]}")
    return kh, kw, ho, wo


def avg_pool(x: Tensor, kernel: IntPair) -> Tensor:
    """Non-overlapping average pooling (stride = window, floor)"""
    kh, kw, ho, wo = _pool_geometry(x, kernel)
    batch, channels = x.shape[:2]
    blocks = x.data[:, :, : ho * kh, : wo * kw].reshape(batch, channels, ho, kh, wo, kw)
    data = blocks.mean(axis=(3, 5))

    def backward_fn(g):
        gx = np.zeros_like(x.data)
        spread = np.repeat(np.repeat(g, kh, axis=2), kw, axis=3) / (kh * kw)
        gx[:, :, : ho * kh, : wo * kw] = spread
        return (gx,)

    return make_node(data, (x,), backward_fn, "avg_pool")


def max_pool(x: Tensor, kernel: IntPair) -> Tensor:
    """Non-overlapping max pooling (stride = window, floor)"""
    kh, kw, ho, wo = _pool_geometry(x, kernel)
    batch, channels = x.shape[:2]
    blocks = (
        x.data[:, :, : ho * kh, : wo * kw]
        .reshape(batch, channels, ho, kh, wo, kw)
        .transpose(0, 1, 2, 4, 3, 5)
        .reshape(batch, channels, ho, wo, kh * kw)
    )
    idx = blocks.argmax(axis=-1)[..., None]
    data = np.take_along_axis(blocks, idx, axis=-1)[..., 0]

    def backward_fn(g):
        gblocks = np.zeros_like(blocks)
        np.put_along_axis(gblocks, idx, g[..., None], axis=-1)
        gcrop = (
            gblocks.reshape(batch, channels, ho, wo, kh, kw)
            .transpose(0, 1, 2, 4, 3, 5)
            .reshape(batch, channels, ho * kh, wo * kw)
        )
        gx = np.zeros_like(x.data)
        gx[:, :, : ho * kh, : wo * kw] = gcrop
        return (gx,)

    return make_node(data, (x,), backward_fn, "max_pool")


GLOBAL_POOL_MODES = ("avg_channel", "max_time", "avg_freq")


def global_pool(x: Tensor, mode: str) -> Tensor:
    """
    Collapse one axis of [B, C, F, T]:
      avg_channel -> [B, F, T], max_time -> [B, C, F], avg_freq -> [B, C, T]
    """
    if x.ndim != 4:
        raise ShapeError(f"global_pool expects [B, C, F, T], got {x.shape}")
    if mode == "avg_channel":
        return mean(x, axis=1)
    if mode == "avg_freq":
        return mean(x, axis=2)
    if mode != "max_time":
        raise ValueError(f"Unknown global pool mode: {mode}")

    idx = x.data.argmax(axis=3)[..., None]
    data = np.take_along_axis(x.data, idx, axis=3)[..., 0]

    def backward_fn(g):
        gx = np.zeros_like(x.data)
        np.put_along_axis(gx, idx, g[..., None], axis=3)
        return (gx,)

    return make_node(data, (x,), backward_fn, "max_time")


# --- normalization ---------------------------------------------------------


def _standardize_backward(gxhat, xhat, inv_std, axes):
    count = int(np.prod([gxhat.shape[a] for a in axes]))
    return (inv_std / count) * (
        count * gxhat
        - gxhat.sum(axis=axes, keepdims=True)
        - xhat * (gxhat * xhat).sum(axis=axes, keepdims=True)
    )


def batch_norm(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    train: bool = True,
    momentum: float = 0.9,
    eps: float = 1e-5,
) -> Tensor:
    """
    Batch normalization over the batch (and spatial) axes.

    Works on [B, C, H, W] (per channel) and [B, D] (per feature). In train
    mode the running buffers are updated in place:
    running = momentum * running + (1 - momentum) * batch_stat.
    """
    if x.ndim == 4:
        axes, bshape = (0, 2, 3), (1, -1, 1, 1)
    elif x.ndim == 2:
        axes, bshape = (0,), (1, -1)
    else:
        raise ShapeError(f"batch_norm expects rank 2 or 4 input, got {x.shape}")

    if train:
        mu = x.data.mean(axis=axes, keepdims=True)
        var = x.data.var(axis=axes, keepdims=True)
        running_mean *= momentum
        running_mean += (1.0 - momentum) * mu.reshape(-1)
        running_var *= momentum
        running_var += (1.0 - momentum) * var.reshape(-1)
    else:
        mu = running_mean.reshape(bshape)
        var = running_var.reshape(bshape)

    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv_std
    g_w = gamma.data.reshape(bshape)
    data = g_w * xhat + beta.data.reshape(bshape)

    def backward_fn(g):
        ggamma = (g * xhat).sum(axis=axes)
        gbeta = g.sum(axis=axes)
        gxhat = g * g_w
        if train:
            gx = _standardize_backward(gxhat, xhat, inv_std, axes)
        else:
            gx = gxhat * inv_std
        return gx, ggamma, gbeta

    return make_node(data, (x, gamma, beta), backward_fn, "batch_norm")


def instance_norm_freq(x: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize each (item, frequency bin) over channels and time"""
    if x.ndim != 4:
        raise ShapeError(f"instance_norm_freq expects [B, C, F, T], got {x.shape}")
    axes = (1, 3)
    mu = x.data.mean(axis=axes, keepdims=True)
    var = x.data.var(axis=axes, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv_std

    def backward_fn(g):
        return (_standardize_backward(g, xhat, inv_std, axes),)

    return make_node(xhat, (x,), backward_fn, "instance_norm")


def resnorm(x: Tensor, lam: float, eps: float = 1e-5) -> Tensor:
    """Residual normalization: lam * x + instance_norm_freq(x)"""
    return add([mul(x, lam), instance_norm_freq(x, eps)])


def total(values: Sequence[Tensor]) -> Tensor:
    """Sum a list of scalars (0 when the list is empty)"""
    if not values:
        return as_tensor(0.0)
    return add(list(values))
