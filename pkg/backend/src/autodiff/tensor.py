"""
Define-by-run reverse-mode tensor.

A Tensor wraps a row-major numpy array. Every op records its parents and a
closure mapping the output gradient to one gradient per parent; backward()
walks the recorded graph in reverse topological order.
"""

import contextlib
import contextvars
import logging
from collections import Counter
from typing import Callable, Iterable, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from src.utils.errors import ShapeError

logger = logging.getLogger(__name__)

_dtype: contextvars.ContextVar = contextvars.ContextVar("dtype", default=np.float32)
_grad_enabled: contextvars.ContextVar = contextvars.ContextVar("grad_enabled", default=True)
_scope: contextvars.ContextVar = contextvars.ContextVar("scope", default=())

BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


def get_dtype() -> np.dtype:
    return np.dtype(_dtype.get())


@contextlib.contextmanager
def precision(name: str) -> Iterator[None]:
    """Run a block in float32 (training) or float64 (gradient checks)"""
    dtype = {"float32": np.float32, "float64": np.float64}.get(name)
    if dtype is None:
        raise ValueError(f"Unsupported precision: {name}")
    token = _dtype.set(dtype)
    try:
        yield
    finally:
        _dtype.reset(token)


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """Disable graph recording (evaluation, finite differences)"""
    token = _grad_enabled.set(False)
    try:
        yield
    finally:
        _grad_enabled.reset(token)


def grad_enabled() -> bool:
    return _grad_enabled.get()


@contextlib.contextmanager
def name_scope(name: str) -> Iterator[None]:
    """Tag every node created inside the block with a scope path segment"""
    token = _scope.set(_scope.get() + (name,))
    try:
        yield
    finally:
        _scope.reset(token)


def current_scope() -> str:
    return "/".join(_scope.get())


class Tensor:
    """n-dimensional value with an optional gradient"""

    def __init__(
        self,
        data,
        requires_grad: bool = False,
        parents: Tuple["Tensor", ...] = (),
        backward_fn: Optional[BackwardFn] = None,
        op: str = "leaf",
        name: Optional[str] = None,
    ):
        self.data = np.ascontiguousarray(np.asarray(data, dtype=get_dtype()))
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self.parents = parents
        self.backward_fn = backward_fn
        self.op = op
        self.name = name
        self.scope = current_scope()

    # --- shape helpers -----------------------------------------------------
    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def dims(self) -> List[int]:
        return list(self.data.shape)

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return int(self.data.size)

    def is_leaf(self) -> bool:
        return self.backward_fn is None

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        label = f" name={self.name}" if self.name else ""
        return f"Tensor(shape={self.shape}, op={self.op}{label})"

    # --- graph -------------------------------------------------------------
    def backward(self) -> None:
        backward(self)

    # operator sugar; ops is imported lazily because it imports this module
    def __add__(self, other):
        from src.autodiff import ops

        return ops.add([self, other])

    __radd__ = __add__

    def __sub__(self, other):
        from src.autodiff import ops

        return ops.sub(self, other)

    def __rsub__(self, other):
        from src.autodiff import ops

        return ops.sub(other, self)

    def __mul__(self, other):
        from src.autodiff import ops

        return ops.mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        from src.autodiff import ops

        return ops.div(self, other)

    def __neg__(self):
        from src.autodiff import ops

        return ops.mul(self, -1.0)

    def __matmul__(self, other):
        from src.autodiff import ops

        return ops.matmul(self, other)

    def sum(self, axis=None, keepdims: bool = False):
        from src.autodiff import ops

        return ops.sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        from src.autodiff import ops

        return ops.mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        from src.autodiff import ops

        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return ops.reshape(self, shape)

    def transpose(self, *axes):
        from src.autodiff import ops

        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return ops.transpose(self, axes)


def make_node(
    data: np.ndarray,
    parents: Sequence[Tensor],
    backward_fn: BackwardFn,
    op: str,
) -> Tensor:
    """Create an op output, recording the graph only when gradients are needed"""
    needs_grad = grad_enabled() and any(p.requires_grad for p in parents)
    if not needs_grad:
        return Tensor(data, op=op)
    out = Tensor(data, requires_grad=True, parents=tuple(parents), backward_fn=backward_fn, op=op)
    # reported where non-finite values first appear, not on every node downstream
    if not np.all(np.isfinite(out.data)) and all(np.all(np.isfinite(p.data)) for p in parents):
        logger.warning("Non-finite values produced by %s in scope %s", op, out.scope or "<root>")
    return out


def topological_order(root: Tensor) -> List[Tensor]:
    """Nodes reachable from root, parents before children (iterative DFS)"""
    order: List[Tensor] = []
    visited = set()
    stack: List[Tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node.parents:
            if id(parent) not in visited and parent.requires_grad:
                stack.append((parent, False))
    return order


def backward(loss: Tensor, params: Optional[Iterable[Tensor]] = None) -> None:
    """
    Accumulate d(loss)/d(leaf) into .grad of every reachable leaf that
    requires a gradient.

    When `params` is given, params that the loss does not reach receive a
    zero gradient; if none of them is reached a warning is logged.
    """
    if loss.size != 1:
        raise ShapeError(f"backward() needs a scalar loss, got shape {loss.shape}")

    reached = 0
    if loss.requires_grad:
        grads = {id(loss): np.ones_like(loss.data)}
        for node in reversed(topological_order(loss)):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node.is_leaf():
                if node.requires_grad:
                    node.grad = g.copy() if node.grad is None else node.grad + g
                    reached += 1
                continue
            parent_grads = node.backward_fn(g)
            for parent, pg in zip(node.parents, parent_grads):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = pg if key not in grads else grads[key] + pg

    if params is not None:
        params = list(params)
        for p in params:
            if p.grad is None:
                p.grad = np.zeros_like(p.data)
        if params and reached == 0:
            logger.warning("Loss is detached from all parameters; gradients are zero")
    elif reached == 0:
        logger.warning("Loss is detached from every trainable leaf; no gradient was produced")


def node_census(outputs: Iterable[Tensor]) -> Counter:
    """Count graph nodes reachable from `outputs` by (scope, op)"""
    census: Counter = Counter()
    seen = set()
    for out in outputs:
        for node in topological_order(out):
            if id(node) in seen or node.is_leaf():
                continue
            seen.add(id(node))
            census[(node.scope, node.op)] += 1
    return census
