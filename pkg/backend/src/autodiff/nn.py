"""
Parameters, modules and the basic layers built on the autodiff ops.
"""

import logging
from dataclasses import dataclass
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np

from src.autodiff import ops
from src.autodiff.tensor import Tensor, get_dtype
from src.utils.errors import ShapeError

logger = logging.getLogger(__name__)


@dataclass
class AdamState:
    m: Optional[np.ndarray] = None
    v: Optional[np.ndarray] = None
    step: int = 0


class Parameter(Tensor):
    """Trainable leaf tensor carrying its optimizer state"""

    def __init__(self, data, name: str = ""):
        super().__init__(data, requires_grad=True, op="param", name=name)
        self.adam = AdamState()


def kaiming_uniform(shape: Tuple[int, ...], fan_in: int, rng: np.random.Generator) -> np.ndarray:
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Module:
    """
    Base class: attributes holding Parameters, Modules or lists of Modules
    are discovered in assignment order.
    """

    def __init__(self):
        self.training = True
        self._buffers: Dict[str, np.ndarray] = {}
        self._rng: np.random.Generator = np.random.default_rng(0)

    def forward(self, *args, **kwargs):
        raise NotImplementedError

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    # --- traversal ---------------------------------------------------------
    def _children(self) -> Iterator[Tuple[str, "Module"]]:
        for key, value in vars(self).items():
            if isinstance(value, Module):
                yield key, value
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield f"{key}.{i}", item

    def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, Parameter]]:
        for key, value in vars(self).items():
            if isinstance(value, Parameter):
                name = f"{prefix}{key}"
                value.name = name
                yield name, value
        for key, child in self._children():
            yield from child.named_parameters(prefix=f"{prefix}{key}.")

    def parameters(self) -> List[Parameter]:
        return [p for _, p in self.named_parameters()]

    def named_buffers(self, prefix: str = "") -> Iterator[Tuple[str, np.ndarray]]:
        for key, value in self._buffers.items():
            yield f"{prefix}{key}", value
        for key, child in self._children():
            yield from child.named_buffers(prefix=f"{prefix}{key}.")

    def register_buffer(self, name: str, value: np.ndarray) -> None:
        self._buffers[name] = value

    def parameter_count(self) -> int:
        return int(sum(p.size for p in self.parameters()))

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    # --- mode and randomness ----------------------------------------------
    def train(self, mode: bool = True) -> "Module":
        self.training = mode
        for _, child in self._children():
            child.train(mode)
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def set_rng(self, rng: np.random.Generator) -> None:
        """Share one generator with every stochastic layer below this module"""
        self._rng = rng
        for _, child in self._children():
            child.set_rng(rng)

    # --- state -------------------------------------------------------------
    def state_dict(self) -> Dict[str, np.ndarray]:
        state = {f"param:{n}": p.data for n, p in self.named_parameters()}
        state.update({f"buffer:{n}": b for n, b in self.named_buffers()})
        return state

    def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
        params = dict(self.named_parameters())
        buffers = dict(self.named_buffers())
        expected = {f"param:{n}" for n in params} | {f"buffer:{n}" for n in buffers}
        missing = expected - set(state)
        if missing:
            raise ShapeError(f"State is missing {len(missing)} entries, e.g. {sorted(missing)[0]}")
        for name, p in params.items():
            value = np.asarray(state[f"param:{name}"])
            if value.shape != p.shape:
                raise ShapeError(f"{name}: stored shape {value.shape} != model shape {p.shape}")
            p.data = np.ascontiguousarray(value.astype(p.data.dtype))
        for name, buf in buffers.items():
            value = np.asarray(state[f"buffer:{name}"])
            if value.shape != buf.shape:
                raise ShapeError(f"{name}: stored shape {value.shape} != buffer shape {buf.shape}")
            buf[...] = value


class Conv2d(Module):
    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        kernel: Tuple[int, int],
        rng: np.random.Generator,
        padding="same",
        stride=1,
        bias: bool = True,
    ):
        super().__init__()
        kh, kw = kernel
        self.kernel_size = (kh, kw)
        self.padding = padding
        self.stride = stride
        fan_in = in_channels * kh * kw
        self.weight = Parameter(kaiming_uniform((out_channels, in_channels, kh, kw), fan_in, rng))
        self.bias = Parameter(np.zeros(out_channels)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        return ops.conv2d(x, self.weight, self.bias, stride=self.stride, padding=self.padding)


class Dense(Module):
    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator, bias: bool = True):
        super().__init__()
        self.weight = Parameter(kaiming_uniform((in_features, out_features), in_features, rng))
        self.bias = Parameter(np.zeros(out_features)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        return ops.dense(x, self.weight, self.bias)


class BatchNorm(Module):
    def __init__(self, num_features: int, momentum: float = 0.9, eps: float = 1e-5):
        super().__init__()
        self.momentum = momentum
        self.eps = eps
        self.gamma = Parameter(np.ones(num_features))
        self.beta = Parameter(np.zeros(num_features))
        self.register_buffer("running_mean", np.zeros(num_features, dtype=get_dtype()))
        self.register_buffer("running_var", np.ones(num_features, dtype=get_dtype()))

    def forward(self, x: Tensor) -> Tensor:
        return ops.batch_norm(
            x,
            self.gamma,
            self.beta,
            self._buffers["running_mean"],
            self._buffers["running_var"],
            train=self.training,
            momentum=self.momentum,
            eps=self.eps,
        )


class Dropout(Module):
    def __init__(self, p: float):
        super().__init__()
        self.p = p

    def forward(self, x: Tensor) -> Tensor:
        return ops.dropout(x, self.p, self._rng, train=self.training)


class ResNorm(Module):
    def __init__(self, lam: float, eps: float = 1e-5):
        super().__init__()
        self.lam = lam
        self.eps = eps

    def forward(self, x: Tensor) -> Tensor:
        return ops.resnorm(x, self.lam, self.eps)
