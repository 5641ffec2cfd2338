"""
Prediction heads and the embedding combiners.
"""

import numpy as np

from src.autodiff import ops
from src.autodiff.nn import BatchNorm, Dense, Dropout, Module, Parameter
from src.autodiff.tensor import Tensor
from src.utils.errors import ShapeError


class DNNHead(Module):
    """FC[E] -> BN -> ReLU -> Dropout -> FC[T] -> softmax"""

    def __init__(
        self,
        in_features: int,
        num_classes: int,
        rng: np.random.Generator,
        dropout: float = 0.2,
        bn_momentum: float = 0.9,
        bn_eps: float = 1e-5,
    ):
        super().__init__()
        self.fc1 = Dense(in_features, in_features, rng, bias=False)
        self.bn = BatchNorm(in_features, bn_momentum, bn_eps)
        self.dropout = Dropout(dropout)
        self.fc2 = Dense(in_features, num_classes, rng)

    def forward(self, e: Tensor) -> Tensor:
        h = self.dropout(ops.relu(self.bn(self.fc1(e))))
        return ops.softmax(self.fc2(h), axis=-1)


def combiner_concat(e_wa: Tensor, e_ga: Tensor, e_wm: Tensor) -> Tensor:
    """a = [e_wa, e_ga, e_wm]"""
    return ops.concat([e_wa, e_ga, e_wm], axis=-1)


def combiner_linear(
    e_wa: Tensor,
    e_ga: Tensor,
    e_wm: Tensor,
    w_wa: Tensor,
    w_ga: Tensor,
    w_wm: Tensor,
    w_bias: Tensor,
) -> Tensor:
    """a = ReLU(e_wa * w_wa + e_ga * w_ga + e_wm * w_wm + w_bias), elementwise"""
    widths = {t.shape[-1] for t in (e_wa, e_ga, e_wm, w_wa, w_ga, w_wm, w_bias)}
    if len(widths) != 1:
        raise ShapeError(f"Linear combiner operands differ in length: {sorted(widths)}")
    return ops.relu(
        ops.add([ops.hadamard(e_wa, w_wa), ops.hadamard(e_ga, w_ga), ops.hadamard(e_wm, w_wm), w_bias])
    )


class LinearCombiner(Module):
    def __init__(self, dim: int):
        super().__init__()
        self.w_wa = Parameter(np.ones(dim))
        self.w_ga = Parameter(np.ones(dim))
        self.w_wm = Parameter(np.ones(dim))
        self.w_bias = Parameter(np.zeros(dim))

    def forward(self, e_wa: Tensor, e_ga: Tensor, e_wm: Tensor) -> Tensor:
        return combiner_linear(e_wa, e_ga, e_wm, self.w_wa, self.w_ga, self.w_wm, self.w_bias)
