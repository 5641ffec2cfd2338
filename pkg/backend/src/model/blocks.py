"""
Backbone blocks: Inc01 / Inc02 inception layers, Doub-Inc, Inc-Res and the
global pooling block.

Block order
  Doub-Inc:  Inc01 -> BN -> ReLU -> Inc01 -> BN -> ReLU -> AP -> Dropout -> RN
  Inc-Res:   sum(Inc02 branch -> AP) + 1x1 conv(x) -> BN -> ReLU -> MP -> Dropout -> RN
"""

import logging
from typing import Tuple

import numpy as np

from src.autodiff import ops
from src.autodiff.nn import BatchNorm, Conv2d, Dropout, Module, ResNorm
from src.autodiff.tensor import Tensor, name_scope
from src.model.config import BackboneConfig, Inc01Spec, Inc02Spec
from src.utils.errors import ShapeError

logger = logging.getLogger(__name__)


class Inc01(Module):
    """Three same-padded convolutions (3x3, 1x1, 4x1) concatenated on channels"""

    def __init__(self, in_channels: int, spec: Inc01Spec, rng: np.random.Generator):
        super().__init__()
        self.spec = spec
        self.convs = [
            Conv2d(in_channels, spec.out_channels, kernel, rng, bias=False) for kernel in spec.kernels
        ]

    @property
    def out_channels(self) -> int:
        return len(self.convs) * self.spec.out_channels

    def forward(self, x: Tensor) -> Tensor:
        if x.ndim != 4:
            raise ShapeError(f"Inc01 expects [B, C, F, T], got {x.shape}")
        return ops.concat([conv(x) for conv in self.convs], axis=1)


class DoubInc(Module):
    def __init__(
        self,
        in_channels: int,
        cfg: BackboneConfig,
        rng: np.random.Generator,
        bn_momentum: float = 0.9,
        bn_eps: float = 1e-5,
    ):
        super().__init__()
        spec = cfg.doub_inc
        self.pool = spec.pool
        self.inc1 = Inc01(in_channels, spec.first, rng)
        self.bn1 = BatchNorm(self.inc1.out_channels, bn_momentum, bn_eps)
        self.inc2 = Inc01(self.inc1.out_channels, spec.second, rng)
        self.bn2 = BatchNorm(self.inc2.out_channels, bn_momentum, bn_eps)
        self.dropout = Dropout(spec.dropout)
        self.rn = ResNorm(cfg.rn_lambda)

    @property
    def out_channels(self) -> int:
        return self.inc2.out_channels

    def forward(self, x: Tensor) -> Tensor:
        x = ops.relu(self.bn1(self.inc1(x)))
        x = ops.relu(self.bn2(self.inc2(x)))
        x = ops.avg_pool(x, self.pool)
        return self.rn(self.dropout(x))


class IncRes(Module):
    def __init__(
        self,
        in_channels: int,
        spec: Inc02Spec,
        input_hw: Tuple[int, int],
        cfg: BackboneConfig,
        rng: np.random.Generator,
        bn_momentum: float = 0.9,
        bn_eps: float = 1e-5,
    ):
        super().__init__()
        f, t = input_hw
        if f < spec.k or t < spec.k:
            raise ShapeError(f"Inc-Res kernel {spec.k} needs at least {spec.k}x{spec.k} input, got {f}x{t}")
        sub, exit_ = cfg.sub_branch_pool, cfg.exit_pool
        if f // sub[0] // exit_[0] < 1 or t // sub[1] // exit_[1] < 1:
            raise ShapeError(f"Inc-Res pooling {sub} then {exit_} does not fit a {f}x{t} input")
        self.spec = spec
        self.sub_pool = tuple(sub)
        self.exit_pool = tuple(exit_)
        self.branches = [
            Conv2d(in_channels, spec.out_channels, kernel, rng, bias=False) for kernel in spec.kernels
        ]
        self.residual = Conv2d(in_channels, spec.out_channels, (1, 1), rng, bias=False)
        self.bn = BatchNorm(spec.out_channels, bn_momentum, bn_eps)
        self.dropout = Dropout(cfg.dropout)
        self.rn = ResNorm(cfg.rn_lambda)

    @property
    def out_channels(self) -> int:
        return self.spec.out_channels

    def _sub_pool(self, x: Tensor) -> Tensor:
        if self.sub_pool == (1, 1):
            return x
        return ops.avg_pool(x, self.sub_pool)

    def forward(self, x: Tensor) -> Tensor:
        summed = ops.add([self._sub_pool(conv(x)) for conv in self.branches])
        y = ops.add([summed, self._sub_pool(self.residual(x))])
        y = ops.relu(self.bn(y))
        y = ops.max_pool(y, self.exit_pool)
        return self.rn(self.dropout(y))


class PoolingBlock(Module):
    """[B, C, F, T] -> (avg over C [B, F, T], max over T [B, C, F], avg over F [B, C, T])"""

    def forward(self, x: Tensor) -> Tuple[Tensor, Tensor, Tensor]:
        return (
            ops.global_pool(x, "avg_channel"),
            ops.global_pool(x, "max_time"),
            ops.global_pool(x, "avg_freq"),
        )


class Backbone(Module):
    def __init__(
        self,
        cfg: BackboneConfig,
        input_shape: Tuple[int, int],
        rng: np.random.Generator,
        in_channels: int = 1,
        bn_momentum: float = 0.9,
        bn_eps: float = 1e-5,
    ):
        super().__init__()
        self.cfg = cfg
        f, t = input_shape
        self.doub_inc = DoubInc(in_channels, cfg, rng, bn_momentum, bn_eps)
        f, t = f // cfg.doub_inc.pool[0], t // cfg.doub_inc.pool[1]
        self.inc_res_1 = IncRes(self.doub_inc.out_channels, cfg.inc_res_1, (f, t), cfg, rng, bn_momentum, bn_eps)
        f, t = f // cfg.sub_branch_pool[0] // cfg.exit_pool[0], t // cfg.sub_branch_pool[1] // cfg.exit_pool[1]
        self.inc_res_2 = IncRes(cfg.inc_res_1.out_channels, cfg.inc_res_2, (f, t), cfg, rng, bn_momentum, bn_eps)
        self.pooling = PoolingBlock()
        self.output_shape = cfg.output_shape(input_shape)

    def feature_map(self, x: Tensor) -> Tensor:
        with name_scope("doub_inc"):
            x = self.doub_inc(x)
        with name_scope("inc_res_1"):
            x = self.inc_res_1(x)
        with name_scope("inc_res_2"):
            return self.inc_res_2(x)

    def forward(self, x: Tensor) -> Tuple[Tensor, Tensor, Tensor]:
        fmap = self.feature_map(x)
        with name_scope("pooling"):
            return self.pooling(fmap)
