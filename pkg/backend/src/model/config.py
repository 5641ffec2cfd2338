"""
Architecture and system-variant schemas.
"""

from enum import Enum
from typing import Dict, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from src.dsp.types import SpectrogramKind
from src.ingest.labels import TaskId, TaskLevel

INC01_KERNELS: Tuple[Tuple[int, int], ...] = ((3, 3), (1, 1), (4, 1))


class Variant(str, Enum):
    INDIVIDUAL = "individual"
    SYSTEM_I = "system_i"
    SYSTEM_II = "system_ii"
    SYSTEM_III = "system_iii"

    @property
    def display_name(self) -> str:
        return {
            Variant.INDIVIDUAL: "Individual",
            Variant.SYSTEM_I: "System I",
            Variant.SYSTEM_II: "System II",
            Variant.SYSTEM_III: "System III",
        }[self]


class CombinerMethod(str, Enum):
    CONCAT = "concat"
    LINEAR = "linear"


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class Inc01Spec(_Strict):
    out_channels: int = Field(32, ge=1)
    kernels: Tuple[Tuple[int, int], ...] = INC01_KERNELS

    @field_validator("kernels")
    @classmethod
    def _fixed_kernels(cls, v):
        if tuple(tuple(k) for k in v) != INC01_KERNELS:
            raise ValueError(f"Inc01 kernels are fixed to {INC01_KERNELS}")
        return INC01_KERNELS


class Inc02Spec(_Strict):
    out_channels: int = Field(..., ge=1)
    k: int = Field(3, ge=1)

    @field_validator("k")
    @classmethod
    def _odd(cls, v):
        if v % 2 == 0:
            raise ValueError(f"Inc02 kernel size must be odd, got {v}")
        return v

    @property
    def kernels(self) -> Tuple[Tuple[int, int], ...]:
        return ((self.k, 1), (self.k, self.k), (1, self.k))


class DoubIncSpec(_Strict):
    first: Inc01Spec = Inc01Spec()
    second: Inc01Spec = Inc01Spec()
    pool: Tuple[int, int] = (2, 2)
    dropout: float = Field(0.2, ge=0.0, lt=1.0)


class BackboneConfig(_Strict):
    """Doub-Inc -> Inc-Res 1 -> Inc-Res 2 -> pooling"""

    doub_inc: DoubIncSpec = DoubIncSpec()
    inc_res_1: Inc02Spec = Inc02Spec(out_channels=128, k=3)
    inc_res_2: Inc02Spec = Inc02Spec(out_channels=256, k=5)
    sub_branch_pool: Tuple[int, int] = (1, 1)
    exit_pool: Tuple[int, int] = (2, 2)
    dropout: float = Field(0.2, ge=0.0, lt=1.0)
    rn_lambda: float = Field(0.4, ge=0.0, le=1.0)

    @model_validator(mode="after")
    def _channel_progression(self):
        if self.inc_res_2.out_channels < self.inc_res_1.out_channels:
            raise ValueError(
                f"Inc-Res channels must not shrink: {self.inc_res_1.out_channels} -> {self.inc_res_2.out_channels}"
            )
        return self

    def output_shape(self, input_shape: Tuple[int, int]) -> Tuple[int, int, int]:
        """(C, F, T) of the last Inc-Res block for an (F, T) input"""
        f, t = input_shape
        f, t = f // self.doub_inc.pool[0], t // self.doub_inc.pool[1]
        for _ in range(2):
            f, t = f // self.sub_branch_pool[0], t // self.sub_branch_pool[1]
            f, t = f // self.exit_pool[0], t // self.exit_pool[1]
        return self.inc_res_2.out_channels, f, t


class AttentionSpec(_Strict):
    heads: int = Field(16, ge=1)
    key_dim: int = Field(32, ge=1)
    axes: Tuple[str, str, str] = ("frequency", "time", "channel")

    @field_validator("axes")
    @classmethod
    def _three_axes(cls, v):
        if tuple(v) != ("frequency", "time", "channel"):
            raise ValueError("Exactly one attention layer per axis: frequency, time, channel")
        return tuple(v)


INPUT_SHAPES: Dict[TaskLevel, Tuple[int, int]] = {
    TaskLevel.EVENT: (128, 155),
    TaskLevel.RECORDING: (128, 512),
}

# (combiner, attention, alpha, beta, gamma)
VARIANT_PRESETS: Dict[Variant, Tuple[Optional[CombinerMethod], bool, float, float, float]] = {
    Variant.INDIVIDUAL: (None, True, 1.0, 0.0, 0.0),
    Variant.SYSTEM_I: (CombinerMethod.CONCAT, False, 1.0 / 3.0, 1.0, 0.0),
    Variant.SYSTEM_II: (CombinerMethod.CONCAT, True, 1.0 / 3.0, 1.0, 0.0),
    Variant.SYSTEM_III: (CombinerMethod.LINEAR, True, 1.0 / 3.0, 1.0, 1.0),
}


class SystemConfig(_Strict):
    variant: Variant = Variant.SYSTEM_III
    task: TaskId = TaskId.T1_1
    branch: Optional[SpectrogramKind] = None
    combiner: Optional[CombinerMethod] = CombinerMethod.LINEAR
    attention: bool = True
    alpha: float = Field(1.0 / 3.0, ge=0.0)
    beta: float = Field(1.0, ge=0.0)
    gamma: float = Field(1.0, ge=0.0)
    input_shape: Optional[Tuple[int, int]] = None
    backbone: BackboneConfig = BackboneConfig()
    attention_spec: AttentionSpec = AttentionSpec()
    head_dropout: float = Field(0.2, ge=0.0, lt=1.0)
    bypass_reduction: Literal["flatten", "mean"] = "flatten"
    bn_momentum: float = Field(0.9, gt=0.0, lt=1.0)
    bn_eps: float = Field(1e-5, gt=0.0)
    seed: int = 0

    @model_validator(mode="after")
    def _variant_invariants(self):
        if self.input_shape is None:
            self.input_shape = INPUT_SHAPES[self.task.level]
        if self.alpha == 0 and self.beta == 0 and self.gamma == 0:
            raise ValueError("Loss weights alpha, beta, gamma must not all be zero")

        v = self.variant
        if v is Variant.INDIVIDUAL:
            if self.branch is None:
                raise ValueError("The individual variant needs a branch (GA, WA or WM)")
            if self.combiner is not None:
                raise ValueError("The individual variant has no combiner")
        elif self.branch is not None:
            raise ValueError(f"{v.display_name} uses all three branches; branch must be unset")
        if v is Variant.SYSTEM_I and (
            self.combiner is not CombinerMethod.CONCAT or self.attention or self.gamma != 0
        ):
            raise ValueError("System I requires combiner=concat, attention off and gamma=0")
        if v is Variant.SYSTEM_II and (self.combiner is not CombinerMethod.CONCAT or not self.attention):
            raise ValueError("System II requires combiner=concat and attention on")
        if v is Variant.SYSTEM_III and (
            self.combiner is not CombinerMethod.LINEAR or not self.attention or self.gamma != 1
        ):
            raise ValueError("System III requires combiner=linear, attention on and gamma=1")

        f, t = self.input_shape
        _, fo, to = self.backbone.output_shape((f, t))
        if fo < 1 or to < 1:
            raise ValueError(f"Input {f}x{t} is too small for the backbone pooling schedule")
        return self

    @classmethod
    def preset(
        cls,
        variant: Variant,
        task: TaskId,
        branch: Optional[SpectrogramKind] = None,
        **overrides,
    ) -> "SystemConfig":
        variant = Variant(variant)
        combiner, attention, alpha, beta, gamma = VARIANT_PRESETS[variant]
        values = dict(
            variant=variant,
            task=TaskId(task),
            branch=SpectrogramKind(branch) if branch else None,
            combiner=combiner,
            attention=attention,
            alpha=alpha,
            beta=beta,
            gamma=gamma,
        )
        values.update(overrides)
        return cls(**values)

    @property
    def num_classes(self) -> int:
        return self.task.num_classes

    @property
    def branches(self) -> Tuple[SpectrogramKind, ...]:
        if self.variant is Variant.INDIVIDUAL:
            return (self.branch,)
        return (SpectrogramKind.WA, SpectrogramKind.GA, SpectrogramKind.WM)

    @property
    def loss_weights(self) -> Tuple[float, float, float]:
        return self.alpha, self.beta, self.gamma

    @property
    def embedding_dim(self) -> int:
        """Width E of one branch embedding"""
        c, f, t = self.backbone.output_shape(self.input_shape)
        if not self.attention and self.bypass_reduction == "flatten":
            return f * t + c * f + c * t
        # channel-pooled [F, T] -> T, time-pooled [C, F] -> F, frequency-pooled [C, T] -> T
        return t + f + t

    @property
    def combined_dim(self) -> int:
        if self.combiner is CombinerMethod.CONCAT:
            return 3 * self.embedding_dim
        return self.embedding_dim

    @property
    def label(self) -> str:
        if self.variant is Variant.INDIVIDUAL:
            return f"{self.branch.value}-branch"
        return self.variant.display_name
