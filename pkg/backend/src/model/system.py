"""
The full classifier: one branch per spectrogram kind
(Backbone -> Attention or bypass -> DNN head) plus the combination branch.
"""

import logging
from collections import Counter
from dataclasses import dataclass
from typing import Dict, Optional, Union

import numpy as np

from src.autodiff import ops
from src.autodiff.nn import Module
from src.autodiff.tensor import Tensor, name_scope, node_census
from src.dsp.types import KIND_ORDER, SpectrogramKind
from src.model.attention import AttentionBlock, BypassBlock
from src.model.blocks import Backbone
from src.model.config import CombinerMethod, SystemConfig
from src.model.heads import DNNHead, LinearCombiner, combiner_concat
from src.utils.errors import ShapeError

logger = logging.getLogger(__name__)


class Branch(Module):
    """Backbone -> (attention | bypass) -> head for one spectrogram kind"""

    def __init__(self, cfg: SystemConfig, rng: np.random.Generator):
        super().__init__()
        self.backbone = Backbone(cfg.backbone, cfg.input_shape, rng, 1, cfg.bn_momentum, cfg.bn_eps)
        c, f, t = self.backbone.output_shape
        if cfg.attention:
            self.embedder = AttentionBlock((t, f, t), cfg.attention_spec, rng)
        else:
            self.embedder = BypassBlock(cfg.bypass_reduction)
        self.head = DNNHead(cfg.embedding_dim, cfg.num_classes, rng, cfg.head_dropout, cfg.bn_momentum, cfg.bn_eps)

    def embed(self, x: Tensor) -> Tensor:
        with name_scope("backbone"):
            pooled = self.backbone(x)
        scope = "attention" if isinstance(self.embedder, AttentionBlock) else "bypass"
        with name_scope(scope):
            return self.embedder(pooled)


@dataclass
class SystemOutput:
    probs: Dict[SpectrogramKind, Tensor]
    embeddings: Dict[SpectrogramKind, Tensor]
    combined: Optional[Tensor] = None
    p_comb: Optional[Tensor] = None

    @property
    def prediction_probs(self) -> Tensor:
        """Combination head, or the single head of an individual branch"""
        if self.p_comb is not None:
            return self.p_comb
        (only,) = self.probs.values()
        return only

    def predict(self) -> np.ndarray:
        return self.prediction_probs.data.argmax(axis=-1)

    def distributions(self) -> Dict[str, Tensor]:
        out = {f"p_{kind.value.lower()}": p for kind, p in self.probs.items()}
        if self.p_comb is not None:
            out["p_comb"] = self.p_comb
        return out


class RespiratorySystem(Module):
    """
    Input [B, 3, F, T] with channels in GA, WA, WM order. Branches are
    independent (no weight sharing).
    """

    def __init__(self, cfg: SystemConfig):
        super().__init__()
        self.cfg = cfg
        rng = np.random.default_rng(cfg.seed)
        self.wa = self.ga = self.wm = None
        for kind in cfg.branches:
            setattr(self, kind.value.lower(), Branch(cfg, rng))
        self.combiner = None
        self.comb_head = None
        if cfg.combiner is CombinerMethod.LINEAR:
            self.combiner = LinearCombiner(cfg.embedding_dim)
        if cfg.combiner is not None:
            self.comb_head = DNNHead(
                cfg.combined_dim, cfg.num_classes, rng, cfg.head_dropout, cfg.bn_momentum, cfg.bn_eps
            )
        self.set_rng(np.random.default_rng([cfg.seed, 1]))
        logger.debug("Built %s with %d parameters", cfg.label, self.parameter_count())

    def branch(self, kind: SpectrogramKind) -> Optional[Branch]:
        return getattr(self, SpectrogramKind(kind).value.lower())

    def forward(self, x: Union[Tensor, np.ndarray]) -> SystemOutput:
        x = x if isinstance(x, Tensor) else Tensor(x)
        expected = (3,) + tuple(self.cfg.input_shape)
        if x.ndim != 4 or tuple(x.shape[1:]) != expected:
            raise ShapeError(f"System input must be [B, {', '.join(map(str, expected))}], got {x.shape}")

        probs: Dict[SpectrogramKind, Tensor] = {}
        embeddings: Dict[SpectrogramKind, Tensor] = {}
        for kind in self.cfg.branches:
            branch = self.branch(kind)
            with name_scope(kind.value.lower()):
                channel = ops.take(x, [KIND_ORDER.index(kind)], axis=1)
                e = branch.embed(channel)
                with name_scope("head"):
                    probs[kind] = branch.head(e)
            embeddings[kind] = e

        if self.comb_head is None:
            return SystemOutput(probs, embeddings)

        e_wa, e_ga, e_wm = (embeddings[k] for k in (SpectrogramKind.WA, SpectrogramKind.GA, SpectrogramKind.WM))
        with name_scope("combination"):
            if self.combiner is not None:
                combined = self.combiner(e_wa, e_ga, e_wm)
            else:
                combined = combiner_concat(e_wa, e_ga, e_wm)
            p_comb = self.comb_head(combined)
        return SystemOutput(probs, embeddings, combined, p_comb)

    def census(self, x: Union[Tensor, np.ndarray]) -> Counter:
        """Graph nodes per (scope, op) for one forward pass"""
        out = self.forward(x)
        return node_census(list(out.distributions().values()))
