"""
Multi-head self-attention over the pooled backbone features, and the
attention-free bypass used by System I.
"""

import logging
from typing import Optional, Sequence, Tuple

import numpy as np

from src.autodiff import ops
from src.autodiff.nn import Dense, Module
from src.autodiff.tensor import Tensor, name_scope
from src.model.config import AttentionSpec
from src.utils.errors import ShapeError

logger = logging.getLogger(__name__)

# pooled feature -> attention layer name; the feature's first axis is the sequence
POOLED_FEATURES = ("channel", "time", "frequency")


class MultiHeadAttention(Module):
    """
    Scaled dot-product self-attention on [B, L, D].

    Queries, keys and values are projected D -> heads * key_dim, attended per
    head, merged and projected back to D.
    """

    def __init__(self, model_dim: int, heads: int, key_dim: int, rng: np.random.Generator):
        super().__init__()
        self.model_dim = model_dim
        self.heads = heads
        self.key_dim = key_dim
        inner = heads * key_dim
        self.wq = Dense(model_dim, inner, rng)
        # no key bias: it shifts every score of a query equally
        self.wk = Dense(model_dim, inner, rng, bias=False)
        self.wv = Dense(model_dim, inner, rng)
        self.wo = Dense(inner, model_dim, rng)
        self.last_weights: Optional[np.ndarray] = None

    def _split_heads(self, x: Tensor, batch: int, length: int) -> Tensor:
        x = ops.reshape(x, (batch, length, self.heads, self.key_dim))
        return ops.transpose(x, (0, 2, 1, 3))

    def forward(self, x: Tensor) -> Tensor:
        if x.ndim != 3 or x.shape[-1] != self.model_dim:
            raise ShapeError(f"Attention expects [B, L, {self.model_dim}], got {x.shape}")
        batch, length, _ = x.shape
        q = self._split_heads(self.wq(x), batch, length)
        k = self._split_heads(self.wk(x), batch, length)
        v = self._split_heads(self.wv(x), batch, length)

        scores = ops.mul(ops.matmul(q, ops.transpose(k, (0, 1, 3, 2))), 1.0 / np.sqrt(self.key_dim))
        weights = ops.softmax(scores, axis=-1)
        self.last_weights = weights.data
        attended = ops.matmul(weights, v)
        merged = ops.reshape(ops.transpose(attended, (0, 2, 1, 3)), (batch, length, self.heads * self.key_dim))
        return self.wo(merged)

    def embed(self, x: Tensor) -> Tensor:
        """Attend, then average over the sequence: [B, L, D] -> [B, D]"""
        return ops.mean(self.forward(x), axis=1)


class AttentionBlock(Module):
    """
    One attention layer per pooled feature; the three sequence-averaged
    outputs are concatenated into the branch embedding.
    """

    def __init__(self, widths: Sequence[int], spec: AttentionSpec, rng: np.random.Generator):
        super().__init__()
        if len(widths) != 3:
            raise ShapeError(f"Attention block needs three feature widths, got {widths}")
        self.widths = tuple(int(w) for w in widths)
        self.layers = [MultiHeadAttention(w, spec.heads, spec.key_dim, rng) for w in self.widths]

    @property
    def embedding_dim(self) -> int:
        return sum(self.widths)

    def forward(self, pooled: Tuple[Tensor, Tensor, Tensor]) -> Tensor:
        parts = []
        for name, layer, feature in zip(POOLED_FEATURES, self.layers, pooled):
            with name_scope(name):
                parts.append(layer.embed(feature))
        return ops.concat(parts, axis=-1)


class BypassBlock(Module):
    """Attention-free embedding: flatten every pooled feature, or average it over its sequence axis"""

    def __init__(self, reduction: str = "flatten"):
        super().__init__()
        if reduction not in ("mean", "flatten"):
            raise ValueError(f"Unknown bypass reduction: {reduction}")
        self.reduction = reduction

    def forward(self, pooled: Tuple[Tensor, Tensor, Tensor]) -> Tensor:
        if self.reduction == "flatten":
            parts = [ops.reshape(f, (f.shape[0], -1)) for f in pooled]
        else:
            parts = [ops.mean(f, axis=1) for f in pooled]
        return ops.concat(parts, axis=-1)
