"""
Training objectives: KL divergence with L2 regularisation, pairwise
contrastive loss on branch embeddings, and their weighted total.

    total = alpha * (KL_WA + KL_GA + KL_WM) + beta * KL_Comb
            + gamma * (Cont_WA + Cont_GA + Cont_WM)
"""

import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, Iterable, Optional, Sequence, Tuple, Union

import numpy as np

from src.autodiff import ops
from src.autodiff.nn import Parameter
from src.autodiff.tensor import Tensor
from src.dsp.types import SpectrogramKind
from src.utils.config_manager import ObjectiveConfig
from src.utils.errors import ShapeError, ValidationFailure

logger = logging.getLogger(__name__)

PROB_FLOOR = 1e-12
BRANCH_ORDER = (SpectrogramKind.WA, SpectrogramKind.GA, SpectrogramKind.WM)


@dataclass(frozen=True)
class LossWeights:
    alpha: float = 1.0 / 3.0
    beta: float = 1.0
    gamma: float = 1.0

    def __post_init__(self):
        if min(self.alpha, self.beta, self.gamma) < 0:
            raise ValidationFailure(f"Loss weights must be non-negative, got {self}")
        if self.alpha == 0 and self.beta == 0 and self.gamma == 0:
            raise ValidationFailure("Loss weights must not all be zero")


def l2_penalty(params: Iterable[Parameter], lambda_reg: float) -> Tensor:
    """(lambda / 2) * sum of squared parameter values"""
    squares = [ops.sum(ops.square(p)) for p in params]
    return ops.mul(ops.total(squares), 0.5 * lambda_reg)


def kl_loss(
    y: np.ndarray,
    y_hat: Tensor,
    params: Sequence[Parameter] = (),
    lambda_reg: float = 1e-4,
    clamp_counter: Optional[Counter] = None,
    name: str = "kl",
) -> Tensor:
    """
    sum_n sum_t y * log(y / y_hat) + (lambda / 2) * ||params||^2,
    with 0 * log(0 / q) = 0 and y_hat floored at 1e-12.
    """
    y = np.asarray(y, dtype=np.float64)
    if y.shape != y_hat.shape:
        raise ShapeError(f"{name}: targets {y.shape} and predictions {y_hat.shape} differ")
    positive = y > 0
    clamped = int(np.count_nonzero(positive & (y_hat.data < PROB_FLOOR)))
    if clamped:
        logger.warning("%s: %d predicted probabilities clamped at %g", name, clamped, PROB_FLOOR)
        if clamp_counter is not None:
            clamp_counter[name] += clamped

    entropy_term = float(np.sum(y[positive] * np.log(y[positive])))
    cross = ops.sum(ops.mul(ops.log(ops.clamp_min(y_hat, PROB_FLOOR)), y))
    kl = ops.sub(entropy_term, cross)
    if lambda_reg > 0 and params:
        return ops.add([kl, l2_penalty(params, lambda_reg)])
    return kl


def contrastive_terms(e_i: Tensor, e_j: Tensor, same: np.ndarray, margin: float = 1.0) -> Tensor:
    """Per-pair Y * d^2 + (1 - Y) * max(margin - d, 0)^2 for [P, E] embeddings"""
    if e_i.shape != e_j.shape:
        raise ShapeError(f"Contrastive pair shapes differ: {e_i.shape} vs {e_j.shape}")
    same = np.asarray(same, dtype=np.float64).reshape(-1)
    sq = ops.sum(ops.square(ops.sub(e_i, e_j)), axis=-1)
    # the floor keeps d differentiable at zero distance
    d = ops.sqrt(ops.add([sq, 1e-12]))
    hinge = ops.square(ops.relu(ops.sub(margin, d)))
    return ops.add([ops.mul(sq, same), ops.mul(hinge, 1.0 - same)])


def contrastive_loss(e_i: Tensor, e_j: Tensor, same: Union[int, bool], margin: float = 1.0) -> Tensor:
    """Contrastive loss of one embedding pair (Y = 1 for a same-class pair)"""
    if e_i.shape != e_j.shape:
        raise ShapeError(f"Embeddings differ in length: {e_i.shape} vs {e_j.shape}")
    row_i = ops.reshape(e_i, (1, -1))
    row_j = ops.reshape(e_j, (1, -1))
    return ops.sum(contrastive_terms(row_i, row_j, np.array([float(same)]), margin))


def contrastive_pairs(
    n: int,
    policy: str = "auto",
    rng: Optional[np.random.Generator] = None,
    all_pairs_max: int = 32,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Index pairs (i, j), i != j: all n(n-1)/2 pairs, or n pairs along a random
    derangement. 'auto' uses all pairs up to all_pairs_max items.
    """
    if n < 2:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    if policy == "auto":
        policy = "all_pairs" if n <= all_pairs_max else "derangement"
    if policy == "all_pairs":
        i, j = np.triu_indices(n, k=1)
        return i.astype(np.int64), j.astype(np.int64)
    if policy != "derangement":
        raise ValidationFailure(f"Unknown pairing policy: {policy}")
    rng = rng or np.random.default_rng(0)
    order = rng.permutation(n)
    return order, np.roll(order, -1)


def batch_contrastive(
    e: Tensor,
    labels: Sequence[int],
    margin: float = 1.0,
    rng: Optional[np.random.Generator] = None,
    policy: str = "auto",
    all_pairs_max: int = 32,
    include: Optional[np.ndarray] = None,
) -> Tensor:
    """Mean contrastive loss over within-batch pairs of [N, E] embeddings"""
    labels = np.asarray(labels)
    if e.ndim != 2 or e.shape[0] != labels.shape[0]:
        raise ShapeError(f"Expected [N, E] embeddings for {labels.shape[0]} labels, got {e.shape}")
    i, j = contrastive_pairs(e.shape[0], policy, rng, all_pairs_max)
    if include is not None:
        keep = include[i] & include[j]
        i, j = i[keep], j[keep]
    if i.size == 0:
        return ops.as_tensor(0.0)
    same = (labels[i] == labels[j]).astype(np.float64)
    terms = contrastive_terms(ops.take(e, i, axis=0), ops.take(e, j, axis=0), same, margin)
    return ops.mean(terms)


@dataclass
class LossParts:
    kl: Dict[SpectrogramKind, Tensor] = field(default_factory=dict)
    comb: Optional[Tensor] = None
    contrastive: Dict[SpectrogramKind, Tensor] = field(default_factory=dict)

    def as_floats(self) -> Dict[str, float]:
        """History columns; absent terms are 0"""
        row = {}
        for kind in BRANCH_ORDER:
            row[f"L_{kind.value}"] = _value(self.kl.get(kind))
        row["L_Comb"] = _value(self.comb)
        for kind in BRANCH_ORDER:
            row[f"L_{kind.value}_Cont"] = _value(self.contrastive.get(kind))
        return row


def _value(t: Optional[Union[Tensor, float]]) -> float:
    if t is None:
        return 0.0
    return t.item() if isinstance(t, Tensor) else float(t)


def total_loss(parts: LossParts, w: LossWeights) -> Tensor:
    """Exactly alpha * sum(KL) + beta * KL_Comb + gamma * sum(Cont)"""
    terms = []
    if parts.kl and w.alpha:
        terms.append(ops.mul(ops.total([ops.as_tensor(v) for v in parts.kl.values()]), w.alpha))
    if parts.comb is not None and w.beta:
        terms.append(ops.mul(ops.as_tensor(parts.comb), w.beta))
    if parts.contrastive and w.gamma:
        terms.append(ops.mul(ops.total([ops.as_tensor(v) for v in parts.contrastive.values()]), w.gamma))
    return ops.total(terms)


def system_losses(
    output,
    soft_labels: np.ndarray,
    contrastive_labels: np.ndarray,
    params: Sequence[Parameter],
    cfg: ObjectiveConfig,
    weights: LossWeights,
    rng: Optional[np.random.Generator] = None,
    include: Optional[np.ndarray] = None,
    clamp_counter: Optional[Counter] = None,
) -> LossParts:
    """
    All loss parts for one SystemOutput. Terms whose weight is zero are not
    computed and stay absent.
    """
    parts = LossParts()
    if weights.alpha:
        for kind, probs in output.probs.items():
            parts.kl[kind] = kl_loss(
                soft_labels, probs, params, cfg.lambda_reg, clamp_counter, name=f"L_{kind.value}"
            )
    if weights.beta and output.p_comb is not None:
        parts.comb = kl_loss(soft_labels, output.p_comb, params, cfg.lambda_reg, clamp_counter, name="L_Comb")
    if weights.gamma:
        for kind, e in output.embeddings.items():
            parts.contrastive[kind] = batch_contrastive(
                e, contrastive_labels, cfg.margin, rng, cfg.pairing, cfg.all_pairs_max, include
            )
    return parts
