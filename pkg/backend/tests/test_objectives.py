"""
Tests for the KL, contrastive and total training objectives
"""

from collections import Counter

import numpy as np
import pytest
from conftest import tiny_system

from src.autodiff.nn import Parameter
from src.autodiff.tensor import Tensor, backward, precision
from src.dsp.types import SpectrogramKind
from src.model.config import Variant
from src.model.system import RespiratorySystem
from src.objectives.losses import (
    LossParts,
    LossWeights,
    batch_contrastive,
    contrastive_loss,
    contrastive_pairs,
    kl_loss,
    l2_penalty,
    system_losses,
    total_loss,
)
from src.utils.config_manager import ObjectiveConfig
from src.utils.errors import ShapeError, ValidationFailure


class TestKL:
    def test_self_divergence_is_zero(self):
        y = np.array([[0.2, 0.5, 0.3], [1.0, 0.0, 0.0]])
        with precision("float64"):
            assert kl_loss(y, Tensor(y), lambda_reg=0).item() == pytest.approx(0.0, abs=1e-12)

    def test_matches_the_closed_form(self):
        y = np.array([[0.5, 0.5]])
        q = np.array([[0.9, 0.1]])
        expected = 0.5 * np.log(0.5 / 0.9) + 0.5 * np.log(0.5 / 0.1)
        with precision("float64"):
            assert kl_loss(y, Tensor(q), lambda_reg=0).item() == pytest.approx(expected)

    def test_zero_targets_contribute_nothing(self):
        with precision("float64"):
            value = kl_loss(np.array([[1.0, 0.0]]), Tensor([[0.25, 0.75]]), lambda_reg=0).item()
        assert value == pytest.approx(np.log(4.0))

    def test_clamped_probabilities_are_counted(self):
        counter = Counter()
        with precision("float64"):
            value = kl_loss(np.array([[1.0, 0.0]]), Tensor([[0.0, 1.0]]), lambda_reg=0, clamp_counter=counter, name="L_WA")
        assert np.isfinite(value.item())
        assert value.item() == pytest.approx(-np.log(1e-12))
        assert counter["L_WA"] == 1

    def test_l2_penalty_is_half_lambda_sum_of_squares(self):
        with precision("float64"):
            params = [Parameter(np.array([1.0, 2.0])), Parameter(np.array([[3.0]]))]
            assert l2_penalty(params, 0.1).item() == pytest.approx(0.05 * 14.0)
            y = np.array([[0.5, 0.5]])
            with_reg = kl_loss(y, Tensor(y), params, lambda_reg=0.1).item()
        assert with_reg == pytest.approx(0.7)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            kl_loss(np.ones((2, 3)) / 3, Tensor(np.ones((2, 2)) / 2))


class TestContrastive:
    def test_same_class_pair_pulls_by_squared_distance(self):
        with precision("float64"):
            loss = contrastive_loss(Tensor([0.0, 0.0]), Tensor([3.0, 4.0]), same=1)
        assert loss.item() == pytest.approx(25.0)

    def test_different_class_pair_is_hinged_at_the_margin(self):
        with precision("float64"):
            near = contrastive_loss(Tensor([0.0, 0.0]), Tensor([0.3, 0.4]), same=0, margin=1.0)
            far = contrastive_loss(Tensor([0.0, 0.0]), Tensor([3.0, 4.0]), same=0, margin=1.0)
        assert near.item() == pytest.approx(0.25, rel=1e-6)
        assert far.item() == 0.0

    def test_identical_embeddings_have_a_finite_gradient(self):
        with precision("float64"):
            a = Tensor([1.0, 2.0], requires_grad=True)
            b = Tensor([1.0, 2.0], requires_grad=True)
            backward(contrastive_loss(a, b, same=0))
        assert np.all(np.isfinite(a.grad))

    def test_pairing_policies(self):
        i, j = contrastive_pairs(4)
        assert len(i) == 6 and np.all(i < j)
        i, j = contrastive_pairs(40, "auto", np.random.default_rng(0), all_pairs_max=32)
        assert len(i) == 40
        assert np.all(i != j)
        assert sorted(i.tolist()) == list(range(40))
        assert contrastive_pairs(1)[0].size == 0
        with pytest.raises(ValidationFailure):
            contrastive_pairs(4, "random")

    def test_batch_mean_over_included_pairs(self):
        with precision("float64"):
            e = Tensor([[0.0, 0.0], [1.0, 0.0], [0.0, 2.0]])
            labels = [0, 0, 1]
            # pairs (0,1) same d2=1; (0,2) diff d=2 -> 0; (1,2) diff d=sqrt(5) -> 0
            assert batch_contrastive(e, labels).item() == pytest.approx(1.0 / 3.0)
            only_first_two = np.array([True, True, False])
            assert batch_contrastive(e, labels, include=only_first_two).item() == pytest.approx(1.0)
            assert batch_contrastive(e, labels, include=np.array([True, False, False])).item() == 0.0


class TestTotal:
    def test_weighted_sum(self):
        with precision("float64"):
            parts = LossParts(
                kl={k: Tensor(v) for k, v in zip(SpectrogramKind, (1.0, 2.0, 3.0))},
                comb=Tensor(4.0),
                contrastive={k: Tensor(v) for k, v in zip(SpectrogramKind, (0.5, 0.5, 1.0))},
            )
            total = total_loss(parts, LossWeights(alpha=0.5, beta=2.0, gamma=3.0))
        assert total.item() == pytest.approx(0.5 * 6 + 2.0 * 4 + 3.0 * 2)

    def test_weights_are_validated(self):
        with pytest.raises(ValidationFailure):
            LossWeights(0, 0, 0)
        with pytest.raises(ValidationFailure):
            LossWeights(-1, 1, 1)

    def test_history_columns(self):
        row = LossParts(comb=Tensor(2.0)).as_floats()
        assert list(row) == ["L_WA", "L_GA", "L_WM", "L_Comb", "L_WA_Cont", "L_GA_Cont", "L_WM_Cont"]
        assert row["L_Comb"] == 2.0 and row["L_WA"] == 0.0


class TestSystemLosses:
    def _batch(self, model, n=6):
        rng = np.random.default_rng(0)
        x = rng.normal(size=(n, 3, 16, 16))
        labels = np.arange(n) % model.cfg.num_classes
        soft = np.eye(model.cfg.num_classes)[labels]
        return model(x), soft, labels

    def test_system_iii_has_every_term(self):
        model = RespiratorySystem(tiny_system())
        out, soft, labels = self._batch(model)
        parts = system_losses(out, soft, labels, model.parameters(), ObjectiveConfig(), LossWeights(1 / 3, 1, 1))
        row = parts.as_floats()
        assert all(row[name] > 0 for name in ("L_WA", "L_GA", "L_WM", "L_Comb"))
        assert len(parts.contrastive) == 3
        backward(total_loss(parts, LossWeights(1 / 3, 1, 1)), params=model.parameters())
        assert all(np.all(np.isfinite(p.grad)) for p in model.parameters())

    def test_gamma_zero_records_zero_contrastive_loss(self):
        model = RespiratorySystem(tiny_system(Variant.SYSTEM_II))
        out, soft, labels = self._batch(model)
        weights = LossWeights(*model.cfg.loss_weights)
        parts = system_losses(out, soft, labels, model.parameters(), ObjectiveConfig(), weights)
        assert parts.contrastive == {}
        row = parts.as_floats()
        assert row["L_WA_Cont"] == row["L_GA_Cont"] == row["L_WM_Cont"] == 0.0
        expected = weights.alpha * (row["L_WA"] + row["L_GA"] + row["L_WM"]) + weights.beta * row["L_Comb"]
        assert total_loss(parts, weights).item() == pytest.approx(expected, rel=1e-5)
