"""
Tests for challenge scoring against published results
"""

import numpy as np
import pytest
from pydantic import ValidationError

from src.ingest.labels import TaskId
from src.metrics.challenge import (
    ConfusionMatrix,
    MetricReport,
    evaluate_predictions,
    metric_report,
    round_half_even,
    scores,
    sensitivity,
    specificity,
)
from src.metrics.reference_tables import (
    KNOWN_INCONSISTENT,
    VARIANT_RESULTS,
    cell_mismatches,
    score_mismatches,
)
from src.reporting.selfcheck import check_metric_oracle, check_score_oracle
from src.utils.errors import MetricUndefinedError, ShapeError


def _cell_id(cell):
    return f"{cell.task.value}-{cell.system}"


class TestOracle:
    def test_all_published_cells_are_present(self):
        assert len(VARIANT_RESULTS) == 24
        assert {c.task for c in VARIANT_RESULTS} == set(TaskId)

    @pytest.mark.parametrize("cell", VARIANT_RESULTS, ids=_cell_id)
    def test_recomputed_as_hs_match(self, cell):
        missed = [m for m in cell_mismatches(cell, scores) if (cell.task, cell.system, m) not in KNOWN_INCONSISTENT]
        assert missed == []

    def test_inconsistent_cells_really_miss(self):
        flagged = {(task, system) for task, system, _ in KNOWN_INCONSISTENT}
        for cell in VARIANT_RESULTS:
            if (cell.task, cell.system) in flagged:
                assert cell_mismatches(cell, scores)

    def test_scores_from_printed_as_hs(self):
        assert score_mismatches(scores) == []

    def test_selfcheck_passes_with_the_real_formula(self):
        assert check_metric_oracle().passed
        assert check_score_oracle().passed

    def test_perturbed_hs_is_caught(self):
        def bad_scores(se, sp):
            as_, hs, _ = scores(se, sp)
            hs *= 1.01
            return as_, hs, (as_ + hs) / 2.0

        result = check_metric_oracle(bad_scores)
        assert not result.passed
        assert "HS" in result.detail

    def test_arithmetic_mean_for_hs_is_caught(self):
        def mean_only(se, sp):
            as_ = (se + sp) / 2.0
            return as_, as_, as_

        assert not check_metric_oracle(mean_only).passed


class TestScores:
    def test_formula(self):
        as_, hs, score = scores(80.0, 60.0)
        assert as_ == 70.0
        assert hs == pytest.approx(2 * 80 * 60 / 140)
        assert score == pytest.approx((70.0 + hs) / 2)

    def test_zero_se_and_sp(self):
        assert scores(0.0, 0.0) == (0.0, 0.0, 0.0)

    def test_harmonic_never_exceeds_arithmetic(self):
        rng = np.random.default_rng(0)
        for se, sp in rng.uniform(0, 100, size=(200, 2)):
            as_, hs, _ = scores(se, sp)
            assert hs <= as_ + 1e-9

    @pytest.mark.parametrize("value, expected", [(74.55, 74.6), (74.45, 74.4), (0.25, 0.2), (0.35, 0.4), (None, None)])
    def test_round_half_even(self, value, expected):
        assert round_half_even(value) == expected


class TestConfusion:
    def test_se_sp_from_a_four_class_matrix(self):
        # normal row: 8 of 10 right; abnormal rows: diagonal 5 + 3 + 2 of 15
        cm = ConfusionMatrix(np.array([[8, 1, 1, 0], [1, 5, 0, 0], [2, 0, 3, 0], [0, 1, 0, 2]]))
        assert specificity(cm) == pytest.approx(80.0)
        assert sensitivity(cm) == pytest.approx(100.0 * 10 / 15)

    def test_abnormal_confusion_counts_only_on_the_diagonal(self):
        cm = ConfusionMatrix(np.array([[1, 0, 0], [0, 0, 4], [0, 4, 0]]))
        assert sensitivity(cm) == 0.0

    def test_from_labels_uses_every_class(self):
        cm = ConfusionMatrix.from_labels([0, 1, 1], [0, 1, 2], num_classes=5)
        assert cm.counts.shape == (5, 5)
        assert cm.total == 3

    def test_invalid_matrices(self):
        with pytest.raises(ShapeError):
            ConfusionMatrix(np.zeros((2, 3)))
        with pytest.raises(ShapeError):
            ConfusionMatrix(np.array([[1, -1], [0, 1]]))

    def test_undefined_metrics_are_reported(self):
        cm = ConfusionMatrix(np.array([[4, 1], [0, 0]]))
        with pytest.raises(MetricUndefinedError):
            sensitivity(cm)
        report = metric_report(cm)
        assert report.se is None and report.sp == pytest.approx(80.0)
        assert report.undefined == ["SE", "AS", "HS", "Score"]
        assert report.rounded()["Score"] is None

    def test_evaluate_predictions(self):
        cm, report = evaluate_predictions([0, 0, 1, 2, 2], [0, 1, 1, 2, 0], TaskId.T2_1)
        assert cm.num_classes == 3
        assert report.sp == pytest.approx(50.0)
        assert report.se == pytest.approx(100.0 * 2 / 3)
        assert report.as_dict()["rounded"]["SE"] == 66.7


class TestMetricReport:
    def test_aliases_and_ranges(self):
        report = MetricReport.model_validate({"SE": 50.0, "SP": 50.0, "AS": 50.0, "HS": 50.0, "Score": 50.0})
        assert report.raw()["AS"] == 50.0
        with pytest.raises(ValidationError):
            MetricReport(se=120.0, sp=10.0)
        with pytest.raises(ValidationError):
            MetricReport(as_=40.0, hs=60.0)
