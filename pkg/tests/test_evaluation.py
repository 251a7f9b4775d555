"""Tests for kappa scoring and reports."""

import numpy as np
import pytest
from sklearn.metrics import cohen_kappa_score

from microsleep.evaluation import (
    EvaluationError, KappaReport, binarize_reference, cohen_kappa, compare_to_reference,
    concatenated_report, inter_rater_report, per_class_kappa, reference_kappas,
    report_from_confusion,
)
from microsleep.ingest import LabelTrack


def _random_pair(seed, n=500, p=(0.6, 0.2, 0.1, 0.1)):
    rng = np.random.default_rng(seed)
    ref = rng.choice(4, size=n, p=p)
    pred = np.where(rng.random(n) < 0.7, ref, rng.choice(4, size=n))
    return pred, ref


class TestCohenKappa:
    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_matches_sklearn(self, seed):
        pred, ref = _random_pair(seed)
        assert cohen_kappa(pred, ref) == pytest.approx(cohen_kappa_score(pred, ref))

    @pytest.mark.parametrize("seed", range(5))
    def test_symmetric(self, seed):
        pred, ref = _random_pair(seed, n=300)
        assert cohen_kappa(pred, ref) == cohen_kappa(ref, pred)

    def test_perfect_agreement(self):
        assert cohen_kappa([0, 1, 1, 0], [0, 1, 1, 0]) == pytest.approx(1.0)

    def test_constant_equal_sequences(self):
        """Chance agreement of 1 scores 0 rather than dividing by zero."""
        assert cohen_kappa([2, 2, 2], [2, 2, 2]) == 0.0

    def test_accepts_label_tracks(self):
        track = LabelTrack([0, 1, 0, 1])
        assert cohen_kappa(track, np.array([0, 1, 0, 1])) == pytest.approx(1.0)

    def test_length_mismatch(self):
        with pytest.raises(EvaluationError, match="Length mismatch"):
            cohen_kappa([0, 1], [0, 1, 1])

    def test_empty(self):
        with pytest.raises(EvaluationError):
            cohen_kappa([], [])


class TestPerClassKappa:
    @pytest.mark.parametrize("k", range(4))
    def test_one_vs_rest(self, k):
        pred, ref = _random_pair(4)
        expected = cohen_kappa_score((pred == k).astype(int), (ref == k).astype(int))
        assert per_class_kappa(pred, ref, k) == pytest.approx(expected)

    def test_report_agrees_with_per_class(self):
        pred, ref = _random_pair(5)
        report = concatenated_report([(pred, ref)])
        for k, name in enumerate(report.class_names):
            assert report.kappas[name] == pytest.approx(per_class_kappa(pred, ref, k))


class TestBruteForceOracle:
    @staticmethod
    def _kappa_by_hand(pred, ref, k):
        a = [1 if p == k else 0 for p in pred]
        b = [1 if r == k else 0 for r in ref]
        n = len(a)
        table = [[0, 0], [0, 0]]
        for x, y in zip(a, b):
            table[x][y] += 1
        p_o = (table[0][0] + table[1][1]) / n
        rows = [sum(table[i]) / n for i in range(2)]
        cols = [(table[0][j] + table[1][j]) / n for j in range(2)]
        p_e = rows[0] * cols[0] + rows[1] * cols[1]
        return 0.0 if p_e == 1 else (p_o - p_e) / (1 - p_e)

    def test_thousand_random_pairs(self):
        """Per-class kappa equals a contingency table counted by hand."""
        rng = np.random.default_rng(42)
        for _ in range(1000):
            n = int(rng.integers(1, 40))
            pred, ref = rng.integers(0, 4, n), rng.integers(0, 4, n)
            k = int(rng.integers(0, 4))
            assert abs(per_class_kappa(pred, ref, k) - self._kappa_by_hand(pred, ref, k)) <= 1e-12

    def test_constant_class_is_exactly_zero(self):
        assert per_class_kappa([1, 1, 1, 1], [1, 1, 1, 1], 1) == 0.0
        assert per_class_kappa([0, 0, 0], [0, 0, 0], 2) == 0.0


class TestReports:
    def test_concatenation_is_not_averaging(self):
        """Pairs are pooled before scoring."""
        a, b = _random_pair(6, n=300), _random_pair(7, n=700)
        pooled = concatenated_report([a, b])
        direct = concatenated_report([(np.concatenate([a[0], b[0]]), np.concatenate([a[1], b[1]]))])
        assert pooled.kappas == pytest.approx(direct.kappas)
        assert pooled.total == 1000

    def test_confusion_orientation(self):
        report = concatenated_report([(np.array([1, 1, 0]), np.array([0, 1, 0]))])
        # rows are the reference
        assert report.confusion[0, 1] == 1
        assert report.confusion[1, 0] == 0

    def test_rates(self):
        counts = np.array([[8, 2], [1, 9]])
        report = report_from_confusion(counts, ("nonMSE", "MSE"))
        assert report.sensitivity["MSE"] == pytest.approx(0.9)
        assert report.specificity["MSE"] == pytest.approx(0.8)
        assert report.accuracy == pytest.approx(17 / 20)

    def test_absent_class_rate_is_nan(self):
        report = concatenated_report([(np.array([0, 0, 1]), np.array([0, 0, 1]))])
        assert np.isnan(report.sensitivity["ED"])

    def test_pair_length_mismatch_names_pair(self):
        with pytest.raises(EvaluationError, match="Pair 1"):
            concatenated_report([([0, 1], [0, 1]), ([0], [0, 1])])

    def test_no_pairs(self):
        with pytest.raises(EvaluationError):
            concatenated_report([])

    def test_binary_report_maps_to_wake(self):
        pred = np.array([0, 1, 1, 0, 0, 1])
        ref = binarize_reference(np.array([0, 1, 2, 3, 0, 1]))
        np.testing.assert_array_equal(ref, [0, 1, 0, 0, 0, 1])
        report = concatenated_report([(pred, ref)], ("nonMSE", "MSE"))
        table = report.table3_kappas()
        assert set(table) == {"W", "MSE"}
        assert table["W"] == report.kappas["nonMSE"]

    def test_inter_rater(self):
        a, b = _random_pair(8)
        report = inter_rater_report([a[0]], [a[1]])
        assert isinstance(report, KappaReport)
        assert report.kappas["MSE"] == pytest.approx(per_class_kappa(a[0], a[1], 1))
        with pytest.raises(EvaluationError, match="recordings"):
            inter_rater_report([a[0]], [a[1], b[1]])


class TestReference:
    def test_lookup(self):
        assert reference_kappas("16s")["MSE"] == 0.69
        assert reference_kappas("16s", "test")["W"] == 0.59
        assert reference_kappas("2s", "test") is None

    def test_comparison(self):
        report = report_from_confusion(np.diag([50, 50, 50, 50]))
        comparison = compare_to_reference(report, "16s", tolerance=1.0)
        assert comparison.deltas["W"] == pytest.approx(1.0 - 0.67)
        assert comparison.passed is True
        assert compare_to_reference(report, "16s", tolerance=0.1).passed is False

    def test_missing_reference(self):
        report = report_from_confusion(np.eye(4, dtype=int))
        with pytest.raises(EvaluationError, match="No published"):
            compare_to_reference(report, "4s", split="test")
