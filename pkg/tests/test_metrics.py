import numpy as np
import pytest

from wavetrunk.metrics import EvalResult, evaluate_logits, map_at_3, top_k_accuracy


def brute_force_rank(logits_row, label):
    """Independent oracle: sort class indices by (-logit, index), find the label."""
    order = sorted(range(len(logits_row)), key=lambda c: (-logits_row[c], c))
    return order.index(label) + 1


class TestTopK:
    def test_k_equals_c_is_always_one(self):
        rng = np.random.default_rng(0)
        logits = rng.standard_normal((50, 7))
        labels = rng.integers(0, 7, 50)
        assert top_k_accuracy(logits, labels, 7) == 1.0

    def test_one_hot_correct(self):
        labels = np.array([2, 0, 1])
        logits = np.zeros((3, 3))
        logits[np.arange(3), labels] = 5.0
        assert top_k_accuracy(logits, labels, 1) == 1.0

    def test_random_logits_near_chance(self):
        rng = np.random.default_rng(1)
        logits = rng.standard_normal((1000, 10))
        labels = rng.integers(0, 10, 1000)
        assert abs(top_k_accuracy(logits, labels, 1) - 0.1) < 0.03

    def test_k_out_of_range_rejected(self):
        logits = np.zeros((2, 4))
        labels = np.zeros(2, dtype=int)
        with pytest.raises(ValueError):
            top_k_accuracy(logits, labels, 5)
        with pytest.raises(ValueError):
            top_k_accuracy(logits, labels, 0)

    def test_tie_break_by_lowest_index(self):
        logits = np.array([[1.0, 1.0, 0.0]])
        # class 0 and 1 tied; the tie goes to class 0
        assert top_k_accuracy(logits, np.array([0]), 1) == 1.0
        assert top_k_accuracy(logits, np.array([1]), 1) == 0.0
        assert top_k_accuracy(logits, np.array([1]), 2) == 1.0


class TestMapAt3:
    def test_rank_one_everywhere(self):
        labels = np.array([0, 1])
        logits = np.zeros((2, 4))
        logits[np.arange(2), labels] = 3.0
        assert map_at_3(logits, labels) == 1.0

    def test_rank_two_everywhere(self):
        logits = np.tile([5.0, 4.0, 0.0, 0.0], (6, 1))
        labels = np.ones(6, dtype=int)
        assert map_at_3(logits, labels) == 0.5

    def test_below_three_classes_rejected(self):
        with pytest.raises(ValueError):
            map_at_3(np.zeros((2, 2)), np.zeros(2, dtype=int))

    def test_random_logits_match_exact_expectation(self):
        rng = np.random.default_rng(2)
        B, C = 100_000, 41
        logits = rng.standard_normal((B, C))
        labels = rng.integers(0, C, B)
        expected = (1 + 0.5 + 1 / 3) / 41
        assert abs(map_at_3(logits, labels) - expected) < 0.005


class TestAgainstBruteForce:
    def test_thousand_random_cases(self):
        rng = np.random.default_rng(3)
        B, C = 1000, 9
        logits = np.round(rng.standard_normal((B, C)) * 2, 1)  # coarse grid forces ties
        labels = rng.integers(0, C, B)
        ranks = np.array([brute_force_rank(logits[i], labels[i]) for i in range(B)])
        for k in (1, 3, 5, 9):
            assert top_k_accuracy(logits, labels, k) == np.mean(ranks <= k)
        expected_map = np.mean(np.where(ranks <= 3, 1.0 / ranks, 0.0))
        assert map_at_3(logits, labels) == pytest.approx(expected_map, abs=0)


class TestInvariants:
    def test_monotone_transform_invariance(self):
        rng = np.random.default_rng(4)
        logits = rng.standard_normal((200, 6))
        labels = rng.integers(0, 6, 200)
        warped = np.exp(logits * 0.5) + 3
        for k in (1, 3, 5):
            assert top_k_accuracy(logits, labels, k) == top_k_accuracy(warped, labels, k)
        assert map_at_3(logits, labels) == map_at_3(warped, labels)

    def test_map_at_least_top1(self):
        rng = np.random.default_rng(5)
        for seed in range(10):
            r = np.random.default_rng(seed)
            logits = r.standard_normal((100, 5))
            labels = r.integers(0, 5, 100)
            assert map_at_3(logits, labels) >= top_k_accuracy(logits, labels, 1)
            assert top_k_accuracy(logits, labels, 1) <= top_k_accuracy(logits, labels, 5)

    def test_concatenation_is_weighted_average(self):
        rng = np.random.default_rng(6)
        la, lb = rng.standard_normal((30, 5)), rng.standard_normal((70, 5))
        ya, yb = rng.integers(0, 5, 30), rng.integers(0, 5, 70)
        both = map_at_3(np.vstack([la, lb]), np.concatenate([ya, yb]))
        weighted = (30 * map_at_3(la, ya) + 70 * map_at_3(lb, yb)) / 100
        assert both == pytest.approx(weighted, abs=1e-12)


class TestEvalResult:
    def test_report_row(self):
        rng = np.random.default_rng(7)
        logits = rng.standard_normal((40, 4))
        labels = rng.integers(0, 4, 40)
        res = evaluate_logits("tagging", logits, labels)
        assert res.num_examples == 40
        assert res.top1 <= res.top5
        assert res.top1 <= res.map_at_3 <= 1.0
        # with 4 classes the top-5 column clamps to top-4 == 1.0
        assert res.top5 == 1.0
        assert "tagging" in res.as_csv_row()

    def test_two_class_report_has_nan_map(self):
        logits = np.array([[1.0, 0.0], [0.0, 1.0]])
        res = evaluate_logits("t", logits, np.array([0, 1]))
        assert np.isnan(res.map_at_3)
        assert res.top1 == 1.0
