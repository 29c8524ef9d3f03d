import json

import numpy as np
import pytest

from choquet_fuse.data import generate_synthetic
from choquet_fuse.errors import DegenerateLabelsError
from choquet_fuse.evaluation import (
    FUSED,
    PipelineConfig,
    auc,
    cross_validate,
    fit_fold,
    g_mean,
    grid_search_weights,
    roc_curve,
    stratified_folds,
)
from choquet_fuse.learners import LogisticConfig

from oracles import auc_pairwise, g_mean_counts

FAST = PipelineConfig(learner_configs={"logistic": LogisticConfig(max_iter=100)},
                      learners=("logistic", "logistic", "logistic"), use_views=True)


@pytest.fixture(scope="module")
def small():
    return generate_synthetic(n=600, d=6, complementary_views=3, seed=11)


class TestAuc:
    @pytest.mark.parametrize("scores, labels, expected", [
        ([0.9, 0.8, 0.3, 0.2], [1, 1, 0, 0], 1.0),
        ([0.9, 0.2, 0.8, 0.3], [1, 0, 0, 1], 0.75),
        ([0.4, 0.4, 0.4], [1, 0, 1], 0.5),
    ])
    def test_examples(self, scores, labels, expected):
        assert auc(scores, labels) == expected

    def test_matches_pairwise_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            n = int(rng.integers(2, 201))
            labels = rng.integers(0, 2, n)
            labels[:2] = [0, 1]
            scores = rng.integers(0, 8, n) / 8.0  # coarse grid forces ties
            assert auc(scores, labels) == auc_pairwise(scores.tolist(), labels.tolist())

    def test_monotone_invariance(self):
        rng = np.random.default_rng(1)
        scores = rng.normal(size=150)
        labels = rng.integers(0, 2, 150)
        assert auc(np.exp(3 * scores) + 7, labels) == auc(scores, labels)

    def test_matches_trapezoid(self):
        rng = np.random.default_rng(2)
        scores = rng.integers(0, 10, 80) / 10
        labels = rng.integers(0, 2, 80)
        fpr, tpr, _ = roc_curve(scores, labels)
        area = float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2))
        assert auc(scores, labels) == pytest.approx(area, abs=1e-12)

    def test_single_class(self):
        with pytest.raises(DegenerateLabelsError):
            auc([0.1, 0.2], [1, 1])


class TestGMean:
    def test_examples(self):
        assert g_mean([1, 0, 1, 0], [1, 0, 1, 0]) == 1.0
        labels = [1] * 5 + [0] * 4
        preds = [1, 1, 1, 1, 0] + [1, 1, 0, 0]  # TPR 0.8, TNR 0.5
        assert g_mean(preds, labels) == pytest.approx(0.632456, abs=1e-6)
        assert g_mean(preds, labels) == pytest.approx(g_mean_counts(preds, labels), abs=1e-12)
        assert g_mean([0] * 9, labels) == 0.0

    def test_matches_counts(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            labels = rng.integers(0, 2, 50)
            labels[:2] = [0, 1]
            preds = rng.integers(0, 2, 50)
            assert g_mean(preds, labels) == pytest.approx(g_mean_counts(preds, labels), abs=1e-9)


class TestFolds:
    def test_partition(self):
        y = np.array([1] * 183 + [0] * 817)
        ids = stratified_folds(y, 5, seed=4)
        sizes = np.bincount(ids)
        assert sizes.tolist() == [200] * 5
        for f in range(5):
            assert abs(y[ids == f].sum() - 36.6) <= 1

    def test_deterministic(self):
        y = np.random.default_rng(0).integers(0, 2, 300)
        assert np.array_equal(stratified_folds(y, 5, 7), stratified_folds(y, 5, 7))
        assert not np.array_equal(stratified_folds(y, 5, 7), stratified_folds(y, 5, 8))

    def test_fold_hygiene(self, small):
        ids = stratified_folds(small.y, 5, 0)
        for f in range(5):
            art = fit_fold(small, ids, f, FAST, 0)
            assert set(art.test_index.tolist()) == set(np.flatnonzero(ids == f).tolist())
            minority = min(np.bincount(small.y[ids != f]))
            assert art.balanced_counts == (minority, minority)
            assert art.train_size + art.test_index.size == small.n_samples

    def test_fold_without_positives(self):
        ds = generate_synthetic(n=40, d=3, complementary_views=1, seed=0)
        ids = np.where(ds.y == 1, 0, np.arange(40) % 2)
        with pytest.raises(DegenerateLabelsError):
            fit_fold(ds, ids, 1, FAST, 0)


class TestCrossValidate:
    def test_deterministic_and_complete(self, small):
        a = cross_validate(small, 5, FAST, seed=7)
        b = cross_validate(small, 5, FAST, seed=7)
        assert a.to_json() == b.to_json()
        doc = json.loads(a.to_json())
        assert set(a.reports) == {"logistic_1", "logistic_2", "logistic_3", FUSED, "majority_vote",
                                  "owa_optimistic", "owa_pessimistic"}
        for rep in a.reports.values():
            assert len(rep.auc_folds) == 5
            assert all(0 <= v <= 100 for v in rep.auc_folds + rep.gmean_folds)
        assert sum(s["test"] for s in doc["fold_sizes"]) == small.n_samples

    def test_parallel_matches_serial(self, small):
        assert cross_validate(small, 3, FAST, seed=1, workers=2).to_json() == \
            cross_validate(small, 3, FAST, seed=1, workers=1).to_json()

    def test_single_learner_parity(self, small):
        pipe = PipelineConfig(learners=("logistic",), learner_configs={"logistic": LogisticConfig(max_iter=100)})
        res = cross_validate(small, 5, pipe, seed=3)
        base, fused = res.reports["logistic"], res.reports[FUSED]
        np.testing.assert_allclose(fused.auc_folds, base.auc_folds, atol=1e-9)
        assert fused.gmean_folds == base.gmean_folds
        assert fused.confusion == base.confusion

    def test_tables(self, small):
        res = cross_validate(small, 3, FAST, seed=2)
        text = res.table_text()
        assert "AUC" in text and FUSED in text
        lines = res.table_csv().splitlines()
        assert len(lines) == 1 + len(res.reports)
        assert res.curves_csv().splitlines()[0].startswith("method,fold")


class TestGridSearch:
    def test_singleton(self, small):
        res = grid_search_weights(small, 3, [0.9], [0.6], seed=0, pipeline=FAST)
        assert res.best == (0.9, 0.6)
        assert list(res.table) == [(0.9, 0.6)]

    def test_two_by_two(self, small):
        res = grid_search_weights(small, 3, [0, 1], [0, 1], seed=0, pipeline=FAST)
        assert set(res.table) == {(0.0, 0.0), (0.0, 1.0), (1.0, 0.0), (1.0, 1.0)}
        assert res.best in res.table
        assert res.table[res.best] == max(res.table.values())

    def test_tie_goes_to_smaller_pair(self, small):
        # with two classes the gamma factor is always 1, so w2 cannot change the AUC
        res = grid_search_weights(small, 3, [0.5], [0.7, 0.3], seed=0, pipeline=FAST)
        assert res.table[(0.5, 0.3)] == res.table[(0.5, 0.7)]
        assert res.best == (0.5, 0.3)
        doc = res.to_dict()
        assert doc["protocol"] == "same-cv" and doc["best"]["w1"] == 0.5
