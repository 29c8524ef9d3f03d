import json

import numpy as np
import pytest

from choquet_fuse.adaptive import AdaptiveConfig, DensityTable, PairwiseJointTable, ProbabilityMatrix
from choquet_fuse.errors import DimensionError, InvalidDensityError
from choquet_fuse.fusion import (
    FusionModel,
    FusionOutcome,
    fuse_dataset,
    fuse_sample,
    majority_vote,
    outcomes_to_json,
    owa_fuse,
    ratio_score,
    write_outcomes_csv,
)

from oracles import fuse_predictions_oracle

CFG = AdaptiveConfig()


def stats(p, m):
    pms = [ProbabilityMatrix(np.eye(m)) for _ in range(p)]
    return pms, PairwiseJointTable(np.zeros((p, p, m, m)))


def random_problem(rng, p=3, m=2, n_train=300, n_test=60, accuracy=0.75):
    labels = rng.integers(0, m, n_train)
    preds = np.where(rng.random((p, n_train)) < accuracy, labels, rng.integers(0, m, (p, n_train)))
    model = FusionModel.fit(preds, labels, m, CFG)
    h = rng.dirichlet(np.ones(m), size=(n_test, p))
    return model, h


class TestFuseSample:
    def test_unanimous_rows(self):
        pms, table = stats(3, 2)
        g = DensityTable(np.array([[0.6, 0.7], [0.8, 0.5], [0.4, 0.9]]))
        out = fuse_sample([[0.3, 0.7]] * 3, g, pms, table, CFG)
        assert out.predicted == 1
        assert out.integrals == pytest.approx((0.3, 0.7), abs=1e-12)

    def test_reuses_choquet_example(self):
        pms, table = stats(2, 3)
        g = DensityTable(np.array([[0.2, 0.2, 0.2], [0.3, 0.3, 0.3]]))
        h = [[0.4, 0.3, 0.3], [0.7, 0.15, 0.15]]
        out = fuse_sample(h, g, pms, table, CFG)
        assert out.integrals[0] == pytest.approx(0.49, abs=1e-9)

    def test_tie_goes_to_class_zero(self):
        pms, table = stats(2, 2)
        g = DensityTable(np.full((2, 2), 0.5))
        out = fuse_sample([[0.5, 0.5], [0.5, 0.5]], g, pms, table, CFG)
        assert out.integrals == (0.5, 0.5)
        assert out.predicted == 0
        assert out.score == 0.5

    def test_dimension_mismatch(self):
        pms, table = stats(2, 2)
        with pytest.raises(DimensionError):
            fuse_sample([[0.5, 0.5]], DensityTable(np.full((2, 2), 0.5)), pms, table, CFG)

    def test_ratio_score(self):
        assert ratio_score([0.0, 0.0]) == 0.5
        assert ratio_score([0.2, 0.6]) == pytest.approx(0.75)


class TestFuseDataset:
    def test_empty(self):
        model, _ = random_problem(np.random.default_rng(0))
        assert model.fuse(np.empty((0, 3, 2))) == []

    def test_single_sample(self):
        model, h = random_problem(np.random.default_rng(1))
        single = fuse_sample(h[0], model.densities, model.pms, model.table, CFG)
        assert model.fuse(h[:1]) == [single]

    def test_batch_equals_per_sample(self):
        model, h = random_problem(np.random.default_rng(2))
        batch = model.fuse(h)
        for row, out in zip(h, batch):
            assert out == fuse_sample(row, model.densities, model.pms, model.table, CFG)

    def test_permutation(self):
        rng = np.random.default_rng(3)
        model, h = random_problem(rng)
        perm = rng.permutation(len(h))
        base = model.fuse(h)
        assert model.fuse(h[perm]) == [base[k] for k in perm]

    @pytest.mark.parametrize("seed, p, m", [(4, 2, 2), (5, 3, 2), (6, 4, 3), (7, 3, 3)])
    def test_matches_oracle(self, seed, p, m):
        rng = np.random.default_rng(seed)
        model, h = random_problem(rng, p=p, m=m, n_test=40)
        cfg = model.config
        expected = fuse_predictions_oracle(
            h.tolist(), model.densities.g.tolist(), [x.probs.tolist() for x in model.pms],
            model.table.values, cfg.w1, cfg.w2, cfg.epsilon, cfg.density_floor)
        assert [o.predicted for o in model.fuse(h)] == expected

    def test_internality(self):
        model, h = random_problem(np.random.default_rng(8), p=4, m=3, n_test=200)
        for row, out in zip(h, model.fuse(h)):
            for j, value in enumerate(out.integrals):
                assert row[:, j].min() - 1e-12 <= value <= row[:, j].max() + 1e-12

    def test_error_names_first_failing_sample(self):
        pms, table = stats(2, 2)
        g = DensityTable(np.array([[np.nan, 0.5], [0.5, 0.5]]))
        h = np.array([[[0.2, 0.8], [0.3, 0.7]], [[0.9, 0.1], [0.8, 0.2]]])
        with pytest.raises(InvalidDensityError, match="sample 0") as info:
            fuse_dataset(h, g, pms, table, CFG)
        assert info.value.sample_index == 0

    def test_model_round_trip(self):
        model, h = random_problem(np.random.default_rng(9))
        again = FusionModel.from_dict(json.loads(json.dumps(model.to_dict())))
        assert again.fuse(h) == model.fuse(h)


class TestBaselines:
    def test_majority_examples(self):
        h = np.array([
            [[0.2, 0.8], [0.4, 0.6], [0.7, 0.3]],
            [[0.6, 0.4], [0.6, 0.4], [0.9, 0.1]],
        ])
        assert majority_vote(h).tolist() == [1, 0]

    def test_majority_tie_uses_support(self):
        h = np.array([[[0.55, 0.45], [0.35, 0.65]]])  # votes 0/1, sums 0.9 vs 1.1
        assert majority_vote(h).tolist() == [1]

    def test_majority_full_tie_goes_low(self):
        h = np.array([[[0.6, 0.4], [0.4, 0.6]]])
        assert majority_vote(h).tolist() == [0]

    def test_owa_examples(self):
        h = np.array([[[0.6, 0.4], [0.2, 0.8], [0.3, 0.7]]])
        opt = owa_fuse(h, "optimistic")[0]
        pes = owa_fuse(h, "pessimistic")[0]
        assert opt.predicted == 1 and opt.integrals == (0.6, 0.8)
        assert pes.predicted == 1 and pes.integrals == (0.2, 0.4)

    def test_owa_custom_weights(self):
        h = np.array([[[0.6, 0.4], [0.2, 0.8], [0.3, 0.7]]])
        mean = owa_fuse(h, [1 / 3, 1 / 3, 1 / 3])[0]
        assert mean.integrals == pytest.approx((1.1 / 3, 1.9 / 3))
        with pytest.raises(DimensionError):
            owa_fuse(h, [0.5, 0.5])

    def test_single_classifier_parity(self):
        rng = np.random.default_rng(10)
        labels = rng.integers(0, 2, 100)
        preds = np.where(rng.random(100) < 0.8, labels, 1 - labels)[None, :]
        model = FusionModel.fit(preds, labels, 2, CFG)
        h = rng.dirichlet([1, 1], size=(50, 1))
        lone = np.argmax(h[:, 0], axis=1).tolist()
        assert [o.predicted for o in model.fuse(h)] == lone
        assert majority_vote(h).tolist() == lone
        assert [o.predicted for o in owa_fuse(h, "optimistic")] == lone
        assert [o.predicted for o in owa_fuse(h, "pessimistic")] == lone


def test_exports(tmp_path):
    outs = [FusionOutcome(1, (0.25, 0.75), 0.75), FusionOutcome(0, (0.5, 0.5), 0.5)]
    path = tmp_path / "o.csv"
    write_outcomes_csv(path, outs, ["a", "b"])
    lines = path.read_text().splitlines()
    assert lines[0] == "sample_id,predicted_class,score,integral_0,integral_1"
    assert lines[1] == "a,1,0.75,0.25,0.75"
    doc = json.loads(outcomes_to_json(outs, ["a", "b"]))
    assert doc[1] == {"sample_id": "b", "predicted_class": 0, "score": 0.5, "integrals": [0.5, 0.5]}
