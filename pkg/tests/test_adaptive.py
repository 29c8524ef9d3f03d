import numpy as np
import pytest

from choquet_fuse.adaptive import (
    AdaptiveConfig,
    ConfusionMatrix,
    DensityTable,
    PairwiseJointTable,
    ProbabilityMatrix,
    adapt_densities,
    build_confusion,
    build_pairwise_tables,
    delta_factor,
    gamma_factor,
    initial_densities,
    row_normalize,
)
from choquet_fuse.errors import ConfigError, EmptyDatasetError, InvalidLabelError

from oracles import adapted_density_loops, tally_confusion, tally_pairwise

CFG = AdaptiveConfig()


def pm(rows):
    return ProbabilityMatrix(np.asarray(rows, dtype=float))


def table_with(value, p=2, m=2, at=(0, 1, 0, 1)):
    values = np.zeros((p, p, m, m))
    values[at] = value
    return PairwiseJointTable(values)


class TestConfusion:
    @pytest.mark.parametrize("preds, labels, expected", [
        ([0, 0, 1, 1, 1], [0, 1, 1, 1, 0], [[1, 1], [1, 2]]),
        ([0, 1, 0, 1], [0, 1, 0, 1], [[2, 0], [0, 2]]),
        ([0, 0, 0, 0], [0, 0, 1, 1], [[2, 0], [2, 0]]),
    ])
    def test_examples(self, preds, labels, expected):
        cm = build_confusion(preds, labels, 2)
        assert cm.counts.tolist() == expected
        assert cm.total == len(labels)

    def test_label_out_of_range(self):
        with pytest.raises(InvalidLabelError):
            build_confusion([0, 1], [0, 2], 2)

    def test_empty(self):
        with pytest.raises(EmptyDatasetError):
            build_confusion([], [], 2)

    def test_matches_tally(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            n = int(rng.integers(1, 51))
            m = int(rng.integers(2, 5))
            preds = rng.integers(0, m, n)
            labels = rng.integers(0, m, n)
            expected = tally_confusion(preds.tolist(), labels.tolist(), m)
            assert build_confusion(preds, labels, m).counts.tolist() == expected


class TestRowNormalize:
    def test_examples(self):
        out = row_normalize(ConfusionMatrix(np.array([[80, 20], [10, 90]])))
        np.testing.assert_allclose(out.probs, [[0.8, 0.2], [0.1, 0.9]], atol=1e-12)
        out = row_normalize(ConfusionMatrix(np.array([[2, 0], [0, 2]])))
        assert out.probs.tolist() == [[1.0, 0.0], [0.0, 1.0]]

    def test_empty_row_is_degenerate(self):
        out = row_normalize(ConfusionMatrix(np.array([[0, 0], [3, 1]])))
        assert out.probs.tolist() == [[0.0, 0.0], [0.75, 0.25]]
        assert out.degenerate == (True, False)

    def test_rows_are_stochastic(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            counts = rng.integers(0, 20, size=(3, 3))
            out = row_normalize(ConfusionMatrix(counts))
            for row, deg in zip(out.probs, out.degenerate):
                if not deg:
                    assert abs(row.sum() - 1.0) <= 1e-9


class TestInitialDensities:
    def test_examples(self):
        g = initial_densities([pm([[0.8, 0.2], [0.1, 0.9]]), pm(np.eye(2))])
        np.testing.assert_allclose(g.g, [[0.8, 0.9], [1.0, 1.0]])

    def test_zero_diagonal_is_floored(self):
        g = initial_densities([pm([[0.0, 1.0], [0.0, 1.0]])])
        assert g.g.tolist() == [[1e-4, 1.0]]


class TestPairwise:
    def test_both_perfect(self):
        labels = [0] * 10
        t = build_pairwise_tables([labels, labels], labels, 2)
        assert t.values[0, 1, 0].tolist() == [1.0, 0.0]

    def test_three_of_ten(self):
        labels = [0] * 10
        e0 = [1, 1, 1] + [0] * 7
        t = build_pairwise_tables([e0, labels], labels, 2)
        assert t.values[0, 1, 0, 1] == pytest.approx(0.3)

    def test_peer_always_wrong(self):
        labels = [0] * 10
        t = build_pairwise_tables([labels, [1] * 10], labels, 2)
        assert t.values[0, 1, 0].tolist() == [0.0, 0.0]

    def test_missing_class_is_degenerate(self):
        t = build_pairwise_tables([[0, 1], [0, 0]], [0, 0], 3)
        assert t.degenerate == (False, True, True)
        assert not t.values[:, :, 1:].any()

    def test_matches_tally(self):
        rng = np.random.default_rng(2)
        for _ in range(40):
            n = int(rng.integers(1, 51))
            m = int(rng.integers(2, 4))
            p = int(rng.integers(2, 5))
            labels = rng.integers(0, m, n)
            preds = rng.integers(0, m, (p, n))
            got = build_pairwise_tables(preds, labels, m).values
            expected = tally_pairwise(preds.tolist(), labels.tolist(), m)
            assert np.array_equal(got, expected)
            assert (got.sum(axis=3) <= 1 + 1e-9).all()


class TestFactors:
    def test_delta_agreement(self):
        assert delta_factor(0, 1, 0, 1, 1, pm([[0.8, 0.2], [0.1, 0.9]]), table_with(0.1), CFG) == 1.0

    def test_delta_ratio(self):
        d = delta_factor(0, 1, 0, 1, 0, pm([[0.8, 0.2], [0.1, 0.9]]), table_with(0.1), CFG)
        assert d == pytest.approx(0.875)

    def test_delta_clamped(self):
        d = delta_factor(0, 1, 0, 1, 0, pm([[0.05, 0.95], [0.1, 0.9]]), table_with(0.2), CFG)
        assert d == 1e-4

    def test_delta_zero_diagonal(self):
        d = delta_factor(0, 1, 0, 1, 0, pm([[0.0, 1.0], [0.1, 0.9]]), table_with(0.0), CFG)
        assert d == CFG.epsilon

    # three classes so both classifiers can be wrong about j = 0 in different ways
    def test_gamma_first_branch(self):
        pi = pm([[0.5, 0.2, 0.3], [0, 1, 0], [0, 0, 1]])
        pmm = pm([[0.5, 0.2, 0.3], [0, 1, 0], [0, 0, 1]])
        assert gamma_factor(0, 1, 0, 1, 2, pi, pmm, CFG) == 1.0

    def test_gamma_ratio(self):
        pi = pm([[0.4, 0.3, 0.3], [0, 1, 0], [0, 0, 1]])
        pmm = pm([[0.6, 0.2, 0.2], [0, 1, 0], [0, 0, 1]])
        assert gamma_factor(0, 1, 0, 1, 2, pi, pmm, CFG) == pytest.approx(2 / 3)

    def test_gamma_zero_peer_error(self):
        pi = pm([[0.9, 0.1, 0.0], [0, 1, 0], [0, 0, 1]])
        pmm = pm([[1.0, 0.0, 0.0], [0, 1, 0], [0, 0, 1]])
        assert gamma_factor(0, 1, 0, 1, 2, pi, pmm, CFG) == 1e-4

    def test_gamma_inapplicable_when_one_says_j(self):
        pi = pm([[0.4, 0.3, 0.3], [0, 1, 0], [0, 0, 1]])
        pmm = pm([[0.6, 0.0, 0.4], [0, 1, 0], [0, 0, 1]])
        assert gamma_factor(0, 1, 0, 1, 0, pi, pmm, CFG) == 1.0
        assert gamma_factor(0, 1, 0, 0, 1, pi, pmm, CFG) == 1.0

    def test_factor_ranges(self):
        rng = np.random.default_rng(3)
        for _ in range(500):
            m = 3
            pms = [pm(rng.dirichlet(np.ones(m), size=m)) for _ in range(2)]
            tab = PairwiseJointTable(rng.uniform(0, 1, (2, 2, m, m)))
            j, k1, k2 = rng.integers(0, m, 3)
            d = delta_factor(0, 1, j, k1, k2, pms[0], tab, CFG)
            c = gamma_factor(0, 1, j, k1, k2, pms[0], pms[1], CFG)
            assert 0 < d <= 1 and 0 < c <= 1


class TestAdapt:
    def test_agreement_is_fixed_point(self):
        g = DensityTable(np.array([[0.8, 0.3], [0.6, 0.7], [0.55, 0.123456789]]))
        pms = [pm([[0.8, 0.2], [0.1, 0.9]])] * 3
        tab = PairwiseJointTable(np.full((3, 3, 2, 2), 0.2))
        out = adapt_densities(g, [1, 1, 1], pms, tab, CFG)
        assert np.array_equal(out.g, g.g)
        assert out.g is not g.g

    def test_single_peer_delta(self):
        g = DensityTable(np.array([[0.8, 0.9], [0.7, 0.6]]))
        pms = [pm([[0.8, 0.2], [0.1, 0.9]]), pm([[0.7, 0.3], [0.4, 0.6]])]
        tab = table_with(0.1, at=(0, 1, 0, 1))
        out = adapt_densities(g, [1, 0], pms, tab, CFG)
        assert out.g[0, 0] == pytest.approx(0.709410, abs=1e-6)

    def test_both_factors(self):
        # delta = gamma = 0.5 with unit exponents: 0.8 * 0.5 * 0.5
        cfg = AdaptiveConfig(w1=1.0, w2=1.0)
        g = DensityTable(np.array([[0.8, 0.5, 0.5], [0.5, 0.5, 0.5]]))
        pi = pm([[0.4, 0.4, 0.2], [0, 1, 0], [0, 0, 1]])
        pmm = pm([[0.6, 0.2, 0.2], [0, 1, 0], [0, 0, 1]])
        values = np.zeros((2, 2, 3, 3))
        values[0, 1, 0, 1] = 0.2
        out = adapt_densities(g, [1, 2], [pi, pmm], PairwiseJointTable(values), cfg)
        assert out.g[0, 0] == pytest.approx(0.2, abs=1e-12)

    def test_matches_loops_and_never_grows(self):
        rng = np.random.default_rng(4)
        for _ in range(200):
            p = int(rng.integers(2, 5))
            m = int(rng.integers(2, 4))
            n = 40
            labels = rng.integers(0, m, n)
            preds = np.where(rng.random((p, n)) < 0.7, labels, rng.integers(0, m, (p, n)))
            pms = [row_normalize(build_confusion(r, labels, m)) for r in preds]
            tab = build_pairwise_tables(preds, labels, m)
            g = initial_densities(pms)
            cfg = AdaptiveConfig(w1=float(rng.uniform(0, 2)), w2=float(rng.uniform(0, 2)))
            sample = rng.integers(0, m, p).tolist()
            got = adapt_densities(g, sample, pms, tab, cfg).g
            expected = adapted_density_loops(g.g.tolist(), sample, [x.probs.tolist() for x in pms],
                                             tab.values, cfg.w1, cfg.w2, cfg.epsilon, cfg.density_floor)
            np.testing.assert_allclose(got, expected, rtol=1e-12, atol=0)
            assert (got <= g.g + 1e-15).all()
            assert (got >= cfg.density_floor).all()


class TestConfig:
    @pytest.mark.parametrize("kwargs", [{"w1": -0.1}, {"w2": 2.5}, {"epsilon": 0.0},
                                        {"density_floor": 0.02}])
    def test_rejects_out_of_range(self, kwargs):
        with pytest.raises(ConfigError):
            AdaptiveConfig(**kwargs)
