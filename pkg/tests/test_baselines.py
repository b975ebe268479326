import numpy as np
import pytest

from stressnet.baselines import (
    ForestModel,
    OrdinalModel,
    predict_baseline,
    predict_batch,
    train_forest,
    train_ordinal,
)
from stressnet.corpus import GenConfig, instances_from_table, synth_corpus
from stressnet.errors import DegenerateData, ShapeError
from stressnet.lexicon import StressLevel


def ordinal_1d_data(rng, n=600):
    """Feature increases with ordinal rank NonStress < Secondary < Primary."""
    X = rng.uniform(0.0, 3.0, (n, 1))
    y = np.where(X[:, 0] < 1.0, int(StressLevel.NON_STRESS),
                 np.where(X[:, 0] < 2.0, int(StressLevel.SECONDARY),
                          int(StressLevel.PRIMARY)))
    return X, y


def corpus_syllables(lexicon, noise=0.0, n_utts=60, seed=2):
    _, recs = synth_corpus(lexicon, n_utts, GenConfig(noise=noise), seed=seed)
    X, y = [], []
    for inst in instances_from_table(recs):
        for i in range(inst.valid_count):
            X.append(inst.features[i])
            y.append(int(inst.labels[i]))
    return np.asarray(X), np.asarray(y)


class TestOrdinal:
    def test_separable_ordinal_heldout_perfect(self):
        rng = np.random.default_rng(0)
        X, y = ordinal_1d_data(rng)
        model = train_ordinal(X[:400], y[:400], seed=1)
        assert (predict_batch(model, X[400:]) == y[400:]).mean() == 1.0

    def test_heavy_regularization_collapses_to_majority(self):
        rng = np.random.default_rng(1)
        X, y = ordinal_1d_data(rng)
        # make NonStress the clear majority
        y[:300] = int(StressLevel.NON_STRESS)
        model = train_ordinal(X, y, lam=1e6, seed=0)
        assert np.abs(model.coefficients).max() < 1e-2
        preds = predict_batch(model, X)
        majority = np.bincount(y, minlength=3).argmax()
        assert (preds == majority).mean() > 0.99

    def test_deterministic(self):
        rng = np.random.default_rng(2)
        X, y = ordinal_1d_data(rng)
        m1 = train_ordinal(X, y, seed=9)
        m2 = train_ordinal(X, y, seed=9)
        assert np.array_equal(m1.coefficients, m2.coefficients)
        assert np.array_equal(m1.thresholds, m2.thresholds)

    def test_single_class_rejected(self):
        X = np.zeros((10, 3))
        y = [int(StressLevel.PRIMARY)] * 10
        with pytest.raises(DegenerateData):
            train_ordinal(X, y)

    def test_thresholds_strictly_increasing(self, lexicon):
        X, y = corpus_syllables(lexicon, noise=1.0)
        model = train_ordinal(X, y, seed=3)
        assert model.thresholds[0] < model.thresholds[1]

    def test_gradient_matches_finite_differences(self):
        from stressnet.baselines import _ordinal_nll_grad
        rng = np.random.default_rng(4)
        X = rng.normal(0, 1, (40, 5))
        ranks = rng.integers(0, 3, 40)
        beta = rng.normal(0, 0.5, 5)
        theta = np.array([-0.3, 0.2])
        lam = 0.01
        _, dbeta, dtheta = _ordinal_nll_grad(beta, theta, X, ranks, lam)
        eps = 1e-6
        for i in range(5):
            b = beta.copy()
            b[i] += eps
            lp = _ordinal_nll_grad(b, theta, X, ranks, lam)[0]
            b[i] -= 2 * eps
            lm = _ordinal_nll_grad(b, theta, X, ranks, lam)[0]
            assert dbeta[i] == pytest.approx((lp - lm) / (2 * eps), rel=1e-4)
        for i in range(2):
            t = theta.copy()
            t[i] += eps
            lp = _ordinal_nll_grad(beta, t, X, ranks, lam)[0]
            t[i] -= 2 * eps
            lm = _ordinal_nll_grad(beta, t, X, ranks, lam)[0]
            assert dtheta[i] == pytest.approx((lp - lm) / (2 * eps), rel=1e-4)

    def test_monotone_in_positive_coefficient_direction(self):
        rng = np.random.default_rng(5)
        X, y = ordinal_1d_data(rng)
        model = train_ordinal(X, y, seed=1)
        assert model.coefficients[0] > 0
        grid = np.linspace(-5, 8, 400).reshape(-1, 1)
        rank_of = {int(StressLevel.NON_STRESS): 0,
                   int(StressLevel.SECONDARY): 1,
                   int(StressLevel.PRIMARY): 2}
        ranks = [rank_of[int(p)] for p in predict_batch(model, grid)]
        assert all(a <= b for a, b in zip(ranks, ranks[1:]))

    def test_zero_coefficients_constant_predictions(self):
        model = OrdinalModel(np.zeros(4), np.array([-1.0, 1.0]))
        p1 = model.class_probs(np.zeros(4))
        p2 = model.class_probs(np.full(4, 123.0))
        assert np.allclose(p1, p2)


class TestForest:
    def test_noiseless_corpus_training_accuracy(self, lexicon):
        X, y = corpus_syllables(lexicon, noise=0.0)
        model = train_forest(X, y, n_trees=20, seed=1)
        assert (predict_batch(model, X) == y).mean() == 1.0

    def test_single_tree_full_depth_is_a_decision_tree(self):
        rng = np.random.default_rng(6)
        X = rng.normal(0, 1, (200, 4))
        y = (X[:, 0] > 0).astype(int) + (X[:, 1] > 0).astype(int)
        model = train_forest(X, y, n_trees=1, max_depth=64, seed=2)
        assert len(model.trees) == 1
        # a single unrestricted tree fits its own bootstrap sample exactly;
        # vote shares are one-hot
        shares = model.vote_shares(X)
        assert np.all(np.isin(shares, (0.0, 1.0)))

    def test_deterministic(self, lexicon):
        X, y = corpus_syllables(lexicon, noise=0.5, n_utts=20)
        m1 = train_forest(X, y, n_trees=10, seed=4)
        m2 = train_forest(X, y, n_trees=10, seed=4)
        for t1, t2 in zip(m1.trees, m2.trees):
            assert np.array_equal(t1.feature, t2.feature)
            assert np.array_equal(t1.threshold, t2.threshold)
            assert np.array_equal(t1.counts, t2.counts)

    def test_monotone_transform_invariance(self, lexicon):
        X, y = corpus_syllables(lexicon, noise=0.8, n_utts=20)
        n = len(y)
        X_train, y_train = X[:n // 2], y[:n // 2]
        X_test = X[n // 2:]
        before = predict_batch(train_forest(X_train, y_train, n_trees=15,
                                            seed=5), X_test)
        Xt = X.copy()
        Xt[:, 3] = np.exp(0.25 * Xt[:, 3])  # strictly monotone on one feature
        after = predict_batch(train_forest(Xt[:n // 2], y_train, n_trees=15,
                                           seed=5), Xt[n // 2:])
        assert np.array_equal(before, after)

    def test_leaf_counts_nonzero(self, lexicon):
        X, y = corpus_syllables(lexicon, noise=0.3, n_utts=10)
        model = train_forest(X, y, n_trees=5, seed=6)
        for tree in model.trees:
            leaves = tree.feature < 0
            assert np.all(tree.counts[leaves].sum(axis=1) > 0)

    def test_empty_rejected(self):
        with pytest.raises(DegenerateData):
            train_forest(np.zeros((0, 3)), [])


class TestPredictBaseline:
    def test_unanimous_forest_vote(self):
        rng = np.random.default_rng(7)
        X = np.vstack([rng.normal(-3, 0.1, (50, 2)), rng.normal(3, 0.1, (50, 2))])
        y = np.array([0] * 50 + [1] * 50)
        model = train_forest(X, y, n_trees=9, seed=8)
        level, scores = predict_baseline(model, np.array([3.0, 3.0]))
        assert level == StressLevel.PRIMARY
        assert scores[1] == 1.0

    def test_tie_vote_lowest_class(self):
        # hand-built forest with two trees voting for different classes
        def stump(cls):
            from stressnet.baselines import TreeNodes
            counts = np.zeros((1, 3), dtype=np.int64)
            counts[0, cls] = 1
            return TreeNodes(np.array([-1]), np.array([0.0]),
                             np.array([-1]), np.array([-1]), counts)
        model = ForestModel([stump(2), stump(1)], 2, 1, 1)
        level, scores = predict_baseline(model, np.zeros(3))
        assert level == StressLevel.PRIMARY  # classes 1 and 2 tie -> lower
        assert scores[1] == scores[2] == 0.5

    def test_shape_error(self):
        model = OrdinalModel(np.zeros(4), np.array([-1.0, 1.0]))
        with pytest.raises(ShapeError):
            predict_baseline(model, np.zeros(7))
