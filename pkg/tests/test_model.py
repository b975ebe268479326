import numpy as np
import pytest

from conftest import random_instance_batch
from stressnet.corpus import GenConfig, instances_from_table, split, synth_corpus
from stressnet.errors import (
    InvalidConfig,
    LabelError,
    NumericalInstability,
    ShapeError,
)
from stressnet.lexicon import PAD_TYPE_INDEX, StressLevel
from stressnet.model import (
    ALL_FEATURES,
    SYLLABLE_NUMERICAL,
    ModelConfig,
    TrainConfig,
    embed,
    forward,
    init_params,
    large_config,
    loss_and_grads,
    loss_from_logits,
    medium_config,
    predict_instance,
    train,
)


def tiny_config(**kw):
    kw.setdefault("dropout", 0.0)
    return ModelConfig(d_model=4, n_heads=2, n_layers=2, **kw)


class TestConfig:
    def test_presets(self):
        m = medium_config()
        l = large_config()
        assert (m.d_model, m.n_heads, m.n_layers) == (5, 6, 3)
        assert (l.d_model, l.n_heads, l.n_layers) == (10, 12, 6)

    def test_medium_head_projection(self):
        assert medium_config().head_dim == 1

    def test_strict_divisibility_mode(self):
        with pytest.raises(InvalidConfig):
            ModelConfig(d_model=5, n_heads=6, n_layers=1,
                        require_divisible_heads=True)
        ModelConfig(d_model=6, n_heads=2, n_layers=1,
                    require_divisible_heads=True)

    def test_class_weight_resolution(self):
        tc = TrainConfig()
        assert tc.resolve_use_weights(medium_config()) is True
        assert tc.resolve_use_weights(
            medium_config(SYLLABLE_NUMERICAL)) is False
        forced = TrainConfig(use_class_weights=True)
        assert forced.resolve_use_weights(
            medium_config(SYLLABLE_NUMERICAL)) is True


class TestEmbed:
    def test_sum_of_three_terms(self):
        cfg = ModelConfig(d_model=2, n_heads=1, n_layers=1, dropout=0.0)
        params = init_params(cfg, np.random.default_rng(0))
        params["E_pos"][:] = 0.0
        params["E_pos"][0] = [0.1, 0.2]
        params["E_type"][:] = 0.0
        params["E_type"][3] = [0.3, 0.4]
        params["C"][:] = 0.0
        # features chosen so x @ C = [0.5, 0.6]
        params["C"][0] = [0.5, 0.6]
        feats = np.zeros((1, 17, 12))
        feats[0, 0, 0] = 1.0
        types = np.full((1, 17), PAD_TYPE_INDEX)
        types[0, 0] = 3
        mask = np.zeros((1, 17), dtype=bool)
        mask[0, 0] = True
        V = embed(feats, types, mask, params, cfg)
        assert V[0, 0] == pytest.approx([0.9, 1.2])

    def test_zero_everything_gives_zero(self):
        cfg = tiny_config()
        params = init_params(cfg, np.random.default_rng(0))
        for key in ("E_pos", "E_type", "C"):
            params[key][:] = 0.0
        feats = np.zeros((1, 17, 12))
        types = np.zeros((1, 17), dtype=np.int64)
        mask = np.ones((1, 17), dtype=bool)
        assert np.all(embed(feats, types, mask, params, cfg) == 0.0)

    def test_padded_row_zero_regardless_of_params(self):
        cfg = tiny_config()
        params = init_params(cfg, np.random.default_rng(1))
        rng = np.random.default_rng(2)
        feats = rng.normal(0, 1, (1, 17, 12))
        types = rng.integers(0, 16, (1, 17))
        mask = np.zeros((1, 17), dtype=bool)
        mask[0, :5] = True
        V = embed(feats, types, mask, params, cfg)
        assert np.all(V[0, 5:] == 0.0)

    def test_feature_dim_mismatch(self):
        cfg = tiny_config(feature_mode=SYLLABLE_NUMERICAL)
        params = init_params(cfg, np.random.default_rng(0))
        with pytest.raises(ShapeError):
            embed(np.zeros((1, 17, 12)), np.zeros((1, 17), dtype=int),
                  np.ones((1, 17), dtype=bool), params, cfg)


class TestForward:
    def test_probabilities_sum_to_one(self):
        cfg = medium_config(dropout=0.0)
        params = init_params(cfg, np.random.default_rng(3))
        batch = random_instance_batch(np.random.default_rng(4), 5, 12)
        feats, types, mask, _, _ = batch
        _, probs, _, _ = forward(params, feats, types, mask, cfg)
        sums = probs.sum(axis=-1)
        assert np.all(np.abs(sums[mask] - 1.0) < 1e-9)

    def test_padded_perturbation_changes_nothing(self):
        cfg = medium_config(dropout=0.0)
        params = init_params(cfg, np.random.default_rng(5))
        feats, types, mask, _, _ = random_instance_batch(
            np.random.default_rng(6), 8, 12)
        logits1, _, _, _ = forward(params, feats, types, mask, cfg)
        rng = np.random.default_rng(7)
        feats2 = feats.copy()
        feats2[~mask] = rng.normal(0, 50, feats2[~mask].shape)
        types2 = types.copy()
        types2[~mask] = rng.integers(0, 17, int((~mask).sum()))
        logits2, _, _, _ = forward(params, feats2, types2, mask, cfg)
        assert np.abs(logits1[mask] - logits2[mask]).max() <= 1e-9

    def test_single_valid_attention_one_hot(self):
        cfg = medium_config(dropout=0.0)
        params = init_params(cfg, np.random.default_rng(8))
        feats = np.zeros((1, 17, 12))
        types = np.full((1, 17), PAD_TYPE_INDEX)
        types[0, 0] = 4
        mask = np.zeros((1, 17), dtype=bool)
        mask[0, 0] = True
        _, _, _, attn = forward(params, feats, types, mask, cfg,
                                collect_attention=True)
        for A in attn:
            assert A[0, :, 0, 0] == pytest.approx(np.ones(cfg.n_heads))
            assert np.all(A[0, :, 0, 1:] == 0.0)

    def test_attention_rows_sum_to_one_masked_keys_zero(self):
        cfg = medium_config(dropout=0.0)
        params = init_params(cfg, np.random.default_rng(9))
        feats, types, mask, _, _ = random_instance_batch(
            np.random.default_rng(10), 4, 12)
        _, _, _, attn = forward(params, feats, types, mask, cfg,
                                collect_attention=True)
        for A in attn:
            assert np.abs(A.sum(axis=-1) - 1.0).max() < 1e-9
            key_mask = mask[:, None, None, :]
            assert np.all(A[~np.broadcast_to(key_mask, A.shape)] == 0.0)

    def test_nonfinite_raises(self):
        cfg = tiny_config()
        params = init_params(cfg, np.random.default_rng(11))
        params["head.W"][0, 0] = np.inf
        feats, types, mask, _, _ = random_instance_batch(
            np.random.default_rng(12), 2, 12)
        with pytest.raises(NumericalInstability):
            forward(params, feats, types, mask, cfg)

    def test_permutation_equivariance_without_positions(self):
        cfg = tiny_config()
        params = init_params(cfg, np.random.default_rng(13))
        params["E_pos"][:] = 0.0
        rng = np.random.default_rng(14)
        n = 6
        feats = np.zeros((1, 17, 12))
        feats[0, :n] = rng.normal(0, 1, (n, 12))
        types = np.full((1, 17), PAD_TYPE_INDEX)
        types[0, :n] = rng.integers(0, 16, n)
        mask = np.zeros((1, 17), dtype=bool)
        mask[0, :n] = True
        logits, _, _, _ = forward(params, feats, types, mask, cfg)
        perm = rng.permutation(n)
        feats2, types2 = feats.copy(), types.copy()
        feats2[0, :n] = feats[0, perm]
        types2[0, :n] = types[0, perm]
        logits2, _, _, _ = forward(params, feats2, types2, mask, cfg)
        assert np.allclose(logits2[0, :n], logits[0, perm], atol=1e-9)
        # with position embeddings restored the outputs are, in general,
        # position-sensitive
        params2 = init_params(cfg, np.random.default_rng(13))
        logits3, _, _, _ = forward(params2, feats, types, mask, cfg)
        logits4, _, _, _ = forward(params2, feats2, types2, mask, cfg)
        assert not np.allclose(logits4[0, :n], logits3[0, perm], atol=1e-6)


class TestLoss:
    def test_uniform_logits_ln3(self):
        logits = np.zeros((2, 17, 3))
        mask = np.zeros((2, 17), dtype=bool)
        mask[:, :4] = True
        labels = np.zeros((2, 17), dtype=np.int64)
        labels[~mask] = -1
        weights = mask.astype(np.float64)
        loss, _ = loss_from_logits(logits, labels, mask, weights)
        assert loss == pytest.approx(np.log(3.0), abs=1e-12)

    def test_zero_weight_sample_contributes_nothing(self):
        rng = np.random.default_rng(15)
        logits = rng.normal(0, 1, (2, 17, 3))
        mask = np.zeros((2, 17), dtype=bool)
        mask[:, :3] = True
        labels = np.where(mask, 1, -1).astype(np.int64)
        weights = mask.astype(np.float64)
        base, _ = loss_from_logits(logits, labels, mask, weights)
        weights2 = weights.copy()
        weights2[0, 0] = 0.0
        less, _ = loss_from_logits(logits, labels, mask, weights2)
        # removing one sample's weight removes exactly its contribution
        lmax = logits[0, 0].max()
        logp = logits[0, 0] - lmax - np.log(np.exp(logits[0, 0] - lmax).sum())
        assert base - less == pytest.approx(-logp[1] / mask.sum(), abs=1e-12)

    def test_doubling_weights_doubles_loss(self):
        rng = np.random.default_rng(16)
        logits = rng.normal(0, 1, (3, 17, 3))
        mask = np.zeros((3, 17), dtype=bool)
        mask[:, :5] = True
        labels = np.where(mask, 2, -1).astype(np.int64)
        weights = np.where(mask, rng.uniform(0.1, 1.0, (3, 17)), 0.0)
        l1, _ = loss_from_logits(logits, labels, mask, weights)
        l2, _ = loss_from_logits(logits, labels, mask, 2.0 * weights)
        assert l2 == pytest.approx(2.0 * l1, rel=1e-12)

    def test_ignore_label_at_valid_position(self):
        logits = np.zeros((1, 17, 3))
        mask = np.zeros((1, 17), dtype=bool)
        mask[0, :2] = True
        labels = np.full((1, 17), -1, dtype=np.int64)
        with pytest.raises(LabelError):
            loss_from_logits(logits, labels, mask, mask.astype(np.float64))


def finite_difference_check(cfg, seed, n_samples=60, eps=1e-4):
    """Max relative error of reverse-mode vs central differences.

    Entries whose +-eps perturbation flips any ReLU preactivation sign are
    resampled: the loss is not differentiable there, so a central
    difference is not a valid reference.
    """
    rng = np.random.default_rng(seed)
    params = init_params(cfg, rng)
    feats, types, mask, labels, weights = random_instance_batch(
        rng, 4, cfg.feature_dim)

    def loss_and_signs(ps):
        logits, _, cache, _ = forward(ps, feats, types, mask, cfg,
                                      need_cache=True)
        loss, _ = loss_from_logits(logits, labels, mask, weights)
        signs = [c["u"] > 0 for c in cache["layers"]]
        return loss, signs

    _, base_signs = loss_and_signs(params)
    loss, grads, _ = loss_and_grads(params, feats, types, mask, labels,
                                    weights, cfg)
    worst = 0.0
    checked = 0
    keys = sorted(params.keys())
    while checked < n_samples:
        key = keys[int(rng.integers(len(keys)))]
        arr = params[key]
        idx = np.unravel_index(int(rng.integers(arr.size)), arr.shape)
        if key == "E_type" and idx[0] == PAD_TYPE_INDEX:
            continue
        orig = arr[idx]
        arr[idx] = orig + eps
        lp, signs_p = loss_and_signs(params)
        arr[idx] = orig - eps
        lm, signs_m = loss_and_signs(params)
        arr[idx] = orig
        crossed = any(
            not np.array_equal(a, b) or not np.array_equal(a, c)
            for a, b, c in zip(base_signs, signs_p, signs_m))
        if crossed:
            continue
        fd = (lp - lm) / (2.0 * eps)
        an = grads[key][idx]
        rel = abs(fd - an) / max(abs(fd), abs(an), 1e-8)
        worst = max(worst, rel)
        checked += 1
    return worst, checked


class TestGradients:
    def test_finite_difference_small_config(self):
        worst, checked = finite_difference_check(tiny_config(), seed=100)
        assert checked >= 60
        assert worst < 1e-3

    def test_zero_weight_batch_zero_gradients(self):
        cfg = tiny_config()
        params = init_params(cfg, np.random.default_rng(17))
        feats, types, mask, labels, _ = random_instance_batch(
            np.random.default_rng(18), 3, 12)
        weights = np.zeros(mask.shape)
        _, grads, _ = loss_and_grads(params, feats, types, mask, labels,
                                     weights, cfg)
        for key, g in grads.items():
            assert np.all(g == 0.0), key

    def test_duplicated_batch_same_gradients(self):
        cfg = tiny_config()
        params = init_params(cfg, np.random.default_rng(19))
        feats, types, mask, labels, weights = random_instance_batch(
            np.random.default_rng(20), 3, 12)
        _, g1, _ = loss_and_grads(params, feats, types, mask, labels,
                                  weights, cfg)
        dup = lambda a: np.concatenate([a, a], axis=0)
        _, g2, _ = loss_and_grads(params, dup(feats), dup(types), dup(mask),
                                  dup(labels), dup(weights), cfg)
        for key in g1:
            assert np.allclose(g1[key], g2[key], atol=1e-12), key

    def test_pad_type_row_gradient_zero(self):
        cfg = tiny_config()
        params = init_params(cfg, np.random.default_rng(21))
        feats, types, mask, labels, weights = random_instance_batch(
            np.random.default_rng(22), 4, 12)
        _, grads, _ = loss_and_grads(params, feats, types, mask, labels,
                                     weights, cfg)
        assert np.all(grads["E_type"][PAD_TYPE_INDEX] == 0.0)


@pytest.fixture(scope="module")
def small_corpus(lexicon):
    _, recs = synth_corpus(lexicon, 60, GenConfig(noise=0.0), seed=31)
    instances = instances_from_table(recs)
    train_set, test_set = split(instances, 0.7, seed=1)
    return train_set, test_set


class TestTraining:
    def test_determinism(self, small_corpus):
        train_set, test_set = small_corpus
        cfg = tiny_config(feature_mode=ALL_FEATURES)
        tc = TrainConfig(epochs=2, seed=12, batch_size=32)
        p1, _, h1 = train(train_set, test_set, cfg, tc)
        p2, _, h2 = train(train_set, test_set, cfg, tc)
        assert h1 == h2
        for key in p1:
            assert np.array_equal(p1[key], p2[key]), key

    def test_zero_epochs_returns_initialization(self, small_corpus):
        train_set, test_set = small_corpus
        cfg = tiny_config()
        tc = TrainConfig(epochs=0, seed=7)
        params, _, history = train(train_set, test_set, cfg, tc)
        assert history == []
        seq = np.random.SeedSequence(7).spawn(3)
        expected = init_params(cfg, np.random.default_rng(seq[0]))
        for key in expected:
            assert np.array_equal(params[key], expected[key]), key

    def test_learns_separable_data(self, small_corpus):
        train_set, test_set = small_corpus
        cfg = medium_config(dropout=0.0)
        tc = TrainConfig(epochs=12, seed=3, learning_rate=3e-3)
        params, weights, history = train(train_set, test_set, cfg, tc)
        assert max(h["val_acc"] for h in history) > 0.95

    def test_dropout_training_still_deterministic(self, small_corpus):
        train_set, test_set = small_corpus
        cfg = tiny_config(dropout=0.2)
        tc = TrainConfig(epochs=2, seed=5, batch_size=32)
        p1, _, h1 = train(train_set, test_set, cfg, tc)
        p2, _, h2 = train(train_set, test_set, cfg, tc)
        assert h1 == h2
        for key in p1:
            assert np.array_equal(p1[key], p2[key])

    def test_divergence_aborts_with_epoch(self, small_corpus, monkeypatch):
        import stressnet.model.training as training_mod
        from stressnet.errors import DivergedAtEpoch

        def exploding(*args, **kwargs):
            raise NumericalInstability("synthetic blow-up")

        monkeypatch.setattr(training_mod, "loss_and_grads", exploding)
        train_set, test_set = small_corpus
        with pytest.raises(DivergedAtEpoch) as excinfo:
            train(train_set, test_set, tiny_config(),
                  TrainConfig(epochs=3, seed=1))
        assert excinfo.value.epoch == 0


class TestPredict:
    def test_shapes_and_mask(self, small_corpus):
        train_set, _ = small_corpus
        cfg = tiny_config()
        params = init_params(cfg, np.random.default_rng(23))
        inst = train_set[0]
        preds = predict_instance(params, cfg, inst)
        assert len(preds) == inst.valid_count
        for level, probs in preds:
            assert isinstance(level, StressLevel)
            assert probs.shape == (3,)
            assert probs.sum() == pytest.approx(1.0)

    def test_argmax_and_tie_rule(self):
        probs = np.array([0.2, 0.5, 0.3])
        assert StressLevel(int(probs.argmax())) == StressLevel.PRIMARY
        tie = np.array([1 / 3, 1 / 3, 1 / 3])
        assert StressLevel(int(tie.argmax())) == StressLevel.NON_STRESS

    def test_constant_head_ties_to_non_stress(self, small_corpus):
        train_set, _ = small_corpus
        cfg = tiny_config()
        params = init_params(cfg, np.random.default_rng(24))
        params["head.W"][:] = 0.0
        params["head.b"][:] = 0.0
        preds = predict_instance(params, cfg, train_set[0])
        assert all(level == StressLevel.NON_STRESS for level, _ in preds)
