"""
Tests for the conditional generator, the projection discriminator, both
training losses and the training loop.

Gradient tests compare the hand-written backward passes with central
differences on tiny networks and 4-sample batches.
"""

import os

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings, strategies as st

from channel import build_confusion, identity_channel, make_missing_channel, uniform_missing_channel
from data import Dataset, apply_channel, default_mixture, few_label_split, generate_mixture
from divergence import random_joint_pair
from errors import (
    DomainError,
    InvalidSpecError,
    ShapeMismatchError,
    SingularChannelError,
    TrainingDivergedError,
)
from gan import (
    ProjectionDiscriminator,
    TrainConfig,
    disc_forward,
    disc_objective,
    expected_lambda_loss,
    expected_rcgan_loss,
    gen_objective,
    init_discriminator,
    init_generator,
    lambda_disc_objective,
    labeled_warmup,
    load_checkpoint,
    one_hot,
    rcgan_disc_gen_step,
    rcgan_lambda_loss,
    rcgan_lambda_step,
    restore_checkpoint,
    save_checkpoint,
    train,
)
from evaluation import BayesOracle, RecoveryOptions, generated_label_accuracy, label_recovery_accuracy
from nets import MLP, SGD, flatten_params, grad_check

GRAD_TOL = 1e-4
SLOW = os.environ.get('RCGAN_SLOW_TESTS') == '1'


def tiny_cfg(**overrides) -> TrainConfig:
    values = dict(latent_dim=2, gen_hidden=(4,), disc_hidden=(3,), feature_dim=3,
                  batch_size=16, epochs=2, warmup_steps=5)
    values.update(overrides)
    return TrainConfig(**values)


def tiny_pair(m=2, n_labels=3, dim=2, seed=0, **overrides):
    cfg = tiny_cfg(**overrides)
    rng = np.random.default_rng(seed)
    return init_generator(rng, dim, m, n_labels, cfg), init_discriminator(rng, dim, n_labels, cfg)


def linear_features_disc(V, v=None):
    """psi = identity, psi' = 0 on 2-d inputs."""
    V = np.asarray(V, dtype=np.float64)
    psi = MLP([np.eye(2)], [np.zeros(2)], ['linear'])
    psi_prime = MLP([np.zeros((2, 2))], [np.zeros(2)], ['linear'])
    return ProjectionDiscriminator(psi, psi_prime, V, np.zeros(2) if v is None else v)


@pytest.fixture
def batch():
    rng = np.random.default_rng(11)
    return {
        'real_x': rng.standard_normal((4, 2)),
        'real_labels': np.array([0, 2, 1, 2]),
        'fake_labels': np.array([2, 0, 1, 2]),
        'Z': rng.standard_normal((4, 2)),
        'ys': np.array([0, 1, 1, 0]),
    }


@pytest.fixture
def corrupted_data():
    rng = np.random.default_rng(0)
    clean = generate_mixture(default_mixture(m=2), 64, rng)
    return apply_channel(clean, build_confusion(uniform_missing_channel(2, 0.5)), rng)


@pytest.fixture
def few_labeled():
    rng = np.random.default_rng(6)
    return few_label_split(generate_mixture(default_mixture(m=2), 64, rng), 4, rng)


# ============================================================================
# UNIT TESTS - Networks
# ============================================================================


class TestDiscForward:

    def test_zero_projection(self):
        D = linear_features_disc(np.zeros((3, 2)))
        assert disc_forward(D, [3.0, -1.0], [0, 1, 0]) == 0.0

    def test_identity_features_sum_coordinates(self):
        D = linear_features_disc(np.ones((3, 2)))
        assert disc_forward(D, [0.25, 0.5], [0, 0, 1]) == pytest.approx(0.75)

    def test_clipping(self):
        D = linear_features_disc([[1.7, 0.0], [0.0, -3.0], [0.2, 0.2]])
        D.clip()
        assert D.V[0, 0] == 1.0 and D.V[1, 1] == -1.0 and D.V[2, 0] == 0.2
        assert disc_forward(D, [1.0, 0.0], [1, 0, 0]) == pytest.approx(1.0)

    def test_batched_scores_match(self):
        G, D = tiny_pair()
        X = np.random.default_rng(1).standard_normal((3, 2))
        labels = [0, 2, 1]
        batched, _ = D.forward(X, labels)
        single = [disc_forward(D, x, one_hot([y], 3)[0]) for x, y in zip(X, labels)]
        np.testing.assert_allclose(batched, single, atol=1e-12)

    def test_shape_errors(self):
        D = linear_features_disc(np.zeros((3, 2)))
        with pytest.raises(ShapeMismatchError):
            disc_forward(D, [1.0, 2.0, 3.0], [1, 0, 0])
        with pytest.raises(ShapeMismatchError):
            disc_forward(D, [1.0, 2.0], [1, 0])

    def test_init_respects_clip_bound(self):
        _, D = tiny_pair(clip_bound=0.05)
        assert np.abs(D.V).max() <= 0.05


class TestGenerator:

    def test_output_shape(self):
        G, _ = tiny_pair()
        X, ys, Z = G.sample(5, [0.5, 0.5], np.random.default_rng(0))
        assert X.shape == (5, 2) and ys.shape == (5,) and Z.shape == (5, 2)
        assert set(ys) <= {0, 1}

    def test_latent_gradient(self, batch):
        G, _ = tiny_pair()
        R = np.random.default_rng(2).standard_normal((4, 2))
        Z = batch['Z'].copy()
        _, cache = G.forward(Z, batch['ys'])
        _, dZ = G.backward(cache, R)
        worst = grad_check([Z], lambda: float((G.generate(Z, batch['ys']) * R).sum()), [dZ])
        assert worst < GRAD_TOL


# ============================================================================
# UNIT TESTS - Gradients of the losses
# ============================================================================


@pytest.mark.parametrize('phi', ['log', 'linear'])
class TestLossGradients:

    def test_discriminator_rcgan_loss(self, phi, batch):
        G, D = tiny_pair()
        fake_x = G.generate(batch['Z'], batch['ys'])
        terms = [(batch['real_x'], batch['real_labels'], 'real', 1.0),
                 (fake_x, batch['fake_labels'], 'fake', 1.0)]
        _, grads = disc_objective(D, terms, phi)
        worst = grad_check(D.parameters(), lambda: disc_objective(D, terms, phi)[0], grads)
        assert worst < GRAD_TOL

    @pytest.mark.parametrize('nonsaturating', [True, False])
    def test_generator_rcgan_loss(self, phi, nonsaturating, batch):
        G, D = tiny_pair()
        views = [(batch['fake_labels'], 1.0)]

        def loss():
            return gen_objective(G, D, batch['Z'], batch['ys'], views, phi, nonsaturating)[0]

        _, grads = gen_objective(G, D, batch['Z'], batch['ys'], views, phi, nonsaturating)
        assert grad_check(G.parameters(), loss, grads) < GRAD_TOL

    def test_discriminator_lambda_loss(self, phi, batch):
        G, D = tiny_pair()
        fake_x = G.generate(batch['Z'], batch['ys'])
        labeled_x, labeled_y = batch['real_x'][:2], np.array([0, 1])

        def loss():
            return lambda_disc_objective(D, 2, batch['real_x'], labeled_x, labeled_y,
                                         fake_x, batch['ys'], 0.1, phi)[0]

        _, grads = lambda_disc_objective(D, 2, batch['real_x'], labeled_x, labeled_y,
                                         fake_x, batch['ys'], 0.1, phi)
        assert grad_check(D.parameters(), loss, grads) < GRAD_TOL

    def test_generator_lambda_loss(self, phi, batch):
        G, D = tiny_pair()
        views = [(np.full(4, 2), 1.0), (batch['ys'], 0.1)]

        def loss():
            return gen_objective(G, D, batch['Z'], batch['ys'], views, phi, False)[0]

        _, grads = gen_objective(G, D, batch['Z'], batch['ys'], views, phi, False)
        assert grad_check(G.parameters(), loss, grads) < GRAD_TOL

    def test_sign_flip_is_caught(self, phi, batch):
        _, D = tiny_pair()
        terms = [(batch['real_x'], batch['real_labels'], 'real', 1.0)]
        _, grads = disc_objective(D, terms, phi)
        grads[0] = -grads[0]
        worst = grad_check(D.parameters(), lambda: disc_objective(D, terms, phi)[0], grads)
        assert worst > 1.0


class TestLossValues:

    def test_linear_phi_value(self):
        D = linear_features_disc(np.ones((3, 2)))
        X = np.array([[1.0, 1.0]])
        value, _ = disc_objective(D, [(X, [0], 'real', 1.0), (X, [2], 'fake', 1.0)], 'linear')
        assert value == pytest.approx(2.0 + (1.0 - 2.0))

    def test_log_phi_value(self):
        D = linear_features_disc(np.zeros((3, 2)))
        X = np.zeros((2, 2))
        value, _ = disc_objective(D, [(X, [0, 1], 'real', 1.0), (X, [2, 2], 'fake', 1.0)], 'log')
        assert value == pytest.approx(2 * np.log(0.5))

    def test_empty_and_zero_weight_terms(self):
        _, D = tiny_pair()
        value, grads = disc_objective(D, [(np.zeros((0, 2)), [], 'real', 1.0),
                                          (np.ones((2, 2)), [0, 1], 'fake', 0.0)], 'log')
        assert value == 0.0
        assert all(np.all(g == 0) for g in grads)

    def test_lambda_zero_ignores_labels(self, batch):
        G, D = tiny_pair()
        fake_x = G.generate(batch['Z'], batch['ys'])
        a = lambda_disc_objective(D, 2, batch['real_x'], batch['real_x'][:2], [0, 1],
                                  fake_x, batch['ys'], 0.0, 'log')[0]
        b = lambda_disc_objective(D, 2, batch['real_x'], batch['real_x'][:2], [1, 0],
                                  fake_x, 1 - batch['ys'], 0.0, 'log')[0]
        assert a == b

    def test_lambda_loss_needs_real_samples(self):
        G, D = tiny_pair()
        with pytest.raises(DomainError):
            rcgan_lambda_loss(np.zeros((0, 2)), np.zeros((0, 2)), [], G, D, tiny_cfg(),
                              np.random.default_rng(0))

    def test_lambda_loss_needs_missing_slot(self, batch):
        G, D = tiny_pair(n_labels=2)
        with pytest.raises(ShapeMismatchError):
            rcgan_lambda_loss(batch['real_x'], batch['real_x'][:1], [0], G, D, tiny_cfg(),
                              np.random.default_rng(0))


class TestExpectedLosses:

    def test_identity_channel_matches_direct_sum(self):
        rng = np.random.default_rng(3)
        P, Q = random_joint_pair(rng, 3, 2, 0)
        scores = rng.standard_normal((3, 2))
        C = build_confusion(identity_channel(2))
        expected = (P.probs * scores).sum() + (Q.probs * (1 - scores)).sum()
        assert expected_rcgan_loss(P, Q, C, scores, 'linear') == pytest.approx(expected)

    def test_score_table_shape(self):
        P, Q = random_joint_pair(np.random.default_rng(4), 3, 2, 0)
        C = build_confusion(uniform_missing_channel(2, 0.5))
        with pytest.raises(ShapeMismatchError):
            expected_rcgan_loss(P, Q, C, np.zeros((3, 2)), 'log')


# ============================================================================
# UNIT TESTS - Steps
# ============================================================================


class TestSteps:

    def test_zero_learning_rates_leave_parameters(self, batch):
        G, D = tiny_pair()
        before = flatten_params(G.parameters() + D.parameters()).copy()
        C = build_confusion(uniform_missing_channel(2, 0.5))
        cfg = tiny_cfg(lr_disc=0.0, lr_gen=0.0)
        step = rcgan_disc_gen_step(batch['real_x'], batch['real_labels'], C, [0.5, 0.5], G, D,
                                   SGD(0.0), SGD(0.0), cfg, np.random.default_rng(0))
        np.testing.assert_array_equal(flatten_params(G.parameters() + D.parameters()), before)
        assert np.isfinite(step.loss_d) and np.isfinite(step.loss_g)

    def test_clipping_after_every_update(self, batch):
        G, D = tiny_pair()
        C = build_confusion(uniform_missing_channel(2, 0.5))
        cfg = tiny_cfg()
        opt_d, opt_g = SGD(50.0), SGD(0.01)
        rng = np.random.default_rng(1)
        for _ in range(5):
            rcgan_disc_gen_step(batch['real_x'], batch['real_labels'], C, [0.5, 0.5], G, D,
                                opt_d, opt_g, cfg, rng)
            assert np.abs(D.V).max() <= 1.0

    def test_singular_channel(self, batch):
        G, D = tiny_pair()
        C = build_confusion(make_missing_channel([1.0, 0.5]))
        with pytest.raises(SingularChannelError):
            rcgan_disc_gen_step(batch['real_x'], batch['real_labels'], C, [0.5, 0.5], G, D,
                                SGD(0.1), SGD(0.1), tiny_cfg(), np.random.default_rng(0))

    def test_channel_must_match_discriminator(self, batch):
        G, D = tiny_pair()
        with pytest.raises(ShapeMismatchError):
            rcgan_disc_gen_step(batch['real_x'], [0, 1, 1, 0], build_confusion(identity_channel(2)),
                                [0.5, 0.5], G, D, SGD(0.1), SGD(0.1), tiny_cfg(),
                                np.random.default_rng(0))

    def test_non_finite_loss(self, batch):
        G, D = tiny_pair()
        C = build_confusion(uniform_missing_channel(2, 0.5))
        bad = batch['real_x'].copy()
        bad[0, 0] = np.nan
        with pytest.raises(TrainingDivergedError):
            rcgan_disc_gen_step(bad, batch['real_labels'], C, [0.5, 0.5], G, D,
                                SGD(0.1), SGD(0.1), tiny_cfg(), np.random.default_rng(0))

    def test_lambda_step_clips(self, batch):
        G, D = tiny_pair()
        step = rcgan_lambda_step(batch['real_x'], batch['real_x'][:2], [0, 1], [0.5, 0.5], G, D,
                                 SGD(50.0), SGD(0.01), tiny_cfg(), np.random.default_rng(0))
        assert np.abs(D.V).max() <= 1.0 and np.isfinite(step.loss_d)


# ============================================================================
# UNIT TESTS - Config and checkpoints
# ============================================================================


class TestTrainConfig:

    def test_defaults(self):
        cfg = TrainConfig()
        assert cfg.lam == 0.1 and cfg.phi == 'log' and cfg.epochs == 30
        assert cfg.gen_hidden == (64, 64) and cfg.disc_hidden == (64,) and cfg.feature_dim == 16
        assert cfg.nonsaturating is False and cfg.warmup_steps == 500

    def test_invalid_values(self):
        with pytest.raises(InvalidSpecError):
            TrainConfig(phi='hinge')
        with pytest.raises(InvalidSpecError):
            TrainConfig(lam=-0.1)
        with pytest.raises(InvalidSpecError):
            TrainConfig(batch_size=0)
        with pytest.raises(InvalidSpecError):
            TrainConfig(warmup_steps=-1)

    def test_dict_round_trip(self):
        cfg = tiny_cfg(phi='linear', seed=9)
        assert TrainConfig.from_dict(cfg.to_dict()) == cfg
        assert TrainConfig.from_dict(cfg.to_dict(), seed=3).seed == 3

    def test_unknown_setting(self):
        with pytest.raises(InvalidSpecError):
            TrainConfig.from_dict({'optimizer': 'adam'})


class TestCheckpoints:

    def test_round_trip(self, tmp_path):
        G, D = tiny_pair(feature_clip=0.5)
        cfg = tiny_cfg(feature_clip=0.5)
        path = tmp_path / 'model.json'
        save_checkpoint(path, G, D, cfg)
        G2, D2, cfg2 = load_checkpoint(path)
        np.testing.assert_array_equal(flatten_params(G2.parameters()), flatten_params(G.parameters()))
        np.testing.assert_array_equal(D2.V, D.V)
        assert cfg2 == cfg and D2.feature_clip == 0.5
        Z = np.random.default_rng(0).standard_normal((3, 2))
        np.testing.assert_array_equal(G2.generate(Z, [0, 1, 0]), G.generate(Z, [0, 1, 0]))

    def test_malformed(self):
        with pytest.raises(InvalidSpecError):
            restore_checkpoint({'generator': {}})

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_checkpoint(tmp_path / 'absent.json')


# ============================================================================
# UNIT TESTS - Training loop
# ============================================================================


class TestTrain:

    def test_same_seed_same_run(self, corrupted_data):
        a = train(tiny_cfg(seed=4), corrupted_data)
        b = train(tiny_cfg(seed=4), corrupted_data)
        pd.testing.assert_frame_equal(a.history, b.history)
        np.testing.assert_array_equal(flatten_params(a.generator.parameters()),
                                      flatten_params(b.generator.parameters()))

    def test_history_columns(self, corrupted_data):
        result = train(tiny_cfg(), corrupted_data)
        assert list(result.history.columns) == ['epoch', 'loss_d', 'loss_g']
        assert result.history['epoch'].tolist() == [1, 2]
        assert np.abs(result.discriminator.V).max() <= 1.0

    def test_zero_epochs(self, corrupted_data):
        cfg = tiny_cfg(epochs=0, seed=5)
        result = train(cfg, corrupted_data)
        assert result.history.empty
        assert list(result.history.columns) == ['epoch', 'loss_d', 'loss_g']
        expected = init_generator(np.random.default_rng(5), 2, 2, 3, cfg)
        np.testing.assert_array_equal(flatten_params(result.generator.parameters()),
                                      flatten_params(expected.parameters()))

    def test_callback_adds_columns(self, corrupted_data):
        result = train(tiny_cfg(epochs=1), corrupted_data,
                       callback=lambda epoch, G, D: {'gen_label_acc': 0.5})
        assert result.history['gen_label_acc'].tolist() == [0.5]

    def test_lambda_mode(self):
        rng = np.random.default_rng(6)
        split = few_label_split(generate_mixture(default_mixture(m=2), 64, rng), 4, rng)
        result = train(tiny_cfg(mode='lambda'), split)
        assert result.discriminator.n_labels == 3
        assert len(result.history) == 2

    def test_lambda_mode_needs_missing_slot(self):
        clean = generate_mixture(default_mixture(m=2), 16, np.random.default_rng(0))
        with pytest.raises(DomainError):
            train(tiny_cfg(mode='lambda'), clean)

    def test_warmup_only_in_lambda_mode(self, corrupted_data):
        a = train(tiny_cfg(seed=3, warmup_steps=0), corrupted_data)
        b = train(tiny_cfg(seed=3, warmup_steps=7), corrupted_data)
        np.testing.assert_array_equal(flatten_params(a.generator.parameters()),
                                      flatten_params(b.generator.parameters()))

    def test_warmup_changes_lambda_run(self, few_labeled):
        a = train(tiny_cfg(mode='lambda', seed=3, warmup_steps=0), few_labeled)
        b = train(tiny_cfg(mode='lambda', seed=3, warmup_steps=5), few_labeled)
        c = train(tiny_cfg(mode='lambda', seed=3, warmup_steps=5), few_labeled)
        assert not np.array_equal(flatten_params(a.generator.parameters()),
                                  flatten_params(b.generator.parameters()))
        np.testing.assert_array_equal(flatten_params(b.generator.parameters()),
                                      flatten_params(c.generator.parameters()))

    def test_no_warmup_without_epochs(self, few_labeled):
        cfg = tiny_cfg(mode='lambda', epochs=0, seed=5)
        result = train(cfg, few_labeled)
        expected = init_generator(np.random.default_rng(5), 2, 2, 3, cfg)
        np.testing.assert_array_equal(flatten_params(result.generator.parameters()),
                                      flatten_params(expected.parameters()))

    def test_warmup_leaves_missing_slot(self, few_labeled):
        G, D = tiny_pair(m=2, n_labels=3)
        missing_row = D.V[2].copy()
        labeled_idx = np.flatnonzero(few_labeled.is_labeled)
        cfg = tiny_cfg(mode='lambda', warmup_steps=10)
        steps = labeled_warmup(few_labeled, labeled_idx, np.array([0.5, 0.5]), G, D,
                               SGD(0.1, 0.5), SGD(0.1, 0.5), cfg, np.random.default_rng(0))
        assert steps == 10
        np.testing.assert_array_equal(D.V[2], missing_row)
        assert np.abs(D.V).max() <= 1.0

    def test_warmup_without_labels_is_a_no_op(self, few_labeled):
        G, D = tiny_pair(m=2, n_labels=3)
        before = flatten_params(G.parameters() + D.parameters()).copy()
        steps = labeled_warmup(few_labeled, np.array([], dtype=np.int64), np.array([0.5, 0.5]),
                               G, D, SGD(0.1), SGD(0.1), tiny_cfg(), np.random.default_rng(0))
        assert steps == 0
        np.testing.assert_array_equal(flatten_params(G.parameters() + D.parameters()), before)

    def test_divergence_during_warmup(self):
        ds = Dataset(x=np.full((8, 2), np.nan), labels=[0, 1, 2, 2, 2, 2, 2, 2], m=2, m_tilde=1)
        with pytest.raises(TrainingDivergedError) as info:
            train(tiny_cfg(mode='lambda'), ds)
        assert info.value.epoch == 0
        G, D, _ = restore_checkpoint(info.value.checkpoint)
        assert np.all(np.isfinite(flatten_params(G.parameters() + D.parameters())))

    def test_labeled_only_mode(self, corrupted_data):
        result = train(tiny_cfg(mode='labeled_only', epochs=1), corrupted_data)
        assert result.discriminator.n_labels == 2
        assert result.generator.n_labels == 2

    def test_divergence_carries_checkpoint(self):
        ds = Dataset(x=np.full((8, 2), np.nan), labels=[0, 1] * 4, m=2)
        with pytest.raises(TrainingDivergedError) as info:
            train(tiny_cfg(epochs=3), ds)
        assert info.value.epoch == 1
        G, D, _ = restore_checkpoint(info.value.checkpoint)
        assert np.all(np.isfinite(flatten_params(G.parameters() + D.parameters())))

    def test_priors_shape(self, corrupted_data):
        with pytest.raises(ShapeMismatchError):
            train(tiny_cfg(), corrupted_data, priors=[1.0])


# ============================================================================
# PROPERTY-BASED TESTS
# ============================================================================


class TestPropertyBasedInvariants:

    @given(st.integers(min_value=0, max_value=2**32 - 1), st.sampled_from(['log', 'linear']))
    @settings(max_examples=100, deadline=2000)
    def test_lambda_loss_is_scaled_missing_label_loss(self, seed, phi):
        rng = np.random.default_rng(seed)
        s, m = int(rng.integers(1, 5)), int(rng.integers(1, 5))
        lam = float(rng.uniform(0.0, 5.0))
        P, Q = random_joint_pair(rng, s, m, 0)
        scores = 3.0 * rng.standard_normal((s, m + 1))
        C = build_confusion(uniform_missing_channel(m, 1.0 / (1.0 + lam)))
        rcgan = expected_rcgan_loss(P, Q, C, scores, phi)
        assert rcgan == pytest.approx(expected_lambda_loss(P, Q, scores, lam, phi) / (1 + lam),
                                      abs=1e-12)

    @given(st.integers(min_value=0, max_value=2**32 - 1))
    @settings(max_examples=25, deadline=5000)
    def test_discriminator_gradient_on_random_batches(self, seed):
        rng = np.random.default_rng(seed)
        G, D = tiny_pair(seed=seed)
        X = rng.standard_normal((4, 2))
        terms = [(X, rng.integers(0, 3, 4), 'real', 1.0),
                 (G.generate(rng.standard_normal((4, 2)), rng.integers(0, 2, 4)),
                  rng.integers(0, 3, 4), 'fake', 1.0)]
        _, grads = disc_objective(D, terms, 'log')
        assert grad_check(D.parameters(), lambda: disc_objective(D, terms, 'log')[0], grads) < GRAD_TOL


# ============================================================================
# ACCEPTANCE - full-size runs (RCGAN_SLOW_TESTS=1)
# ============================================================================


@pytest.mark.skipif(not SLOW, reason="set RCGAN_SLOW_TESTS=1 for full-size training runs")
class TestAcceptance:

    @pytest.mark.parametrize('nonsaturating', [False, True])
    def test_half_missing_labels(self, nonsaturating):
        mixture = default_mixture()
        rng = np.random.default_rng(0)
        clean = generate_mixture(mixture, 8000, rng)
        ds = apply_channel(clean, build_confusion(uniform_missing_channel(8, 0.5)), rng)
        result = train(TrainConfig(seed=0, nonsaturating=nonsaturating), ds, mixture.priors)

        oracle = BayesOracle(mixture)
        gen_acc = generated_label_accuracy(result.generator, oracle, 2000, mixture.priors,
                                           np.random.default_rng(1))
        rec_acc = label_recovery_accuracy(result.generator, ds, RecoveryOptions(), 500)
        assert gen_acc >= 0.90
        assert rec_acc >= 0.85

    def test_forty_labels_beat_labeled_only(self):
        mixture = default_mixture()
        oracle = BayesOracle(mixture)
        gaps = []
        for seed in range(5):
            rng = np.random.default_rng(seed)
            split = few_label_split(generate_mixture(mixture, 8000, rng), 40, rng)
            scores = {}
            for mode in ('lambda', 'labeled_only'):
                result = train(TrainConfig(mode=mode, seed=seed), split, mixture.priors)
                scores[mode] = generated_label_accuracy(result.generator, oracle, 2000,
                                                        mixture.priors, np.random.default_rng(seed))
            gaps.append(scores['lambda'] - scores['labeled_only'])
        assert np.mean(gaps) >= 0.10
