import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dexmodel.internal import (Dataset, Episode, ForwardModel, InverseModel, TrainConfig, collect_random,
                               estimate_sigma, finetune, inverse_distribution, inverse_pairs,
                               multistep_loss, multistep_loss_grad, train_forward, train_inverse)
from dexmodel.nn import DenseNet, ShapeError
from dexmodel.sim import ConfigError, forward_kinematics, get_preset, reset_angles

from helpers import central_diff, rel_err


def _model(h=2, k=2, horizon=3, seed=0, discount=0.9):
    return ForwardModel(DenseNet.create([h + k, 6, h], seed=seed), h, k, horizon=horizon, discount=discount)


def _constant_net(in_dim, out):
    net = DenseNet.create([in_dim, 3, len(out)], seed=0)
    for p in net.params():
        p[...] = 0.0
    net.out_mean = np.asarray(out, dtype=float)
    return net


def _linear_dataset(episodes=200, steps=5, seed=0):
    """``s' = s + B a`` with a fixed full-rank ``B``."""
    rng = np.random.default_rng(seed)
    b = np.array([[0.5, 0.1], [-0.2, 0.4]])
    eps = []
    for _ in range(episodes):
        s = [rng.normal(size=2)]
        acts = rng.uniform(-1, 1, size=(steps, 2))
        for a in acts:
            s.append(s[-1] + b @ a)
        eps.append(Episode(np.array(s), acts))
    return Dataset(eps, 2, 2), b


# -- multi-step loss -----------------------------------------------------------------


def test_one_step_loss_equals_mse():
    m = _model(horizon=1)
    rng = np.random.default_rng(0)
    s0, a, t = rng.normal(size=(5, 2)), rng.normal(size=(5, 1, 2)), rng.normal(size=(5, 1, 2))
    expected = np.mean((m.predict(s0, a[:, 0]) - t[:, 0]) ** 2)
    assert multistep_loss(m, s0, a, t) == pytest.approx(expected, rel=1e-12)


def test_multistep_loss_chains_own_predictions():
    m = _model(discount=0.5)
    rng = np.random.default_rng(1)
    s0, a, t = rng.normal(size=(4, 2)), rng.normal(size=(4, 3, 2)), rng.normal(size=(4, 3, 2))
    s, total = s0, 0.0
    for i in range(3):
        s = m.predict(s, a[:, i])
        total += 0.5 ** i * np.mean((s - t[:, i]) ** 2)
    assert multistep_loss(m, s0, a, t) == pytest.approx(total, rel=1e-12)
    loss, _ = multistep_loss_grad(m, s0, a, t)
    assert loss == pytest.approx(total, rel=1e-12)


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 1000), horizon=st.integers(1, 4))
def test_multistep_gradient_matches_finite_differences(seed, horizon):
    m = _model(horizon=horizon, seed=seed)
    rng = np.random.default_rng(seed)
    s0, a, t = rng.normal(size=(3, 2)), rng.normal(size=(3, horizon, 2)), rng.normal(size=(3, horizon, 2))
    _, grads = multistep_loss_grad(m, s0, a, t)
    analytic = np.concatenate([g.ravel() for g in grads])

    def f(vec):
        probe = m.copy()
        probe.net.set_param_vector(vec)
        return multistep_loss(probe, s0, a, t)

    numeric = central_diff(f, m.net.param_vector())
    assert np.max(rel_err(analytic, numeric, floor=1e-6)) < 1e-4


def test_rollout_composes_predictions():
    m = _model()
    rng = np.random.default_rng(2)
    s0, a = rng.normal(size=2), rng.normal(size=(4, 2))
    traj = m.rollout(s0, a)
    s = s0
    for i in range(4):
        s = m.predict(s, a[i])
        np.testing.assert_array_equal(traj[i + 1], s)
    np.testing.assert_array_equal(traj[0], s0)


def test_rollout_backprop_matches_finite_differences():
    m = _model()
    rng = np.random.default_rng(3)
    s0, a = rng.normal(size=2), rng.normal(size=(1, 3, 2))
    w = rng.normal(size=(1, 4, 2))
    states, back = m.rollout_with_backprop(s0, a)
    analytic = back(w)
    numeric = central_diff(lambda v: float(np.sum(m.rollout(s0, v.reshape(a.shape)) * w)), a.ravel())
    np.testing.assert_allclose(analytic.ravel(), numeric, atol=1e-7)
    np.testing.assert_allclose(states, m.rollout(s0, a), atol=1e-12)


def test_wrong_state_width_raises():
    with pytest.raises(ShapeError):
        _model().predict(np.zeros(3), np.zeros(2))


def test_bad_horizon_and_discount_rejected():
    with pytest.raises(ConfigError):
        _model(horizon=0)
    with pytest.raises(ConfigError):
        _model(discount=0.0)


# -- training ------------------------------------------------------------------------


def test_constant_environment_gives_identity_model():
    eps = [Episode(np.tile([[0.3, -0.1]], (6, 1)), np.random.default_rng(i).uniform(-1, 1, (5, 2)))
           for i in range(20)]
    m = train_forward(Dataset(eps, 2, 2), TrainConfig(steps=50, hidden=(8,), lr=1e-3))
    s = np.random.default_rng(0).normal(size=(7, 2))
    np.testing.assert_allclose(m.predict(s, np.zeros((7, 2))), s, atol=1e-6)


def test_forward_model_learns_linear_dynamics():
    data, b = _linear_dataset()
    m = train_forward(data, TrainConfig(horizon=2, steps=1500, hidden=(32,), lr=3e-3))
    assert m.report["heldout_mse"] < 1e-3
    assert m.report["train_transitions"] + m.report["eval_transitions"] == len(data)


def test_training_is_deterministic():
    data, _ = _linear_dataset(episodes=30)
    cfg = TrainConfig(steps=30, hidden=(8,), lr=1e-3, seed=5)
    np.testing.assert_array_equal(train_forward(data, cfg).net.param_vector(),
                                  train_forward(data, cfg).net.param_vector())


def test_window_longer_than_episodes_raises():
    data, _ = _linear_dataset(episodes=5, steps=3)
    with pytest.raises(ConfigError):
        train_forward(data, TrainConfig(horizon=4, steps=1))


def test_finetune_leaves_original_untouched():
    data, _ = _linear_dataset(episodes=30)
    m = train_forward(data, TrainConfig(steps=20, hidden=(8,)))
    before = m.net.param_vector()
    same, curve0 = finetune(m, data, 0, eval_data=data)
    np.testing.assert_array_equal(same.net.param_vector(), before)
    assert curve0 == [(0, m.mse(data))]
    tuned, curve = finetune(m, data, 200, eval_data=data, lr=1e-3)
    np.testing.assert_array_equal(m.net.param_vector(), before)
    assert curve[0][0] == 0 and curve[-1][0] == 200
    assert curve[-1][1] < curve[0][1]


# -- data ---------------------------------------------------------------------------


def test_collect_random_shapes_and_start_state():
    cfg = get_preset("robotiq")
    data = collect_random(cfg, "sequential", 4, 6, seed=0)
    assert len(data) == 24 and data.state_dim == cfg.state_dim and data.action_dim == cfg.action_dim
    start = forward_kinematics(cfg, reset_angles(cfg))
    for e in data.episodes:
        np.testing.assert_array_equal(e.states[0], start)
        assert np.all(np.abs(e.actions) <= 1)
    again = collect_random(cfg, "sequential", 4, 6, seed=0)
    np.testing.assert_array_equal(data.transitions()[2], again.transitions()[2])


def test_split_is_a_partition_of_episodes():
    data, _ = _linear_dataset(episodes=55)
    train, held = data.split(10, seed=3)
    assert len(train.episodes) == 50 and len(held.episodes) == 5
    ids = {id(e) for e in train.episodes} | {id(e) for e in held.episodes}
    assert ids == {id(e) for e in data.episodes}


def test_head_takes_exact_transition_count():
    data, _ = _linear_dataset(episodes=10, steps=5)
    part = data.head(12)
    assert len(part) == 12
    np.testing.assert_array_equal(part.episodes[2].states, data.episodes[2].states[:3])


def test_transitions_index_episode_and_step():
    data, _ = _linear_dataset(episodes=2, steps=3)
    s, a, s2, ep, step = data.transitions()
    assert ep.tolist() == [0, 0, 0, 1, 1, 1] and step.tolist() == [0, 1, 2, 0, 1, 2]
    np.testing.assert_array_equal(s[4], data.episodes[1].states[1])
    np.testing.assert_array_equal(s2[4], data.episodes[1].states[2])


# -- inverse model -------------------------------------------------------------------


def test_inverse_pairs_use_target_shift():
    states = np.arange(10.0).reshape(5, 2)
    acts = np.arange(8.0).reshape(4, 2) * 10
    data = Dataset([Episode(states, acts)], 2, 2)
    s, st_, a = inverse_pairs(data, shift=2)
    np.testing.assert_array_equal(s, states[:3])
    np.testing.assert_array_equal(st_, states[2:5])
    np.testing.assert_array_equal(a, acts[:3])
    assert len(inverse_pairs(data, shift=5)[0]) == 0


def test_sigma_hand_arithmetic():
    # predictions are the constant (0.1, -0.2); residuals are written out by hand
    acts = np.array([[0.3, 0.0], [0.1, -0.5], [-0.3, -0.2]])
    data = Dataset([Episode(np.zeros((4, 2)), acts)], 2, 2)
    im = InverseModel(_constant_net(4, [0.1, -0.2]), 2, 2)
    sigma = estimate_sigma(im, data)
    expected = [(0.2 + 0.0 + 0.4) / 3, (0.2 + 0.3 + 0.0) / 3]
    np.testing.assert_allclose(sigma, expected, rtol=0, atol=1e-12)
    assert im.sigma is sigma


def test_sigma_is_a_streaming_mean_over_episodes():
    rng = np.random.default_rng(0)
    eps = [Episode(rng.normal(size=(n + 1, 2)), rng.normal(size=(n, 2))) for n in (3, 7, 5)]
    im = InverseModel(DenseNet.create([4, 5, 2], seed=1), 2, 2)
    full = estimate_sigma(im, Dataset(eps, 2, 2)).copy()
    parts = [estimate_sigma(im, Dataset([e], 2, 2)) * len(e) for e in eps]
    np.testing.assert_allclose(sum(parts) / 15, full, atol=1e-12)


def test_inverse_recovers_linear_actions():
    data, b = _linear_dataset(episodes=300)
    im = train_inverse(data, TrainConfig(steps=2000, hidden=(32,), lr=3e-3))
    s = np.zeros(2)
    a_true = np.array([0.4, -0.6])
    np.testing.assert_allclose(im.predict(s, s + b @ a_true), a_true, atol=0.05)
    assert im.report["train_l1"] < 0.05


def test_inverse_distribution_samples_follow_sigma():
    im = InverseModel(_constant_net(4, [0.2, -0.1]), 2, 2, sigma=np.array([0.3, 0.05]))
    dist = inverse_distribution(im, np.zeros(2), np.ones(2))
    np.testing.assert_allclose(dist.means, [[0.2, -0.1]])
    samples = dist.means + dist.stds * np.random.default_rng(0).standard_normal((20000, 1, 2))
    np.testing.assert_allclose(samples.mean(axis=0)[0], [0.2, -0.1], atol=4 * 0.3 / np.sqrt(20000))
    np.testing.assert_allclose(samples.std(axis=0)[0], [0.3, 0.05], rtol=0.03)


def test_inverse_distribution_needs_sigma():
    im = InverseModel(_constant_net(4, [0.0, 0.0]), 2, 2)
    with pytest.raises(RuntimeError):
        inverse_distribution(im, np.zeros(2), np.zeros(2))


def test_negative_sigma_rejected():
    with pytest.raises(ValueError):
        InverseModel(_constant_net(4, [0.0, 0.0]), 2, 2, sigma=np.array([0.1, -0.1]))
