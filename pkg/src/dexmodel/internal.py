"""Random-exploration data and the hand's learned internal models.

The forward model predicts the next fingertip state from the current state
and action (as a residual added to the current state) and is trained with a
discounted multi-step loss that rolls its own predictions forward. The inverse
model maps (state, target state) to an action and is trained with an L1 loss;
its per-dimension spread ``sigma`` turns point predictions into a Gaussian.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .nn import AdamState, DenseNet, NumericError, ShapeError, adam_step
from .planning import ActionDistribution
from .sim import ConfigError, forward_kinematics, reset_angles, step_joints


@dataclass
class Episode:
    states: np.ndarray   # (T + 1, H)
    actions: np.ndarray  # (T, K)

    def __len__(self):
        return len(self.actions)


@dataclass
class Dataset:
    episodes: list
    state_dim: int
    action_dim: int
    hand: str = ""
    mode: str = ""
    seed: Optional[int] = None

    def __len__(self):
        return sum(len(e) for e in self.episodes)

    @property
    def num_transitions(self):
        return len(self)

    def transitions(self):
        """Flat ``(s_t, a_t, s_next, episode_id, step)`` arrays."""
        if not self.episodes:
            h, k = self.state_dim, self.action_dim
            empty = np.zeros((0,), dtype=int)
            return np.zeros((0, h)), np.zeros((0, k)), np.zeros((0, h)), empty, empty
        s = np.concatenate([e.states[:-1] for e in self.episodes])
        a = np.concatenate([e.actions for e in self.episodes])
        s2 = np.concatenate([e.states[1:] for e in self.episodes])
        ep = np.concatenate([np.full(len(e), i) for i, e in enumerate(self.episodes)])
        step = np.concatenate([np.arange(len(e)) for e in self.episodes])
        return s, a, s2, ep, step

    def split(self, ratio=10, seed=0):
        """Episode-level train/eval split with ``ratio`` train episodes per eval episode."""
        n = len(self.episodes)
        order = np.random.default_rng(seed).permutation(n)
        n_eval = max(1, int(round(n / (ratio + 1)))) if n > 1 else 0
        eval_idx = set(order[:n_eval].tolist())
        train = [e for i, e in enumerate(self.episodes) if i not in eval_idx]
        held = [e for i, e in enumerate(self.episodes) if i in eval_idx]
        return self.subset(train), self.subset(held)

    def subset(self, episodes):
        return dataclasses.replace(self, episodes=list(episodes))

    def head(self, n_transitions):
        """The first episodes holding ``n_transitions`` transitions (last one truncated)."""
        out, left = [], n_transitions
        for e in self.episodes:
            if left <= 0:
                break
            t = min(left, len(e))
            out.append(Episode(e.states[:t + 1], e.actions[:t]))
            left -= t
        return self.subset(out)


def collect_random(config, mode, episodes, steps_per_episode, seed, start_angles=None):
    """Roll i.i.d. uniform actions from the neutral pose; episodes run as one batch."""
    if steps_per_episode < 1:
        raise ConfigError("steps_per_episode must be >= 1")
    rng = np.random.default_rng(seed)
    k, h = config.action_dim, config.state_dim
    actions = rng.uniform(-1.0, 1.0, size=(episodes, steps_per_episode, k))
    q0 = reset_angles(config) if start_angles is None else np.asarray(start_angles, dtype=float)
    q = np.broadcast_to(q0, (episodes, config.dof)).copy()
    states = np.empty((episodes, steps_per_episode + 1, h))
    states[:, 0] = forward_kinematics(config, q, check=False)
    for t in range(steps_per_episode):
        q = step_joints(config, q, actions[:, t], mode, rng)
        states[:, t + 1] = forward_kinematics(config, q, check=False)
    eps = [Episode(states[i], actions[i]) for i in range(episodes)]
    return Dataset(eps, h, k, hand=config.name, mode=mode, seed=seed)


def _windows(dataset, length, full_only=True):
    """(episode index, start) pairs for windows of ``length`` transitions."""
    out = []
    for i, e in enumerate(dataset.episodes):
        last = len(e) - length if full_only else len(e) - 1
        for t in range(last + 1):
            out.append((i, t))
    return np.array(out, dtype=int).reshape(-1, 2)


def _stack_windows(dataset, windows, length):
    s0 = np.stack([dataset.episodes[i].states[t] for i, t in windows])
    acts = np.stack([dataset.episodes[i].actions[t:t + length] for i, t in windows])
    targets = np.stack([dataset.episodes[i].states[t + 1:t + length + 1] for i, t in windows])
    return s0, acts, targets


# -- forward model ------------------------------------------------------------


@dataclass
class ForwardModel:
    net: DenseNet
    state_dim: int
    action_dim: int
    horizon: int = 1
    discount: float = 0.95
    report: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.horizon < 1:
            raise ConfigError("horizon must be >= 1")
        if not 0.0 < self.discount <= 1.0:
            raise ConfigError("discount must lie in (0, 1]")
        if self.net.in_dim != self.state_dim + self.action_dim or self.net.out_dim != self.state_dim:
            raise ShapeError("network does not map (H + K) -> H")

    def predict(self, s, a):
        s = np.asarray(s, dtype=float)
        a = np.asarray(a, dtype=float)
        if s.shape[-1] != self.state_dim or a.shape[-1] != self.action_dim:
            raise ShapeError(f"expected H={self.state_dim}, K={self.action_dim}")
        lead = np.broadcast_shapes(s.shape[:-1], a.shape[:-1])
        s = np.broadcast_to(s, lead + s.shape[-1:])
        x = np.concatenate([s, np.broadcast_to(a, lead + a.shape[-1:])], axis=-1)
        out = s + self.net.forward(x)
        if not np.all(np.isfinite(out)):
            raise NumericError("non-finite prediction")
        return out

    def rollout(self, s0, actions):
        """Open-loop trajectory ``(..., T + 1, H)`` for actions ``(..., T, K)``."""
        actions = np.asarray(actions, dtype=float)
        s = np.broadcast_to(np.asarray(s0, dtype=float), actions.shape[:-2] + (self.state_dim,))
        traj = [s]
        for t in range(actions.shape[-2]):
            s = self.predict(s, actions[..., t, :])
            traj.append(s)
        return np.stack(traj, axis=-2)

    def rollout_with_backprop(self, s0, actions):
        """Batched rollout plus a closure mapping dL/dstates to dL/dactions."""
        actions = np.asarray(actions, dtype=float)
        n, horizon, _ = actions.shape
        h = self.state_dim
        s = np.broadcast_to(np.asarray(s0, dtype=float), (n, h))
        traj, caches = [s], []
        for t in range(horizon):
            x = np.concatenate([s, actions[:, t]], axis=1)
            y, cache = self.net.forward_cached(x)
            caches.append(cache)
            s = s + y
            traj.append(s)
        states = np.stack(traj, axis=1)

        def backprop(d_states):
            d_actions = np.zeros_like(actions)
            g = d_states[:, horizon].copy()
            for t in range(horizon - 1, -1, -1):
                _, d_in = self.net.backward(caches[t], g)
                d_actions[:, t] = d_in[:, h:]
                g = g + d_in[:, :h] + d_states[:, t]
            return d_actions

        return states, backprop

    def mse(self, dataset):
        s, a, s2, _, _ = dataset.transitions()
        if len(s) == 0:
            return float("nan")
        return float(np.mean((self.predict(s, a) - s2) ** 2))

    def copy(self):
        return dataclasses.replace(self, net=self.net.copy(), report=dict(self.report))


@dataclass
class TrainConfig:
    horizon: int = 1
    discount: float = 0.95
    lr: float = 1e-4
    steps: int = 2000
    batch_size: int = 256
    hidden: tuple = (256, 256)
    activation: str = "tanh"
    seed: int = 0
    holdout_ratio: int = 10
    target_shift: int = 1


def multistep_loss(model, s0, actions, targets, discount=None):
    """Discounted sum over the window of per-step mean squared errors.

    ``s0`` is (B, H), ``actions`` (B, S, K), ``targets`` (B, S, H); the model is
    rolled from ``s0`` on its own predictions.
    """
    discount = model.discount if discount is None else discount
    pred = model.rollout(s0, actions)[:, 1:]
    per_step = np.mean((pred - targets) ** 2, axis=(0, 2))
    return float(np.sum(discount ** np.arange(len(per_step)) * per_step))


def multistep_loss_grad(model, s0, actions, targets, discount=None):
    discount = model.discount if discount is None else discount
    b, horizon, h = targets.shape
    states, caches = [np.asarray(s0, dtype=float)], []
    s = states[0]
    for t in range(horizon):
        y, cache = model.net.forward_cached(np.concatenate([s, actions[:, t]], axis=1))
        caches.append(cache)
        s = s + y
        states.append(s)
    weights = discount ** np.arange(horizon)
    loss = 0.0
    grads = [np.zeros_like(p) for p in model.net.params()]
    g = np.zeros((b, h))
    scale = 1.0 / (b * h)
    for t in range(horizon - 1, -1, -1):
        err = states[t + 1] - targets[:, t]
        loss += weights[t] * scale * float(np.sum(err * err))
        g = g + 2.0 * weights[t] * scale * err
        step_grads, d_in = model.net.backward(caches[t], g)
        for acc, sg in zip(grads, step_grads):
            acc += sg
        g = g + d_in[:, :h]
    return loss, grads


def _new_net(in_dim, out_dim, cfg):
    return DenseNet.create([in_dim, *cfg.hidden, out_dim], seed=cfg.seed, activation=cfg.activation)


def train_forward(dataset, cfg=None, eval_data=None, log_every=0):
    """Fit a forward model; reports held-out one-step MSE in ``model.report``.

    Without ``eval_data`` the dataset is split 10:1 by episode.
    """
    cfg = cfg or TrainConfig()
    if eval_data is None:
        train, held = dataset.split(cfg.holdout_ratio, seed=cfg.seed)
    else:
        train, held = dataset, eval_data
    windows = _windows(train, cfg.horizon)
    if len(windows) == 0:
        raise ConfigError(f"no training window of {cfg.horizon} consecutive transitions")
    h, k = dataset.state_dim, dataset.action_dim
    net = _new_net(h + k, h, cfg)
    s, a, s2, _, _ = train.transitions()
    net.fit_normalization(np.concatenate([s, a], axis=1), s2 - s)
    model = ForwardModel(net, h, k, horizon=cfg.horizon, discount=cfg.discount)
    curve = _fit_forward(model, train, windows, cfg, cfg.steps, held, log_every)
    model.report = {
        "train_transitions": len(train),
        "eval_transitions": len(held),
        "heldout_mse": model.mse(held) if len(held) else float("nan"),
        "curve": curve,
    }
    return model


def _fit_forward(model, train, windows, cfg, steps, held=None, log_every=0):
    rng = np.random.default_rng(cfg.seed + 1)
    opt = AdamState.for_params(model.net.params(), lr=cfg.lr)
    batch = max(1, cfg.batch_size // cfg.horizon)
    curve = []
    for step in range(steps):
        idx = rng.integers(0, len(windows), size=min(batch, len(windows)))
        s0, acts, targets = _stack_windows(train, windows[idx], cfg.horizon)
        _, grads = multistep_loss_grad(model, s0, acts, targets)
        adam_step(opt, model.net.params(), grads)
        if log_every and held is not None and len(held) and (step + 1) % log_every == 0:
            curve.append((step + 1, model.mse(held)))
    return curve


def finetune(model, new_data, steps, eval_data=None, lr=None, batch_size=256, seed=0, log_every=0):
    """Continue training a copy of ``model`` on ``new_data`` only.

    Returns ``(model, curve)`` where ``curve`` lists ``(step, eval MSE)``
    starting from step 0.
    """
    tuned = model.copy()
    curve = []
    if eval_data is not None and len(eval_data):
        curve.append((0, tuned.mse(eval_data)))
    if steps <= 0:
        return tuned, curve
    cfg = TrainConfig(horizon=model.horizon, discount=model.discount,
                      lr=lr if lr is not None else 1e-4, batch_size=batch_size, seed=seed)
    windows = _windows(new_data, cfg.horizon)
    if len(windows) == 0:
        raise ConfigError(f"no fine-tuning window of {cfg.horizon} transitions")
    curve.extend(_fit_forward(tuned, new_data, windows, cfg, steps, eval_data, log_every))
    if eval_data is not None and len(eval_data) and (not curve or curve[-1][0] != steps):
        curve.append((steps, tuned.mse(eval_data)))
    return tuned, curve


# -- inverse model -------------------------------------------------------------


@dataclass
class InverseModel:
    net: DenseNet
    state_dim: int
    action_dim: int
    sigma: Optional[np.ndarray] = None
    target_shift: int = 1
    report: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.target_shift < 1:
            raise ConfigError("target_shift must be >= 1")
        if self.sigma is not None:
            self.sigma = np.asarray(self.sigma, dtype=float)
            if np.any(self.sigma < 0):
                raise ValueError("sigma must be non-negative")

    def predict(self, s, s_target):
        s = np.asarray(s, dtype=float)
        s_target = np.asarray(s_target, dtype=float)
        s, s_target = np.broadcast_arrays(s, s_target)
        return self.net.forward(np.concatenate([s, s_target], axis=-1))

    def copy(self):
        return dataclasses.replace(
            self, net=self.net.copy(),
            sigma=None if self.sigma is None else self.sigma.copy(), report=dict(self.report))


def inverse_pairs(dataset, shift=1):
    """``(s_t, s_{t+shift}, a_t)`` for every valid index of every episode."""
    s, st, a = [], [], []
    for e in dataset.episodes:
        n = len(e.states) - shift
        if n <= 0:
            continue
        s.append(e.states[:n])
        st.append(e.states[shift:shift + n])
        a.append(e.actions[:n])
    if not s:
        h, k = dataset.state_dim, dataset.action_dim
        return np.zeros((0, h)), np.zeros((0, h)), np.zeros((0, k))
    return np.concatenate(s), np.concatenate(st), np.concatenate(a)


def train_inverse(dataset, cfg=None, curve=None):
    """Fit the inverse model with a mean absolute error loss."""
    cfg = cfg or TrainConfig()
    s, st, a = inverse_pairs(dataset, cfg.target_shift)
    if len(s) == 0:
        raise ConfigError(f"no episode longer than target shift {cfg.target_shift}")
    h, k = dataset.state_dim, dataset.action_dim
    x = np.concatenate([s, st], axis=1)
    net = _new_net(2 * h, k, cfg)
    net.fit_normalization(x, a)
    rng = np.random.default_rng(cfg.seed + 1)
    opt = AdamState.for_params(net.params(), lr=cfg.lr)
    n = len(x)
    for _ in range(cfg.steps):
        idx = rng.integers(0, n, size=min(cfg.batch_size, n))
        y, cache = net.forward_cached(x[idx])
        err = y - a[idx]
        if curve is not None:
            curve.append(float(np.mean(np.abs(err))))
        grads, _ = net.backward(cache, np.sign(err) / err.size)
        adam_step(opt, net.params(), grads)
    model = InverseModel(net, h, k, target_shift=cfg.target_shift)
    model.report = {"train_pairs": int(n), "train_l1": float(np.mean(np.abs(net.forward(x) - a)))}
    return model


def estimate_sigma(model, dataset):
    """Mean absolute residual of the inverse model, per action dimension; stored on the model."""
    s, st, a = inverse_pairs(dataset, model.target_shift)
    if len(s) == 0:
        raise ValueError("cannot estimate sigma from an empty dataset")
    sigma = np.mean(np.abs(a - model.predict(s, st)), axis=0)
    model.sigma = sigma
    return sigma


def inverse_distribution(model, s, s_target):
    """Single-step diagonal Gaussian ``N(g(s, s_T), diag(sigma^2))``."""
    if model.sigma is None:
        raise RuntimeError("inverse model has no sigma; call estimate_sigma first")
    mean = model.predict(s, s_target).reshape(1, model.action_dim)
    return ActionDistribution(mean, model.sigma.reshape(1, -1).copy())
