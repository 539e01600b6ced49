"""In-hand reorientation with a factorized hand/object dynamics model.

The joint state is ``z = (s, x)``: fingertip positions ``s`` (H values) and
the encoded object state ``x`` (O values). The factorized model first moves
the hand with the frozen internal forward model, then lets an external
network correct the hand and advance the object from ``(s_hat, x)`` alone::

    s_hat = f_internal(s, a)
    (s', x') = (s_hat, x) + f_external(s_hat, x)

The external network never sees the action, so its size does not depend on
the hand's actuator count. A monolithic baseline learns ``(s, x, a) -> (s', x')``
with a single network instead.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .internal import Dataset, Episode, ForwardModel, TrainConfig, _windows, _stack_windows
from .internal import multistep_loss_grad
from .nn import AdamState, DenseNet, NumericError, ShapeError, adam_step
from .planning import ActionDistribution, PlanBudget, cem_refine
from .sim import (
    OBJECT_DIM,
    ConfigError,
    ObjectParams,
    ObjectState,
    SimState,
    env_step,
    forward_kinematics,
    object_step,
    reset_angles,
)

IN_HAND_BUDGET = PlanBudget(horizon=7, cem_iterations=3, samples=1000, elites=20, beta=0.2)


# -- task ----------------------------------------------------------------------


@dataclass(frozen=True)
class ReorientTask:
    goal_z: float = 0.5
    goal_xy: Optional[tuple] = None  # None: keep the object where it started
    goal_choices: Optional[tuple] = None  # if set, each episode draws goal_z from these
    cos_threshold: float = 0.95
    pos_threshold: float = 0.075
    lam_pos: float = 1.0
    lam_rot: float = 1.0
    lam_drop: float = 5.0

    def goal_position(self, start_xy):
        return np.asarray(start_xy if self.goal_xy is None else self.goal_xy, dtype=float)


def reward_from_encoding(x, task, goal_xy):
    """Reward for encoded object states ``(..., 5)``; the drop flag is clipped to [0, 1]."""
    x = np.asarray(x, dtype=float)
    c, s = x[..., 0], x[..., 1]
    norm = np.maximum(np.hypot(c, s), 1e-9)
    cos_err = (c * math.cos(task.goal_z) + s * math.sin(task.goal_z)) / norm
    dist = np.linalg.norm(x[..., 2:4] - goal_xy, axis=-1)
    dropped = np.clip(x[..., 4], 0.0, 1.0)
    return -task.lam_pos * dist + task.lam_rot * cos_err - task.lam_drop * dropped


def reorient_reward(obj, task, goal_xy=(0.0, 0.0)):
    """``-l1 |pos - goal| + l2 cos(rot - goal_rot) - l3 [dropped]`` for one object state."""
    goal = task.goal_position(goal_xy)
    dist = float(np.linalg.norm(np.asarray(obj.xy_position, dtype=float) - goal))
    return (-task.lam_pos * dist
            + task.lam_rot * math.cos(obj.z_rotation - task.goal_z)
            - task.lam_drop * float(obj.dropped))


def reorient_success(obj, task, goal_xy=(0.0, 0.0)):
    goal = task.goal_position(goal_xy)
    dist = float(np.linalg.norm(np.asarray(obj.xy_position, dtype=float) - goal))
    return (not obj.dropped
            and math.cos(obj.z_rotation - task.goal_z) > task.cos_threshold
            and dist < task.pos_threshold)


class ReorientCost:
    """Negative reward summed over the predicted horizon of joint states."""

    def __init__(self, task, state_dim, goal_xy):
        self.task = task
        self.state_dim = state_dim
        self.goal_xy = np.asarray(goal_xy, dtype=float)

    def __call__(self, traj, actions=None):
        x = traj[..., 1:, self.state_dim:]
        return -np.sum(reward_from_encoding(x, self.task, self.goal_xy), axis=-1)


# -- environment ---------------------------------------------------------------


def default_object(config, size=1.0, start_angles=None):
    """Object centred among the start-pose fingertips, sized to touch about half of them.

    Returns ``(params, start_xy)``.
    """
    q = reset_angles(config) if start_angles is None else np.asarray(start_angles, dtype=float)
    tips = forward_kinematics(config, q).reshape(-1, 3)
    center = tips.mean(axis=0)
    radius = float(np.median(np.linalg.norm(tips - center, axis=1))) * size
    params = ObjectParams(center_height=float(center[2]), radius=max(radius, 1e-3))
    return params, (float(center[0]), float(center[1]))


class InHandEnv:
    """Hand in the sequential setting holding one object at the start pose."""

    mode = "sequential"

    def __init__(self, config, task=None, params=None, start_xy=None, seed=0, start_angles=None):
        self.config = config
        self.base_task = task or ReorientTask()
        self.task = self.base_task
        self.start_angles = reset_angles(config) if start_angles is None else np.asarray(start_angles)
        if params is None:
            params, default_xy = default_object(config, start_angles=self.start_angles)
            start_xy = default_xy if start_xy is None else start_xy
        self.params = params
        self.start_xy = tuple(start_xy) if start_xy is not None else (0.0, 0.0)
        self.goal_xy = self.task.goal_position(self.start_xy)
        self.reseed(seed)
        self.reset()

    def reseed(self, seed):
        """Restart the actuation-noise and goal streams."""
        self.rng = np.random.default_rng(seed)
        self.goal_rng = np.random.default_rng([seed, 1])

    @property
    def state_dim(self):
        return self.config.state_dim

    @property
    def joint_dim(self):
        return self.config.state_dim + OBJECT_DIM

    def reset(self):
        choices = self.base_task.goal_choices
        if choices:
            goal = float(choices[int(self.goal_rng.integers(len(choices)))])
            self.task = dataclasses.replace(self.base_task, goal_z=goal)
        self.hand = SimState.from_angles(self.config, self.start_angles)
        self.obj = ObjectState(0.0, self.start_xy)
        return self.observe()

    def observe(self):
        return np.concatenate([self.hand.tips, self.obj.encode()])

    def step(self, action):
        prev = self.hand.tips
        self.hand = env_step(self.hand, action, self.mode, self.config, self.rng)
        self.obj = object_step(self.obj, prev, self.hand.tips, self.params)
        return self.observe()

    def reward(self):
        return reorient_reward(self.obj, self.task, self.goal_xy)

    def success(self):
        return reorient_success(self.obj, self.task, self.goal_xy)


# -- models --------------------------------------------------------------------


@dataclass
class ExternalModel:
    net: DenseNet
    state_dim: int
    object_dim: int = OBJECT_DIM
    horizon: int = 1
    discount: float = 0.95

    def __post_init__(self):
        d = self.state_dim + self.object_dim
        if self.net.in_dim != d or self.net.out_dim != d:
            raise ShapeError(f"external network must map {d} -> {d}")

    @classmethod
    def create(cls, state_dim, object_dim=OBJECT_DIM, hidden=(64, 64), seed=0, **kw):
        d = state_dim + object_dim
        return cls(DenseNet.create([d, *hidden, d], seed=seed), state_dim, object_dim, **kw)

    def predict(self, s_hat, x):
        v = np.concatenate([s_hat, x], axis=-1)
        return v + self.net.forward(v)

    def copy(self):
        return dataclasses.replace(self, net=self.net.copy())


def factorized_predict(internal, external, s, x, a):
    """One factorized step; returns ``(s_next, x_next)``."""
    s_hat = internal.predict(s, a)
    out = external.predict(s_hat, np.broadcast_to(x, s_hat.shape[:-1] + (external.object_dim,)))
    if not np.all(np.isfinite(out)):
        raise NumericError("non-finite factorized prediction")
    h = external.state_dim
    return out[..., :h], out[..., h:]


class FactorizedDynamics:
    """Adapter exposing ``rollout`` over joint states for the planners."""

    def __init__(self, internal, external):
        if internal.state_dim != external.state_dim:
            raise ShapeError("internal and external models disagree on H")
        self.internal = internal
        self.external = external
        self.action_dim = internal.action_dim

    def rollout(self, z0, actions):
        actions = np.asarray(actions, dtype=float)
        h = self.external.state_dim
        z = np.broadcast_to(np.asarray(z0, dtype=float), actions.shape[:-2] + (h + self.external.object_dim,))
        traj = [z]
        for t in range(actions.shape[-2]):
            s, x = factorized_predict(self.internal, self.external, z[..., :h], z[..., h:], actions[..., t, :])
            z = np.concatenate([s, x], axis=-1)
            traj.append(z)
        return np.stack(traj, axis=-2)


def factorized_loss_grad(internal, external, z0, actions, targets, train_internal=False):
    """Discounted multi-step squared error of the factorized rollout and its gradients.

    Returns ``(loss, external_grads, internal_grads)``; the internal gradients
    are ``None`` unless ``train_internal``.
    """
    b, horizon, d = targets.shape
    h = external.state_dim
    z = np.asarray(z0, dtype=float)
    states, c_int, c_ext = [z], [], []
    for t in range(horizon):
        y1, cache1 = internal.net.forward_cached(np.concatenate([z[:, :h], actions[:, t]], axis=1))
        v = np.concatenate([z[:, :h] + y1, z[:, h:]], axis=1)
        y2, cache2 = external.net.forward_cached(v)
        z = v + y2
        c_int.append(cache1)
        c_ext.append(cache2)
        states.append(z)
    weights = external.discount ** np.arange(horizon)
    scale = 1.0 / (b * d)
    loss = 0.0
    g_ext = [np.zeros_like(p) for p in external.net.params()]
    g_int = [np.zeros_like(p) for p in internal.net.params()] if train_internal else None
    g = np.zeros((b, d))
    for t in range(horizon - 1, -1, -1):
        err = states[t + 1] - targets[:, t]
        loss += weights[t] * scale * float(np.sum(err * err))
        g = g + 2.0 * weights[t] * scale * err
        step_ext, d_v = external.net.backward(c_ext[t], g)
        for acc, sg in zip(g_ext, step_ext):
            acc += sg
        d_v = g + d_v
        d_shat = d_v[:, :h]
        step_int, d_u = internal.net.backward(c_int[t], d_shat)
        if train_internal:
            for acc, sg in zip(g_int, step_int):
                acc += sg
        g = np.concatenate([d_shat + d_u[:, :h], d_v[:, h:]], axis=1)
    return loss, g_ext, g_int


# -- online adaptive learning ----------------------------------------------------


LEARNERS = ("factorized", "end2end", "monolithic", "monolithic_msl")


@dataclass
class AdaptSchedule:
    iterations: int = 200
    rollouts: int = 40
    episode_steps: int = 10
    train_steps: int = 100
    horizon: int = 10
    discount: float = 0.95
    lr: float = 1e-3
    batch_size: int = 256
    hidden: tuple = (64, 64)
    init_std: float = 0.3

    def __post_init__(self):
        if self.iterations < 0 or self.rollouts < 1 or self.episode_steps < 1:
            raise ConfigError("iterations >= 0, rollouts >= 1 and episode_steps >= 1 required")
        if not 1 <= self.horizon <= self.episode_steps:
            raise ConfigError("training horizon must lie in [1, episode_steps]")


@dataclass
class AdaptResult:
    learner: str
    model: object
    curve: list = field(default_factory=list)  # rows (iteration, env_steps, success_rate, mean_reward)
    buffer: Optional[Dataset] = None
    internal: Optional[ForwardModel] = None

    def steps_to(self, level):
        """Environment steps after which the success rate first reaches ``level`` (inf if never)."""
        for _, steps, rate, _ in self.curve:
            if rate >= level:
                return steps
        return math.inf


def _init_model(learner, env, internal, schedule, seed):
    h, k = env.state_dim, env.config.action_dim
    d = env.joint_dim
    if learner in ("factorized", "end2end"):
        ext = ExternalModel.create(h, OBJECT_DIM, schedule.hidden, seed=seed,
                                   horizon=schedule.horizon, discount=schedule.discount)
        return ext, FactorizedDynamics(internal, ext)
    horizon = schedule.horizon if learner == "monolithic_msl" else 1
    net = DenseNet.create([d + k, *schedule.hidden, d], seed=seed)
    model = ForwardModel(net, d, k, horizon=horizon, discount=schedule.discount)
    return model, model


def _fit_normalization(learner, model, internal, buffer):
    z, a, z2, _, _ = buffer.transitions()
    if learner in ("factorized", "end2end"):
        h = model.state_dim
        s_hat = internal.predict(z[:, :h], a)
        v = np.concatenate([s_hat, z[:, h:]], axis=1)
        model.net.fit_normalization(v, z2 - v)
    else:
        model.net.fit_normalization(np.concatenate([z, a], axis=1), z2 - z)


def _train_round(learner, model, internal, buffer, schedule, opt, opt_int, rng):
    horizon = model.horizon
    windows = _windows(buffer, horizon)
    batch = max(1, schedule.batch_size // horizon)
    for _ in range(schedule.train_steps):
        idx = rng.integers(0, len(windows), size=min(batch, len(windows)))
        z0, acts, targets = _stack_windows(buffer, windows[idx], horizon)
        if learner in ("factorized", "end2end"):
            _, g_ext, g_int = factorized_loss_grad(internal, model, z0, acts, targets,
                                                   train_internal=learner == "end2end")
            adam_step(opt, model.net.params(), g_ext)
            if g_int is not None:
                adam_step(opt_int, internal.net.params(), g_int)
        else:
            _, grads = multistep_loss_grad(model, z0, acts, targets)
            adam_step(opt, model.net.params(), grads)


def run_episode(env, dynamics, budget, schedule, seed, explore=True):
    """One MPC episode on ``env``; returns ``(Episode, success, mean_reward)``."""
    z = env.reset()
    k = env.config.action_dim
    cost = ReorientCost(env.task, env.state_dim, env.goal_xy)
    states, actions, rewards = [z], [], []
    init = ActionDistribution(np.zeros((budget.horizon, k)), np.full((budget.horizon, k), schedule.init_std))
    for t in range(schedule.episode_steps):
        plan = cem_refine(dynamics, init, z, cost, budget, seed=seed * 1000 + t)
        a = plan.actions[0]
        z = env.step(a)
        actions.append(a)
        states.append(z)
        rewards.append(env.reward())
    ep = Episode(np.array(states), np.array(actions))
    return ep, env.success(), float(np.mean(rewards))


def online_adapt(env, internal, schedule=None, budget=IN_HAND_BUDGET, learner="factorized",
                 seed=0, external=None, log=None):
    """Plan, act, grow the buffer, retrain; repeated ``schedule.iterations`` times.

    ``learner`` picks the model being learned: ``factorized`` (internal model
    frozen), ``end2end`` (internal model co-trained), ``monolithic`` (one
    ``(H + O + K)``-input network, one-step loss) or ``monolithic_msl`` (same
    network, multi-step loss). The caller's ``internal`` model is never mutated.
    """
    if learner not in LEARNERS:
        raise ConfigError(f"unknown learner {learner!r}; choose from {LEARNERS}")
    schedule = schedule or AdaptSchedule()
    if internal is None and learner in ("factorized", "end2end"):
        raise ConfigError(f"learner {learner!r} needs a pretrained internal model")
    internal = internal.copy() if internal is not None else None
    model, dynamics = _init_model(learner, env, internal, schedule, seed)
    if external is not None and learner in ("factorized", "end2end"):
        model = external.copy()
        dynamics = FactorizedDynamics(internal, model)
    buffer = Dataset([], env.joint_dim, env.config.action_dim, hand=env.config.name, mode=env.mode, seed=seed)
    opt = AdamState.for_params(model.net.params(), lr=schedule.lr)
    opt_int = AdamState.for_params(internal.net.params(), lr=schedule.lr) if learner == "end2end" else None
    rng = np.random.default_rng(seed)
    curve, env_steps = [], 0
    for it in range(schedule.iterations):
        wins, rewards = 0, []
        for r in range(schedule.rollouts):
            ep, ok, mean_r = run_episode(env, dynamics, budget, schedule, seed=(seed * 7919 + it) * 100 + r)
            buffer.episodes.append(ep)
            wins += int(ok)
            rewards.append(mean_r)
            env_steps += len(ep)
        curve.append((it, env_steps, wins / schedule.rollouts, float(np.mean(rewards))))
        if log is not None:
            log(curve[-1])
        if it == 0:
            _fit_normalization(learner, model, internal, buffer)
        _train_round(learner, model, internal, buffer, schedule, opt, opt_int, rng)
    return AdaptResult(learner, model, curve, buffer, internal)


def monolithic_baseline(env, schedule=None, budget=IN_HAND_BUDGET, multistep=True, seed=0, log=None):
    """Single ``(s, x, a) -> (s', x')`` network learned with the same loop."""
    learner = "monolithic_msl" if multistep else "monolithic"
    return online_adapt(env, None, schedule, budget, learner=learner, seed=seed, log=log)


def curve_csv_rows(result):
    rows = [("iteration", "env_steps", "success_rate", "mean_reward")]
    rows.extend((it, steps, f"{rate:.6f}", f"{rew:.6f}") for it, steps, rate, rew in result.curve)
    return rows
