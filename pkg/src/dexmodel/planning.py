"""Sampling- and gradient-based action planners over a learned dynamics model.

A dynamics model here is anything with ``rollout(s0, actions)`` mapping a
start state and a batch of action sequences ``(N, T, K)`` to predicted
trajectories ``(N, T + 1, D)``. Costs map ``(trajectories, actions)`` to one
number per candidate; lower is better.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np


class PlanningError(RuntimeError):
    pass


@dataclass
class ActionDistribution:
    """Independent Gaussian per step and action dimension, clipped to [-1, 1] when sampled."""

    means: np.ndarray
    stds: np.ndarray

    def __post_init__(self):
        self.means = np.atleast_2d(np.asarray(self.means, dtype=float))
        self.stds = np.atleast_2d(np.asarray(self.stds, dtype=float))
        if self.means.shape != self.stds.shape:
            raise ValueError("means and stds must share a (T, K) shape")
        if np.any(self.stds < 0):
            raise ValueError("stds must be non-negative")

    @property
    def horizon(self):
        return self.means.shape[0]

    def sample(self, n, rng):
        noise = rng.standard_normal((n,) + self.means.shape)
        return np.clip(self.means + self.stds * noise, -1.0, 1.0)

    def expand(self, horizon):
        """Tile a single-step distribution across ``horizon`` steps."""
        if self.horizon != 1:
            raise ValueError("only single-step distributions can be expanded")
        return ActionDistribution(np.repeat(self.means, horizon, axis=0),
                                  np.repeat(self.stds, horizon, axis=0))

    def copy(self):
        return ActionDistribution(self.means.copy(), self.stds.copy())


@dataclass(frozen=True)
class PlanBudget:
    horizon: int = 1
    cem_iterations: int = 5
    samples: int = 400
    elites: int = 20
    beta: float = 0.1

    def __post_init__(self):
        if self.horizon < 1 or self.cem_iterations < 0 or self.samples < 1:
            raise ValueError("horizon, iterations and samples must be positive")
        if not 1 <= self.elites <= self.samples:
            raise ValueError("need 1 <= elites <= samples")
        if not 0.0 < self.beta <= 1.0:
            raise ValueError("beta must lie in (0, 1]")

    @property
    def planning_samples(self):
        return self.cem_iterations * self.samples


QUASI_STATIC_BUDGET = PlanBudget(horizon=1, cem_iterations=5, samples=400, elites=20, beta=0.1)
SEQUENTIAL_BUDGET = PlanBudget(horizon=3, cem_iterations=3, samples=600, elites=20, beta=0.2)


@dataclass
class PlanResult:
    actions: np.ndarray
    cost: float
    samples: int
    elite_costs: list = field(default_factory=list)
    best_costs: list = field(default_factory=list)
    distribution: Optional[ActionDistribution] = None


# -- costs ---------------------------------------------------------------------


class ReachCost:
    """Terminal fingertip distance plus ``shaping`` x mean per-step distance."""

    def __init__(self, target, shaping=0.1):
        self.target = np.asarray(target, dtype=float)
        self.shaping = shaping

    def __call__(self, states, actions=None):
        d = np.linalg.norm(states[..., 1:, :] - self.target, axis=-1)
        return d[..., -1] + self.shaping * d.mean(axis=-1)

    def grad(self, states, actions=None):
        diff = states[..., 1:, :] - self.target
        norm = np.linalg.norm(diff, axis=-1, keepdims=True)
        unit = np.divide(diff, norm, out=np.zeros_like(diff), where=norm > 0)
        horizon = diff.shape[-2]
        g = np.zeros_like(states)
        g[..., 1:, :] = self.shaping / horizon * unit
        g[..., -1, :] += unit[..., -1, :]
        return g


class SquaredTerminalCost:
    """``||s_T - target||^2``; smooth everywhere, used for gradient checks."""

    def __init__(self, target):
        self.target = np.asarray(target, dtype=float)

    def __call__(self, states, actions=None):
        d = states[..., -1, :] - self.target
        return np.sum(d * d, axis=-1)

    def grad(self, states, actions=None):
        g = np.zeros_like(states)
        g[..., -1, :] = 2.0 * (states[..., -1, :] - self.target)
        return g


def _evaluate(dynamics, s0, cost, candidates):
    traj = dynamics.rollout(s0, candidates)
    costs = np.asarray(cost(traj, candidates), dtype=float)
    return np.where(np.isnan(costs), np.inf, costs)


# -- planners ------------------------------------------------------------------


def cem_refine(dynamics, init, s0, cost, budget, seed=0, extra_candidates=None):
    """Cross-entropy refinement of ``init`` with a moving-average update.

    Each iteration samples ``budget.samples`` sequences, keeps the
    ``budget.elites`` cheapest (stable order, so ties go to the lower sample
    index) and moves the distribution towards the elite statistics::

        new = beta * old + (1 - beta) * elite_stat

    ``extra_candidates`` are scored once up front without counting towards
    the sample budget. The best sequence ever scored is returned.
    """
    if init.horizon != budget.horizon:
        raise ValueError(f"init horizon {init.horizon} != budget horizon {budget.horizon}")
    rng = np.random.default_rng(seed)
    dist = init.copy()
    best_cost, best_actions = np.inf, None
    if extra_candidates is not None:
        extra = np.asarray(extra_candidates, dtype=float).reshape((-1,) + dist.means.shape)
        costs = _evaluate(dynamics, s0, cost, extra)
        i = int(np.argmin(costs))
        if costs[i] < best_cost:
            best_cost, best_actions = float(costs[i]), extra[i].copy()
    elite_trace, best_trace = [], []
    beta = budget.beta
    for _ in range(budget.cem_iterations):
        cand = dist.sample(budget.samples, rng)
        costs = _evaluate(dynamics, s0, cost, cand)
        if not np.any(np.isfinite(costs)):
            raise PlanningError("every candidate cost is NaN or infinite")
        order = np.argsort(costs, kind="stable")[:budget.elites]
        elites = cand[order]
        if costs[order[0]] < best_cost:
            best_cost, best_actions = float(costs[order[0]]), cand[order[0]].copy()
        elite_trace.append(float(np.mean(costs[order])))
        best_trace.append(best_cost)
        dist = ActionDistribution(
            beta * dist.means + (1.0 - beta) * elites.mean(axis=0),
            beta * dist.stds + (1.0 - beta) * elites.std(axis=0),
        )
    if best_actions is None:
        best_actions = np.clip(dist.means, -1.0, 1.0)
        best_cost = float(_evaluate(dynamics, s0, cost, best_actions[None])[0])
    return PlanResult(best_actions, best_cost, budget.planning_samples,
                      elite_trace, best_trace, dist)


def wide_distribution(horizon, action_dim, std=1.0):
    """Plain-CEM start: zero mean, std of half the [-1, 1] box width."""
    return ActionDistribution(np.zeros((horizon, action_dim)), np.full((horizon, action_dim), std))


def bidirectional_plan(fm, im, s, s_target, budget, cost=None, seed=0, warm_start=None):
    """Inverse-model proposal refined by CEM through the forward model.

    The inverse model's single-step Gaussian is tiled over the horizon; its
    mean sequence is scored as a free extra candidate.
    """
    from .internal import inverse_distribution

    cost = ReachCost(s_target) if cost is None else cost
    init = inverse_distribution(im, s, s_target).expand(budget.horizon)
    if warm_start is not None:
        init = warm_start
    seed_seq = np.clip(init.means, -1.0, 1.0)[None]
    return cem_refine(fm, init, s, cost, budget, seed=seed, extra_candidates=seed_seq)


def cem_plan(fm, s, s_target, budget, cost=None, seed=0, init_std=1.0):
    cost = ReachCost(s_target) if cost is None else cost
    init = wide_distribution(budget.horizon, fm.action_dim, init_std)
    return cem_refine(fm, init, s, cost, budget, seed=seed)


def random_shoot(dynamics, s0, cost, n_samples, horizon, action_dim, seed=0, chunk=4096):
    """Best of ``n_samples`` uniform sequences; a prefix of samples is shared across ``n``."""
    rng = np.random.default_rng(seed)
    cand = rng.uniform(-1.0, 1.0, size=(n_samples, horizon, action_dim))
    costs = np.concatenate([
        _evaluate(dynamics, s0, cost, cand[i:i + chunk]) for i in range(0, n_samples, chunk)
    ])
    i = int(np.argmin(costs))
    return PlanResult(cand[i].copy(), float(costs[i]), n_samples, [], [float(costs[i])])


def gradient_plan(fm, s0, init, cost, steps, lr, seed=0):
    """Projected gradient descent on action sequences through the model rollout.

    ``init`` is one sequence ``(T, K)`` or a batch ``(B, T, K)``; each batch
    member is optimized independently and the cheapest final one is returned.
    """
    acts = np.asarray(init, dtype=float)
    single = acts.ndim == 2
    acts = np.clip(acts[None] if single else acts.copy(), -1.0, 1.0)
    for _ in range(steps):
        traj, backprop = fm.rollout_with_backprop(s0, acts)
        d_actions = backprop(cost.grad(traj, acts))
        if not np.all(np.isfinite(d_actions)):
            raise ArithmeticError("non-finite action gradient")
        acts = np.clip(acts - lr * d_actions, -1.0, 1.0)
    costs = _evaluate(fm, s0, cost, acts)
    i = int(np.argmin(costs))
    return PlanResult(acts[i].copy(), float(costs[i]), acts.shape[0] * steps, [], [float(costs[i])])


def action_sequence_gradient(fm, s0, actions, cost):
    """dCost/dActions for one sequence, through the model rollout."""
    acts = np.asarray(actions, dtype=float)[None]
    traj, backprop = fm.rollout_with_backprop(s0, acts)
    return backprop(cost.grad(traj, acts))[0]


# -- model-predictive control ----------------------------------------------------


@dataclass
class EpisodeRecord:
    states: list
    actions: list
    errors: list
    success: bool
    steps: int
    samples: int
    final_error: float
    per_finger_error: list
    samples_per_step: list = field(default_factory=list)

    def to_dict(self):
        return {
            "success": self.success,
            "steps": self.steps,
            "samples": self.samples,
            "final_error": self.final_error,
            "per_finger_error": list(self.per_finger_error),
            "errors": list(self.errors),
            "samples_per_step": list(self.samples_per_step),
        }


Planner = Callable[[np.ndarray, np.ndarray, int], PlanResult]


def mpc_rollout(env, planner, target, max_steps, replan_every=1):
    """Plan, execute the first action(s), observe the true state, repeat.

    Stops early once the mean fingertip error falls below the hand's success
    threshold.
    """
    from .sim import per_finger_error, reach_error

    cfg = env.config
    s = env.state.tips.copy()
    states, actions, errors, used = [s], [], [float(reach_error(cfg, s, target))], []
    step = 0
    while errors[-1] >= cfg.success_threshold and step < max_steps:
        plan = planner(s, target, step)
        used.append(int(plan.samples))
        for a in plan.actions[:replan_every]:
            s = env.step(a)
            actions.append(np.asarray(a))
            states.append(s)
            errors.append(float(reach_error(cfg, s, target)))
            step += 1
            if errors[-1] < cfg.success_threshold or step >= max_steps:
                break
    return EpisodeRecord(
        states=states,
        actions=actions,
        errors=errors,
        success=bool(errors[-1] < cfg.success_threshold),
        steps=step,
        samples=int(sum(used)),
        final_error=errors[-1],
        per_finger_error=per_finger_error(cfg, s, target).tolist(),
        samples_per_step=used,
    )
