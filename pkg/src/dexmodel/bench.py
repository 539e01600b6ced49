"""Experiment runners: reach benchmark, ablations, in-hand curves, synergies.

Every runner is a pure function of its config and seeds. Episodes run in
order, and each episode draws its target and actuation noise from its own
seed, so results do not depend on execution order.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .factorized import AdaptSchedule, InHandEnv, ReorientTask, default_object, online_adapt
from .internal import collect_random, estimate_sigma, train_forward, train_inverse
from .io import load_dataset, load_model
from .planning import (PlanBudget, ReachCost, bidirectional_plan, cem_plan, gradient_plan, mpc_rollout,
                       random_shoot)
from .sim import ConfigError, ReachEnv, reach_error, sample_reachable_target
from .synergy import analyze_synergies

BGD_BATCH = 10
BGD_LR = 0.05


def episode_seed(seed, episode):
    return int(seed) * 100_003 + int(episode)


def target_seed(seed, episode):
    return 1_000_000 + episode_seed(seed, episode)


# -- models ---------------------------------------------------------------------


def explore(cfg, seed):
    hand = cfg.hand_config()
    return collect_random(hand, cfg.setting, cfg.data.episodes, cfg.data.steps_per_episode, seed=seed)


def obtain_models(cfg, seed, need_inverse=True):
    """Models from the configured files, trained on exploration data where missing."""
    hand = cfg.hand_config()
    fm = load_model(cfg.forward_model, hand) if cfg.forward_model else None
    im = load_model(cfg.inverse_model, hand) if need_inverse and cfg.inverse_model else None
    if fm is not None and (im is not None or not need_inverse):
        return fm, im, None
    if not cfg.train:
        missing = "forward_model" if fm is None else "inverse_model"
        raise ConfigError(f"{missing} file required when training is disabled")
    data = load_dataset(cfg.dataset) if cfg.dataset else explore(cfg, seed)
    if fm is None:
        fm = train_forward(data, cfg.forward.train_config(seed))
    if need_inverse and im is None:
        im = train_inverse(data, cfg.inverse.train_config(seed))
        estimate_sigma(im, data)
    return fm, im, data


# -- planners -------------------------------------------------------------------


def make_planner(name, fm, im, budget, seed):
    """``planner(s, target, step) -> PlanResult`` spending ``budget.planning_samples`` model queries."""
    k = fm.action_dim

    def ours(s, target, step):
        return bidirectional_plan(fm, im, s, target, budget, seed=seed + step)

    def fm_cem(s, target, step):
        return cem_plan(fm, s, target, budget, seed=seed + step)

    def fm_rs(s, target, step):
        return random_shoot(fm, s, ReachCost(target), budget.planning_samples, budget.horizon, k,
                            seed=seed + step)

    def fm_bgd(s, target, step):
        rng = np.random.default_rng(seed + step)
        batch = math.gcd(budget.planning_samples, BGD_BATCH)
        init = rng.uniform(-1.0, 1.0, (batch, budget.horizon, k))
        return gradient_plan(fm, s, init, ReachCost(target), budget.planning_samples // batch, BGD_LR)

    planners = {"ours": ours, "fm_cem": fm_cem, "fm_rs": fm_rs, "fm_bgd": fm_bgd}
    if name not in planners:
        raise ConfigError(f"unknown planner {name!r}")
    if name == "ours" and im is None:
        raise ConfigError("planner 'ours' needs an inverse model")
    return planners[name]


# -- reach benchmark ------------------------------------------------------------


@dataclass
class MetricsRow:
    hand: str
    planner: str
    setting: str
    success_rate: float
    reach_error: float
    planning_samples: int
    success_rate_ci: float = 0.0
    reach_error_ci: float = 0.0
    per_seed: list = dataclasses.field(default_factory=list)

    def to_dict(self):
        return dataclasses.asdict(self)


def _ci(values):
    v = np.asarray(values, dtype=float)
    return float(1.96 * v.std(ddof=1) / math.sqrt(len(v))) if len(v) > 1 else 0.0


def reach_episodes(hand, setting, planner, episodes, seed, max_steps):
    """Per-episode dicts with final error (sim units), success and samples."""
    out = []
    for ep in range(episodes):
        target = sample_reachable_target(hand, target_seed(seed, ep))
        env = ReachEnv(hand, setting, seed=episode_seed(seed, ep))
        if setting == "quasi_static":
            plan = planner(env.state.tips, target, 0)
            tips = env.step(plan.actions[0])
            err = float(reach_error(hand, tips, target))
            out.append({"episode": ep, "final_error": err, "success": err < hand.success_threshold,
                        "samples": int(plan.samples), "actions": [plan.actions[0].tolist()]})
        else:
            rec = mpc_rollout(env, planner, target, max_steps)
            out.append({"episode": ep, "final_error": rec.final_error, "success": rec.success,
                        "samples": max(rec.samples_per_step, default=0),
                        "actions": [a.tolist() for a in rec.actions]})
    return out


def run_reach_benchmark(cfg, planners=None, log=None):
    """One :class:`MetricsRow` per planner, aggregated over ``cfg.seeds``.

    S.R. is the percentage of episodes whose final mean fingertip error is
    below the hand's threshold; R.E. is that error in centimetres; P.S. is the
    planning samples per planning step.
    """
    hand = cfg.hand_config()
    budget = cfg.resolved_budget()
    planners = planners or cfg.planners or (cfg.planner,)
    per_planner = {p: [] for p in planners}
    for seed in cfg.seeds:
        need_inverse = "ours" in planners
        fm, im, _ = obtain_models(cfg, seed, need_inverse)
        for p in planners:
            eps = reach_episodes(hand, cfg.setting, make_planner(p, fm, im, budget, seed),
                                 cfg.episodes, seed, cfg.max_steps)
            sr = 100.0 * float(np.mean([e["success"] for e in eps]))
            re = float(np.mean([e["final_error"] for e in eps])) / hand.units_per_cm
            per_planner[p].append({"seed": seed, "success_rate": sr, "reach_error": re,
                                   "planning_samples": max(e["samples"] for e in eps)})
            if log is not None:
                log(f"{hand.name} {p} seed={seed} S.R.={sr:.1f} R.E.={re:.3f}")
    rows = []
    for p, seeds in per_planner.items():
        sr = [r["success_rate"] for r in seeds]
        re = [r["reach_error"] for r in seeds]
        rows.append(MetricsRow(hand.name, p, cfg.setting, float(np.mean(sr)), float(np.mean(re)),
                               max(r["planning_samples"] for r in seeds), _ci(sr), _ci(re), seeds))
    return rows


def metrics_csv_rows(rows):
    header = ("hand", "planner", "setting", "success_rate", "success_rate_ci", "reach_error_cm",
              "reach_error_ci", "planning_samples")
    body = [(r.hand, r.planner, r.setting, r.success_rate, r.success_rate_ci, r.reach_error,
             r.reach_error_ci, r.planning_samples) for r in rows]
    return header, body


# -- ablations ------------------------------------------------------------------


def _slope(x, y):
    return float(np.polyfit(x, y, 1)[0])


def ablate_data_dim(cfg, log=None):
    """Held-out one-step MSE for every (hand, N, seed) cell.

    Each seed collects the largest training set once and trains on nested
    prefixes of it; every cell of a hand and seed is scored on the same
    independently collected evaluation set.
    """
    ad = cfg.ablate_data
    if not ad.hands or not ad.sizes:
        raise ConfigError("ablate_data needs at least one hand and one size")
    steps = cfg.data.steps_per_episode
    cells, summary = [], []
    for name in ad.hands:
        hand = dataclasses.replace(cfg, hand=name).hand_config()
        for seed in cfg.seeds:
            n_max = max(ad.sizes)
            full = collect_random(hand, cfg.setting, -(-n_max // steps), steps, seed=seed)
            held = collect_random(hand, cfg.setting, -(-ad.eval_transitions // steps), steps,
                                  seed=10_000 + seed)
            for n in sorted(ad.sizes):
                fm = train_forward(full.head(n), cfg.forward.train_config(seed), eval_data=held)
                mse = fm.report["heldout_mse"]
                cells.append({"hand": name, "K": hand.action_dim, "N": n, "seed": seed, "mse": mse})
                if log is not None:
                    log(f"{name} K={hand.action_dim} N={n} seed={seed} mse={mse:.3e}")
        mean = [float(np.mean([c["mse"] for c in cells if c["hand"] == name and c["N"] == n]))
                for n in sorted(ad.sizes)]
        row = {"hand": name, "K": hand.action_dim, "sizes": sorted(ad.sizes), "mean_mse": mean}
        if len(ad.sizes) > 1:
            row["slope_log_mse_log_n"] = _slope(np.log(sorted(ad.sizes)), np.log(mean))
            row["spearman"] = float(stats.spearmanr(sorted(ad.sizes), mean)[0])
        summary.append(row)
    return cells, summary


def budget_episode_errors(hand, fm, im, budget, planner, episodes, seed):
    plan = make_planner(planner, fm, im, budget, seed)
    eps = reach_episodes(hand, "quasi_static", plan, episodes, seed, 1)
    return [e["final_error"] for e in eps]


def ablate_budget(cfg, log=None):
    """Quasi-static reach error of ours vs plain CEM over a (samples, iterations) grid."""
    hand = cfg.hand_config()
    base = cfg.resolved_budget()
    rows, summary = [], []
    for seed in cfg.seeds:
        fm, im, _ = obtain_models(cfg, seed)
        for samples, iters in cfg.ablate_budget.points:
            budget = dataclasses.replace(base, samples=int(samples), cem_iterations=int(iters),
                                         elites=min(base.elites, int(samples)))
            errs = {}
            for planner in ("ours", "fm_cem"):
                errs[planner] = budget_episode_errors(hand, fm, im, budget, planner,
                                                      cfg.ablate_budget.episodes, seed)
                for ep, e in enumerate(errs[planner]):
                    rows.append({"seed": seed, "planner": planner, "samples": int(samples),
                                 "iterations": int(iters), "episode": ep,
                                 "reach_error_cm": e / hand.units_per_cm})
            diff = np.subtract(errs["ours"], errs["fm_cem"])
            p = float(stats.ttest_rel(errs["ours"], errs["fm_cem"]).pvalue) if np.any(diff) else 1.0
            entry = {"seed": seed, "samples": int(samples), "iterations": int(iters),
                     "ours_cm": float(np.mean(errs["ours"])) / hand.units_per_cm,
                     "fm_cem_cm": float(np.mean(errs["fm_cem"])) / hand.units_per_cm,
                     "paired_p": p if math.isfinite(p) else 1.0}
            summary.append(entry)
            if log is not None:
                log(f"N_s={samples} N_cem={iters} ours={entry['ours_cm']:.3f} cm "
                    f"fm_cem={entry['fm_cem_cm']:.3f} cm p={entry['paired_p']:.2g}")
    return rows, summary


# -- in-hand --------------------------------------------------------------------


def inhand_setup(cfg, seed):
    """Environment, schedule, budget and pretrained internal model for reorientation."""
    hand = cfg.hand_config()
    ih = cfg.inhand
    params, start_xy = default_object(hand)
    task = ReorientTask(goal_z=ih.goal_z, goal_choices=tuple(ih.goal_choices) or None)
    env = InHandEnv(hand, task, params, start_xy, seed=seed)
    schedule = AdaptSchedule(iterations=ih.iterations, rollouts=ih.rollouts, episode_steps=ih.episode_steps,
                             train_steps=ih.train_steps, horizon=ih.horizon, lr=ih.lr,
                             hidden=tuple(ih.hidden))
    try:
        budget = PlanBudget(**ih.budget)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"bad inhand budget: {e}") from e
    if cfg.forward_model is not None:
        internal = load_model(cfg.forward_model, hand)
    else:
        data = collect_random(hand, "sequential", cfg.data.episodes, cfg.data.steps_per_episode, seed=seed)
        internal = train_forward(data, cfg.forward.train_config(seed))
    return env, schedule, budget, internal


def bench_inhand(cfg, log=None):
    """Success curves per learner and seed plus env steps to the success level."""
    curves, summary = [], []
    for seed in cfg.seeds:
        env, schedule, budget, internal = inhand_setup(cfg, seed)
        for learner in cfg.inhand.learners:
            env.reseed(seed)
            res = online_adapt(env, internal, schedule, budget, learner=learner, seed=seed)
            for it, steps, rate, rew in res.curve:
                curves.append({"learner": learner, "seed": seed, "iteration": it, "env_steps": steps,
                               "success_rate": rate, "mean_reward": rew})
            reached = res.steps_to(cfg.inhand.success_level)
            summary.append({"learner": learner, "seed": seed,
                            "steps_to_level": None if math.isinf(reached) else int(reached),
                            "final_success": res.curve[-1][2] if res.curve else 0.0,
                            "model_input_width": res.model.net.in_dim})
            if log is not None:
                log(f"{learner} seed={seed} steps_to_{cfg.inhand.success_level}={reached}")
    return curves, summary


# -- synergies ------------------------------------------------------------------


def synergy_log(cfg, seed, log=None):
    """Planned actions of quasi-static reach episodes (the analysed action log)."""
    hand = cfg.hand_config()
    qcfg = dataclasses.replace(cfg, setting="quasi_static")
    fm, im, _ = obtain_models(qcfg, seed, need_inverse=cfg.planner == "ours")
    planner = make_planner(cfg.planner, fm, im, qcfg.resolved_budget(), seed)
    eps = reach_episodes(hand, "quasi_static", planner, cfg.episodes, seed, 1)
    return np.array([a for e in eps for a in e["actions"]])


def run_synergy(cfg, seed, log=None):
    actions = synergy_log(cfg, seed, log)
    return actions, analyze_synergies(actions)
