"""Gesture synthesis: one quasi-static action that minimizes a cost program."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..planning import PlanBudget, bidirectional_plan
from ..sim import SimState, env_step, reset_angles
from .dsl import ProgramCost, eval_cost

GESTURE_BUDGET = PlanBudget(horizon=1, cem_iterations=5, samples=400, elites=20, beta=0.1)


@dataclass
class GestureResult:
    action: np.ndarray
    tips: np.ndarray
    cost: float
    predicted_cost: float
    source: str

    def to_dict(self):
        return {"action": self.action.tolist(), "tips": self.tips.tolist(),
                "cost": self.cost, "predicted_cost": self.predicted_cost,
                "program": self.source}


def inverse_anchor(prog, anchors):
    """Lowest-cost pose among ``anchors``; the inverse model aims at it."""
    anchors = np.asarray(anchors, dtype=float)
    return anchors[int(np.argmin(eval_cost(prog, anchors)))]


def generate_gesture(fm, im, prog, config, anchors, budget=GESTURE_BUDGET, seed=0):
    """Plan from the neutral pose with the program as cost and verify in the simulator.

    ``anchors`` are reachable fingertip poses (for example the exploration
    data); the inverse model proposes an action towards the best of them and
    CEM through ``fm`` refines it against the program itself.
    """
    if budget.horizon != 1:
        budget = PlanBudget(1, budget.cem_iterations, budget.samples, budget.elites, budget.beta)
    start = SimState.from_angles(config, reset_angles(config))
    target = inverse_anchor(prog, anchors)
    plan = bidirectional_plan(fm, im, start.tips, target, budget, cost=ProgramCost(prog), seed=seed)
    action = plan.actions[0]
    tips = env_step(start, action, "quasi_static", config).tips
    return GestureResult(action, tips, float(eval_cost(prog, tips)), float(plan.cost), prog.source)
