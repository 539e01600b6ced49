"""Experiment configuration: nested dataclasses loaded from JSON or YAML."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import yaml

from .internal import TrainConfig
from .planning import QUASI_STATIC_BUDGET, SEQUENTIAL_BUDGET, PlanBudget
from .sim import MODES, ConfigError, load_hand

PLANNERS = ("ours", "fm_cem", "fm_rs", "fm_bgd")


@dataclass
class DataConfig:
    episodes: int = 1000
    steps_per_episode: int = 10


@dataclass
class ModelConfig:
    hidden: tuple = (128, 128)
    steps: int = 3000
    lr: float = 1e-3
    batch_size: int = 256
    horizon: int = 1
    discount: float = 0.95
    activation: str = "tanh"

    def train_config(self, seed):
        return TrainConfig(horizon=self.horizon, discount=self.discount, lr=self.lr, steps=self.steps,
                           batch_size=self.batch_size, hidden=tuple(self.hidden),
                           activation=self.activation, seed=seed)


@dataclass
class InHandConfig:
    goal_z: float = 0.5
    goal_choices: tuple = (-0.6, -0.3, 0.3, 0.6)  # empty: always goal_z
    iterations: int = 50
    rollouts: int = 10
    episode_steps: int = 10
    train_steps: int = 100
    horizon: int = 5
    lr: float = 1e-3
    hidden: tuple = (64, 64)
    learners: tuple = ("factorized", "monolithic_msl")
    budget: dict = field(default_factory=lambda: {"horizon": 4, "cem_iterations": 3, "samples": 200,
                                                  "elites": 20, "beta": 0.2})
    success_level: float = 0.6


@dataclass
class AblateDataConfig:
    hands: tuple = ("robotiq", "allegro", "shadowhand", "myohand")
    sizes: tuple = (2500, 5000, 10000, 20000, 40000)
    eval_transitions: int = 5000


@dataclass
class AblateBudgetConfig:
    points: tuple = ((100, 2), (200, 3), (400, 4), (600, 5))
    episodes: int = 20


@dataclass
class GestureConfig:
    program: Optional[str] = None
    request: Optional[str] = None
    offline: bool = True
    endpoint: str = "https://api.openai.com/v1/chat/completions"
    model: str = "gpt-4"
    api_key_env: str = "OPENAI_API_KEY"
    timeout: float = 60.0
    canned_dir: Optional[str] = None
    exemplars: tuple = ("thumbup", "ok")


@dataclass
class ExperimentConfig:
    hand: object = "allegro"
    setting: str = "quasi_static"
    planner: str = "ours"
    planners: tuple = ()
    budget: Optional[dict] = None
    episodes: int = 100
    seeds: tuple = (0,)
    max_steps: int = 10
    threshold: Optional[float] = None
    data: DataConfig = field(default_factory=DataConfig)
    forward: ModelConfig = field(default_factory=ModelConfig)
    inverse: ModelConfig = field(default_factory=ModelConfig)
    dataset: Optional[str] = None
    forward_model: Optional[str] = None
    inverse_model: Optional[str] = None
    train: bool = True
    inhand: InHandConfig = field(default_factory=InHandConfig)
    ablate_data: AblateDataConfig = field(default_factory=AblateDataConfig)
    ablate_budget: AblateBudgetConfig = field(default_factory=AblateBudgetConfig)
    gesture: GestureConfig = field(default_factory=GestureConfig)

    def __post_init__(self):
        if self.setting not in MODES:
            raise ConfigError(f"setting must be one of {MODES}, got {self.setting!r}")
        if self.planner not in PLANNERS:
            raise ConfigError(f"planner must be one of {PLANNERS}, got {self.planner!r}")
        for p in self.planners:
            if p not in PLANNERS:
                raise ConfigError(f"planners must be drawn from {PLANNERS}, got {p!r}")
        if self.episodes < 1:
            raise ConfigError("episodes must be >= 1")
        if not self.seeds:
            raise ConfigError("need at least one seed")
        if self.max_steps < 0:
            raise ConfigError("max_steps must be >= 0")
        self.resolved_budget()

    def hand_config(self):
        hand = load_hand(self.hand)
        if self.threshold is not None:
            hand = hand.with_updates(success_threshold=float(self.threshold))
        return hand

    def resolved_budget(self):
        base = QUASI_STATIC_BUDGET if self.setting == "quasi_static" else SEQUENTIAL_BUDGET
        try:
            return dataclasses.replace(base, **(self.budget or {}))
        except (TypeError, ValueError) as e:
            raise ConfigError(f"bad budget: {e}") from e

    def to_dict(self):
        d = _plain(dataclasses.asdict(self))
        d["budget"] = dataclasses.asdict(self.resolved_budget())
        return d


def _plain(v):
    if isinstance(v, dict):
        return {k: _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if isinstance(v, float) and v == float("inf"):
        return "inf"
    return v


def _build(cls, d, where):
    if not isinstance(d, dict):
        raise ConfigError(f"{where}: expected a mapping")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(d) - set(fields)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    kw = {}
    for name, value in d.items():
        sub = _NESTED.get((cls, name))
        if sub is not None:
            kw[name] = _build(sub, value, f"{where}.{name}")
        elif isinstance(value, list):
            kw[name] = tuple(tuple(x) if isinstance(x, list) else x for x in value)
        elif value == "inf":
            kw[name] = float("inf")
        else:
            kw[name] = value
    try:
        return cls(**kw)
    except TypeError as e:
        raise ConfigError(f"{where}: {e}") from e


_NESTED = {
    (ExperimentConfig, "data"): DataConfig,
    (ExperimentConfig, "forward"): ModelConfig,
    (ExperimentConfig, "inverse"): ModelConfig,
    (ExperimentConfig, "inhand"): InHandConfig,
    (ExperimentConfig, "ablate_data"): AblateDataConfig,
    (ExperimentConfig, "ablate_budget"): AblateBudgetConfig,
    (ExperimentConfig, "gesture"): GestureConfig,
}


def config_from_dict(d):
    cfg = _build(ExperimentConfig, d, "config")
    cfg.hand_config()
    return cfg


def load_config(path):
    """Read a JSON or YAML experiment file; any problem raises ``ConfigError``."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    try:
        d = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as e:
        raise ConfigError(f"cannot parse config {path}: {e}") from e
    return config_from_dict(d or {})
