"""Kinematic dexterous-hand simulator and a planar in-hand object model.

Each finger is a planar chain of flexion links, optionally preceded by an
abduction joint that swings the chain's plane sideways, mounted on a rigid
base frame attached to the palm. The observable hand state is the flat vector
of fingertip positions (3 per finger). Joints follow commanded targets with a
first-order response; three actuation regimes map actions to targets:

* ``direct``  -- one actuator per joint, affine onto the joint limits;
* ``coupled`` -- fewer actuators than joints through a 0/1 coupling matrix;
* ``tendon``  -- more actuators than joints; activations ``clip(a, 0, 1)``
  pull through a signed tendon matrix around a rest posture.
"""

from __future__ import annotations

import copy
import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

MODES = ("quasi_static", "sequential")
ACTUATION = ("direct", "coupled", "tendon")


class DomainError(ValueError):
    pass


class ConfigError(ValueError):
    pass


def _rot_x(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def _rot_z(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


# finger local axes in the palm frame: forward -> +y, flexion -> -z
_CANONICAL = np.array([[0.0, 0.0, -1.0], [1.0, 0.0, 0.0], [0.0, -1.0, 0.0]])


def base_rotation(yaw, roll):
    """Finger base frame: canonical frame, rolled about its forward axis, then yawed in the palm."""
    return _rot_z(yaw) @ _CANONICAL @ _rot_x(roll)


@dataclass
class HandConfig:
    name: str
    num_fingers: int
    joints_per_finger: list[int]
    abduction: list[bool]
    link_lengths: list[list[float]]
    joint_limits: np.ndarray
    base_origins: np.ndarray
    base_yaw_roll: np.ndarray
    actuation_mode: str = "direct"
    coupling_matrix: Optional[np.ndarray] = None
    tendon_matrix: Optional[np.ndarray] = None
    rest_posture: Optional[np.ndarray] = None
    response_gain: float = 0.5
    skipped_frames_quasistatic: int = 50
    skipped_frames_sequential: int = 10
    success_threshold: float = 0.015
    actuator_scale: Optional[np.ndarray] = None
    finger_roles: dict = field(default_factory=dict)
    extension_directions: Optional[np.ndarray] = None
    units_per_cm: float = 0.01
    actuation_noise: float = 0.0

    def __post_init__(self):
        self.joint_limits = np.asarray(self.joint_limits, dtype=float).reshape(-1, 2)
        self.base_origins = np.asarray(self.base_origins, dtype=float).reshape(self.num_fingers, 3)
        self.base_yaw_roll = np.asarray(self.base_yaw_roll, dtype=float).reshape(self.num_fingers, 2)
        for name in ("coupling_matrix", "tendon_matrix", "rest_posture", "actuator_scale",
                     "extension_directions"):
            val = getattr(self, name)
            if val is not None:
                setattr(self, name, np.asarray(val, dtype=float))
        self.joints_per_finger = [int(j) for j in self.joints_per_finger]
        self.abduction = [bool(a) for a in self.abduction]
        self.link_lengths = [[float(x) for x in ls] for ls in self.link_lengths]
        self.validate()
        if self.actuator_scale is None:
            self.actuator_scale = np.ones(self.action_dim)
        if self.rest_posture is None:
            self.rest_posture = self.joint_limits.mean(axis=1)
        self._bases = [base_rotation(y, r) for y, r in self.base_yaw_roll]

    def validate(self):
        f = self.num_fingers
        if not (len(self.joints_per_finger) == len(self.abduction) == len(self.link_lengths) == f):
            raise ConfigError("per-finger lists must have num_fingers entries")
        for i in range(f):
            n_links = self.joints_per_finger[i] - int(self.abduction[i])
            if n_links < 1 or len(self.link_lengths[i]) != n_links:
                raise ConfigError(f"finger {i}: {n_links} flexion joints but {len(self.link_lengths[i])} links")
            if any(length <= 0 for length in self.link_lengths[i]):
                raise ConfigError(f"finger {i}: link lengths must be positive")
        if self.joint_limits.shape != (self.dof, 2):
            raise ConfigError(f"joint_limits must be ({self.dof}, 2)")
        if np.any(self.joint_limits[:, 0] > self.joint_limits[:, 1]):
            raise ConfigError("joint limits need lo <= hi")
        if self.actuation_noise < 0:
            raise ConfigError("actuation_noise must be non-negative")
        if self.success_threshold <= 0:
            raise ConfigError("success_threshold must be positive")
        if not 0.0 < self.response_gain <= 1.0:
            raise ConfigError("response_gain must lie in (0, 1]")
        if self.skipped_frames_quasistatic < 1 or self.skipped_frames_sequential < 1:
            raise ConfigError("skipped frames must be positive")
        if self.actuation_mode not in ACTUATION:
            raise ConfigError(f"unknown actuation mode {self.actuation_mode!r}")
        k = self.action_dim
        if self.actuation_mode == "coupled":
            if self.coupling_matrix is None or self.coupling_matrix.shape[0] != self.dof:
                raise ConfigError("coupled mode needs a DoF x K coupling_matrix")
            if not k < self.dof:
                raise ConfigError("coupled mode requires K < DoF")
        if self.actuation_mode == "tendon":
            if self.tendon_matrix is None or self.tendon_matrix.shape[0] != self.dof:
                raise ConfigError("tendon mode needs a DoF x K tendon_matrix")
            if not k > self.dof:
                raise ConfigError("tendon mode requires K > DoF")
        if self.actuator_scale is not None:
            if self.actuator_scale.shape != (k,):
                raise ConfigError(f"actuator_scale must have {k} entries")
            if np.any((self.actuator_scale < 0) | (self.actuator_scale > 1)):
                raise ConfigError("actuator_scale entries must lie in [0, 1]")

    @property
    def dof(self):
        return int(sum(self.joints_per_finger))

    @property
    def action_dim(self):
        if self.actuation_mode == "coupled":
            return int(self.coupling_matrix.shape[1])
        if self.actuation_mode == "tendon":
            return int(self.tendon_matrix.shape[1])
        return self.dof

    @property
    def state_dim(self):
        return 3 * self.num_fingers

    def skipped_frames(self, mode):
        if mode == "quasi_static":
            return self.skipped_frames_quasistatic
        if mode == "sequential":
            return self.skipped_frames_sequential
        raise ConfigError(f"unknown mode {mode!r}")

    def finger_slices(self):
        out, start = [], 0
        for n in self.joints_per_finger:
            out.append(slice(start, start + n))
            start += n
        return out

    def with_updates(self, **changes):
        return dataclasses.replace(self, **changes)

    def to_dict(self):
        d = {}
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            d[f.name] = v.tolist() if isinstance(v, np.ndarray) else v
        return d

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown hand config keys: {sorted(unknown)}")
        return cls(**d)


# -- kinematics ---------------------------------------------------------------


def _check_limits(config, q, tol=1e-9):
    lo, hi = config.joint_limits[:, 0], config.joint_limits[:, 1]
    if np.any(q < lo - tol) or np.any(q > hi + tol):
        raise DomainError("joint angles outside limits")


def forward_kinematics(config, joint_angles, check=True):
    """Fingertip positions, flattened to ``(..., 3 * num_fingers)``."""
    q = np.asarray(joint_angles, dtype=float)
    if q.shape[-1] != config.dof:
        raise DomainError(f"expected {config.dof} joint angles, got {q.shape[-1]}")
    if check:
        _check_limits(config, q)
    lead = q.shape[:-1]
    tips = np.empty(lead + (config.num_fingers, 3))
    for f, sl in enumerate(config.finger_slices()):
        qf = q[..., sl]
        if config.abduction[f]:
            abd, flex = qf[..., 0], qf[..., 1:]
        else:
            abd, flex = np.zeros(lead), qf
        lengths = np.asarray(config.link_lengths[f])
        phi = np.cumsum(flex, axis=-1)
        u = np.sum(lengths * np.cos(phi), axis=-1)
        v = np.sum(lengths * np.sin(phi), axis=-1)
        local = np.stack([u * np.cos(abd), v, -u * np.sin(abd)], axis=-1)
        tips[..., f, :] = config.base_origins[f] + local @ config._bases[f].T
    return tips.reshape(lead + (config.state_dim,))


def fk_jacobian(config, joint_angles):
    """Analytic d(fingertips)/d(joint angles), shape ``(H, DoF)``."""
    q = np.asarray(joint_angles, dtype=float)
    jac = np.zeros((config.state_dim, config.dof))
    for f, sl in enumerate(config.finger_slices()):
        qf = q[sl]
        if config.abduction[f]:
            abd, flex = qf[0], qf[1:]
        else:
            abd, flex = 0.0, qf
        lengths = np.asarray(config.link_lengths[f])
        phi = np.cumsum(flex)
        # tail sums: joint k moves every link from k outward
        du = -np.cumsum((lengths * np.sin(phi))[::-1])[::-1]
        dv = np.cumsum((lengths * np.cos(phi))[::-1])[::-1]
        u = np.sum(lengths * np.cos(phi))
        ca, sa = math.cos(abd), math.sin(abd)
        cols = np.stack([du * ca, dv, -du * sa], axis=0)
        rows = slice(3 * f, 3 * f + 3)
        rot = config._bases[f]
        start = sl.start
        if config.abduction[f]:
            jac[rows, start] = rot @ np.array([-u * sa, 0.0, -u * ca])
            start += 1
        jac[rows, start:sl.stop] = rot @ cols
    return jac


# -- actuation ----------------------------------------------------------------


def joint_targets(config, actions):
    """Joint-space targets commanded by ``actions`` (any leading batch shape)."""
    a = np.asarray(actions, dtype=float)
    if a.shape[-1] != config.action_dim:
        raise DomainError(f"expected {config.action_dim}-dim action, got {a.shape[-1]}")
    if np.any(np.isnan(a)):
        raise ArithmeticError("NaN action")
    a = np.clip(a, -1.0, 1.0) * config.actuator_scale
    lo, hi = config.joint_limits[:, 0], config.joint_limits[:, 1]
    if config.actuation_mode == "direct":
        frac = 0.5 * (a + 1.0)
    elif config.actuation_mode == "coupled":
        frac = (0.5 * (a + 1.0)) @ config.coupling_matrix.T
    else:
        activation = np.clip(a, 0.0, 1.0)
        return np.clip(config.rest_posture + activation @ config.tendon_matrix.T, lo, hi)
    return lo + frac * (hi - lo)


def step_joints(config, q, actions, mode, rng=None):
    """Advance joint angles through the mode's skipped frames (batched).

    With ``rng`` given and ``config.actuation_noise > 0`` each commanded
    target is jittered once per step by Gaussian noise of that std (radians).
    """
    target = joint_targets(config, actions)
    q = np.asarray(q, dtype=float)
    lo, hi = config.joint_limits[:, 0], config.joint_limits[:, 1]
    if rng is not None and config.actuation_noise > 0:
        target = np.clip(target + rng.normal(0.0, config.actuation_noise, target.shape), lo, hi)
    g = config.response_gain
    for _ in range(config.skipped_frames(mode)):
        q = np.clip(q + g * (target - q), lo, hi)
    return q


@dataclass(frozen=True)
class SimState:
    joint_angles: np.ndarray
    tips: np.ndarray
    frame: int = 0

    @classmethod
    def from_angles(cls, config, q, frame=0):
        q = np.asarray(q, dtype=float)
        return cls(joint_angles=q, tips=forward_kinematics(config, q), frame=frame)


def env_step(state, action, mode, config, rng=None):
    action = np.asarray(action, dtype=float)
    q = step_joints(config, state.joint_angles, action, mode, rng)
    return SimState(
        joint_angles=q,
        tips=forward_kinematics(config, q, check=False),
        frame=state.frame + config.skipped_frames(mode),
    )


def reset_angles(config):
    """Neutral pose: the settled response to a zero command."""
    return joint_targets(config, np.zeros(config.action_dim))


def sample_reachable_target(config, seed):
    """Fingertip target reachable by construction.

    For directly actuated hands this is the FK image of joint angles drawn
    uniformly within limits; coupled and tendon hands draw a uniform command
    and use its settled joint targets so the pose is attainable by actuation.
    """
    rng = np.random.default_rng(seed)
    if config.actuation_mode == "direct":
        lo, hi = config.joint_limits[:, 0], config.joint_limits[:, 1]
        q = lo + rng.random(config.dof) * (hi - lo)
    else:
        q = joint_targets(config, rng.uniform(-1.0, 1.0, config.action_dim))
    return forward_kinematics(config, q, check=False)


def reach_error(config, tips, target):
    """Mean over fingers of the fingertip-to-target distance."""
    d = (np.asarray(tips) - np.asarray(target)).reshape(-1, config.num_fingers, 3)
    per_finger = np.linalg.norm(d, axis=-1)
    return per_finger.mean(axis=-1).reshape(np.shape(tips)[:-1])


def per_finger_error(config, tips, target):
    d = (np.asarray(tips) - np.asarray(target)).reshape(config.num_fingers, 3)
    return np.linalg.norm(d, axis=-1)


class ReachEnv:
    """Mutable wrapper around :class:`SimState` for episodic rollouts."""

    def __init__(self, config, mode="sequential", seed=0):
        if mode not in MODES:
            raise ConfigError(f"unknown mode {mode!r}")
        self.config = config
        self.mode = mode
        self.rng = np.random.default_rng(seed)
        self.state = SimState.from_angles(config, reset_angles(config))

    def reset(self, q=None):
        q = reset_angles(self.config) if q is None else q
        self.state = SimState.from_angles(self.config, q)
        return self.state.tips.copy()

    def step(self, action):
        self.state = env_step(self.state, action, self.mode, self.config, self.rng)
        return self.state.tips.copy()

    def clone(self):
        other = ReachEnv(self.config, self.mode)
        other.state = self.state
        other.rng = copy.deepcopy(self.rng)
        return other


# -- perturbations --------------------------------------------------------


@dataclass(frozen=True)
class Perturbation:
    kind: str
    index: Optional[int] = None
    factor: Optional[float] = None

    @classmethod
    def actuator_failure(cls, index):
        return cls("actuator_failure", index=int(index))

    @classmethod
    def fatigue(cls, factor):
        return cls("fatigue", factor=float(factor))


def apply_perturbation(config, p):
    """New config with an actuator zeroed or every command scaled down."""
    scale = config.actuator_scale.copy()
    if p.kind == "actuator_failure":
        if p.index is None or not 0 <= p.index < config.action_dim:
            raise IndexError(f"actuator index {p.index} out of range for K={config.action_dim}")
        scale[p.index] = 0.0
    elif p.kind == "fatigue":
        if p.factor is None or not 0.0 < p.factor <= 1.0:
            raise ValueError("fatigue factor must lie in (0, 1]")
        scale = scale * p.factor
    else:
        raise ValueError(f"unknown perturbation {p.kind!r}")
    return config.with_updates(actuator_scale=scale)


# -- in-hand object -----------------------------------------------------------


@dataclass(frozen=True)
class ObjectParams:
    center_height: float
    radius: float
    grasp_margin: float = 0.02
    rotation_gain: float = 0.3
    translation_gain: float = 0.1
    drop_patience: int = 2


@dataclass(frozen=True)
class ObjectState:
    z_rotation: float
    xy_position: tuple
    dropped: bool = False
    lost_steps: int = 0
    # no-slip contacts: (finger, x, y) in the object frame
    anchors: tuple = ()

    def encode(self):
        """Regression-friendly encoding ``(cos z, sin z, x, y, dropped)``."""
        return np.array([
            math.cos(self.z_rotation), math.sin(self.z_rotation),
            self.xy_position[0], self.xy_position[1], float(self.dropped),
        ])


OBJECT_DIM = 5


def contact_mask(obj, tips, params):
    tips = np.asarray(tips).reshape(-1, 3)
    center = np.array([obj.xy_position[0], obj.xy_position[1], params.center_height])
    return np.linalg.norm(tips - center, axis=1) <= params.radius + params.grasp_margin


def _rot2(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s], [s, c]])


def _wrap(a):
    return (a + math.pi) % (2.0 * math.pi) - math.pi


def _fit_pose(local, world):
    """Rigid planar pose mapping object-frame ``local`` points onto ``world`` points."""
    lc, wc = local - local.mean(axis=0), world - world.mean(axis=0)
    cross = np.sum(lc[:, 0] * wc[:, 1] - lc[:, 1] * wc[:, 0])
    dot = np.sum(lc * wc)
    theta = math.atan2(cross, dot)
    return theta, world.mean(axis=0) - _rot2(theta) @ local.mean(axis=0)


def object_step(obj, prev_tips, new_tips, params):
    """Advance the object held by no-slip fingertip contacts.

    Fingertips within the grasp radius at ``prev_tips`` hold the object at
    contact points fixed in its frame (new contacts are anchored where they
    touch). With at least two contacts the object follows the rigid planar
    pose that best carries those points onto ``new_tips``, scaled by the
    rotation and translation gains, which model partial slip (a single contact
    cannot twist it). Contacts moved tangentially by ``d`` on radius ``r``
    turn it by ``rotation_gain * d / r``. Fewer than two contacts for ``drop_patience``
    consecutive steps drops it.
    """
    if obj.dropped:
        return obj
    prev = np.asarray(prev_tips, dtype=float).reshape(-1, 3)
    new = np.asarray(new_tips, dtype=float).reshape(-1, 3)
    if prev.shape != new.shape:
        raise ValueError("tip arrays differ in length")
    z, xy = obj.z_rotation, np.asarray(obj.xy_position, dtype=float)
    touching = np.flatnonzero(contact_mask(obj, prev, params))
    held = {int(f): (x, y) for f, x, y in obj.anchors}
    to_local = _rot2(-z)
    anchors = []
    for f in touching:
        local = held.get(int(f))
        if local is None:
            lx, ly = to_local @ (prev[f, :2] - xy)
            local = (float(lx), float(ly))
        anchors.append((int(f), local[0], local[1]))
    if len(anchors) >= 2:
        local = np.array([[x, y] for _, x, y in anchors])
        world = new[[f for f, _, _ in anchors], :2]
        theta, t = _fit_pose(local, world)
        z = z + params.rotation_gain * _wrap(theta - z)
        xy = xy + params.translation_gain * (t - xy)
    moved = ObjectState(z, (float(xy[0]), float(xy[1])))
    n_contact = int(contact_mask(moved, new, params).sum())
    lost = obj.lost_steps + 1 if n_contact < 2 else 0
    return ObjectState(z, moved.xy_position, lost >= params.drop_patience, lost, tuple(anchors))


# -- presets --------------------------------------------------------------


def _finger_limits(abduction, n_flex, abd_range=0.35, thumb=False):
    rows = []
    if abduction:
        rows.append((-abd_range, abd_range))
    base = [(-0.2, 1.5), (0.0, 1.6), (0.0, 1.3), (0.0, 1.0)]
    if thumb:
        base = [(-0.3, 1.2), (0.0, 1.2), (0.0, 1.2), (0.0, 1.0)]
    rows.extend(base[:n_flex])
    return rows


def _build(name, fingers, **kw):
    """``fingers``: list of (origin, yaw, roll, abduction, links, is_thumb)."""
    limits, origins, yaw_roll, joints, abd, links = [], [], [], [], [], []
    for origin, yaw, roll, has_abd, lens, thumb in fingers:
        rows = _finger_limits(has_abd, len(lens), abd_range=0.6 if thumb else 0.35, thumb=thumb)
        limits.extend(rows)
        origins.append(origin)
        yaw_roll.append((yaw, roll))
        joints.append(len(lens) + int(has_abd))
        abd.append(has_abd)
        links.append(list(lens))
    return HandConfig(
        name=name,
        num_fingers=len(fingers),
        joints_per_finger=joints,
        abduction=abd,
        link_lengths=links,
        joint_limits=np.array(limits),
        base_origins=np.array(origins),
        base_yaw_roll=np.array(yaw_roll),
        **kw,
    )


_THUMB = ((0.02, 0.0, -0.02), 1.0, -0.5)
_LONG = (0.045, 0.025, 0.02)
_LONG4 = (0.03, 0.04, 0.025, 0.02)
_THUMB_LINKS = (0.04, 0.03, 0.025)
_THUMB_LINKS4 = (0.025, 0.035, 0.03, 0.02)


def _extension_dirs(config):
    """Unit vector from each finger base towards its fully extended tip."""
    q = np.zeros(config.dof)
    lo, hi = config.joint_limits[:, 0], config.joint_limits[:, 1]
    q = np.clip(q, lo, hi)
    tips = forward_kinematics(config, q).reshape(-1, 3)
    d = tips - config.base_origins
    return d / np.linalg.norm(d, axis=1, keepdims=True)


def robotiq_like():
    """Three fingers, 11 joints, every joint directly driven (K = 11)."""
    cfg = _build(
        "robotiq",
        [
            ((0.0, -0.02, 0.0), math.pi, 0.0, False, (0.05, 0.035, 0.025), False),
            ((-0.03, 0.03, 0.0), 0.0, 0.0, True, (0.05, 0.035, 0.025), False),
            ((0.03, 0.03, 0.0), 0.0, 0.0, True, (0.05, 0.035, 0.025), False),
        ],
        actuation_mode="direct",
        response_gain=0.035,
        skipped_frames_quasistatic=150,
        skipped_frames_sequential=10,
        success_threshold=0.015,
        finger_roles={"thumb": 0, "index": 1, "middle": 2},
        actuation_noise=0.10,
    )
    return cfg.with_updates(extension_directions=_extension_dirs(cfg))


def allegro_like():
    """Four fingers with four joints each, fully actuated (K = 16).

    Finger order follows the Allegro convention: 0 thumb, 1 ring, 2 middle, 3 index.
    """
    cfg = _build(
        "allegro",
        [
            (_THUMB[0], _THUMB[1], _THUMB[2], True, _THUMB_LINKS, True),
            ((-0.03, 0.04, 0.0), 0.1, 0.0, True, _LONG, False),
            ((0.0, 0.045, 0.0), 0.0, 0.0, True, _LONG, False),
            ((0.03, 0.04, 0.0), -0.1, 0.0, True, _LONG, False),
        ],
        actuation_mode="direct",
        response_gain=0.09,
        skipped_frames_quasistatic=50,
        skipped_frames_sequential=10,
        success_threshold=0.015,
        finger_roles={"thumb": 0, "ring": 1, "middle": 2, "index": 3},
        actuation_noise=0.15,
    )
    return cfg.with_updates(extension_directions=_extension_dirs(cfg))


def _five_fingers(thumb_links, other_links):
    return [
        (_THUMB[0], _THUMB[1], _THUMB[2], True, thumb_links, True),
        ((0.03, 0.04, 0.0), -0.12, 0.0, True, other_links[0], False),
        ((0.01, 0.045, 0.0), -0.04, 0.0, True, other_links[1], False),
        ((-0.01, 0.043, 0.0), 0.04, 0.0, True, other_links[2], False),
        ((-0.03, 0.037, 0.0), 0.12, 0.0, True, other_links[3], False),
    ]


def shadowhand_like():
    """Five fingers, 24 joints, 20 actuators: the two distal joints of the
    index, middle, ring and little fingers share one actuator."""
    fingers = _five_fingers(_THUMB_LINKS4, [_LONG4, _LONG4, _LONG, _LONG4])
    joints = [1 + len(f[4]) for f in fingers]
    dof = sum(joints)
    columns, start = [], 0
    for i, n in enumerate(joints):
        for j in range(n):
            if i > 0 and j == n - 1:
                columns[-1][start + j] = 1.0
                continue
            col = np.zeros(dof)
            col[start + j] = 1.0
            columns.append(col)
        start += n
    coupling = np.stack(columns, axis=1)
    cfg = _build(
        "shadowhand",
        fingers,
        actuation_mode="coupled",
        coupling_matrix=coupling,
        response_gain=0.025,
        skipped_frames_quasistatic=200,
        skipped_frames_sequential=10,
        success_threshold=0.015,
        finger_roles={"thumb": 0, "index": 1, "middle": 2, "ring": 3, "little": 4},
        actuation_noise=0.10,
    )
    return cfg.with_updates(extension_directions=_extension_dirs(cfg))


# extensor spans per finger for the tendon hand (joint indices within the finger)
_MYO_EXTENSORS = [
    [(0, 1), (1, 2), (2, 3), (3, 4)],
    [(0, 1), (1, 2), (2, 3)],
    [(0, 1), (1, 2), (2, 3)],
    [(0, 1), (1, 2, 3), (3, 4)],
    [(0, 1), (1, 2, 3), (3, 4)],
]


def myohand_like():
    """Five fingers, 23 joints, 39 tendons (over-actuated).

    Every joint has one flexor; 16 extensors each span two or three joints.
    Activations pull the joints away from a rest posture.
    """
    fingers = _five_fingers(_THUMB_LINKS4, [_LONG, _LONG, _LONG4, _LONG4])
    cfg = _build("myohand", fingers, actuation_mode="direct")
    lo, hi = cfg.joint_limits[:, 0], cfg.joint_limits[:, 1]
    rest = lo + 0.35 * (hi - lo)
    dof = cfg.dof
    flexors = np.diag(hi - rest)
    ext_cols = []
    coverage = np.zeros(dof)
    starts = np.cumsum([0] + cfg.joints_per_finger[:-1])
    for f, spans in enumerate(_MYO_EXTENSORS):
        for span in spans:
            for j in span:
                coverage[starts[f] + j] += 1
    for f, spans in enumerate(_MYO_EXTENSORS):
        for span in spans:
            col = np.zeros(dof)
            for j in span:
                idx = starts[f] + j
                col[idx] = -(rest[idx] - lo[idx]) / coverage[idx] * 1.5
            ext_cols.append(col)
    tendon = np.concatenate([flexors, np.stack(ext_cols, axis=1)], axis=1)
    cfg = cfg.with_updates(
        actuation_mode="tendon",
        tendon_matrix=tendon,
        rest_posture=rest,
        actuator_scale=None,
        response_gain=0.05,
        skipped_frames_quasistatic=100,
        skipped_frames_sequential=5,
        success_threshold=0.0125,
        finger_roles={"thumb": 0, "index": 1, "middle": 2, "ring": 3, "little": 4},
        actuation_noise=0.08,
    )
    return cfg.with_updates(extension_directions=_extension_dirs(cfg))


PRESETS = {
    "robotiq": robotiq_like,
    "allegro": allegro_like,
    "shadowhand": shadowhand_like,
    "myohand": myohand_like,
}


def get_preset(name):
    try:
        return PRESETS[name]()
    except KeyError:
        raise ConfigError(f"unknown hand preset {name!r}; choose from {sorted(PRESETS)}") from None


def load_hand(spec):
    """Preset name, dict, or path to a JSON file of HandConfig fields.

    A file may also hold ``{"preset": name, ...overrides}``.
    """
    if isinstance(spec, HandConfig):
        return spec
    if isinstance(spec, dict):
        d = dict(spec)
    elif isinstance(spec, str) and spec in PRESETS:
        return get_preset(spec)
    else:
        path = Path(spec)
        if not path.exists():
            raise ConfigError(f"hand config {spec!r} is neither a preset nor a file")
        d = json.loads(path.read_text())
    if "preset" in d:
        base = get_preset(d.pop("preset"))
        return base.with_updates(**d) if d else base
    return HandConfig.from_dict(d)
