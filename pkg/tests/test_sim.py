import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dexmodel.sim import (ConfigError, DomainError, HandConfig, ObjectParams, ObjectState, Perturbation,
                          ReachEnv, SimState, apply_perturbation, base_rotation, env_step, fk_jacobian,
                          forward_kinematics, get_preset, joint_targets, load_hand, object_step,
                          reset_angles, sample_reachable_target, step_joints)

PRESETS = ["robotiq", "allegro", "shadowhand", "myohand"]


def two_link_hand(**kw):
    d = dict(name="toy", num_fingers=1, joints_per_finger=[2], abduction=[False],
             link_lengths=[[1.0, 1.0]], joint_limits=[[-2.0, 2.0], [-2.0, 2.0]],
             base_origins=[[0.5, 0.0, 0.1]], base_yaw_roll=[[0.3, 0.0]])
    d.update(kw)
    return HandConfig(**d)


# -- kinematics -------------------------------------------------------------------


@pytest.mark.parametrize("name", PRESETS)
def test_zero_angles_give_straight_fingers(name):
    cfg = get_preset(name)
    lo, hi = cfg.joint_limits.T
    if np.any((lo > 0) | (hi < 0)):
        pytest.skip("zero pose outside limits")
    tips = forward_kinematics(cfg, np.zeros(cfg.dof)).reshape(-1, 3)
    for f in range(cfg.num_fingers):
        forward = cfg._bases[f] @ np.array([1.0, 0.0, 0.0])
        expected = cfg.base_origins[f] + sum(cfg.link_lengths[f]) * forward
        np.testing.assert_allclose(tips[f], expected, atol=1e-12)


def test_two_link_hand_computed():
    cfg = two_link_hand()
    tip = forward_kinematics(cfg, [math.pi / 2, 0.0])
    expected = cfg.base_origins[0] + base_rotation(0.3, 0.0) @ np.array([0.0, 2.0, 0.0])
    np.testing.assert_allclose(tip, expected, atol=1e-12)


def test_flexion_points_to_negative_z():
    cfg = two_link_hand(base_yaw_roll=[[0.0, 0.0]])
    tip = forward_kinematics(cfg, [math.pi / 2, 0.0])
    np.testing.assert_allclose(tip - cfg.base_origins[0], [0.0, 0.0, -2.0], atol=1e-12)


@pytest.mark.parametrize("name", PRESETS)
def test_fk_matches_jacobian_path_integral(name):
    cfg = get_preset(name)
    lo, hi = cfg.joint_limits.T
    rng = np.random.default_rng(0)
    q0 = lo + 0.2 * (hi - lo) + 0.1 * rng.random(cfg.dof) * (hi - lo)
    q1 = lo + 0.7 * (hi - lo) + 0.1 * rng.random(cfg.dof) * (hi - lo)
    n = 2000
    ts = (np.arange(n) + 0.5) / n
    integral = sum(fk_jacobian(cfg, q0 + t * (q1 - q0)) @ (q1 - q0) for t in ts) / n
    delta = forward_kinematics(cfg, q1) - forward_kinematics(cfg, q0)
    np.testing.assert_allclose(integral, delta, atol=1e-6)


def test_out_of_limit_angles_raise():
    cfg = get_preset("allegro")
    q = cfg.joint_limits[:, 1] + 0.1
    with pytest.raises(DomainError):
        forward_kinematics(cfg, q)


# -- actuation ----------------------------------------------------------------------


@pytest.mark.parametrize("name", PRESETS)
def test_fixed_point_action_leaves_state_unchanged(name):
    cfg = get_preset(name)
    a = np.random.default_rng(1).uniform(-1, 1, cfg.action_dim)
    s = SimState.from_angles(cfg, joint_targets(cfg, a))
    nxt = env_step(s, a, "sequential", cfg)
    np.testing.assert_array_equal(nxt.joint_angles, s.joint_angles)
    np.testing.assert_allclose(nxt.tips, s.tips, atol=1e-15)


def test_full_gain_lands_on_affine_targets():
    cfg = get_preset("allegro").with_updates(response_gain=1.0)
    a = np.random.default_rng(2).uniform(-1, 1, cfg.action_dim)
    s = env_step(SimState.from_angles(cfg, reset_angles(cfg)), a, "sequential", cfg)
    lo, hi = cfg.joint_limits.T
    np.testing.assert_allclose(s.joint_angles, lo + 0.5 * (a + 1) * (hi - lo), atol=1e-15)


def test_antagonist_tendons_cancel():
    base = two_link_hand()
    tendon = np.array([[0.5, -0.5, 0.0, 0.0], [0.0, 0.0, 0.4, -0.4]])
    cfg = base.with_updates(actuation_mode="tendon", tendon_matrix=tendon, rest_posture=np.array([0.1, 0.2]),
                            actuator_scale=np.ones(4))
    q0 = reset_angles(cfg)
    s = env_step(SimState.from_angles(cfg, q0), np.array([0.7, 0.7, 0.3, 0.3]), "sequential", cfg)
    np.testing.assert_array_equal(s.joint_angles, q0)


def test_tendon_activations_clamped_to_unit_interval():
    cfg = get_preset("myohand")
    a = np.random.default_rng(0).uniform(-1, 1, cfg.action_dim)
    np.testing.assert_array_equal(joint_targets(cfg, a), joint_targets(cfg, np.clip(a, 0, 1)))


def test_nan_action_raises():
    cfg = get_preset("robotiq")
    a = np.zeros(cfg.action_dim)
    a[3] = np.nan
    with pytest.raises(ArithmeticError):
        env_step(SimState.from_angles(cfg, reset_angles(cfg)), a, "quasi_static", cfg)


def test_wrong_action_width_raises():
    cfg = get_preset("robotiq")
    with pytest.raises(DomainError):
        joint_targets(cfg, np.zeros(cfg.action_dim + 1))


@pytest.mark.parametrize("name", PRESETS)
def test_joint_response_recurrence(name):
    """Each frame closes ``response_gain`` of the remaining gap (no clipping inside the box)."""
    cfg = get_preset(name)
    a = np.random.default_rng(3).uniform(-1, 1, cfg.action_dim)
    q0 = reset_angles(cfg)
    target = joint_targets(cfg, a)
    n = cfg.skipped_frames("sequential")
    expected = target + (1 - cfg.response_gain) ** n * (q0 - target)
    np.testing.assert_allclose(step_joints(cfg, q0, a, "sequential"), expected, atol=1e-12)


@pytest.mark.parametrize("name", PRESETS)
def test_quasi_static_step_converges(name):
    cfg = get_preset(name)
    a = np.random.default_rng(4).uniform(-1, 1, cfg.action_dim)
    q = step_joints(cfg, reset_angles(cfg), a, "quasi_static")
    gap = np.abs(q - joint_targets(cfg, a)).max()
    span = np.abs(reset_angles(cfg) - joint_targets(cfg, a)).max()
    assert gap <= 0.01 * span + 1e-12


@pytest.mark.parametrize("name", PRESETS)
def test_sequential_step_is_partial(name):
    """A sequential step moves the joints only part of the way; quasi-static moves them (almost) all."""
    cfg = get_preset(name)
    frac = 1 - (1 - cfg.response_gain) ** cfg.skipped_frames("sequential")
    assert 0.1 < frac < 0.8


def test_quasi_static_idempotence_when_gain_converged():
    cfg = get_preset("allegro").with_updates(response_gain=1.0)
    a = np.random.default_rng(5).uniform(-1, 1, cfg.action_dim)
    s1 = env_step(SimState.from_angles(cfg, reset_angles(cfg)), a, "quasi_static", cfg)
    s2 = env_step(s1, a, "quasi_static", cfg)
    assert np.abs(s2.joint_angles - s1.joint_angles).max() < 1e-9


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), name=st.sampled_from(PRESETS))
def test_step_is_deterministic(seed, name):
    cfg = get_preset(name)
    a = np.random.default_rng(seed).uniform(-1, 1, cfg.action_dim)
    s0 = SimState.from_angles(cfg, reset_angles(cfg))
    r1 = env_step(s0, a, "sequential", cfg, np.random.default_rng(seed))
    r2 = env_step(s0, a, "sequential", cfg, np.random.default_rng(seed))
    np.testing.assert_array_equal(r1.tips, r2.tips)


def test_actuation_noise_only_with_rng_and_has_configured_spread():
    cfg = get_preset("allegro").with_updates(response_gain=1.0)
    a = np.zeros(cfg.action_dim)
    q0 = reset_angles(cfg)
    np.testing.assert_array_equal(step_joints(cfg, q0, a, "sequential"), joint_targets(cfg, a))
    rng = np.random.default_rng(0)
    qs = np.stack([step_joints(cfg, q0, a, "sequential", rng) for _ in range(4000)])
    dev = (qs - joint_targets(cfg, a)).ravel()
    # zero command sits mid-range, so clipping is rare at this noise level
    assert abs(dev.std() - cfg.actuation_noise) < 0.01


def test_env_clone_steps_independently():
    env = ReachEnv(get_preset("robotiq"), "sequential", seed=3)
    other = env.clone()
    a = np.full(env.config.action_dim, 0.3)
    np.testing.assert_array_equal(env.step(a), other.step(a))
    env.step(-a)
    assert not np.array_equal(env.state.tips, other.state.tips)


# -- configuration -----------------------------------------------------------------


def test_preset_action_dimensions_follow_taxonomy():
    dims = {n: (get_preset(n).num_fingers, get_preset(n).action_dim, get_preset(n).dof) for n in PRESETS}
    assert dims == {"robotiq": (3, 11, 11), "allegro": (4, 16, 16),
                    "shadowhand": (5, 20, 24), "myohand": (5, 39, 23)}
    assert get_preset("shadowhand").actuation_mode == "coupled"
    assert get_preset("myohand").actuation_mode == "tendon"


def test_preset_skipped_frames_and_thresholds():
    frames = {n: (get_preset(n).skipped_frames("quasi_static"), get_preset(n).skipped_frames("sequential"))
              for n in PRESETS}
    assert frames == {"robotiq": (150, 10), "allegro": (50, 10), "shadowhand": (200, 10), "myohand": (100, 5)}
    assert get_preset("myohand").success_threshold == pytest.approx(0.0125)
    assert get_preset("allegro").success_threshold == pytest.approx(0.015)


def test_invalid_configs_rejected():
    with pytest.raises(ConfigError):
        two_link_hand(link_lengths=[[1.0, -1.0]])
    with pytest.raises(ConfigError):
        two_link_hand(joint_limits=[[1.0, 0.0], [0.0, 1.0]])
    with pytest.raises(ConfigError):
        two_link_hand(success_threshold=0.0)
    with pytest.raises(ConfigError):
        two_link_hand(actuation_mode="coupled", coupling_matrix=np.ones((2, 2)))
    with pytest.raises(ConfigError):
        get_preset("nope")


def test_hand_loads_from_json_file(tmp_path):
    cfg = get_preset("allegro")
    path = tmp_path / "hand.json"
    path.write_text(json.dumps(cfg.to_dict()))
    again = load_hand(str(path))
    np.testing.assert_array_equal(forward_kinematics(again, reset_angles(again)),
                                  forward_kinematics(cfg, reset_angles(cfg)))
    path.write_text(json.dumps({"preset": "robotiq", "success_threshold": 0.02}))
    assert load_hand(str(path)).success_threshold == 0.02


# -- perturbations -----------------------------------------------------------------


def test_actuator_failure_equals_zeroed_command():
    cfg = get_preset("allegro")
    broken = apply_perturbation(cfg, Perturbation.actuator_failure(0))
    a = np.random.default_rng(0).uniform(-1, 1, cfg.action_dim)
    zeroed = a.copy()
    zeroed[0] = 0.0
    np.testing.assert_array_equal(joint_targets(broken, a), joint_targets(cfg, zeroed))
    assert np.all(cfg.actuator_scale == 1.0)


def test_fatigue_identity_and_composition():
    cfg = get_preset("shadowhand")
    same = apply_perturbation(cfg, Perturbation.fatigue(1.0))
    np.testing.assert_array_equal(same.actuator_scale, cfg.actuator_scale)
    twice = apply_perturbation(apply_perturbation(cfg, Perturbation.fatigue(0.5)), Perturbation.fatigue(0.5))
    np.testing.assert_allclose(twice.actuator_scale, 0.25)


def test_bad_perturbations_raise():
    cfg = get_preset("robotiq")
    with pytest.raises(IndexError):
        apply_perturbation(cfg, Perturbation.actuator_failure(cfg.action_dim))
    with pytest.raises(ValueError):
        apply_perturbation(cfg, Perturbation.fatigue(0.0))


# -- targets -----------------------------------------------------------------------


def test_degenerate_limits_give_single_target():
    cfg = two_link_hand(joint_limits=[[0.4, 0.4], [0.2, 0.2]])
    targets = {tuple(sample_reachable_target(cfg, s)) for s in range(5)}
    assert len(targets) == 1
    np.testing.assert_allclose(next(iter(targets)), forward_kinematics(cfg, [0.4, 0.2]))


@pytest.mark.parametrize("name", PRESETS)
def test_targets_are_reachable_by_construction(name):
    cfg = get_preset(name)
    for seed in range(10):
        t = sample_reachable_target(cfg, seed)
        q = step_joints(cfg.with_updates(response_gain=1.0), reset_angles(cfg), np.zeros(cfg.action_dim),
                        "quasi_static")
        assert t.shape == (cfg.state_dim,) and np.all(np.isfinite(t)) and q.shape == (cfg.dof,)
    if cfg.actuation_mode == "direct":
        rng = np.random.default_rng(7)
        lo, hi = cfg.joint_limits.T
        np.testing.assert_array_equal(sample_reachable_target(cfg, 7),
                                      forward_kinematics(cfg, lo + rng.random(cfg.dof) * (hi - lo)))


def test_target_spread_matches_monte_carlo_fk():
    cfg = get_preset("robotiq")
    targets = np.stack([sample_reachable_target(cfg, s) for s in range(1000)])
    rng = np.random.default_rng(12345)
    lo, hi = cfg.joint_limits.T
    ref = forward_kinematics(cfg, lo + rng.random((1000, cfg.dof)) * (hi - lo))
    se = np.sqrt(targets.var(axis=0) / 1000 + ref.var(axis=0) / 1000)
    assert np.all(np.abs(targets.mean(axis=0) - ref.mean(axis=0)) < 5 * se + 1e-12)
    assert np.all(np.abs(targets.std(axis=0) / ref.std(axis=0) - 1) < 0.15)


# -- object --------------------------------------------------------------------------


def _ring(center, radius, angles, height):
    return np.concatenate([[center[0] + radius * math.cos(a), center[1] + radius * math.sin(a), height]
                           for a in angles])


def test_tangential_motion_rotates_by_gain_delta_over_r():
    params = ObjectParams(center_height=0.0, radius=0.05, grasp_margin=0.005, rotation_gain=0.3)
    angles = [0.0, 2.0, 4.0]
    prev = _ring((0.0, 0.0), 0.05, angles, 0.0)
    delta = 0.004  # arc length travelled by every contact
    new = _ring((0.0, 0.0), 0.05, [a + delta / 0.05 for a in angles], 0.0)
    obj = object_step(ObjectState(0.0, (0.0, 0.0)), prev, new, params)
    assert obj.z_rotation == pytest.approx(params.rotation_gain * delta / params.radius, abs=1e-12)
    assert not obj.dropped


def test_zero_motion_leaves_object_unchanged():
    params = ObjectParams(center_height=0.0, radius=0.05)
    tips = _ring((0.01, -0.02), 0.05, [0.0, 2.0, 4.0], 0.0)
    obj = ObjectState(0.3, (0.01, -0.02))
    out = object_step(obj, tips, tips, params)
    assert out.z_rotation == pytest.approx(0.3, abs=1e-12)
    assert out.xy_position == pytest.approx((0.01, -0.02), abs=1e-12)
    assert not out.dropped


def test_single_contact_cannot_twist():
    params = ObjectParams(center_height=0.0, radius=0.05, grasp_margin=0.005)
    prev = np.concatenate([_ring((0, 0), 0.05, [0.0], 0.0), [1.0, 1.0, 1.0]])
    new = np.concatenate([_ring((0, 0), 0.05, [0.2], 0.0), [1.0, 1.0, 1.0]])
    out = object_step(ObjectState(0.0, (0.0, 0.0)), prev, new, params)
    assert out.z_rotation == 0.0


def test_no_contact_drops_after_patience_and_freezes():
    params = ObjectParams(center_height=0.0, radius=0.05, drop_patience=2)
    far = np.array([1.0, 1.0, 1.0, -1.0, -1.0, 1.0])
    obj = ObjectState(0.2, (0.0, 0.0))
    obj = object_step(obj, far, far, params)
    assert not obj.dropped and obj.lost_steps == 1
    obj = object_step(obj, far, far, params)
    assert obj.dropped
    near = _ring((0, 0), 0.05, [0.0, 3.0], 0.0)
    moved = _ring((0, 0), 0.05, [0.5, 3.5], 0.0)
    assert object_step(obj, near, moved, params) == obj
