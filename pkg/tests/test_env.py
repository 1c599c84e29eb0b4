"""Vectorized environment: reset state, observation shapes, wrench modes."""
import dataclasses

import numpy as np

from cotransport import wrench_gen
from cotransport import world as wd
from cotransport.config import RunConfig
from cotransport.env import VecTransportEnv


def tiny_cfg(**ppo_overrides) -> RunConfig:
    cfg = RunConfig()
    cfg.ppo = dataclasses.replace(cfg.ppo, num_envs=4, horizon=8,
                                  iterations=2, **ppo_overrides)
    return cfg


def make_env(n=4, **kwargs) -> VecTransportEnv:
    defaults = dict(fixed_mass=2.0, obs_noise=False, wrench_dr=False)
    defaults.update(kwargs)
    return VecTransportEnv(tiny_cfg(), n, seed=0, **defaults)


def test_obs_shapes():
    env = make_env(n=3, followers=2)
    obs = env.observe()
    H = env.H
    assert obs["o_trans"].shape == (3, 2, 9 * H)
    assert obs["wrench_base"].shape == (3, 2, 3)
    assert obs["critic"].shape == (3, 2, wd.critic_obs_dim(H))
    assert obs["ee_vel"].shape == (3, 2, 3)
    assert obs["ee_pos"].shape == (3, 2, 3)


def test_reset_is_quiescent():
    env = make_env()
    w = env.world
    assert np.allclose(w.payload.position, 0.0)
    assert np.allclose(w.payload.linear_velocity, 0.0)
    assert np.allclose(w.base.linear_velocity, 0.0)
    assert np.allclose(w.payload.mass, 2.0)
    # base sits one arm reach beyond the grasp point, facing the payload
    ee_xy, _, _ = wd.forward_kinematics(w.arm.joint_positions,
                                        w.base.position, w.base.yaw, env.wcfg)
    offsets = np.asarray(env.wcfg.grasp_offsets[: env.k])
    grasp = wd.rotate_planar(offsets[None], w.payload.yaw[:, None])
    assert np.allclose(ee_xy, grasp, atol=1e-9)


def test_mass_sampling_range():
    cfg = tiny_cfg(fixed_mass=None)
    env = VecTransportEnv(cfg, 64, seed=1, obs_noise=False, wrench_dr=False)
    lo, hi = cfg.world.mass_range
    m = env.world.payload.mass
    assert np.all(m >= lo) and np.all(m <= hi)
    assert m.std() > 0.5


def test_noise_free_window_matches_state():
    env = make_env()
    env.step(np.zeros((env.n, env.k, 6)))
    H = env.H
    o = env.observe()["o_trans"]
    newest_q = o[..., 3 * (H - 1): 3 * H]
    assert np.allclose(newest_q, env.world.arm.joint_positions)


def test_obs_noise_perturbs_window():
    noisy = VecTransportEnv(tiny_cfg(), 4, seed=0, fixed_mass=2.0,
                            obs_noise=True, wrench_dr=False)
    clean = make_env()
    a = np.zeros((4, 1, 6))
    noisy.step(a)
    clean.step(a)
    H = clean.H
    qn = noisy.observe()["o_trans"][..., 3 * (H - 1): 3 * H]
    qc = clean.observe()["o_trans"][..., 3 * (H - 1): 3 * H]
    assert not np.allclose(qn, qc)


def test_auto_reset_on_timeout():
    env = make_env(episode_ticks=5)
    for _ in range(4):
        res = env.step(np.zeros((env.n, env.k, 6)))
        assert not res.done.any()
    res = env.step(np.zeros((env.n, env.k, 6)))
    assert res.done.all()
    assert not res.terminated.any()
    assert np.all(env.tick == 0)
    assert np.allclose(env.world.time, 0.0)


def test_schedule_mode_matches_generator():
    env = make_env()
    res = env.step(np.zeros((env.n, env.k, 6)))
    force, torque = wrench_gen.wrench_at(env.profile, np.zeros(env.n))
    expected = np.concatenate([force, torque[:, None]], axis=-1)
    assert np.allclose(res.wrench_world, expected)


def test_external_mode_applies_set_wrench():
    env = make_env(wrench_mode="external")
    env.set_external_wrench(np.array([5.0, -3.0, 1.0]))
    res = env.step(np.zeros((env.n, env.k, 6)))
    assert np.allclose(res.wrench_world, [5.0, -3.0, 1.0])
    assert np.allclose(env.world.leader_wrench, [5.0, -3.0, 1.0])


def test_file_mode_uses_knot_profile():
    knots = wrench_gen.KnotProfile(
        times=np.array([0.0, 10.0]),
        wrench=np.array([[2.0, 0.0, 0.0], [2.0, 0.0, 0.0]]))
    env = make_env(wrench_mode="file", knot_profile=knots)
    res = env.step(np.zeros((env.n, env.k, 6)))
    assert np.allclose(res.wrench_world, [2.0, 0.0, 0.0])


def test_ou_mode_stays_bounded():
    env = make_env(wrench_mode="ou")
    lim = np.array([env.cfg.wrench.force_limit, env.cfg.wrench.force_limit,
                    env.cfg.wrench.torque_limit])
    for _ in range(50):
        res = env.step(np.zeros((env.n, env.k, 6)))
        assert np.all(np.abs(res.wrench_world) <= lim + 1e-12)


def test_wrench_dr_factor():
    off = make_env()
    assert np.allclose(off.dr_factor, 1.0)
    on = VecTransportEnv(tiny_cfg(), 64, seed=3, fixed_mass=2.0,
                         obs_noise=False, wrench_dr=True)
    f = on.cfg.ppo.wrench_dr_fraction
    assert np.all(np.abs(on.dr_factor - 1.0) <= f)
    assert on.dr_factor.std() > 0.01


def test_privileged_obs_is_base_frame():
    env = make_env(wrench_mode="external")
    env.set_external_wrench(np.array([10.0, 0.0, 2.0]))
    env.step(np.zeros((env.n, env.k, 6)))
    obs = env.observe()
    yaw = env.world.base.yaw
    expected_f = wd.rotate_planar(np.broadcast_to([10.0, 0.0],
                                                  yaw.shape + (2,)), -yaw)
    assert np.allclose(obs["wrench_base"][..., :2], expected_f)
    assert np.allclose(obs["wrench_base"][..., 2], 2.0)


def test_team_size_override():
    env = make_env(followers=3)
    assert env.k == 3
    res = env.step(np.zeros((env.n, 3, 6)))
    assert res.obs["o_trans"].shape[1] == 3


def test_arm_action_mapping():
    env = make_env()
    action = np.zeros((env.n, env.k, 6))
    action[..., 3:] = 1.0
    base_cmd, arm_target = env.actions_to_commands(action)
    posture = np.asarray(env.wcfg.default_posture)
    assert np.allclose(base_cmd, 0.0)
    assert np.allclose(arm_target, posture + env.cfg.ppo.arm_action_scale)


def test_step_determinism():
    def run():
        env = make_env(wrench_mode="ou")
        rng = np.random.default_rng(7)
        out = []
        for _ in range(10):
            res = env.step(rng.normal(0, 0.1, (env.n, env.k, 6)))
            out.append(res.reward.copy())
        return np.array(out)

    a, b = run(), run()
    assert np.array_equal(a, b)
