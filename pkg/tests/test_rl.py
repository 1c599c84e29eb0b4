"""Trainer: advantage estimation oracle, update safety, checkpoint bundles."""
import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cotransport import nets, rl
from cotransport.config import RunConfig
from cotransport.env import VecTransportEnv


def tiny_cfg(**ppo_overrides) -> RunConfig:
    cfg = RunConfig()
    defaults = dict(num_envs=4, horizon=8, iterations=2, epochs=2,
                    minibatches=2, hidden_sizes=(16, 16, 16))
    defaults.update(ppo_overrides)
    cfg.ppo = dataclasses.replace(cfg.ppo, **defaults)
    return cfg


def gae_bruteforce(rewards, values, dones, bootstrap, gamma, lam):
    """O(T^2) reference: discounted sums of TD residuals, cut at dones."""
    T, n = rewards.shape
    v_next = np.concatenate([values[1:], bootstrap[None]], axis=0)
    delta = rewards + gamma * v_next * (1.0 - dones) - values
    adv = np.zeros_like(rewards)
    for t in range(T):
        coef = np.ones(n)
        for l in range(t, T):
            adv[t] += coef * delta[l]
            coef = coef * gamma * lam * (1.0 - dones[l])
            if not coef.any():
                break
    return adv, adv + values


@given(st.integers(0, 10 ** 6))
@settings(max_examples=100, deadline=None)
def test_gae_matches_bruteforce(seed):
    rng = np.random.default_rng(seed)
    T, n = rng.integers(1, 12), rng.integers(1, 5)
    rewards = rng.normal(0, 1, (T, n))
    values = rng.normal(0, 1, (T, n))
    dones = rng.random((T, n)) < 0.2
    bootstrap = rng.normal(0, 1, n)
    gamma, lam = rng.uniform(0.8, 1.0), rng.uniform(0.8, 1.0)
    adv, ret = rl.compute_gae(rewards, values, dones, bootstrap, gamma, lam)
    adv_ref, ret_ref = gae_bruteforce(rewards, values, dones.astype(float),
                                      bootstrap, gamma, lam)
    assert np.allclose(adv, adv_ref, atol=1e-9)
    assert np.allclose(ret, ret_ref, atol=1e-9)


def test_gae_single_step():
    adv, ret = rl.compute_gae(np.array([[1.0]]), np.array([[0.5]]),
                              np.array([[False]]), np.array([2.0]), 0.9, 0.95)
    assert np.isclose(adv[0, 0], 1.0 + 0.9 * 2.0 - 0.5)
    assert np.isclose(ret[0, 0], adv[0, 0] + 0.5)


def make_batch(cfg, policies, seed=0):
    env = VecTransportEnv(cfg, cfg.ppo.num_envs, seed=seed, fixed_mass=2.0)
    obs = env.observe()
    rng = np.random.default_rng(seed)
    batch, _ = rl.collect_rollouts(policies, env, cfg, rng, obs)
    return batch


def flat_params(net):
    if net is None:
        return np.array([])
    parts = [net.log_std.ravel()] if net.log_std is not None else []
    for W, b in zip(net.weights, net.biases):
        parts += [W.ravel(), b.ravel()]
    return np.concatenate(parts)


def test_update_changes_actor_and_critic():
    cfg = tiny_cfg()
    rng = np.random.default_rng(0)
    policies = rl.PolicySet(cfg, "student", rng)
    batch = make_batch(cfg, policies)
    before_a = flat_params(policies.actor)
    before_c = flat_params(policies.critic)
    stats = rl.ppo_update(policies, batch, cfg, rng)
    assert not stats.aborted
    assert not np.array_equal(before_a, flat_params(policies.actor))
    assert not np.array_equal(before_c, flat_params(policies.critic))


def test_estimator_frozen_at_zero_weight():
    cfg = tiny_cfg()
    rng = np.random.default_rng(1)
    policies = rl.PolicySet(cfg, "student", rng)
    batch = make_batch(cfg, policies, seed=1)
    before = flat_params(policies.estimator)
    rl.ppo_update(policies, batch, cfg, rng, estimator_loss_weight=0.0)
    assert np.array_equal(before, flat_params(policies.estimator))


def test_estimator_trains_at_positive_weight():
    cfg = tiny_cfg()
    rng = np.random.default_rng(2)
    policies = rl.PolicySet(cfg, "student", rng)
    batch = make_batch(cfg, policies, seed=2)
    before = flat_params(policies.estimator)
    stats = rl.ppo_update(policies, batch, cfg, rng, estimator_loss_weight=1.0)
    assert stats.estimator_loss > 0.0
    assert not np.array_equal(before, flat_params(policies.estimator))


def test_nonfinite_batch_aborts_and_restores():
    cfg = tiny_cfg()
    rng = np.random.default_rng(3)
    policies = rl.PolicySet(cfg, "student", rng)
    batch = make_batch(cfg, policies, seed=3)
    batch.advantages[:] = np.nan
    before_a = flat_params(policies.actor)
    before_c = flat_params(policies.critic)
    before_e = flat_params(policies.estimator)
    stats = rl.ppo_update(policies, batch, cfg, rng)
    assert stats.aborted
    assert np.array_equal(before_a, flat_params(policies.actor))
    assert np.array_equal(before_c, flat_params(policies.critic))
    assert np.array_equal(before_e, flat_params(policies.estimator))


def test_kl_term_pulls_student_toward_teacher():
    cfg = tiny_cfg()
    teacher = rl.PolicySet(cfg, "teacher", np.random.default_rng(10)).actor

    def run(kl_weight):
        rng = np.random.default_rng(4)
        policies = rl.PolicySet(cfg, "student", rng)
        batch = make_batch(cfg, policies, seed=4)
        for _ in range(3):
            rl.ppo_update(policies, batch, cfg, rng, teacher=teacher,
                          kl_weight=kl_weight)
        # measure divergence on the batch states under the final student
        scale = rl.wrench_scale(cfg)
        ot = batch.o_trans.reshape(-1, batch.o_trans.shape[-1])
        beta = rl.estimate_wrench(policies.estimator, ot)
        s_mean, _ = nets.forward(policies.actor, rl.actor_input(ot, beta, scale))
        t_in = rl.actor_input(ot, batch.wrench_obs.reshape(-1, 3), scale)
        t_mean, _ = nets.forward(teacher, t_in)
        kl = nets.gaussian_kl(s_mean, policies.actor.clamped_log_std(),
                              t_mean, teacher.clamped_log_std())
        return float(kl.mean())

    assert run(5.0) < run(0.0)


def test_teacher_has_no_estimator():
    cfg = tiny_cfg()
    policies = rl.PolicySet(cfg, "teacher", np.random.default_rng(0))
    assert policies.estimator is None
    assert policies.estimator_opt is None


def test_estimate_wrench_zero_without_estimator():
    out = rl.estimate_wrench(None, np.ones((5, 36)))
    assert out.shape == (5, 3)
    assert np.all(out == 0.0)


def test_actor_input_scaling():
    o = np.ones((2, 36))
    w = np.array([[40.0, -40.0, 10.0], [4.0, 4.0, 1.0]])
    x = rl.actor_input(o, w, rl.wrench_scale(RunConfig()))
    assert x.shape == (2, 39)
    assert np.allclose(x[0, 36:], [1.0, -1.0, 1.0])
    assert np.allclose(x[1, 36:], [0.1, 0.1, 0.1])


def test_critic_scale_shape():
    cfg = RunConfig()
    from cotransport.world import critic_obs_dim
    s = rl.critic_scale(cfg)
    assert s.shape == (critic_obs_dim(cfg.world.history_len),)
    assert np.all(s > 0)


def test_bundle_roundtrip_bitexact(tmp_path):
    # storage is float32, so one save/load quantizes; after that the cycle
    # must be bit-exact
    cfg = tiny_cfg()
    policies = rl.PolicySet(cfg, "student", np.random.default_rng(5))
    rl.save_bundle(policies, cfg, tmp_path / "a", iteration=7, seed=5)
    first = rl.load_bundle(tmp_path / "a")
    assert first.meta["iteration"] == 7
    assert first.meta["role"] == "student"
    assert np.allclose(flat_params(policies.actor), flat_params(first.actor),
                       atol=1e-6)
    reloaded = rl.PolicySet(cfg, "student", np.random.default_rng(5))
    reloaded.actor, reloaded.critic = first.actor, first.critic
    reloaded.estimator = first.estimator
    rl.save_bundle(reloaded, cfg, tmp_path / "b", iteration=7, seed=5)
    second = rl.load_bundle(tmp_path / "b")
    for name in ("actor", "critic", "estimator"):
        assert np.array_equal(flat_params(getattr(first, name)),
                              flat_params(getattr(second, name)))


def test_train_policy_rejects_bad_role(tmp_path):
    with pytest.raises(ValueError):
        rl.train_policy(tiny_cfg(), "oracle", tmp_path)


def test_micro_training_run(tmp_path):
    cfg = tiny_cfg(iterations=3, eval_interval=1, checkpoint_interval=100)
    cfg.ppo = dataclasses.replace(cfg.ppo, fixed_mass=2.0)
    out = rl.train_policy(cfg, "teacher", tmp_path / "run")
    assert (out / "bundle.json").exists()
    assert (tmp_path / "run" / "metrics.csv").exists()
    rows = (tmp_path / "run" / "metrics.csv").read_text().strip().splitlines()
    assert len(rows) >= 3   # header plus logged iterations
