"""On-policy training engine.

One trainer covers all three roles:

* ``teacher``  — actor sees proprioception + the true wrench (privileged),
* ``student``  — actor sees proprioception + the intent estimate; optimizes
  the clipped surrogate minus a KL term to the frozen teacher, while the
  estimator is trained on the same batches with a supervised regression loss,
* ``pure_rl``  — the student code path with KL weight 0 and estimator off.

The critic is asymmetric in every role: it consumes privileged observations.
"""
from __future__ import annotations

import csv
import json
import time as _time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import nets
from .config import RunConfig, config_to_dict
from .env import VecTransportEnv

ACTION_DIM = 6
ESTIMATE_DIM = 3


def wrench_scale(cfg: RunConfig) -> np.ndarray:
    """Normalization for wrench-valued network inputs."""
    b_f = cfg.rewards.admittance_force_gain
    b_t = cfg.rewards.admittance_torque_gain
    return np.array([b_f, b_f, b_t])


def critic_scale(cfg: RunConfig) -> np.ndarray:
    """Per-channel divisors keeping critic inputs near unit magnitude."""
    H = cfg.world.history_len
    trans = np.ones(9 * H)
    wrench = wrench_scale(cfg)
    ee = np.array([1.0, 1.0, 1.0,       # position (m)
                   1.0, 1.0, 1.0,       # velocity (m/s)
                   10.0, 10.0, 10.0])   # acceleration (finite difference)
    payload = np.array([1.0, 1.0,       # position
                        1.0, 1.0,       # yaw, height
                        1.0, 1.0, 1.0, 1.0,      # velocities
                        10.0, 10.0, 10.0, 10.0,  # accelerations
                        cfg.world.mass_range[1] or 1.0,  # mass
                        1.0])                             # yaw inertia
    return np.concatenate([trans, wrench, ee, payload])


@dataclass
class RolloutBatch:
    """On-policy transitions, (horizon, num_envs, ...) throughout."""

    o_trans: np.ndarray
    wrench_obs: np.ndarray      # true wrench in base frame, unscaled
    critic_obs: np.ndarray
    actions: np.ndarray
    log_probs: np.ndarray
    rewards: np.ndarray
    values: np.ndarray
    dones: np.ndarray
    gt_wrench: np.ndarray       # estimator targets, base frame, unscaled
    bootstrap_value: np.ndarray  # (num_envs,)
    advantages: np.ndarray | None = None
    returns: np.ndarray | None = None
    # logging extras
    lin_err: np.ndarray | None = None
    ang_err: np.ndarray | None = None
    active: np.ndarray | None = None
    term_means: dict[str, float] = field(default_factory=dict)


def compute_gae(rewards, values, dones, bootstrap, gamma: float, lam: float):
    """Generalized advantage estimation over (T, n) arrays.

    delta_t = r_t + gamma * v_{t+1} * (1 - done_t) - v_t
    A_t = delta_t + gamma * lam * (1 - done_t) * A_{t+1}
    """
    rewards = np.asarray(rewards, dtype=float)
    values = np.asarray(values, dtype=float)
    not_done = 1.0 - np.asarray(dones, dtype=float)
    T = rewards.shape[0]
    adv = np.zeros_like(rewards)
    next_value = np.asarray(bootstrap, dtype=float)
    gae = np.zeros_like(next_value)
    for t in range(T - 1, -1, -1):
        delta = rewards[t] + gamma * next_value * not_done[t] - values[t]
        gae = delta + gamma * lam * not_done[t] * gae
        adv[t] = gae
        next_value = values[t]
    return adv, adv + values


@dataclass
class UpdateStats:
    policy_loss: float = 0.0
    value_loss: float = 0.0
    estimator_loss: float = 0.0
    kl_to_old: float = 0.0
    kl_to_teacher: float = 0.0
    clip_fraction: float = 0.0
    entropy: float = 0.0
    aborted: bool = False


class PolicySet:
    """Actor, critic, and optionally an intent estimator with optimizers."""

    def __init__(self, cfg: RunConfig, role: str, rng: np.random.Generator,
                 with_estimator: bool | None = None):
        self.role = role
        H = cfg.world.history_len
        obs_dim = 9 * H + ESTIMATE_DIM   # proprioception + wrench/estimate slots
        from .world import critic_obs_dim
        hidden = tuple(cfg.ppo.hidden_sizes)
        lr = cfg.ppo.learning_rate
        self.actor = nets.init_mlp(rng, obs_dim, hidden, "gaussian_policy",
                                   ACTION_DIM, cfg.ppo.log_std_init)
        self.critic = nets.init_mlp(rng, critic_obs_dim(H), hidden,
                                    "scalar_value", output_gain=1.0)
        if with_estimator is None:
            with_estimator = role == "student"
        self.estimator = None
        if with_estimator:
            self.estimator = nets.init_mlp(rng, 9 * H, hidden, "regression_3",
                                           output_gain=0.01)
        self.actor_opt = nets.adam_init(self.actor, lr)
        self.critic_opt = nets.adam_init(self.critic, lr)
        self.estimator_opt = (nets.adam_init(self.estimator, cfg.distill.estimator_lr)
                              if with_estimator else None)


def actor_input(o_trans: np.ndarray, wrench_like: np.ndarray, scale: np.ndarray):
    """Concatenate proprioception with (scaled) wrench-valued slots."""
    return np.concatenate([o_trans, wrench_like / scale], axis=-1)


def estimate_wrench(estimator: nets.Mlp | None, o_trans: np.ndarray) -> np.ndarray:
    """Intent estimates in physical units; zeros when the estimator is off."""
    if estimator is None:
        return np.zeros(o_trans.shape[:-1] + (ESTIMATE_DIM,))
    out, _ = nets.forward(estimator, o_trans.reshape(-1, o_trans.shape[-1]))
    return out.reshape(o_trans.shape[:-1] + (ESTIMATE_DIM,))


def collect_rollouts(policies: PolicySet, env: VecTransportEnv, cfg: RunConfig,
                     rng: np.random.Generator, obs: dict) -> tuple[RolloutBatch, dict]:
    """Run the synchronous rollout phase against a fixed parameter snapshot."""
    T, n = cfg.ppo.horizon, env.n
    H = cfg.world.history_len
    scale = wrench_scale(cfg)
    c_scale = critic_scale(cfg)
    b = RolloutBatch(
        o_trans=np.zeros((T, n, 9 * H)),
        wrench_obs=np.zeros((T, n, 3)),
        critic_obs=np.zeros((T, n, obs["critic"].shape[-1])),
        actions=np.zeros((T, n, ACTION_DIM)),
        log_probs=np.zeros((T, n)),
        rewards=np.zeros((T, n)),
        values=np.zeros((T, n)),
        dones=np.zeros((T, n), dtype=bool),
        gt_wrench=np.zeros((T, n, 3)),
        bootstrap_value=np.zeros(n),
        lin_err=np.zeros((T, n)),
        ang_err=np.zeros((T, n)),
        active=np.zeros((T, n), dtype=bool),
    )
    term_sums: dict[str, float] = {}
    log_std = policies.actor.clamped_log_std()
    b_f = cfg.rewards.admittance_force_gain
    b_t = cfg.rewards.admittance_torque_gain
    for t in range(T):
        o_trans = obs["o_trans"][:, 0]
        true_wrench = obs["wrench_base"][:, 0]
        b.o_trans[t] = o_trans
        b.wrench_obs[t] = true_wrench
        b.critic_obs[t] = obs["critic"][:, 0] / c_scale
        b.gt_wrench[t] = true_wrench
        if policies.role == "teacher":
            a_in = actor_input(o_trans, true_wrench, scale)
        else:
            beta = estimate_wrench(policies.estimator, o_trans)
            a_in = actor_input(o_trans, beta, scale)
        mean, _ = nets.forward(policies.actor, a_in)
        action = nets.gaussian_sample(mean, log_std, rng)
        b.actions[t] = action
        b.log_probs[t] = nets.gaussian_log_prob(mean, log_std, action)
        value, _ = nets.forward(policies.critic, b.critic_obs[t])
        b.values[t] = value[:, 0]

        result = env.step(action[:, None, :])
        b.rewards[t] = result.reward
        b.dones[t] = result.done
        # tracking diagnostics against the wrench applied this tick
        w = result.wrench_world
        v = env.world.base.linear_velocity[:, 0]
        b.lin_err[t] = np.linalg.norm(w[:, :2] / b_f - v, axis=-1)
        b.ang_err[t] = np.abs(w[:, 2] / b_t - env.world.base.yaw_rate[:, 0])
        b.active[t] = np.abs(w).sum(axis=-1) > 1e-9
        for name, arr in result.breakdown.terms().items():
            term_sums[name] = term_sums.get(name, 0.0) + float(arr[:, 0].mean())
        obs = result.obs
    value, _ = nets.forward(policies.critic, obs["critic"][:, 0] / c_scale)
    b.bootstrap_value = value[:, 0]
    b.advantages, b.returns = compute_gae(
        b.rewards, b.values, b.dones, b.bootstrap_value,
        cfg.ppo.gamma, cfg.ppo.gae_lambda)
    b.term_means = {k: v / T for k, v in term_sums.items()}
    return b, obs


def _snapshot(*nets_list):
    return [net.copy() if net is not None else None for net in nets_list]


def ppo_update(policies: PolicySet, batch: RolloutBatch, cfg: RunConfig,
               rng: np.random.Generator,
               teacher: nets.Mlp | None = None,
               kl_weight: float = 0.0,
               estimator_loss_weight: float = 1.0,
               kl_direction: str = "student_teacher") -> UpdateStats:
    """Clipped-surrogate update; optional KL-to-teacher and estimator losses.

    Aborts (restoring the pre-update parameters) if any loss is non-finite.
    """
    T, n = batch.rewards.shape
    N = T * n
    scale = wrench_scale(cfg)
    o_trans = batch.o_trans.reshape(N, -1)
    wrench_obs = batch.wrench_obs.reshape(N, 3)
    critic_obs = batch.critic_obs.reshape(N, -1)
    actions = batch.actions.reshape(N, ACTION_DIM)
    logp_old = batch.log_probs.reshape(N)
    gt = batch.gt_wrench.reshape(N, 3)
    adv = batch.advantages.reshape(N)
    adv = (adv - adv.mean()) / (adv.std() + 1e-8)
    returns = batch.returns.reshape(N)

    teacher_mean = teacher_log_std = None
    if teacher is not None and kl_weight != 0.0:
        t_in = actor_input(o_trans, wrench_obs, scale)
        teacher_mean, _ = nets.forward(teacher, t_in)
        teacher_log_std = teacher.clamped_log_std()

    saved = _snapshot(policies.actor, policies.critic, policies.estimator)
    stats = UpdateStats()
    clip = cfg.ppo.clip
    batches = 0
    try:
        for _ in range(cfg.ppo.epochs):
            perm = rng.permutation(N)
            for mb in np.array_split(perm, cfg.ppo.minibatches):
                m = mb.size
                ot = o_trans[mb]
                # actor input (estimates recomputed under the current estimator)
                if policies.role == "teacher":
                    a_in = actor_input(ot, wrench_obs[mb], scale)
                else:
                    beta = estimate_wrench(policies.estimator, ot)
                    a_in = actor_input(ot, beta, scale)
                log_std = policies.actor.clamped_log_std()
                mean, cache = nets.forward(policies.actor, a_in)
                logp = nets.gaussian_log_prob(mean, log_std, actions[mb])
                ratio = np.exp(logp - logp_old[mb])
                a = adv[mb]
                unclipped = ratio * a
                clipped = np.clip(ratio, 1.0 - clip, 1.0 + clip) * a
                obj = np.minimum(unclipped, clipped)
                policy_loss = -obj.mean()
                # gradient flows through ratio only where the unclipped branch wins
                pass_through = unclipped <= clipped
                g_ratio = np.where(pass_through, a, 0.0)
                g_logp = -(g_ratio * ratio) / m
                dmean_lp, dstd_lp = nets.gaussian_log_prob_grads(mean, log_std, actions[mb])
                dmean = dmean_lp * g_logp[:, None]
                dlog_std = (dstd_lp * g_logp[:, None]).sum(axis=0)

                kl_teacher = 0.0
                if teacher_mean is not None:
                    t_mean, t_std = teacher_mean[mb], teacher_log_std
                    if kl_direction == "student_teacher":
                        kl = nets.gaussian_kl(mean, log_std, t_mean, t_std)
                        dkl_m, dkl_s = nets.gaussian_kl_grads(mean, log_std,
                                                              t_mean, t_std)
                    else:
                        # forward KL: gradient w.r.t. the q (student) side
                        kl = nets.gaussian_kl(t_mean, t_std, mean, log_std)
                        q_var = np.exp(2.0 * log_std)
                        t_var = np.exp(2.0 * t_std)
                        diff = mean - t_mean
                        dkl_m = diff / q_var
                        dkl_s = 1.0 - (t_var + diff * diff) / q_var
                    kl_teacher = float(kl.mean())
                    dmean += kl_weight * dkl_m / m
                    dlog_std += kl_weight * np.broadcast_to(
                        dkl_s, mean.shape).sum(axis=0) / m

                if cfg.ppo.entropy_coef != 0.0:
                    dlog_std -= cfg.ppo.entropy_coef * np.ones_like(dlog_std)

                if not np.isfinite(policy_loss):
                    raise FloatingPointError("non-finite policy loss")
                agrads, _ = nets.backward(policies.actor, cache, dmean)
                agrads.log_std = dlog_std
                nets.optimizer_step(policies.actor, agrads, policies.actor_opt)

                # asymmetric critic on privileged observations only
                v, vcache = nets.forward(policies.critic, critic_obs[mb])
                verr = v[:, 0] - returns[mb]
                value_loss = cfg.ppo.value_coef * float((verr ** 2).mean())
                if not np.isfinite(value_loss):
                    raise FloatingPointError("non-finite value loss")
                gv = (cfg.ppo.value_coef * 2.0 * verr / m)[:, None]
                cgrads, _ = nets.backward(policies.critic, vcache, gv)
                nets.optimizer_step(policies.critic, cgrads, policies.critic_opt)

                est_loss = 0.0
                if policies.estimator is not None and estimator_loss_weight > 0.0:
                    pred, ecache = nets.forward(policies.estimator, ot)
                    diff = pred - gt[mb]
                    est_loss = float((diff ** 2).sum(axis=-1).mean())
                    if not np.isfinite(est_loss):
                        raise FloatingPointError("non-finite estimator loss")
                    ge = estimator_loss_weight * 2.0 * diff / m
                    egrads, _ = nets.backward(policies.estimator, ecache, ge)
                    nets.optimizer_step(policies.estimator, egrads, policies.estimator_opt)

                stats.policy_loss += float(policy_loss)
                stats.value_loss += value_loss
                stats.estimator_loss += est_loss
                stats.kl_to_old += float((logp_old[mb] - logp).mean())
                stats.kl_to_teacher += kl_teacher
                stats.clip_fraction += float((np.abs(ratio - 1.0) > clip).mean())
                batches += 1
    except FloatingPointError:
        policies.actor, policies.critic, policies.estimator = saved
        stats.aborted = True
        return stats
    for name in ("policy_loss", "value_loss", "estimator_loss", "kl_to_old",
                 "kl_to_teacher", "clip_fraction"):
        setattr(stats, name, getattr(stats, name) / max(batches, 1))
    stats.entropy = float(nets.gaussian_entropy(policies.actor.clamped_log_std()))
    return stats


# ---------------------------------------------------------------------------
# Checkpoint bundles
# ---------------------------------------------------------------------------

def save_bundle(policies: PolicySet, cfg: RunConfig, directory: str | Path,
                iteration: int, seed: int) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    meta = {"role": policies.role, "iteration": iteration, "seed": seed,
            "history_len": cfg.world.history_len}
    nets.save_net(policies.actor, directory, "actor", meta)
    nets.save_net(policies.critic, directory, "critic", meta)
    if policies.estimator is not None:
        nets.save_net(policies.estimator, directory, "estimator", meta)
    with open(directory / "bundle.json", "w") as fh:
        json.dump({**meta, "config": config_to_dict(cfg)}, fh, indent=2, sort_keys=True)
        fh.write("\n")


@dataclass
class PolicyBundle:
    actor: nets.Mlp
    critic: nets.Mlp | None
    estimator: nets.Mlp | None
    meta: dict


def load_bundle(directory: str | Path) -> PolicyBundle:
    directory = Path(directory)
    with open(directory / "bundle.json") as fh:
        meta = json.load(fh)
    actor, _ = nets.load_net(directory, "actor")
    critic = estimator = None
    if (directory / "critic.json").exists():
        critic, _ = nets.load_net(directory, "critic")
    if (directory / "estimator.json").exists():
        estimator, _ = nets.load_net(directory, "estimator")
    return PolicyBundle(actor, critic, estimator, meta)


# ---------------------------------------------------------------------------
# Training drivers
# ---------------------------------------------------------------------------

CSV_FIELDS = ["iteration", "mean_reward", "lin_track_err", "ang_track_err",
              "estimator_mae_force", "estimator_mae_torque",
              "policy_loss", "value_loss", "estimator_loss",
              "kl_to_old", "kl_to_teacher", "clip_fraction", "entropy",
              "force_tracking", "torque_tracking", "payload_height",
              "joint_torque", "joint_dof", "action", "termination",
              "arm_posture", "elapsed_s"]


def _batch_metrics(policies: PolicySet, batch: RolloutBatch) -> dict[str, float]:
    active = batch.active
    any_active = active.any()
    out = {
        "mean_reward": float(batch.rewards.mean()),
        "lin_track_err": float(batch.lin_err[active].mean()) if any_active else 0.0,
        "ang_track_err": float(batch.ang_err[active].mean()) if any_active else 0.0,
        "estimator_mae_force": "",
        "estimator_mae_torque": "",
    }
    if policies.estimator is not None:
        pred = estimate_wrench(policies.estimator, batch.o_trans)
        err = pred - batch.gt_wrench
        out["estimator_mae_force"] = float(
            np.linalg.norm(err[..., :2], axis=-1).mean())
        out["estimator_mae_torque"] = float(np.abs(err[..., 2]).mean())
    out.update({k: float(v) for k, v in batch.term_means.items()})
    return out


def train_policy(cfg: RunConfig, role: str, out_dir: str | Path,
                 teacher_dir: str | Path | None = None,
                 progress: bool = False) -> Path:
    """Train one policy (teacher, student, or pure_rl); returns the bundle dir.

    Student roles require a teacher checkpoint for the KL term unless the KL
    weight is zero.
    """
    if role not in ("teacher", "student", "pure_rl"):
        raise ValueError(f"unknown role {role!r}")
    cfg.validate()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    from .config import save_config
    save_config(cfg, out_dir / "config.json")

    ss = np.random.SeedSequence(cfg.seed)
    env_seed, policy_seed, update_seed = [int(s.generate_state(1)[0])
                                          for s in ss.spawn(3)]
    rng_policy = np.random.default_rng(policy_seed)
    rng_update = np.random.default_rng(update_seed)

    env = VecTransportEnv(cfg, cfg.ppo.num_envs, seed=env_seed, followers=1,
                          fixed_mass=cfg.ppo.fixed_mass)
    with_estimator = role == "student" and cfg.distill.estimator_enabled
    policies = PolicySet(cfg, "teacher" if role == "teacher" else "student",
                         rng_policy, with_estimator=with_estimator)
    policies.role = "teacher" if role == "teacher" else "student"

    teacher_net = None
    if role == "student":
        if teacher_dir is None and cfg.distill.teacher_checkpoint:
            teacher_dir = cfg.distill.teacher_checkpoint
        if teacher_dir is not None:
            teacher_net = load_bundle(teacher_dir).actor
        elif cfg.distill.kl_weight_start > 0:
            raise ValueError("student role with KL weight > 0 needs a teacher checkpoint")

    obs = env.observe()
    csv_path = out_dir / "metrics.csv"
    t0 = _time.monotonic()
    with open(csv_path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_FIELDS)
        writer.writeheader()
        iters = cfg.ppo.iterations
        for it in range(1, iters + 1):
            batch, obs = collect_rollouts(policies, env, cfg, rng_policy, obs)
            if role == "student":
                frac = (it - 1) / max(iters - 1, 1)
                kl_w = cfg.distill.kl_weight_start + frac * (
                    cfg.distill.kl_weight_end - cfg.distill.kl_weight_start)
                est_w = cfg.distill.estimator_loss_weight
            else:
                kl_w, est_w = 0.0, 0.0
            stats = ppo_update(policies, batch, cfg, rng_update,
                               teacher=teacher_net, kl_weight=kl_w,
                               estimator_loss_weight=est_w,
                               kl_direction=cfg.distill.kl_direction)
            if it % cfg.ppo.eval_interval == 0 or it == iters or it == 1:
                row = {"iteration": it, **_batch_metrics(policies, batch),
                       "policy_loss": stats.policy_loss,
                       "value_loss": stats.value_loss,
                       "estimator_loss": stats.estimator_loss,
                       "kl_to_old": stats.kl_to_old,
                       "kl_to_teacher": stats.kl_to_teacher,
                       "clip_fraction": stats.clip_fraction,
                       "entropy": stats.entropy,
                       "elapsed_s": round(_time.monotonic() - t0, 2)}
                writer.writerow(row)
                fh.flush()
                if progress:
                    print(f"[{role}] iter {it}/{iters} reward {row['mean_reward']:.4f} "
                          f"lin_err {row['lin_track_err']:.3f} "
                          f"est_mae {row['estimator_mae_force']}", flush=True)
            if cfg.ppo.checkpoint_interval and it % cfg.ppo.checkpoint_interval == 0:
                save_bundle(policies, cfg, out_dir / f"ckpt_{it:06d}", it, cfg.seed)
    save_bundle(policies, cfg, out_dir / "final", cfg.ppo.iterations, cfg.seed)
    return out_dir / "final"


def train_teacher(cfg: RunConfig, out_dir: str | Path, progress: bool = False) -> Path:
    return train_policy(cfg, "teacher", out_dir, progress=progress)
