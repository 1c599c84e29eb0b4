"""Evaluation rollouts, tracking/estimation metrics, traces, and saliency."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import nets, rl
from . import world as wd
from .config import RunConfig, config_from_dict
from .env import VecTransportEnv

ACTIVE_EPS = 1e-3   # N; ticks with a smaller commanded force are excluded


@dataclass
class EvalBatch:
    """Time-major arrays from a batch of deterministic evaluation episodes."""

    time: np.ndarray            # (T,)
    wrench: np.ndarray          # (T, n, 3) world frame, as applied
    base_vel: np.ndarray        # (T, n, k, 2) world
    base_yaw_rate: np.ndarray   # (T, n, k)
    ee_vel: np.ndarray          # (T, n, k, 3) world
    est: np.ndarray             # (T, n, k, 3) base frame
    gt_base: np.ndarray         # (T, n, k, 3) base frame
    grip_force: np.ndarray      # (T, n, k, 4) follower-side (Fx, Fy, Fz, tau)
    height: np.ndarray          # (T, n, k) base coordinates
    reward: np.ndarray          # (T, n)
    terminated: np.ndarray      # (n,) bool, any termination during the batch
    mass: np.ndarray            # (n,)
    o_trans: np.ndarray         # (T, n, k, 9H) as seen by the policy

    @property
    def num_followers(self) -> int:
        return self.base_vel.shape[2]


def _policy_actions(bundle: rl.PolicyBundle, cfg: RunConfig, obs: dict) -> tuple:
    """Deterministic (mean) actions for all followers; returns (action, est)."""
    n, k = obs["o_trans"].shape[:2]
    o_trans = obs["o_trans"].reshape(n * k, -1)
    scale = rl.wrench_scale(cfg)
    if bundle.meta.get("role") == "teacher":
        est = obs["wrench_base"].reshape(n * k, 3)
    else:
        est = rl.estimate_wrench(bundle.estimator, o_trans)
    a_in = rl.actor_input(o_trans, est, scale)
    mean, _ = nets.forward(bundle.actor, a_in)
    return mean.reshape(n, k, -1), est.reshape(n, k, 3)


def rollout_eval(bundle: rl.PolicyBundle, cfg: RunConfig, episodes: int = 32,
                 fixed_mass: float | None = None, followers: int = 1,
                 seed: int = 0, wrench_mode: str = "schedule",
                 knot_profile=None, ticks: int | None = None,
                 obs_noise: bool = True,
                 reset_yaw: float | None = None) -> EvalBatch:
    """Run full episodes under the deterministic policy and record traces.

    Evaluation always disables the training-time wrench multiplier so the
    commanded magnitudes are exact.
    """
    env = VecTransportEnv(cfg, episodes, seed=seed, followers=followers,
                          wrench_mode=wrench_mode, knot_profile=knot_profile,
                          fixed_mass=fixed_mass, obs_noise=obs_noise,
                          wrench_dr=False, episode_ticks=ticks,
                          reset_yaw=reset_yaw)
    T = ticks if ticks is not None else int(round(
        cfg.wrench.episode_duration / cfg.physics.control_dt))
    n, k = episodes, followers
    out = EvalBatch(
        time=np.arange(T) * cfg.physics.control_dt,
        wrench=np.zeros((T, n, 3)), base_vel=np.zeros((T, n, k, 2)),
        base_yaw_rate=np.zeros((T, n, k)), ee_vel=np.zeros((T, n, k, 3)),
        est=np.zeros((T, n, k, 3)), gt_base=np.zeros((T, n, k, 3)),
        grip_force=np.zeros((T, n, k, 4)), height=np.zeros((T, n, k)),
        reward=np.zeros((T, n)), terminated=np.zeros(n, dtype=bool),
        mass=env.world.payload.mass.copy(),
        o_trans=np.zeros((T, n, k, 9 * cfg.world.history_len)))
    obs = env.observe()
    for t in range(T):
        action, est = _policy_actions(bundle, cfg, obs)
        res = env.step(action)
        out.wrench[t] = res.wrench_world
        out.base_vel[t] = env.world.base.linear_velocity
        out.base_yaw_rate[t] = env.world.base.yaw_rate
        out.ee_vel[t] = obs["ee_vel"]
        out.est[t] = est
        out.gt_base[t] = obs["wrench_base"]
        out.grip_force[t] = res.info.ee_wrench
        out.height[t] = wd.payload_height_in_base(env.world, env.wcfg)
        out.reward[t] = res.reward
        out.terminated |= res.terminated
        out.o_trans[t] = obs["o_trans"]
        obs = res.obs
    return out


def _active_mask(batch: EvalBatch) -> np.ndarray:
    """(T, n) ticks where a commanded wrench is being applied."""
    return np.linalg.norm(batch.wrench, axis=-1) > ACTIVE_EPS


def _hold_mask(batch: EvalBatch) -> np.ndarray:
    """(T, n) ticks in the full-magnitude hold phase of each episode."""
    mag = np.linalg.norm(batch.wrench, axis=-1)
    peak = mag.max(axis=0, keepdims=True)
    return (mag >= 0.999 * peak) & (peak > ACTIVE_EPS)


def tracking_errors(batch: EvalBatch, cfg: RunConfig) -> dict[str, float]:
    """Mean admittance tracking errors over wrench-active ticks."""
    b_f = cfg.rewards.admittance_force_gain
    b_t = cfg.rewards.admittance_torque_gain
    active = _active_mask(batch)
    v_ref = batch.wrench[..., None, :2] / b_f              # (T, n, 1, 2)
    w_ref = batch.wrench[..., None, 2] / b_t
    lin = np.linalg.norm(batch.base_vel - v_ref, axis=-1)  # (T, n, k)
    ang = np.abs(batch.base_yaw_rate - w_ref)
    m = active[..., None] & np.ones_like(lin, dtype=bool)
    if not m.any():
        return {"lin_tracking_error": float("nan"), "ang_tracking_error": float("nan")}
    return {"lin_tracking_error": float(lin[m].mean()),
            "ang_tracking_error": float(ang[m].mean())}


def estimation_errors(batch: EvalBatch) -> dict[str, float]:
    """Force (planar norm) and torque MAE; steady-state = hold phase."""
    err = batch.est - batch.gt_base
    f_err = np.linalg.norm(err[..., :2], axis=-1)          # (T, n, k)
    t_err = np.abs(err[..., 2])
    hold = _hold_mask(batch)[..., None] & np.ones_like(f_err, dtype=bool)
    out = {"force_mae": float(f_err.mean()), "torque_mae": float(t_err.mean())}
    if hold.any():
        out["hold_force_mae"] = float(f_err[hold].mean())
        out["hold_torque_mae"] = float(t_err[hold].mean())
    else:
        out["hold_force_mae"] = float("nan")
        out["hold_torque_mae"] = float("nan")
    return out


def intent_alignment(batch: EvalBatch) -> float:
    """Mean cosine between the commanded force and the EE planar velocity."""
    f = batch.wrench[..., None, :2]                        # (T, n, 1, 2)
    v = batch.ee_vel[..., :2]                              # (T, n, k, 2)
    fn = np.linalg.norm(f, axis=-1)
    vn = np.linalg.norm(v, axis=-1)
    valid = (fn > ACTIVE_EPS) & (vn > 1e-9)
    valid = valid & np.ones(v.shape[:-1], dtype=bool)
    if not valid.any():
        return float("nan")
    cos = np.sum(f * v, axis=-1) / np.maximum(fn * vn, 1e-12)
    return float(cos[valid].mean())


def constraint_wrench(batch: EvalBatch) -> dict[str, float]:
    """Mean internal grip load during the hold phase (should stay small)."""
    f = np.linalg.norm(batch.grip_force[..., :2], axis=-1)
    tau = np.abs(batch.grip_force[..., 3])
    hold = _hold_mask(batch)[..., None] & np.ones_like(f, dtype=bool)
    if not hold.any():
        return {"constraint_force": float("nan"), "constraint_torque": float("nan")}
    return {"constraint_force": float(f[hold].mean()),
            "constraint_torque": float(tau[hold].mean())}


def admittance_nrmse(batch: EvalBatch, cfg: RunConfig) -> float:
    """Normalized RMS error between B_force * v_base and the commanded force."""
    b_f = cfg.rewards.admittance_force_gain
    realized = b_f * batch.base_vel                        # (T, n, k, 2)
    cmd = np.broadcast_to(batch.wrench[..., None, :2], realized.shape)
    rms_err = np.sqrt(np.mean((realized - cmd) ** 2))
    scale = np.sqrt(np.mean(cmd ** 2))
    return float(rms_err / max(scale, 1e-9))


def summarize(batch: EvalBatch, cfg: RunConfig) -> dict[str, float]:
    out = {}
    out.update(tracking_errors(batch, cfg))
    out.update(estimation_errors(batch))
    out.update(constraint_wrench(batch))
    out["intent_alignment"] = intent_alignment(batch)
    out["admittance_nrmse"] = admittance_nrmse(batch, cfg)
    out["mean_reward"] = float(batch.reward.mean())
    out["termination_rate"] = float(batch.terminated.mean())
    out["mean_mass"] = float(batch.mass.mean())
    return out


def load_run_config(bundle_dir: str | Path) -> RunConfig:
    with open(Path(bundle_dir) / "bundle.json") as fh:
        return config_from_dict(json.load(fh)["config"])


def evaluate_bundle(bundle_dir: str | Path, episodes: int = 32,
                    fixed_mass: float | None = 2.0, followers: int = 1,
                    seed: int = 0, wrench_mode: str = "schedule",
                    ticks: int | None = None) -> dict[str, float]:
    """Full evaluation pipeline from a checkpoint directory."""
    bundle = rl.load_bundle(bundle_dir)
    cfg = load_run_config(bundle_dir)
    batch = rollout_eval(bundle, cfg, episodes=episodes, fixed_mass=fixed_mass,
                         followers=followers, seed=seed,
                         wrench_mode=wrench_mode, ticks=ticks)
    return summarize(batch, cfg)


def mass_sweep(bundle_dir: str | Path, masses, followers=(1,),
               episodes: int = 16, seed: int = 0,
               out_path: str | Path | None = None) -> list[dict]:
    """Evaluate one policy across payload masses and team sizes."""
    rows = []
    for k in followers:
        for m in masses:
            row = {"followers": int(k), "mass": float(m)}
            row.update(evaluate_bundle(bundle_dir, episodes=episodes,
                                       fixed_mass=float(m), followers=int(k),
                                       seed=seed))
            rows.append(row)
    if out_path is not None:
        with open(out_path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
            writer.writeheader()
            writer.writerows(rows)
    return rows


# ---------------------------------------------------------------------------
# Episode traces (JSON lines)
# ---------------------------------------------------------------------------

@dataclass
class EpisodeTrace:
    """Single-episode tick records, exportable as JSON lines."""

    records: list[dict] = field(default_factory=list)

    def append(self, **fields) -> None:
        self.records.append(fields)

    def to_jsonl(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            for rec in self.records:
                fh.write(json.dumps(rec) + "\n")

    @classmethod
    def from_batch(cls, batch: EvalBatch, env_index: int = 0) -> "EpisodeTrace":
        trace = cls()
        for t in range(batch.time.shape[0]):
            trace.append(
                time=round(float(batch.time[t]), 6),
                wrench=[round(float(x), 6) for x in batch.wrench[t, env_index]],
                base_vel=[[round(float(x), 6) for x in v]
                          for v in batch.base_vel[t, env_index]],
                est=[[round(float(x), 6) for x in v]
                     for v in batch.est[t, env_index]],
                height=[round(float(x), 6) for x in batch.height[t, env_index]],
                reward=round(float(batch.reward[t, env_index]), 9),
            )
        return trace


# ---------------------------------------------------------------------------
# Saliency
# ---------------------------------------------------------------------------

def saliency(estimator: nets.Mlp, o_trans: np.ndarray,
             output_channel: int | None = None) -> np.ndarray:
    """|d (output mean) / d input| per input channel, averaged over the batch.

    output_channel selects a single estimate component; None uses the scalar
    mean over all three ((fx + fy + tz) / 3).
    """
    x = np.asarray(o_trans, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    out, cache = nets.forward(estimator, x)
    g = np.zeros_like(out)
    if output_channel is None:
        g[:] = 1.0 / out.shape[-1]
    else:
        g[:, output_channel] = 1.0
    _, gin = nets.backward(estimator, cache, g)
    return np.abs(gin).mean(axis=0)


def saliency_series(estimator: nets.Mlp, o_trans_series: np.ndarray) -> np.ndarray:
    """Per-tick saliency of the scalar estimate mean, (T, 9H)."""
    x = np.asarray(o_trans_series, dtype=float)
    out, cache = nets.forward(estimator, x)
    g = np.full_like(out, 1.0 / out.shape[-1])
    _, gin = nets.backward(estimator, cache, g)
    return np.abs(gin)


def saliency_by_group(estimator: nets.Mlp, o_trans: np.ndarray,
                      history_len: int,
                      output_channel: int | None = None) -> dict:
    """Saliency aggregated per (quantity, joint) over history steps."""
    s = saliency(estimator, o_trans, output_channel)
    labels = wd.obs_channel_labels(history_len)
    groups: dict[tuple, float] = {}
    for value, (quantity, joint, _) in zip(s, labels):
        groups[(quantity, joint)] = groups.get((quantity, joint), 0.0) + float(value)
    return groups


def top_joint_position_channel(groups: dict) -> str:
    """Joint with the largest aggregated joint-position saliency."""
    pos = {joint: v for (quantity, joint), v in groups.items()
           if quantity == "joint_position"}
    return max(pos, key=pos.get)
