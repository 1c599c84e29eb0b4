"""Vectorized transport environment.

A batch of independent episodes stepped in lockstep with numpy.  Each episode
couples one or more followers to a payload, applies a leader wrench profile,
and exposes the three observation branches (proprioceptive window, privileged
wrench, critic) plus the per-tick reward breakdown.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import physics, rewards, world as wd, wrench_gen
from .config import RunConfig

EPISODE_TIME_EPS = 1e-9


@dataclass
class StepResult:
    obs: dict[str, np.ndarray]
    reward: np.ndarray              # (n,) follower-0 weighted total
    done: np.ndarray                # (n,) bool (termination or timeout)
    terminated: np.ndarray          # (n,) bool (failure only)
    breakdown: rewards.RewardBreakdown
    info: physics.StepInfo
    wrench_world: np.ndarray        # (n, 3) wrench applied during this tick


class VecTransportEnv:
    """Synchronous batch of transport episodes with auto-reset."""

    def __init__(self, cfg: RunConfig, num_envs: int, seed: int = 0,
                 followers: int | None = None,
                 wrench_mode: str = "schedule",
                 knot_profile: wrench_gen.KnotProfile | None = None,
                 fixed_mass: float | None = None,
                 obs_noise: bool = True,
                 wrench_dr: bool = True,
                 episode_ticks: int | None = None,
                 reset_yaw: float | None = None):
        self.cfg = cfg
        self.n = num_envs
        self.k = followers if followers is not None else cfg.world.follower_count
        self.wcfg = cfg.world
        self.pcfg = cfg.physics
        self.rng = np.random.default_rng(np.random.SeedSequence(seed))
        self.wrench_mode = wrench_mode
        self.knot_profile = knot_profile
        self.fixed_mass = fixed_mass if fixed_mass is not None else cfg.ppo.fixed_mass
        self.obs_noise = obs_noise
        self.wrench_dr = wrench_dr
        self.reset_yaw = reset_yaw
        self.H = cfg.world.history_len
        self.dt = cfg.physics.control_dt
        if episode_ticks is None:
            episode_ticks = int(round(cfg.wrench.episode_duration / self.dt))
        self.episode_ticks = episode_ticks
        self.tick = np.zeros(self.n, dtype=int)

        base_cfg_followers = cfg.world.follower_count
        if self.k != base_cfg_followers:
            # team-size override for zero-shot evaluation
            import dataclasses as _dc
            self.wcfg = _dc.replace(cfg.world, follower_count=self.k)
        self.world = wd.zeros_state(self.wcfg, self.n)
        self.window = wd.ObservationWindow.empty(self.n, self.k, self.H)
        self.profile = wrench_gen.sample_episode_profile(self.rng, cfg.wrench, self.n)
        self.ou_state = wrench_gen.ou_init(cfg.wrench, self.n)
        self.dr_factor = np.ones(self.n)
        self.prev_full_action = np.zeros((self.n, self.k, 6))
        self._prev_ee_vel = np.zeros((self.n, self.k, 3))
        self._prev_payload_vel = np.zeros((self.n, 4))   # vx, vy, yaw rate, vz
        self._external_wrench = np.zeros((self.n, 3))
        self.reset_all()

    # ------------------------------------------------------------------
    # Reset
    # ------------------------------------------------------------------

    def reset_all(self) -> dict[str, np.ndarray]:
        self.reset_envs(np.ones(self.n, dtype=bool))
        return self.observe()

    def _sample_mass(self, count: int) -> np.ndarray:
        if self.fixed_mass is not None:
            return np.full(count, float(self.fixed_mass))
        lo, hi = self.wcfg.mass_range
        return self.rng.uniform(lo, hi, count)

    def reset_envs(self, mask: np.ndarray) -> None:
        idx = np.flatnonzero(mask)
        if idx.size == 0:
            return
        m = idx.size
        w, cfg = self.world, self.wcfg
        mass = self._sample_mass(m)
        w.payload.mass[idx] = mass
        w.payload.yaw_inertia[idx] = wd.box_yaw_inertia(mass, cfg.payload_dims)

        height, q_eq = physics.equilibrium_payload_height(mass, cfg, self.pcfg, self.k)
        if self.reset_yaw is None:
            payload_yaw = self.rng.uniform(-np.pi, np.pi, m)
        else:
            payload_yaw = np.full(m, float(self.reset_yaw))
        w.payload.position[idx] = 0.0
        w.payload.yaw[idx] = payload_yaw
        w.payload.height[idx] = height
        w.payload.linear_velocity[idx] = 0.0
        w.payload.yaw_rate[idx] = 0.0
        w.payload.vertical_velocity[idx] = 0.0

        # place each follower outside its grasp point, facing the payload
        offsets = np.asarray(cfg.grasp_offsets[: self.k], dtype=float)  # (k, 2)
        off_world = wd.rotate_planar(offsets[None, :, :], payload_yaw[:, None])
        norms = np.linalg.norm(off_world, axis=-1, keepdims=True)
        u = np.where(norms > 1e-9, off_world / np.maximum(norms, 1e-9),
                     np.stack([np.cos(payload_yaw), np.sin(payload_yaw)], -1)[:, None, :])
        ee_local_xy, _, _ = wd.forward_kinematics(
            q_eq, np.zeros((m, 2)), np.zeros(m), cfg)
        reach = np.linalg.norm(ee_local_xy, axis=-1)            # (m,)
        grasp_world = off_world                                  # payload at origin
        base_pos = grasp_world + u * reach[:, None, None]
        base_yaw = np.arctan2(-u[..., 1], -u[..., 0])
        w.base.position[idx] = base_pos
        w.base.yaw[idx] = base_yaw
        w.base.linear_velocity[idx] = 0.0
        w.base.yaw_rate[idx] = 0.0

        w.arm.joint_positions[idx] = q_eq[:, None, :]
        w.arm.joint_velocities[idx] = 0.0
        w.arm.joint_accelerations[idx] = 0.0
        w.arm.previous_action[idx] = np.asarray(cfg.default_posture)
        w.leader_wrench[idx] = 0.0
        w.time[idx] = 0.0
        self.tick[idx] = 0

        # fresh wrench profile and domain-randomization factor
        fresh = wrench_gen.sample_episode_profile(self.rng, self.cfg.wrench, m)
        self.profile.target_force[idx] = fresh.target_force
        self.profile.target_torque[idx] = fresh.target_torque
        self.profile.is_zero_episode[idx] = fresh.is_zero_episode
        if self.wrench_dr:
            f = self.cfg.ppo.wrench_dr_fraction
            self.dr_factor[idx] = 1.0 + self.rng.uniform(-f, f, m)
        else:
            self.dr_factor[idx] = 1.0
        if self.wrench_mode == "ou":
            self.ou_state.current[idx] = 0.0
            self.ou_state.mean[idx] = 0.0
            self.ou_state.time[idx] = 0.0

        self.window.reset_envs(mask)
        self.prev_full_action[idx] = 0.0
        self._push_measurement(np.asarray(mask, dtype=bool))
        ee_v = wd.ee_velocity(w, cfg)
        self._prev_ee_vel[idx] = ee_v[idx]
        self._prev_payload_vel[idx] = 0.0

    # ------------------------------------------------------------------
    # Wrench sources
    # ------------------------------------------------------------------

    def _wrench_for_tick(self) -> np.ndarray:
        """World-frame wrench to apply during the upcoming control tick."""
        if self.wrench_mode == "schedule":
            t = np.clip(self.world.time, 0.0, self.profile.duration)
            force, torque = wrench_gen.wrench_at(self.profile, t)
            out = np.concatenate([force, torque[:, None]], axis=-1)
        elif self.wrench_mode == "ou":
            self.ou_state = wrench_gen.ou_step(self.ou_state, self.dt, self.rng,
                                               self.cfg.wrench)
            out = self.ou_state.current.copy()
        elif self.wrench_mode == "file":
            out = np.broadcast_to(self.knot_profile.at(self.world.time[0]),
                                  (self.n, 3)).copy()
        elif self.wrench_mode == "external":
            out = self._external_wrench.copy()
        else:
            raise ValueError(f"unknown wrench mode {self.wrench_mode!r}")
        return out * self.dr_factor[:, None]

    def set_external_wrench(self, wrench: np.ndarray) -> None:
        """For serve mode: the latest leader input, applied on the next tick."""
        self._external_wrench = np.broadcast_to(
            np.asarray(wrench, dtype=float), (self.n, 3)).copy()

    # ------------------------------------------------------------------
    # Observation
    # ------------------------------------------------------------------

    def _push_measurement(self, mask: np.ndarray | None = None) -> None:
        q = self.world.arm.joint_positions.copy()
        dq = self.world.arm.joint_velocities.copy()
        if self.obs_noise:
            q = q + self.rng.normal(0.0, self.cfg.ppo.obs_noise_q, q.shape)
            dq = dq + self.rng.normal(0.0, self.cfg.ppo.obs_noise_dq, dq.shape)
        a = self.world.arm.previous_action
        if mask is None:
            self.window.push(q, dq, a)
        else:
            # targeted overwrite of the newest slot for freshly reset envs
            self.window.q[mask, :, -1] = q[mask]
            self.window.dq[mask, :, -1] = dq[mask]
            self.window.a[mask, :, -1] = a[mask]

    def observe(self) -> dict[str, np.ndarray]:
        w, cfg = self.world, self.wcfg
        o_trans = wd.build_observation_trans(self.window, self.H)
        o_wrench = wd.build_observation_privileged(w, cfg)
        ee_xy, ee_z, _ = wd.forward_kinematics(w.arm.joint_positions,
                                               w.base.position, w.base.yaw, cfg)
        ee_vel = wd.ee_velocity(w, cfg)
        ee_acc = (ee_vel - self._prev_ee_vel) / self.dt

        rel = wd.rotate_planar(ee_xy - w.base.position, -w.base.yaw)
        ee_pos_b = np.concatenate([rel, np.broadcast_to(ee_z[..., None],
                                                        rel.shape[:-1] + (1,))], -1)
        to_base = lambda v3: np.concatenate(
            [wd.rotate_planar(v3[..., :2], -w.base.yaw), v3[..., 2:]], -1)
        ee_vel_b = to_base(ee_vel)
        ee_acc_b = to_base(ee_acc)

        p = w.payload
        pv = np.concatenate([p.linear_velocity, p.yaw_rate[:, None],
                             p.vertical_velocity[:, None]], axis=-1)
        pa = (pv - self._prev_payload_vel) / self.dt
        pos_rel = wd.rotate_planar(p.position[:, None, :] - w.base.position, -w.base.yaw)
        yaw_rel = wd.wrap_angle(p.yaw[:, None] - w.base.yaw)
        h = wd.payload_height_in_base(w, cfg)
        vel_b = wd.rotate_planar(pv[:, None, :2], -w.base.yaw)
        acc_b = wd.rotate_planar(pa[:, None, :2], -w.base.yaw)
        n, k = self.n, self.k
        block = np.concatenate([
            pos_rel, yaw_rel[..., None], h[..., None],
            vel_b, np.broadcast_to(pv[:, None, 2:3], (n, k, 1)),
            np.broadcast_to(pv[:, None, 3:4], (n, k, 1)),
            acc_b, np.broadcast_to(pa[:, None, 2:3], (n, k, 1)),
            np.broadcast_to(pa[:, None, 3:4], (n, k, 1)),
            np.broadcast_to(p.mass[:, None, None], (n, k, 1)),
            np.broadcast_to(p.yaw_inertia[:, None, None], (n, k, 1)),
        ], axis=-1)
        critic = wd.build_observation_critic(o_trans, o_wrench, ee_pos_b,
                                             ee_vel_b, ee_acc_b, block)
        return {
            "o_trans": o_trans,
            "wrench_base": o_wrench,
            "critic": critic,
            "wrench_world": w.leader_wrench.copy(),
            "ee_vel": ee_vel,
            "ee_pos": np.concatenate([ee_xy, np.broadcast_to(
                ee_z[..., None], ee_xy.shape[:-1] + (1,))], -1),
        }

    # ------------------------------------------------------------------
    # Step
    # ------------------------------------------------------------------

    def actions_to_commands(self, action: np.ndarray):
        """Split a raw (n, k, 6) policy action into base command + arm target."""
        base_cmd = action[..., :3]
        arm_target = np.asarray(self.wcfg.default_posture) \
            + self.cfg.ppo.arm_action_scale * action[..., 3:]
        return base_cmd, arm_target

    def step(self, action: np.ndarray) -> StepResult:
        """Advance all environments one control tick; auto-resets done envs."""
        action = np.asarray(action, dtype=float).reshape(self.n, self.k, 6)
        wrench = self._wrench_for_tick()
        base_cmd, arm_target = self.actions_to_commands(action)

        prev_ee_vel = wd.ee_velocity(self.world, self.wcfg)
        p = self.world.payload
        prev_payload_vel = np.concatenate(
            [p.linear_velocity, p.yaw_rate[:, None], p.vertical_velocity[:, None]], -1)

        self.world, info = physics.step_world(
            self.world, base_cmd, arm_target, wrench, self.wcfg, self.pcfg, self.rng)
        self.tick += 1
        self._prev_ee_vel = prev_ee_vel
        self._prev_payload_vel = prev_payload_vel

        h = wd.payload_height_in_base(self.world, self.wcfg)
        breakdown = rewards.total_reward(
            wrench[:, :2], wrench[:, 2],
            self.world.base.linear_velocity, self.world.base.yaw_rate, h,
            self.world.arm.joint_positions, self.world.arm.joint_velocities,
            self.world.arm.joint_accelerations, info.commanded_torque,
            action, self.prev_full_action, info.terminated,
            np.asarray(self.wcfg.default_posture), self.cfg.rewards)
        self.prev_full_action = action.copy()

        self._push_measurement()
        timeout = self.tick >= self.episode_ticks
        done = info.terminated | timeout
        if np.any(done):
            self.reset_envs(done)
        obs = self.observe()
        return StepResult(obs=obs, reward=breakdown.total[:, 0], done=done,
                          terminated=info.terminated, breakdown=breakdown,
                          info=info, wrench_world=wrench)
