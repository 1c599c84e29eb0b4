"""Reward terms for the transport task.

Tracking terms reward base motion matching the admittance reference
(wrench divided by the admittance gains); the remaining rows are
regularizers.  The weighted total per tick is sum(w_i * term_i * dt), with
the termination row contributing a flat penalty on the triggering tick.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import RewardConfig

TERM_NAMES = ("force_tracking", "torque_tracking", "payload_height",
              "joint_torque", "joint_dof", "action", "termination", "arm_posture")


@dataclass
class RewardBreakdown:
    """Unweighted per-term values plus the weighted total, all (n, k)."""

    force_tracking: np.ndarray
    torque_tracking: np.ndarray
    payload_height: np.ndarray
    joint_torque: np.ndarray
    joint_dof: np.ndarray
    action: np.ndarray
    termination: np.ndarray
    arm_posture: np.ndarray
    total: np.ndarray

    def terms(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in TERM_NAMES}


def r_force(force_xy, base_velocity_xy, params: RewardConfig):
    """exp(-||F/B_force - v||^2 / sigma_force), in (0, 1]."""
    err = np.asarray(force_xy, dtype=float) / params.admittance_force_gain \
        - np.asarray(base_velocity_xy, dtype=float)
    return np.exp(-np.sum(err * err, axis=-1) / params.sigma_force)


def r_torque(torque, yaw_rate, params: RewardConfig):
    """exp(-(torque/B_torque - omega)^2 / sigma_torque), in (0, 1]."""
    err = np.asarray(torque, dtype=float) / params.admittance_torque_gain \
        - np.asarray(yaw_rate, dtype=float)
    return np.exp(-(err * err) / params.sigma_torque)


def r_height(h, params: RewardConfig):
    """Squared excursion outside the safe height band; zero inside."""
    h = np.asarray(h, dtype=float)
    under = np.maximum(0.0, params.h_min - h)
    over = np.maximum(0.0, h - params.h_max)
    return (under + over) ** 2


def regularizer_terms(joint_positions, joint_velocities, joint_accelerations,
                      joint_torques, action_t, action_prev, terminated,
                      default_posture, params: RewardConfig) -> dict[str, np.ndarray]:
    """The Table-row regularizers, each exactly as published."""
    torque_pen = np.sum(np.asarray(joint_torques) ** 2, axis=-1)
    dof_pen = np.sum(np.asarray(joint_velocities) ** 2
                     + 0.00025 * np.asarray(joint_accelerations) ** 2, axis=-1)
    da = np.asarray(action_t) - np.asarray(action_prev)
    action_pen = np.sum(da * da + 0.5 * np.asarray(action_t) ** 2, axis=-1)
    posture = np.linalg.norm(np.asarray(joint_positions) - np.asarray(default_posture),
                             axis=-1)
    term = np.asarray(terminated, dtype=float)
    if term.ndim < torque_pen.ndim:
        term = np.broadcast_to(term[..., None], torque_pen.shape)
    return {
        "joint_torque": torque_pen,
        "joint_dof": dof_pen,
        "action": action_pen,
        "termination": term,
        "arm_posture": posture,
    }


def total_reward(force_xy, torque, base_velocity_xy, base_yaw_rate, height,
                 joint_positions, joint_velocities, joint_accelerations,
                 joint_torques, action_t, action_prev, terminated,
                 default_posture, params: RewardConfig) -> RewardBreakdown:
    """Assemble the per-tick breakdown; wrench inputs are world-frame.

    Per-follower inputs are (n, k, ...); the wrench and termination flags
    are per-environment and broadcast across followers.
    """
    k = np.asarray(joint_positions).shape[-2]
    force_xy = np.asarray(force_xy, dtype=float)
    if force_xy.ndim == 2:
        force_xy = np.broadcast_to(force_xy[:, None, :], force_xy.shape[:1] + (k, 2))
        torque = np.broadcast_to(np.asarray(torque, dtype=float)[:, None],
                                 force_xy.shape[:-1])
    rf = r_force(force_xy, base_velocity_xy, params)
    rt = r_torque(torque, base_yaw_rate, params)
    rh = r_height(height, params)
    regs = regularizer_terms(joint_positions, joint_velocities, joint_accelerations,
                             joint_torques, action_t, action_prev, terminated,
                             default_posture, params)
    dt = params.control_dt
    w_force, w_torque = params.tracking_weights()
    total = dt * (w_force * rf
                  + w_torque * rt
                  + params.w_height * rh
                  + params.w_joint_torque * regs["joint_torque"]
                  + params.w_joint_dof * regs["joint_dof"]
                  + params.w_action * regs["action"]
                  + params.w_posture * regs["arm_posture"]) \
        + params.w_termination_flat * regs["termination"]
    return RewardBreakdown(rf, rt, rh, regs["joint_torque"], regs["joint_dof"],
                           regs["action"], regs["termination"], regs["arm_posture"],
                           total)
