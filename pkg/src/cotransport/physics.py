"""Coupled follower-payload dynamics.

The base is a kinematic first-order velocity tracker (the locomotion
backbone's contract), the arm is a critically damped joint servo disturbed
by the grip wrench, and the payload integrates Newton-Euler under grip
wrenches, the leader wrench, drag, and gravity.

Integration is semi-implicit Euler at a fixed substep; velocity-proportional
forces on the payload (grip damping on the COM velocity and drag) are folded
into the velocity update implicitly so light payloads stay stable.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import PhysicsConfig, WorldConfig, BaseTrackerParams
from . import world as wd


class PhysicsError(RuntimeError):
    """Non-finite state or command; carries a diagnostic payload."""


TERMINATION_REASONS = ("", "grip_break", "height_band", "base_distance")


@dataclass
class StepInfo:
    """Per-control-tick diagnostics."""

    ee_wrench: np.ndarray       # (n, k, 4) follower-side grip force xyz + yaw torque
    grip_stretch: np.ndarray    # (n, k) m, 3D grasp-to-EE distance
    commanded_torque: np.ndarray  # (n, k, 3) arm servo torque, substep mean
    terminated: np.ndarray      # (n,) bool
    reason: np.ndarray          # (n,) int index into TERMINATION_REASONS


def base_track_step(position, yaw, velocity, yaw_rate, command,
                    params: BaseTrackerParams, dt: float, noise=None):
    """First-order relaxation toward the clamped command, semi-implicit.

    command is (..., 3) = (vx, vy, omega) in the base frame.  Returns the
    updated (position, yaw, velocity, yaw_rate).
    """
    command = np.asarray(command, dtype=float)
    if not np.all(np.isfinite(command)):
        raise PhysicsError("non-finite base command")
    cmd_v = np.clip(command[..., :2], -params.v_max, params.v_max)
    cmd_w = np.clip(command[..., 2], -params.omega_max, params.omega_max)
    cmd_v_world = wd.rotate_planar(cmd_v, yaw)
    alpha = 1.0 - np.exp(-dt / params.time_constant)
    velocity = velocity + (cmd_v_world - velocity) * alpha
    yaw_rate = yaw_rate + (cmd_w - yaw_rate) * alpha
    if noise is not None:
        velocity = velocity + noise[..., :2]
        yaw_rate = yaw_rate + noise[..., 2]
    position = position + velocity * dt
    yaw = wd.wrap_angle(yaw + yaw_rate * dt)
    return position, yaw, velocity, yaw_rate


def grip_wrench(ee_xy, ee_z, ee_vel, grip_yaw, grip_yaw_rate,
                grasp_xy, grasp_z, grasp_vel_xy, grasp_vz,
                payload_yaw, payload_yaw_rate, cfg: WorldConfig):
    """Spring-damper wrench at each grasp, follower-side sign convention.

    Returns (force (n,k,3), yaw_torque (n,k), stretch (n,k)).  The payload
    receives the exact negation.
    """
    g = cfg.grip
    dx = grasp_xy - ee_xy
    dz = grasp_z - ee_z
    dv = grasp_vel_xy - ee_vel[..., :2]
    dvz = grasp_vz - ee_vel[..., 2]
    fxy = g.translational_stiffness * dx + g.translational_damping * dv
    fz = g.translational_stiffness * dz + g.translational_damping * dvz
    dyaw = wd.wrap_angle(payload_yaw[:, None] - grip_yaw)
    dyaw_rate = payload_yaw_rate[:, None] - grip_yaw_rate
    tau = g.yaw_stiffness * dyaw + g.yaw_damping * dyaw_rate
    stretch = np.sqrt(dx[..., 0] ** 2 + dx[..., 1] ** 2 + dz ** 2)
    force = np.concatenate([fxy, fz[..., None]], axis=-1)
    return force, tau, stretch


def _arm_external_torque(jac, grip_force, grip_tau):
    """Map the grip wrench into joint torques: J^T F plus yaw torque on joint 0."""
    tau = np.einsum("...ji,...j->...i", jac, grip_force)
    tau = tau.copy()
    tau[..., 0] += grip_tau
    return tau


def step_world(world: wd.WorldState, actions_base, actions_arm_target,
               leader_wrench, wcfg: WorldConfig, pcfg: PhysicsConfig,
               rng: np.random.Generator | None = None):
    """Advance one control tick; returns (world, StepInfo).

    actions_base: (n, k, 3) base-frame twist commands.
    actions_arm_target: (n, k, 3) arm joint targets (will be limit-clamped).
    leader_wrench: (n, 3) world-frame force + yaw torque on the payload.
    """
    world = world.copy()
    n, k = world.num_envs, world.num_followers
    if not (np.all(np.isfinite(actions_base)) and np.all(np.isfinite(actions_arm_target))):
        raise PhysicsError("non-finite actions")
    s_total = pcfg.physics_substeps
    h = pcfg.control_dt / s_total
    g = wcfg.grip
    lo = np.asarray(wcfg.joint_limits_low)
    hi = np.asarray(wcfg.joint_limits_high)
    target = np.clip(actions_arm_target, lo, hi)
    omega_n = pcfg.servo_natural_freq
    inertia = pcfg.arm_inertia
    m_eff = np.maximum(world.payload.mass, pcfg.mass_floor)
    inertia_eff = np.maximum(world.payload.yaw_inertia, 1e-4)
    world.leader_wrench = np.asarray(leader_wrench, dtype=float).reshape(n, 3)

    dq_before = world.arm.joint_velocities.copy()
    torque_accum = np.zeros((n, k, 3))
    tick_force = np.zeros((n, k, 3))
    tick_tau = np.zeros((n, k))
    tick_stretch = np.zeros((n, k))

    if rng is not None:
        # one per-tick disturbance, spread evenly across substeps
        tr = pcfg.tracker
        noise = np.empty((n, k, 3))
        noise[..., :2] = rng.normal(0.0, tr.disturbance_std_lin, (n, k, 2)) / s_total
        noise[..., 2] = rng.normal(0.0, tr.disturbance_std_yaw, (n, k)) / s_total
    else:
        noise = None

    for _ in range(pcfg.physics_substeps):
        ee_xy, ee_z, grip_yaw = wd.forward_kinematics(
            world.arm.joint_positions, world.base.position, world.base.yaw, wcfg)
        jac = wd.arm_jacobian(world.arm.joint_positions, world.base.yaw, wcfg)
        ee_vel = wd.ee_velocity(world, wcfg)
        grasp_xy, grasp_z, grasp_vel, grasp_vz = wd.grasp_points(world, wcfg)
        grip_yaw_rate = world.base.yaw_rate + world.arm.joint_velocities[..., 0]

        force_f, tau_f, stretch = grip_wrench(
            ee_xy, ee_z, ee_vel, grip_yaw, grip_yaw_rate,
            grasp_xy, grasp_z, grasp_vel, grasp_vz,
            world.payload.yaw, world.payload.yaw_rate, wcfg)

        tick_force += force_f
        tick_tau += tau_f
        tick_stretch = stretch  # keep the latest substep's stretch

        # --- payload: explicit forces with the COM-velocity damping made implicit
        p = world.payload
        force_p = -force_f                                    # payload side
        # remove the part of grip damping proportional to the payload COM
        # velocity; it is re-applied implicitly below
        explicit_xy = force_p[..., :2].sum(axis=1) + g.translational_damping * k * p.linear_velocity \
            + world.leader_wrench[:, :2]
        c_xy = g.translational_damping * k + pcfg.linear_drag
        new_v = (p.linear_velocity + (h / m_eff[:, None]) * explicit_xy) \
            / (1.0 + h * c_xy / m_eff)[:, None]

        explicit_z = force_p[..., 2].sum(axis=1) + g.translational_damping * k * p.vertical_velocity \
            - p.mass * pcfg.gravity
        c_z = g.translational_damping * k + pcfg.vertical_drag
        new_vz = (p.vertical_velocity + (h / m_eff) * explicit_z) / (1.0 + h * c_z / m_eff)

        lever = grasp_xy - p.position[:, None, :]
        torque_from_forces = (lever[..., 0] * force_p[..., 1]
                              - lever[..., 1] * force_p[..., 0]).sum(axis=1)
        explicit_yaw = torque_from_forces + (-tau_f).sum(axis=1) \
            + g.yaw_damping * k * p.yaw_rate + world.leader_wrench[:, 2]
        c_yaw = g.yaw_damping * k + pcfg.yaw_drag
        new_w = (p.yaw_rate + (h / inertia_eff) * explicit_yaw) / (1.0 + h * c_yaw / inertia_eff)

        p.linear_velocity = new_v
        p.vertical_velocity = new_vz
        p.yaw_rate = new_w
        p.position = p.position + new_v * h
        p.height = p.height + new_vz * h
        p.yaw = wd.wrap_angle(p.yaw + new_w * h)

        # --- arm servo: critically damped PD toward the target, grip as load
        q, dq = world.arm.joint_positions, world.arm.joint_velocities
        tau_cmd = inertia * (omega_n ** 2 * (target - q) - 2.0 * omega_n * dq)
        torque_accum += tau_cmd
        tau_ext = _arm_external_torque(jac, force_f, tau_f)
        ddq = tau_cmd / inertia + tau_ext / inertia
        dq = dq + ddq * h
        q = q + dq * h
        below, above = q < lo, q > hi
        q = np.clip(q, lo, hi)
        dq = np.where(below | above, 0.0, dq)
        world.arm.joint_positions, world.arm.joint_velocities = q, dq

        # --- kinematic base tracker
        pos, yaw, vel, yr = base_track_step(
            world.base.position, world.base.yaw, world.base.linear_velocity,
            world.base.yaw_rate, actions_base, pcfg.tracker, h, noise)
        world.base.position, world.base.yaw = pos, yaw
        world.base.linear_velocity, world.base.yaw_rate = vel, yr

    s = pcfg.physics_substeps
    world.arm.joint_accelerations = (world.arm.joint_velocities - dq_before) / pcfg.control_dt
    world.arm.previous_action = target.copy()
    world.time = world.time + pcfg.control_dt

    for arr in (world.payload.position, world.payload.linear_velocity,
                world.arm.joint_positions, world.base.position):
        if not np.all(np.isfinite(arr)):
            raise PhysicsError(f"non-finite state after integration: {arr!r}")

    # termination checks
    height = wd.payload_height_in_base(world, wcfg)
    dist = np.linalg.norm(world.base.position - world.payload.position[:, None, :], axis=-1)
    broke = (tick_stretch > g.break_distance).any(axis=1)
    out_of_band = ((height < pcfg.height_band[0]) | (height > pcfg.height_band[1])).any(axis=1)
    too_far = (dist > pcfg.max_base_payload_distance).any(axis=1)
    reason = np.zeros(world.num_envs, dtype=int)
    reason[too_far] = 3
    reason[out_of_band] = 2
    reason[broke] = 1
    terminated = broke | out_of_band | too_far

    info = StepInfo(
        ee_wrench=np.concatenate([tick_force / s, (tick_tau / s)[..., None]], axis=-1),
        grip_stretch=tick_stretch,
        commanded_torque=torque_accum / s,
        terminated=terminated,
        reason=reason,
    )
    return world, info


def solve_equilibrium_arm(mass, wcfg: WorldConfig, pcfg: PhysicsConfig,
                          num_followers: int | None = None,
                          target: np.ndarray | None = None) -> np.ndarray:
    """Joint angles where the servo balances the static payload weight.

    Each of k grips carries m*g/k vertically.  Solves the fixed point
    q = target + J(q)^T F / (I * omega_n^2) to machine precision.
    """
    k = num_followers or wcfg.follower_count
    mass = np.atleast_1d(np.asarray(mass, dtype=float))
    if target is None:
        target = np.broadcast_to(np.asarray(wcfg.default_posture), mass.shape + (3,))
    q = np.array(np.broadcast_to(target, mass.shape + (3,)), dtype=float)
    load = -mass * pcfg.gravity / k                     # follower-side vertical force
    gain = 1.0 / (pcfg.arm_inertia * pcfg.servo_natural_freq ** 2)
    for _ in range(200):
        jac = wd.arm_jacobian(q, np.zeros(mass.shape), wcfg)
        tau_ext = jac[..., 2, :] * load[..., None]
        q_new = target + gain * tau_ext
        if np.max(np.abs(q_new - q)) < 1e-15:
            q = q_new
            break
        q = q_new
    return q


def equilibrium_payload_height(mass, wcfg: WorldConfig, pcfg: PhysicsConfig,
                               num_followers: int | None = None):
    """Static grasp height: EE height minus vertical spring stretch."""
    k = num_followers or wcfg.follower_count
    q = solve_equilibrium_arm(mass, wcfg, pcfg, k)
    _, ee_z, _ = wd.forward_kinematics(q, np.zeros(q.shape[:-1] + (2,)),
                                       np.zeros(q.shape[:-1]), wcfg)
    stretch = np.asarray(mass, dtype=float) * pcfg.gravity / (k * wcfg.grip.translational_stiffness)
    return ee_z - stretch, q
