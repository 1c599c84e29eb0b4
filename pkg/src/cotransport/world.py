"""Domain model: follower base + 3-DoF arm, payload, frames, observations.

Everything here is a pure function over numpy arrays.  All state containers
carry a leading batch dimension (environments) and a follower dimension, so
the same code serves a single desk setup and a vectorized training farm.

Arm convention: joints are [shoulder_yaw, shoulder_pitch, elbow_pitch].
The two pitch joints form a two-link chain in a vertical plane; positive
pitch rotates the link downward.  shoulder_yaw rotates that plane about the
vertical axis, so lateral payload motion shows up in shoulder_yaw while
sagittal motion loads the pitch joints.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import WorldConfig

TWO_PI = 2.0 * np.pi


def wrap_angle(a):
    """Wrap angles to (-pi, pi]."""
    return np.pi - np.mod(np.pi - np.asarray(a, dtype=float), TWO_PI)


def rotate_planar(vec, yaw):
    """Rotate planar vectors (..., 2) by yaw (...)."""
    vec = np.asarray(vec, dtype=float)
    c, s = np.cos(yaw), np.sin(yaw)
    x = c * vec[..., 0] - s * vec[..., 1]
    y = s * vec[..., 0] + c * vec[..., 1]
    return np.stack([x, y], axis=-1)


@dataclass
class BaseState:
    """Planar follower base(s); arrays shaped (envs, followers, ...)."""

    position: np.ndarray       # (n, k, 2) m, world frame
    yaw: np.ndarray            # (n, k) rad, wrapped to (-pi, pi]
    linear_velocity: np.ndarray  # (n, k, 2) m/s, world frame
    yaw_rate: np.ndarray       # (n, k) rad/s


@dataclass
class ArmState:
    """3-DoF arm joint state; previous_action stores target joint angles."""

    joint_positions: np.ndarray      # (n, k, 3) rad
    joint_velocities: np.ndarray     # (n, k, 3) rad/s
    joint_accelerations: np.ndarray  # (n, k, 3) rad/s^2, finite-differenced per tick
    previous_action: np.ndarray      # (n, k, 3) rad, last commanded targets


@dataclass
class PayloadState:
    position: np.ndarray        # (n, 2) m
    yaw: np.ndarray             # (n,)
    height: np.ndarray          # (n,) m, grasp-region vertical coordinate
    linear_velocity: np.ndarray  # (n, 2) m/s
    yaw_rate: np.ndarray        # (n,)
    vertical_velocity: np.ndarray  # (n,)
    mass: np.ndarray            # (n,) kg
    yaw_inertia: np.ndarray     # (n,) kg*m^2


@dataclass
class WorldState:
    """Full simulator state for a batch of environments."""

    base: BaseState
    arm: ArmState
    payload: PayloadState
    leader_wrench: np.ndarray   # (n, 3) world frame: Fx, Fy, yaw torque
    time: np.ndarray            # (n,) s since episode start

    @property
    def num_envs(self) -> int:
        return self.base.yaw.shape[0]

    @property
    def num_followers(self) -> int:
        return self.base.yaw.shape[1]

    def copy(self) -> "WorldState":
        return WorldState(
            base=BaseState(self.base.position.copy(), self.base.yaw.copy(),
                           self.base.linear_velocity.copy(), self.base.yaw_rate.copy()),
            arm=ArmState(self.arm.joint_positions.copy(), self.arm.joint_velocities.copy(),
                         self.arm.joint_accelerations.copy(), self.arm.previous_action.copy()),
            payload=PayloadState(self.payload.position.copy(), self.payload.yaw.copy(),
                                 self.payload.height.copy(), self.payload.linear_velocity.copy(),
                                 self.payload.yaw_rate.copy(), self.payload.vertical_velocity.copy(),
                                 self.payload.mass.copy(), self.payload.yaw_inertia.copy()),
            leader_wrench=self.leader_wrench.copy(),
            time=self.time.copy(),
        )


def zeros_state(cfg: WorldConfig, num_envs: int) -> WorldState:
    n, k = num_envs, cfg.follower_count
    return WorldState(
        base=BaseState(np.zeros((n, k, 2)), np.zeros((n, k)),
                       np.zeros((n, k, 2)), np.zeros((n, k))),
        arm=ArmState(np.zeros((n, k, 3)), np.zeros((n, k, 3)),
                     np.zeros((n, k, 3)), np.zeros((n, k, 3))),
        payload=PayloadState(np.zeros((n, 2)), np.zeros(n), np.zeros(n),
                             np.zeros((n, 2)), np.zeros(n), np.zeros(n),
                             np.ones(n), np.ones(n)),
        leader_wrench=np.zeros((n, 3)),
        time=np.zeros(n),
    )


def box_yaw_inertia(mass, dims) -> np.ndarray:
    """Uniform-box yaw inertia; payload geometry is a configured footprint."""
    w, l = dims
    return np.asarray(mass, dtype=float) * (w * w + l * l) / 12.0


# ---------------------------------------------------------------------------
# Kinematics
# ---------------------------------------------------------------------------

def forward_kinematics(q, base_position, base_yaw, cfg: WorldConfig):
    """End-effector world pose for joint angles q (..., 3).

    Returns (xy, z, grip_yaw) with xy shaped (..., 2).  The two pitch joints
    are evaluated as a planar chain in the vertical plane spanned by
    shoulder_yaw, then the whole arm is rotated by shoulder_yaw and base yaw.
    """
    q = np.asarray(q, dtype=float)
    sy, p1 = q[..., 0], q[..., 1]
    p12 = p1 + q[..., 2]
    l1, l2 = cfg.link_lengths
    mx, my, mz = cfg.shoulder_mount
    reach = l1 * np.cos(p1) + l2 * np.cos(p12)
    z = mz - l1 * np.sin(p1) - l2 * np.sin(p12)
    local = np.stack([mx + reach * np.cos(sy), my + reach * np.sin(sy)], axis=-1)
    xy = np.asarray(base_position, dtype=float) + rotate_planar(local, base_yaw)
    grip_yaw = wrap_angle(np.asarray(base_yaw) + sy)
    return xy, z, grip_yaw


def arm_jacobian(q, base_yaw, cfg: WorldConfig):
    """Jacobian of the EE world position (x, y, z) w.r.t. the three joints.

    Shape (..., 3, 3): rows are x/y/z, columns are joints.
    """
    q = np.asarray(q, dtype=float)
    sy, p1 = q[..., 0], q[..., 1]
    p12 = p1 + q[..., 2]
    l1, l2 = cfg.link_lengths
    reach = l1 * np.cos(p1) + l2 * np.cos(p12)
    dr_dp1 = -l1 * np.sin(p1) - l2 * np.sin(p12)
    dr_dp2 = -l2 * np.sin(p12)
    dz_dp1 = -l1 * np.cos(p1) - l2 * np.cos(p12)
    dz_dp2 = -l2 * np.cos(p12)
    heading = np.asarray(base_yaw) + sy
    ch, sh = np.cos(heading), np.sin(heading)
    zero = np.zeros_like(reach)
    # columns: [shoulder_yaw, shoulder_pitch, elbow_pitch]
    jx = np.stack([-reach * sh, dr_dp1 * ch, dr_dp2 * ch], axis=-1)
    jy = np.stack([reach * ch, dr_dp1 * sh, dr_dp2 * sh], axis=-1)
    jz = np.stack([zero, dz_dp1, dz_dp2], axis=-1)
    return np.stack([jx, jy, jz], axis=-2)


def ee_velocity(world: WorldState, cfg: WorldConfig):
    """World-frame EE velocity (n, k, 3): base motion plus joint motion."""
    xy, _, _ = forward_kinematics(world.arm.joint_positions,
                                  world.base.position, world.base.yaw, cfg)
    rel = xy - world.base.position
    spin = np.stack([-rel[..., 1], rel[..., 0]], axis=-1) * world.base.yaw_rate[..., None]
    jac = arm_jacobian(world.arm.joint_positions, world.base.yaw, cfg)
    joint_part = np.einsum("...ij,...j->...i", jac, world.arm.joint_velocities)
    vxy = world.base.linear_velocity + spin + joint_part[..., :2]
    vz = joint_part[..., 2]
    return np.concatenate([vxy, vz[..., None]], axis=-1)


def grasp_points(world: WorldState, cfg: WorldConfig):
    """World positions/velocities of the follower grasp points on the payload.

    Returns (pos_xy (n,k,2), z (n,k), vel_xy (n,k,2), vz (n,k)).
    """
    k = world.num_followers
    offsets = np.asarray(cfg.grasp_offsets[:k], dtype=float)       # (k, 2)
    off_world = rotate_planar(offsets[None, :, :], world.payload.yaw[:, None])
    pos = world.payload.position[:, None, :] + off_world
    spin = np.stack([-off_world[..., 1], off_world[..., 0]], axis=-1)
    vel = world.payload.linear_velocity[:, None, :] + spin * world.payload.yaw_rate[:, None, None]
    z = np.broadcast_to(world.payload.height[:, None], (world.num_envs, k))
    vz = np.broadcast_to(world.payload.vertical_velocity[:, None], (world.num_envs, k))
    return pos, z, vel, vz


def payload_height_in_base(world: WorldState, cfg: WorldConfig) -> np.ndarray:
    """Payload grasp-region height relative to the base origin, (n, k)."""
    n, k = world.num_envs, world.num_followers
    return np.broadcast_to(world.payload.height[:, None], (n, k)) - cfg.base_origin_height


# ---------------------------------------------------------------------------
# Observations
# ---------------------------------------------------------------------------

@dataclass
class ObservationWindow:
    """Rolling H-step buffer of (q, dq, previous arm target) per follower.

    Zero-padded at episode start; slot [-1] along the history axis is the
    most recent tick.
    """

    q: np.ndarray    # (n, k, H, 3)
    dq: np.ndarray   # (n, k, H, 3)
    a: np.ndarray    # (n, k, H, 3)

    @classmethod
    def empty(cls, num_envs: int, num_followers: int, history_len: int) -> "ObservationWindow":
        shape = (num_envs, num_followers, history_len, 3)
        return cls(np.zeros(shape), np.zeros(shape), np.zeros(shape))

    @property
    def history_len(self) -> int:
        return self.q.shape[2]

    def push(self, q, dq, a) -> None:
        for buf, new in ((self.q, q), (self.dq, dq), (self.a, a)):
            buf[:, :, :-1] = buf[:, :, 1:]
            buf[:, :, -1] = new

    def reset_envs(self, mask: np.ndarray) -> None:
        self.q[mask] = 0.0
        self.dq[mask] = 0.0
        self.a[mask] = 0.0


def build_observation_trans(window: ObservationWindow, history_len: int | None = None) -> np.ndarray:
    """Flatten the window into the 9H proprioceptive observation (n, k, 9H).

    Layout: [q(t-H+1..t), dq(t-H+1..t), a(t-H..t-1)], each block contiguous
    and time-ascending.
    """
    H = window.history_len
    if history_len is not None and history_len != H:
        raise ValueError(f"window holds H={H} steps, configured H={history_len}")
    n, k = window.q.shape[:2]
    flat = lambda buf: buf.reshape(n, k, H * 3)
    return np.concatenate([flat(window.q), flat(window.dq), flat(window.a)], axis=-1)


def obs_channel_labels(history_len: int) -> list[tuple[str, str, int]]:
    """(quantity, joint, history_step) label per o_trans channel."""
    joints = ("shoulder_yaw", "shoulder_pitch", "elbow_pitch")
    labels = []
    for quantity in ("joint_position", "joint_velocity", "prev_action"):
        for step in range(history_len):
            for joint in joints:
                labels.append((quantity, joint, step))
    return labels


def build_observation_privileged(world: WorldState, cfg: WorldConfig,
                                 wrench: np.ndarray | None = None) -> np.ndarray:
    """Leader wrench expressed in each follower's base frame, (n, k, 3).

    The planar force rotates with the base; yaw torque is frame-invariant.
    """
    w = world.leader_wrench if wrench is None else np.asarray(wrench, dtype=float)
    force = rotate_planar(w[:, None, :2], -world.base.yaw)
    torque = np.broadcast_to(w[:, None, 2], force.shape[:-1])
    return np.concatenate([force, torque[..., None]], axis=-1)


# Critic payload block: documented layout, 14 entries per environment.
PAYLOAD_BLOCK_FIELDS = (
    "pos_x", "pos_y", "yaw", "height",
    "vel_x", "vel_y", "yaw_rate", "vertical_velocity",
    "acc_x", "acc_y", "yaw_acc", "vertical_acc",
    "mass", "yaw_inertia",
)


def build_observation_critic(o_trans: np.ndarray,
                             o_wrench: np.ndarray,
                             ee_pos: np.ndarray, ee_vel: np.ndarray, ee_acc: np.ndarray,
                             payload_block: np.ndarray) -> np.ndarray:
    """Privileged critic observation (n, k, 9H + 3 + 9 + 14).

    Layout: [o_trans | wrench (base frame) | EE pos, vel, acc (3 each, base
    frame) | payload block per PAYLOAD_BLOCK_FIELDS].  The payload block may
    be per-environment (n, 14) or already per-follower (n, k, 14).
    """
    k = o_trans.shape[1]
    if payload_block.ndim == 2:
        payload_block = np.broadcast_to(
            payload_block[:, None, :],
            (payload_block.shape[0], k, payload_block.shape[1]))
    return np.concatenate([o_trans, o_wrench, ee_pos, ee_vel, ee_acc, payload_block], axis=-1)


def critic_obs_dim(history_len: int) -> int:
    return 9 * history_len + 3 + 9 + len(PAYLOAD_BLOCK_FIELDS)
