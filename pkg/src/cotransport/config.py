"""Configuration tree for the transport simulator and training stack.

Every section is a plain dataclass with defaults.  JSON configs are loaded
strictly: unknown keys anywhere in the tree are an error, and the effective
(fully merged) configuration can be echoed back to disk so a run is
reproducible from its own output directory.
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any


class ConfigError(ValueError):
    """Raised for unknown keys, bad shapes, or out-of-range values."""


@dataclass
class GripCoupling:
    """Spring-damper coupling between an end-effector and its grasp point."""

    translational_stiffness: float = 500.0   # N/m
    translational_damping: float = 50.0      # N*s/m
    yaw_stiffness: float = 50.0              # N*m/rad
    yaw_damping: float = 5.0                 # N*m*s/rad
    break_distance: float = 0.4              # m, episode terminates beyond this

    def validate(self) -> None:
        if min(self.translational_stiffness, self.translational_damping,
               self.yaw_stiffness, self.yaw_damping) < 0:
            raise ConfigError("grip stiffness/damping must be >= 0")
        if self.break_distance <= 0:
            raise ConfigError("break_distance must be > 0")


@dataclass
class WorldConfig:
    """Kinematic layout of a follower (base + 3-DoF arm) and the payload."""

    link_lengths: tuple[float, float] = (0.25, 0.25)
    # shoulder mount in the base frame; z is measured from the ground plane
    shoulder_mount: tuple[float, float, float] = (0.1, 0.0, 0.55)
    default_posture: tuple[float, float, float] = (0.0, 0.5235987755982988, -1.0471975511965976)
    joint_limits_low: tuple[float, float, float] = (-2.6, -1.3, -2.4)
    joint_limits_high: tuple[float, float, float] = (2.6, 1.3, 2.4)
    base_origin_height: float = 0.35          # m, reference for payload height h
    history_len: int = 4                      # H, proprioception history steps
    payload_dims: tuple[float, float] = (0.6, 0.4)   # box footprint, for yaw inertia
    # body-frame planar grasp offsets, one per potential follower
    grasp_offsets: tuple[tuple[float, float], ...] = ((-0.1, 0.0), (0.1, 0.0),
                                                      (0.0, -0.1), (0.0, 0.1))
    leader_offset: tuple[float, float] = (0.0, 0.0)  # leader wrench application point
    mass_range: tuple[float, float] = (0.0, 10.0)    # kg, uniform sampling at reset
    follower_count: int = 1
    policy_sharing: bool = True
    grip: GripCoupling = field(default_factory=GripCoupling)

    def validate(self) -> None:
        if self.follower_count < 1:
            raise ConfigError("follower_count must be >= 1")
        if self.follower_count > len(self.grasp_offsets):
            raise ConfigError("follower_count exceeds available grasp offsets")
        if min(self.link_lengths) <= 0:
            raise ConfigError("link lengths must be > 0")
        if self.history_len < 1:
            raise ConfigError("history_len must be >= 1")
        if not self.mass_range[0] <= self.mass_range[1]:
            raise ConfigError("mass_range must be ordered")
        self.grip.validate()


@dataclass
class BaseTrackerParams:
    """First-order velocity-tracking proxy for the locomotion backbone."""

    time_constant: float = 0.2        # s
    v_max: float = 1.5                # m/s per planar component
    omega_max: float = 1.5            # rad/s
    disturbance_std_lin: float = 0.02  # m/s per tick, domain randomization
    disturbance_std_yaw: float = 0.02  # rad/s per tick

    def validate(self) -> None:
        if self.time_constant <= 0:
            raise ConfigError("time_constant must be > 0")
        if self.v_max <= 0 or self.omega_max <= 0:
            raise ConfigError("velocity limits must be > 0")
        if self.disturbance_std_lin < 0 or self.disturbance_std_yaw < 0:
            raise ConfigError("disturbance std must be >= 0")


@dataclass
class PhysicsConfig:
    """Integrator, payload damping, and arm servo parameters."""

    control_dt: float = 0.02          # s
    physics_substeps: int = 4
    # ground drag well below the admittance gains (40, 10): the grip then
    # carries ~94% of the leader wrench at steady state, and the drag*velocity
    # residual stays small even when the followers track poorly, so the wrench
    # is observable from the arm regardless of policy quality
    linear_drag: float = 2.5          # N*s/m on the payload
    yaw_drag: float = 0.625           # N*m*s/rad
    vertical_drag: float = 20.0       # N*s/m
    gravity: float = 9.81             # m/s^2
    servo_natural_freq: float = 12.0  # rad/s, critically damped arm servo;
    # soft enough that grip loads leave a readable joint deflection
    arm_inertia: float = 1.0          # kg*m^2 per joint, external-torque coupling
    mass_floor: float = 0.05          # kg, lower bound used by the integrator only
    # termination thresholds; wide enough that heavy payloads resting at
    # static sag (up to ~28 kg shared by two followers) do not terminate
    height_band: tuple[float, float] = (-0.85, 0.9)  # payload height in base frame
    max_base_payload_distance: float = 2.0           # m
    tracker: BaseTrackerParams = field(default_factory=BaseTrackerParams)

    def validate(self) -> None:
        if self.control_dt <= 0:
            raise ConfigError("control_dt must be > 0")
        if self.physics_substeps < 1:
            raise ConfigError("physics_substeps must be >= 1")
        if min(self.linear_drag, self.yaw_drag, self.vertical_drag) < 0:
            raise ConfigError("drag coefficients must be >= 0")
        self.tracker.validate()


@dataclass
class OuParams:
    """Ornstein-Uhlenbeck wrench generator used for evaluation."""

    reversion_rate: float = 0.5                    # 1/s
    # per-channel noise scale; stationary std = sigma / sqrt(2*theta)
    noise_scale: tuple[float, float, float] = (15.0, 15.0, 4.0)
    mean_resample_period: float = 4.0              # s; 0 disables resampling

    def validate(self) -> None:
        if self.reversion_rate <= 0:
            raise ConfigError("reversion_rate must be > 0")
        if min(self.noise_scale) < 0:
            raise ConfigError("noise_scale must be >= 0")


@dataclass
class WrenchConfig:
    """Leader intent generation: per-episode targets and time scaling."""

    force_limit: float = 40.0        # N, |Fx|,|Fy| bound
    torque_limit: float = 10.0       # N*m
    episode_duration: float = 10.0   # s
    ramp_up_fraction: float = 0.1
    hold_fraction: float = 0.8
    ramp_down_fraction: float = 0.1
    zero_episode_prob: float = 0.02
    two_point_sampling: bool = False  # sample only the range endpoints
    ou: OuParams = field(default_factory=OuParams)

    def validate(self) -> None:
        total = self.ramp_up_fraction + self.hold_fraction + self.ramp_down_fraction
        if abs(total - 1.0) > 1e-9:
            raise ConfigError("schedule fractions must sum to 1")
        if self.force_limit <= 0 or self.torque_limit <= 0:
            raise ConfigError("wrench limits must be > 0")
        if not 0.0 <= self.zero_episode_prob <= 1.0:
            raise ConfigError("zero_episode_prob must be in [0, 1]")
        self.ou.validate()


@dataclass
class RewardConfig:
    """Reward gains, safe height band, and the weight table."""

    sigma_force: float = 0.25
    sigma_torque: float = 0.25
    admittance_force_gain: float = 40.0    # N per m/s (B_force)
    admittance_torque_gain: float = 10.0   # N*m per rad/s (B_torque)
    h_min: float = 0.05
    h_max: float = 0.25
    control_dt: float = 0.02
    # 'maximize' flips the tracking rows positive; 'as_printed' keeps them negative
    tracking_sign: str = "maximize"
    w_force: float = 2.0e-2
    w_torque: float = 1.0e-2
    w_height: float = -3.0e-3
    w_joint_torque: float = -2.0e-9
    w_joint_dof: float = -2.0e-4
    w_action: float = -2.0e-4
    w_termination_flat: float = -50.0      # applied once on the triggering tick
    w_posture: float = -3.0e-3

    def validate(self) -> None:
        if min(self.sigma_force, self.sigma_torque,
               self.admittance_force_gain, self.admittance_torque_gain) <= 0:
            raise ConfigError("reward gains must be > 0")
        if self.h_min >= self.h_max:
            raise ConfigError("h_min must be < h_max")
        if self.tracking_sign not in ("maximize", "as_printed"):
            raise ConfigError("tracking_sign must be 'maximize' or 'as_printed'")

    def tracking_weights(self) -> tuple[float, float]:
        if self.tracking_sign == "maximize":
            return abs(self.w_force), abs(self.w_torque)
        return -abs(self.w_force), -abs(self.w_torque)


@dataclass
class PpoConfig:
    """On-policy trainer hyperparameters (desk-scale defaults)."""

    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip: float = 0.2
    epochs: int = 5
    minibatches: int = 4
    entropy_coef: float = 0.0
    value_coef: float = 0.5
    learning_rate: float = 3.0e-4
    num_envs: int = 128
    horizon: int = 50
    iterations: int = 1500
    hidden_sizes: tuple[int, int, int] = (128, 128, 128)
    log_std_init: float = -0.5
    # rad of arm-target offset per unit action; kept small so exploration
    # noise on the arm does not bury the load-deflection signal in the joints
    arm_action_scale: float = 0.05
    eval_interval: int = 50           # CSV logging cadence (iterations)
    checkpoint_interval: int = 500
    # sized so a full-scale grip load deflects the joints several noise sigmas
    obs_noise_q: float = 0.003        # rad, domain randomization
    obs_noise_dq: float = 0.05        # rad/s
    wrench_dr_fraction: float = 0.1   # +-10% multiplicative, per episode
    fixed_mass: float | None = None   # overrides mass_range sampling when set

    def validate(self) -> None:
        if not 0.0 < self.gamma <= 1.0 or not 0.0 < self.gae_lambda <= 1.0:
            raise ConfigError("gamma and gae_lambda must be in (0, 1]")
        if self.clip <= 0:
            raise ConfigError("clip must be > 0")
        if self.num_envs < 1 or self.horizon < 1 or self.iterations < 1:
            raise ConfigError("num_envs, horizon, iterations must be >= 1")


@dataclass
class DistillConfig:
    """Student-side settings: KL regularization and the intent estimator."""

    kl_weight_start: float = 0.5
    kl_weight_end: float = 0.1
    estimator_loss_weight: float = 1.0
    estimator_enabled: bool = True
    # supervised regression converges much faster than the policy; a higher
    # rate gets the estimator useful early so the actor trains on sane inputs
    estimator_lr: float = 1.0e-3
    kl_direction: str = "student_teacher"   # or "teacher_student"
    teacher_checkpoint: str = ""

    def validate(self) -> None:
        if self.kl_weight_start < 0 or self.kl_weight_end < 0:
            raise ConfigError("KL weights must be >= 0")
        if self.estimator_lr <= 0:
            raise ConfigError("estimator_lr must be positive")
        if self.kl_direction not in ("student_teacher", "teacher_student"):
            raise ConfigError("bad kl_direction")


@dataclass
class RunConfig:
    """Top-level run configuration: all sections plus seed and output path."""

    world: WorldConfig = field(default_factory=WorldConfig)
    physics: PhysicsConfig = field(default_factory=PhysicsConfig)
    wrench: WrenchConfig = field(default_factory=WrenchConfig)
    rewards: RewardConfig = field(default_factory=RewardConfig)
    ppo: PpoConfig = field(default_factory=PpoConfig)
    distill: DistillConfig = field(default_factory=DistillConfig)
    seed: int = 0
    out_dir: str = "runs/default"

    def validate(self) -> None:
        for section in (self.world, self.physics, self.wrench, self.rewards,
                        self.ppo, self.distill):
            section.validate()


def _from_dict(cls: type, data: dict[str, Any], path: str) -> Any:
    if not isinstance(data, dict):
        raise ConfigError(f"{path or 'config'}: expected an object")
    known = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(known)
    if unknown:
        raise ConfigError(f"{path or 'config'}: unknown keys {sorted(unknown)}")
    kwargs: dict[str, Any] = {}
    for name, value in data.items():
        f = known[name]
        sub = f.type if isinstance(f.type, type) else None
        default = getattr(cls(), name)
        if dataclasses.is_dataclass(default):
            kwargs[name] = _from_dict(type(default), value, f"{path}.{name}" if path else name)
        elif isinstance(default, tuple) and isinstance(value, list):
            kwargs[name] = _to_tuple(value)
        else:
            kwargs[name] = value
    return cls(**kwargs)


def _to_tuple(value: list) -> tuple:
    return tuple(_to_tuple(v) if isinstance(v, list) else v for v in value)


def load_config(path: str | Path) -> RunConfig:
    """Load and validate a run configuration from a JSON file."""
    with open(path) as fh:
        data = json.load(fh)
    cfg = config_from_dict(data)
    return cfg


def config_from_dict(data: dict[str, Any]) -> RunConfig:
    cfg = _from_dict(RunConfig, data, "")
    cfg.validate()
    return cfg


def config_to_dict(cfg: RunConfig) -> dict[str, Any]:
    return dataclasses.asdict(cfg)


def save_config(cfg: RunConfig, path: str | Path) -> None:
    """Echo the effective configuration to disk (reproducibility contract)."""
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(config_to_dict(cfg), fh, indent=2, sort_keys=True)
        fh.write("\n")
