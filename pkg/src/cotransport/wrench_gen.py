"""Leader intent generation.

Three sources share one output contract (planar force + yaw torque in the
world frame):

* per-episode sampled targets with a ramp-hold-ramp time scaling,
* an Ornstein-Uhlenbeck process for human-like evaluation profiles,
* piecewise-linear knot files shared with the live console.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import WrenchConfig, OuParams


@dataclass
class WrenchProfile:
    """One episode's wrench targets and schedule. Vectorized over envs."""

    target_force: np.ndarray      # (n, 2) N
    target_torque: np.ndarray     # (n,) N*m
    duration: float               # s
    ramp_up_fraction: float = 0.1
    hold_fraction: float = 0.8
    ramp_down_fraction: float = 0.1
    is_zero_episode: np.ndarray = field(default=None)  # (n,) bool

    def __post_init__(self):
        if self.is_zero_episode is None:
            self.is_zero_episode = np.zeros(self.target_torque.shape, dtype=bool)


def sample_episode_profile(rng: np.random.Generator, cfg: WrenchConfig,
                           num_envs: int = 1) -> WrenchProfile:
    """Sample per-episode targets; a fixed fraction of episodes is zero-wrench."""
    if cfg.two_point_sampling:
        force = rng.choice([-cfg.force_limit, cfg.force_limit], size=(num_envs, 2))
        torque = rng.choice([-cfg.torque_limit, cfg.torque_limit], size=num_envs)
    else:
        force = rng.uniform(-cfg.force_limit, cfg.force_limit, size=(num_envs, 2))
        torque = rng.uniform(-cfg.torque_limit, cfg.torque_limit, size=num_envs)
    zero = rng.random(num_envs) < cfg.zero_episode_prob
    force[zero] = 0.0
    torque[zero] = 0.0
    return WrenchProfile(force, torque, cfg.episode_duration,
                         cfg.ramp_up_fraction, cfg.hold_fraction,
                         cfg.ramp_down_fraction, zero)


def schedule_scale(t, profile: WrenchProfile):
    """Ramp-hold-ramp scaling s(t) in [0, 1]; errors outside [0, T]."""
    t = np.asarray(t, dtype=float)
    T = profile.duration
    if np.any(t < 0) or np.any(t > T):
        raise ValueError(f"t outside [0, {T}]")
    t_up = profile.ramp_up_fraction * T
    t_hold_end = t_up + profile.hold_fraction * T
    t_down = profile.ramp_down_fraction * T
    s = np.where(t < t_up, t / t_up,
                 np.where(t < t_hold_end, 1.0, 1.0 - (t - t_hold_end) / t_down))
    return np.clip(s, 0.0, 1.0)


def wrench_at(profile: WrenchProfile, t):
    """Scheduled wrench (force (n, 2), torque (n,)) at time t."""
    s = schedule_scale(t, profile)
    s = np.broadcast_to(np.asarray(s), profile.target_torque.shape)
    force = profile.target_force * s[..., None]
    torque = profile.target_torque * s
    return force, torque


@dataclass
class OuGeneratorState:
    """Mean-reverting wrench generator; channels are (Fx, Fy, torque)."""

    current: np.ndarray          # (n, 3)
    mean: np.ndarray             # (n, 3)
    reversion_rate: float
    noise_scale: np.ndarray      # (3,)
    time: np.ndarray = None      # (n,) s, drives mean resampling

    def __post_init__(self):
        if self.time is None:
            self.time = np.zeros(self.current.shape[0])


def ou_init(cfg: WrenchConfig, num_envs: int = 1) -> OuGeneratorState:
    return OuGeneratorState(
        current=np.zeros((num_envs, 3)),
        mean=np.zeros((num_envs, 3)),
        reversion_rate=cfg.ou.reversion_rate,
        noise_scale=np.asarray(cfg.ou.noise_scale, dtype=float),
    )


def ou_step(state: OuGeneratorState, dt: float, rng: np.random.Generator,
            cfg: WrenchConfig) -> OuGeneratorState:
    """One Euler-Maruyama step; output clamped to the training ranges.

    The mean is resampled on a fixed period to create direction changes.
    """
    if dt <= 0:
        raise ValueError("dt must be > 0")
    theta = state.reversion_rate
    x = state.current
    noise = rng.standard_normal(x.shape) * state.noise_scale * np.sqrt(dt)
    x = x + theta * (state.mean - x) * dt + noise
    limits = np.array([cfg.force_limit, cfg.force_limit, cfg.torque_limit])
    x = np.clip(x, -limits, limits)
    time = state.time + dt
    period = cfg.ou.mean_resample_period
    mean = state.mean.copy()
    if period > 0:
        rollover = np.floor(time / period) > np.floor(state.time / period)
        if np.any(rollover):
            fresh = rng.uniform(-limits, limits, size=mean.shape)
            mean[rollover] = fresh[rollover]
    return OuGeneratorState(x, mean, theta, state.noise_scale, time)


@dataclass
class KnotProfile:
    """Piecewise-linear wrench profile loaded from a knot file."""

    times: np.ndarray     # (m,)
    wrench: np.ndarray    # (m, 3)

    @property
    def duration(self) -> float:
        return float(self.times[-1])

    def at(self, t):
        t = np.asarray(t, dtype=float)
        out = np.stack([np.interp(t, self.times, self.wrench[:, i]) for i in range(3)],
                       axis=-1)
        return out


def load_knot_profile(path: str | Path) -> KnotProfile:
    """Load a JSON list of [t, fx, fy, torque] knots, sorted by time."""
    with open(path) as fh:
        knots = json.load(fh)
    arr = np.asarray(knots, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 4:
        raise ValueError("knot file must be a list of [t, fx, fy, torque]")
    order = np.argsort(arr[:, 0])
    arr = arr[order]
    return KnotProfile(arr[:, 0], arr[:, 1:])
