"""Real-time serve mode: one simulated team driven by a trained policy,
with the leader wrench supplied over a WebSocket.

Protocol (JSON text frames, schema_version 1):
  client -> server: {"type": "wrench", "fx": F, "fy": F, "tz": T}
                    {"type": "reset"}
                    {"type": "set_mass", "mass": KG}
  server -> client: {"type": "state", "schema_version": 1, ...}  (every tick)
                    {"type": "ack", "of": ..., "clamped": bool, ...}
                    {"type": "error", "message": ...}

The first connected client is the leader; later clients are read-only
observers. Wrench input is last-writer-wins per control tick and clamped to
the training ranges.
"""
from __future__ import annotations

import asyncio
import contextlib
from typing import Literal

import numpy as np
from fastapi import FastAPI, WebSocket, WebSocketDisconnect
from pydantic import BaseModel, ValidationError

from . import nets, rl
from . import world as wd
from .config import RunConfig
from .env import VecTransportEnv
from .metrics import load_run_config

SCHEMA_VERSION = 1


class WrenchMsg(BaseModel):
    type: Literal["wrench"]
    fx: float = 0.0
    fy: float = 0.0
    tz: float = 0.0


class ResetMsg(BaseModel):
    type: Literal["reset"]


class SetMassMsg(BaseModel):
    type: Literal["set_mass"]
    mass: float


def parse_message(data: dict):
    kind = data.get("type")
    model = {"wrench": WrenchMsg, "reset": ResetMsg, "set_mass": SetMassMsg}.get(kind)
    if model is None:
        raise ValueError(f"unknown message type {kind!r}")
    return model(**data)


class SimSession:
    """One live simulation stepped at the control rate."""

    def __init__(self, bundle_dir: str, team: int = 1, mass: float = 2.0,
                 seed: int = 0):
        self.bundle = rl.load_bundle(bundle_dir)
        self.cfg: RunConfig = load_run_config(bundle_dir)
        self.team = team
        self.mass = mass
        self.env = VecTransportEnv(self.cfg, 1, seed=seed, followers=team,
                                   wrench_mode="external", fixed_mass=mass,
                                   wrench_dr=False, episode_ticks=10 ** 9)
        self.obs = self.env.observe()
        self.pending_wrench = np.zeros(3)
        self.tick_count = 0

    def clamp_wrench(self, fx: float, fy: float, tz: float):
        lim_f = self.cfg.wrench.force_limit
        lim_t = self.cfg.wrench.torque_limit
        out = np.array([np.clip(fx, -lim_f, lim_f),
                        np.clip(fy, -lim_f, lim_f),
                        np.clip(tz, -lim_t, lim_t)])
        clamped = bool(out[0] != fx or out[1] != fy or out[2] != tz)
        return out, clamped

    def set_wrench(self, fx: float, fy: float, tz: float):
        out, clamped = self.clamp_wrench(fx, fy, tz)
        self.pending_wrench = out
        return out, clamped

    def reset(self):
        self.env.reset_all()
        self.obs = self.env.observe()
        self.pending_wrench = np.zeros(3)

    def set_mass(self, mass: float):
        self.mass = float(np.clip(mass, 0.0, 50.0))
        self.env.fixed_mass = self.mass
        self.reset()
        return self.mass

    def tick(self) -> dict:
        """Advance one control step and return the state frame."""
        self.env.set_external_wrench(self.pending_wrench[None, :])
        from .metrics import _policy_actions
        action, est = _policy_actions(self.bundle, self.cfg, self.obs)
        res = self.env.step(action)
        self.obs = res.obs
        self.tick_count += 1
        return self._frame(res, est)

    def _frame(self, res, est) -> dict:
        w = self.env.world
        r = lambda x: round(float(x), 6)
        followers = []
        for k in range(self.team):
            followers.append({
                "base": {"x": r(w.base.position[0, k, 0]),
                         "y": r(w.base.position[0, k, 1]),
                         "yaw": r(w.base.yaw[0, k]),
                         "vx": r(w.base.linear_velocity[0, k, 0]),
                         "vy": r(w.base.linear_velocity[0, k, 1]),
                         "yaw_rate": r(w.base.yaw_rate[0, k])},
                "arm": {"q": [r(v) for v in w.arm.joint_positions[0, k]],
                        "dq": [r(v) for v in w.arm.joint_velocities[0, k]]},
                "ee": {"x": r(self.obs["ee_pos"][0, k, 0]),
                       "y": r(self.obs["ee_pos"][0, k, 1]),
                       "z": r(self.obs["ee_pos"][0, k, 2]),
                       "vx": r(self.obs["ee_vel"][0, k, 0]),
                       "vy": r(self.obs["ee_vel"][0, k, 1]),
                       "vz": r(self.obs["ee_vel"][0, k, 2])},
                "beta_est": [r(v) for v in est[0, k]],
                "grip_stretch": r(res.info.grip_stretch[0, k]),
            })
        reward = {name: r(arr[0, 0]) for name, arr in res.breakdown.terms().items()}
        reward["total"] = r(res.breakdown.total[0, 0])
        return {
            "type": "state",
            "schema_version": SCHEMA_VERSION,
            "tick": self.tick_count,
            "time": r(w.time[0]),
            "leader_wrench": [r(v) for v in res.wrench_world[0]],
            "payload": {"x": r(w.payload.position[0, 0]),
                        "y": r(w.payload.position[0, 1]),
                        "yaw": r(w.payload.yaw[0]),
                        "height": r(w.payload.height[0]),
                        "mass": r(w.payload.mass[0])},
            "followers": followers,
            "reward": reward,
            "terminated": bool(res.terminated[0]),
        }


def create_app(bundle_dir: str, team: int = 1, mass: float = 2.0,
               seed: int = 0, tick_hz: float = 50.0) -> FastAPI:
    @contextlib.asynccontextmanager
    async def lifespan(app: FastAPI):
        app.state.sim_task = asyncio.create_task(app.state.sim_loop())
        yield
        app.state.sim_task.cancel()
        with contextlib.suppress(asyncio.CancelledError):
            await app.state.sim_task

    app = FastAPI(title="cotransport serve", lifespan=lifespan)
    session = SimSession(bundle_dir, team=team, mass=mass, seed=seed)
    app.state.session = session
    app.state.clients: list[WebSocket] = []
    app.state.tick_hz = tick_hz

    async def sim_loop():
        period = 1.0 / tick_hz
        loop = asyncio.get_event_loop()
        next_t = loop.time()
        while True:
            frame = session.tick()
            dead = []
            for ws in list(app.state.clients):
                try:
                    await ws.send_json(frame)
                except Exception:
                    dead.append(ws)
            for ws in dead:
                if ws in app.state.clients:
                    app.state.clients.remove(ws)
            next_t += period
            await asyncio.sleep(max(0.0, next_t - loop.time()))

    app.state.sim_loop = sim_loop

    @app.get("/health")
    async def health():
        return {"status": "ok", "schema_version": SCHEMA_VERSION,
                "tick": session.tick_count, "team": session.team}

    @app.websocket("/ws")
    async def ws_endpoint(ws: WebSocket):
        await ws.accept()
        app.state.clients.append(ws)
        is_leader = app.state.clients[0] is ws
        await ws.send_json({"type": "ack", "of": "connect",
                            "schema_version": SCHEMA_VERSION,
                            "role": "leader" if is_leader else "observer"})
        try:
            while True:
                data = await ws.receive_json()
                is_leader = app.state.clients and app.state.clients[0] is ws
                try:
                    msg = parse_message(data)
                except (ValueError, ValidationError) as exc:
                    await ws.send_json({"type": "error", "message": str(exc)})
                    continue
                if not is_leader:
                    await ws.send_json({"type": "error",
                                        "message": "read-only observer"})
                    continue
                if isinstance(msg, WrenchMsg):
                    applied, clamped = session.set_wrench(msg.fx, msg.fy, msg.tz)
                    await ws.send_json({"type": "ack", "of": "wrench",
                                        "applied": [float(v) for v in applied],
                                        "clamped": clamped})
                elif isinstance(msg, ResetMsg):
                    session.reset()
                    await ws.send_json({"type": "ack", "of": "reset",
                                        "clamped": False})
                else:
                    applied_mass = session.set_mass(msg.mass)
                    await ws.send_json({"type": "ack", "of": "set_mass",
                                        "mass": applied_mass,
                                        "clamped": applied_mass != msg.mass})
        except WebSocketDisconnect:
            pass
        finally:
            if ws in app.state.clients:
                app.state.clients.remove(ws)

    return app
