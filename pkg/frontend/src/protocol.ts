/** WebSocket protocol types and client-side clamping.
 *
 * Mirrors the server contract (schema_version 1): the console never sends
 * wrenches outside the training ranges, and flags when it had to clamp.
 */

export const SCHEMA_VERSION = 1;
export const FORCE_LIMIT = 40; // N, per component
export const TORQUE_LIMIT = 10; // N m

export interface Wrench {
  fx: number;
  fy: number;
  tz: number;
}

export interface WrenchMsg extends Wrench {
  type: "wrench";
}

export interface ResetMsg {
  type: "reset";
}

export interface SetMassMsg {
  type: "set_mass";
  mass: number;
}

export type ClientMsg = WrenchMsg | ResetMsg | SetMassMsg;

export interface BaseState {
  x: number;
  y: number;
  yaw: number;
  vx: number;
  vy: number;
  yaw_rate: number;
}

export interface FollowerState {
  base: BaseState;
  arm: { q: number[]; dq: number[] };
  ee: { x: number; y: number; z: number; vx: number; vy: number; vz: number };
  beta_est: number[];
  grip_stretch: number;
}

export interface StateFrame {
  type: "state";
  schema_version: number;
  tick: number;
  time: number;
  leader_wrench: [number, number, number];
  payload: { x: number; y: number; yaw: number; height: number; mass: number };
  followers: FollowerState[];
  reward: Record<string, number>;
  terminated: boolean;
}

export interface AckMsg {
  type: "ack";
  of: string;
  schema_version?: number;
  role?: "leader" | "observer";
  applied?: number[];
  clamped?: boolean;
  mass?: number;
}

export interface ErrorMsg {
  type: "error";
  message: string;
}

export type ServerMsg = StateFrame | AckMsg | ErrorMsg;

const clip = (v: number, lim: number) => Math.min(lim, Math.max(-lim, v));

/** Clamp a wrench to the training ranges; `clamped` flags any change. */
export function clampWrench(w: Wrench): { wrench: Wrench; clamped: boolean } {
  const out = {
    fx: clip(w.fx, FORCE_LIMIT),
    fy: clip(w.fy, FORCE_LIMIT),
    tz: clip(w.tz, TORQUE_LIMIT),
  };
  const clamped = out.fx !== w.fx || out.fy !== w.fy || out.tz !== w.tz;
  return { wrench: out, clamped };
}

export function wrenchMsg(w: Wrench): WrenchMsg {
  return { type: "wrench", ...w };
}

export function wrenchEquals(a: Wrench, b: Wrench): boolean {
  return a.fx === b.fx && a.fy === b.fy && a.tz === b.tz;
}
