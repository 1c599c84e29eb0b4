/** HUD quantities recomputed from a single state frame.
 *
 * The alignment number must agree with the Python metrics module on the
 * same tick, so the formula below mirrors it exactly: cosine between the
 * commanded planar force and each end-effector planar velocity, counting
 * only followers where the force norm exceeds 1e-3 N and the velocity norm
 * exceeds 1e-9 m/s, averaged over the valid followers.  No valid follower
 * means the value is undefined (NaN).
 */
import { StateFrame } from "./protocol";

export const ACTIVE_EPS = 1e-3;
export const VEL_EPS = 1e-9;

/** Per-frame intent alignment; NaN when no follower tick is valid. */
export function frameAlignment(frame: StateFrame): number {
  const [fx, fy] = frame.leader_wrench;
  const fn = Math.hypot(fx, fy);
  let sum = 0;
  let count = 0;
  for (const fol of frame.followers) {
    const vn = Math.hypot(fol.ee.vx, fol.ee.vy);
    if (fn > ACTIVE_EPS && vn > VEL_EPS) {
      sum += (fx * fol.ee.vx + fy * fol.ee.vy) / Math.max(fn * vn, 1e-12);
      count += 1;
    }
  }
  return count > 0 ? sum / count : NaN;
}

/** Mean estimated wrench across followers, for the beta_est readout. */
export function meanEstimate(frame: StateFrame): [number, number, number] {
  const out: [number, number, number] = [0, 0, 0];
  const k = frame.followers.length;
  if (k === 0) return out;
  for (const fol of frame.followers) {
    out[0] += fol.beta_est[0] / k;
    out[1] += fol.beta_est[1] / k;
    out[2] += fol.beta_est[2] / k;
  }
  return out;
}

export function formatAlignment(a: number): string {
  return Number.isNaN(a) ? "--" : a.toFixed(3);
}
