/** Leader input: drag vector to planar force, keys/scroll to yaw torque.
 *
 * Drag length maps linearly to force magnitude (newtonsPerPixel) and
 * saturates at the 40 N training limit; screen y points down so it is
 * negated into the world frame.  Holding Q/E applies +/- full torque,
 * scrolling nudges a persistent torque offset, everything clamps to
 * +/- 10 N m.  Input is last-writer-wins: takeMessage() returns a wrench
 * message only when the pending wrench changed since the last send, so
 * releasing input sends a single zero wrench and then goes silent.
 */
import {
  clampWrench,
  FORCE_LIMIT,
  TORQUE_LIMIT,
  Wrench,
  WrenchMsg,
  wrenchEquals,
  wrenchMsg,
} from "./protocol";

export class LeaderInput {
  newtonsPerPixel: number;
  private dragging = false;
  private origin = { x: 0, y: 0 };
  private force = { fx: 0, fy: 0 };
  private keyTorque = 0;
  private scrollTorque = 0;
  private lastSent: Wrench | null = null;
  lastClamped = false;

  constructor(newtonsPerPixel = 0.25) {
    this.newtonsPerPixel = newtonsPerPixel;
  }

  dragStart(px: number, py: number): void {
    this.dragging = true;
    this.origin = { x: px, y: py };
    this.force = { fx: 0, fy: 0 };
  }

  dragMove(px: number, py: number): void {
    if (!this.dragging) return;
    let fx = (px - this.origin.x) * this.newtonsPerPixel;
    let fy = -(py - this.origin.y) * this.newtonsPerPixel;
    const mag = Math.hypot(fx, fy);
    if (mag > FORCE_LIMIT) {
      fx *= FORCE_LIMIT / mag;
      fy *= FORCE_LIMIT / mag;
    }
    this.force = { fx: fx + 0, fy: fy + 0 }; // +0 folds away negative zero
  }

  dragEnd(): void {
    this.dragging = false;
    this.force = { fx: 0, fy: 0 };
    this.scrollTorque = 0;
  }

  /** key: "q" for counterclockwise, "e" for clockwise. */
  setKey(key: string, pressed: boolean): void {
    const k = key.toLowerCase();
    if (k !== "q" && k !== "e") return;
    const dir = k === "q" ? 1 : -1;
    if (pressed) this.keyTorque = dir * TORQUE_LIMIT;
    else if (Math.sign(this.keyTorque) === dir) this.keyTorque = 0;
  }

  scroll(deltaY: number): void {
    this.scrollTorque -= deltaY * 0.01;
    this.scrollTorque = Math.min(
      TORQUE_LIMIT,
      Math.max(-TORQUE_LIMIT, this.scrollTorque),
    );
  }

  get isDragging(): boolean {
    return this.dragging;
  }

  current(): Wrench {
    const raw = {
      fx: this.force.fx,
      fy: this.force.fy,
      tz: this.keyTorque + this.scrollTorque,
    };
    const { wrench, clamped } = clampWrench(raw);
    this.lastClamped = clamped;
    return wrench;
  }

  /** Wrench message if the input changed since the last send, else null. */
  takeMessage(): WrenchMsg | null {
    const w = this.current();
    if (this.lastSent !== null && wrenchEquals(w, this.lastSent)) return null;
    this.lastSent = w;
    return wrenchMsg(w);
  }
}
