/** Top-down 2D rendering of the transport scene.
 *
 * World axes: +x right, +y up (screen y is flipped).  The camera follows
 * the payload.  Pure geometry helpers are separated from canvas calls so
 * they can be unit-tested without a DOM.
 */
import { StateFrame, FollowerState } from "./protocol";

export interface Camera {
  cx: number; // world x at canvas center
  cy: number;
  scale: number; // px per metre
  width: number;
  height: number;
}

export function worldToScreen(
  cam: Camera,
  x: number,
  y: number,
): [number, number] {
  return [
    cam.width / 2 + (x - cam.cx) * cam.scale,
    cam.height / 2 - (y - cam.cy) * cam.scale,
  ];
}

/** Rectangle corners (world) for a yawed box centered at (x, y). */
export function boxCorners(
  x: number,
  y: number,
  yaw: number,
  hx: number,
  hy: number,
): [number, number][] {
  const c = Math.cos(yaw);
  const s = Math.sin(yaw);
  const local: [number, number][] = [
    [hx, hy],
    [-hx, hy],
    [-hx, -hy],
    [hx, -hy],
  ];
  return local.map(([lx, ly]) => [x + c * lx - s * ly, y + s * lx + c * ly]);
}

function poly(
  ctx: CanvasRenderingContext2D,
  cam: Camera,
  pts: [number, number][],
  stroke: string,
  fill?: string,
): void {
  ctx.beginPath();
  pts.forEach(([x, y], i) => {
    const [sx, sy] = worldToScreen(cam, x, y);
    if (i === 0) ctx.moveTo(sx, sy);
    else ctx.lineTo(sx, sy);
  });
  ctx.closePath();
  if (fill) {
    ctx.fillStyle = fill;
    ctx.fill();
  }
  ctx.strokeStyle = stroke;
  ctx.stroke();
}

function arrow(
  ctx: CanvasRenderingContext2D,
  cam: Camera,
  x0: number,
  y0: number,
  dx: number,
  dy: number,
  color: string,
): void {
  const [sx, sy] = worldToScreen(cam, x0, y0);
  const [ex, ey] = worldToScreen(cam, x0 + dx, y0 + dy);
  ctx.beginPath();
  ctx.moveTo(sx, sy);
  ctx.lineTo(ex, ey);
  ctx.strokeStyle = color;
  ctx.lineWidth = 2;
  ctx.stroke();
  ctx.lineWidth = 1;
  const ang = Math.atan2(ey - sy, ex - sx);
  ctx.beginPath();
  ctx.moveTo(ex, ey);
  ctx.lineTo(ex - 8 * Math.cos(ang - 0.4), ey - 8 * Math.sin(ang - 0.4));
  ctx.moveTo(ex, ey);
  ctx.lineTo(ex - 8 * Math.cos(ang + 0.4), ey - 8 * Math.sin(ang + 0.4));
  ctx.strokeStyle = color;
  ctx.stroke();
}

function drawFollower(
  ctx: CanvasRenderingContext2D,
  cam: Camera,
  fol: FollowerState,
): void {
  const b = fol.base;
  poly(ctx, cam, boxCorners(b.x, b.y, b.yaw, 0.12, 0.1), "#4da3ff", "#17304d");
  // heading tick
  const [sx, sy] = worldToScreen(cam, b.x, b.y);
  const [hx, hy] = worldToScreen(
    cam,
    b.x + 0.16 * Math.cos(b.yaw),
    b.y + 0.16 * Math.sin(b.yaw),
  );
  ctx.beginPath();
  ctx.moveTo(sx, sy);
  ctx.lineTo(hx, hy);
  ctx.strokeStyle = "#4da3ff";
  ctx.stroke();
  // arm projection: base to end effector, colored by grip stretch
  const stretch = Math.min(1, Math.abs(fol.grip_stretch) / 0.1);
  const ch = Math.round(255 * stretch);
  const col = `rgb(${ch}, ${255 - ch}, 80)`;
  const [ex, ey] = worldToScreen(cam, fol.ee.x, fol.ee.y);
  ctx.beginPath();
  ctx.moveTo(sx, sy);
  ctx.lineTo(ex, ey);
  ctx.strokeStyle = col;
  ctx.lineWidth = 3;
  ctx.stroke();
  ctx.lineWidth = 1;
  ctx.beginPath();
  ctx.arc(ex, ey, 4, 0, 2 * Math.PI);
  ctx.fillStyle = col;
  ctx.fill();
}

export function render(
  ctx: CanvasRenderingContext2D,
  frame: StateFrame | null,
  width: number,
  height: number,
  pendingForce: { fx: number; fy: number },
): void {
  ctx.fillStyle = "#0b0f14";
  ctx.fillRect(0, 0, width, height);
  if (!frame) {
    ctx.fillStyle = "#888";
    ctx.font = "16px monospace";
    ctx.fillText("waiting for server...", 20, 30);
    return;
  }
  const cam: Camera = {
    cx: frame.payload.x,
    cy: frame.payload.y,
    scale: 180,
    width,
    height,
  };
  // grid every metre for motion reference
  ctx.strokeStyle = "#1c2733";
  for (let gx = Math.floor(cam.cx - 3); gx <= cam.cx + 3; gx++) {
    const [sx] = worldToScreen(cam, gx, 0);
    ctx.beginPath();
    ctx.moveTo(sx, 0);
    ctx.lineTo(sx, height);
    ctx.stroke();
  }
  for (let gy = Math.floor(cam.cy - 3); gy <= cam.cy + 3; gy++) {
    const [, sy] = worldToScreen(cam, 0, gy);
    ctx.beginPath();
    ctx.moveTo(0, sy);
    ctx.lineTo(width, sy);
    ctx.stroke();
  }
  const p = frame.payload;
  poly(ctx, cam, boxCorners(p.x, p.y, p.yaw, 0.3, 0.2), "#e8c35a", "#3a3012");
  for (const fol of frame.followers) drawFollower(ctx, cam, fol);
  // leader force arrow from the payload center, 0.02 m per newton
  const [fx, fy] = frame.leader_wrench;
  if (Math.hypot(fx, fy) > 1e-6) {
    arrow(ctx, cam, p.x, p.y, fx * 0.02, fy * 0.02, "#ff5a5a");
  }
  // pending (not yet echoed) input as a dimmer arrow
  if (Math.hypot(pendingForce.fx, pendingForce.fy) > 1e-6) {
    arrow(
      ctx,
      cam,
      p.x,
      p.y,
      pendingForce.fx * 0.02,
      pendingForce.fy * 0.02,
      "#803030",
    );
  }
}
