/** Console entry point: wires socket, input, scene, and HUD together. */
import { LeaderInput } from "./input";
import { frameAlignment, formatAlignment, meanEstimate } from "./hud";
import { render } from "./scene";
import { Session, SocketLike } from "./session";

const canvas = document.getElementById("scene") as HTMLCanvasElement;
const ctx = canvas.getContext("2d")!;
const hudEl = document.getElementById("hud")!;
const bannerEl = document.getElementById("banner")!;

const proto = location.protocol === "https:" ? "wss" : "ws";
const url = `${proto}://${location.host}/ws`;
const session = new Session(url, (u) => new WebSocket(u) as SocketLike);
session.connect();

const input = new LeaderInput(0.25);

canvas.addEventListener("pointerdown", (e) => {
  canvas.setPointerCapture(e.pointerId);
  input.dragStart(e.offsetX, e.offsetY);
});
canvas.addEventListener("pointermove", (e) => input.dragMove(e.offsetX, e.offsetY));
canvas.addEventListener("pointerup", () => input.dragEnd());
canvas.addEventListener("pointercancel", () => input.dragEnd());
canvas.addEventListener("wheel", (e) => {
  e.preventDefault();
  input.scroll(e.deltaY);
});
window.addEventListener("keydown", (e) => input.setKey(e.key, true));
window.addEventListener("keyup", (e) => input.setKey(e.key, false));

document.getElementById("reset")!.addEventListener("click", () => {
  session.send({ type: "reset" });
});
document.getElementById("mass")!.addEventListener("change", (e) => {
  const mass = parseFloat((e.target as HTMLInputElement).value);
  if (Number.isFinite(mass)) session.send({ type: "set_mass", mass });
});

// input pump at the control rate; last-writer-wins, silent when unchanged
setInterval(() => {
  const msg = input.takeMessage();
  if (msg) session.send(msg);
}, 20);

function hudText(): string {
  const f = session.frame;
  if (!f) return "no state yet";
  const w = f.leader_wrench;
  const est = meanEstimate(f);
  const align = formatAlignment(frameAlignment(f));
  const cl = input.lastClamped ? "  [CLAMPED]" : "";
  return [
    `role ${session.role ?? "?"}   tick ${f.tick}   t ${f.time.toFixed(2)} s   mass ${f.payload.mass.toFixed(1)} kg`,
    `cmd wrench  fx ${w[0].toFixed(1)} N  fy ${w[1].toFixed(1)} N  tz ${w[2].toFixed(1)} N m${cl}`,
    `beta_est    fx ${est[0].toFixed(1)} N  fy ${est[1].toFixed(1)} N  tz ${est[2].toFixed(1)} N m`,
    `alignment   ${align}   height ${f.payload.height.toFixed(3)} m   reward ${f.reward.total.toFixed(4)}`,
  ].join("\n");
}

function tick(): void {
  render(ctx, session.frame, canvas.width, canvas.height, input.current());
  hudEl.textContent = hudText();
  bannerEl.textContent = session.banner ?? session.lastError ?? "";
  bannerEl.style.display = bannerEl.textContent ? "block" : "none";
  requestAnimationFrame(tick);
}
requestAnimationFrame(tick);
