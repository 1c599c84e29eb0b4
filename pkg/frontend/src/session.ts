/** Connection state machine: reconnect with backoff, frame ordering,
 * schema negotiation.
 *
 * The rendered frame is never older than the latest received one: frames
 * whose tick does not advance past the stored frame are dropped (a reset
 * restarts the tick counter, which is detected as a large backward jump
 * and accepted).  A schema_version mismatch is fatal and stops reconnects.
 */
import { SCHEMA_VERSION, ServerMsg, StateFrame, AckMsg } from "./protocol";

export type Status = "connecting" | "open" | "closed" | "schema_mismatch";

export interface SocketLike {
  send(data: string): void;
  close(): void;
  onopen: (() => void) | null;
  onclose: (() => void) | null;
  onmessage: ((ev: { data: string }) => void) | null;
}

export type SocketFactory = (url: string) => SocketLike;
export type Scheduler = (fn: () => void, ms: number) => void;

export class Session {
  status: Status = "closed";
  role: "leader" | "observer" | null = null;
  frame: StateFrame | null = null;
  banner: string | null = null;
  lastError: string | null = null;
  lastAck: AckMsg | null = null;
  retryMs = 500;

  private url: string;
  private makeSocket: SocketFactory;
  private schedule: Scheduler;
  private socket: SocketLike | null = null;

  constructor(
    url: string,
    makeSocket: SocketFactory,
    schedule: Scheduler = (fn, ms) => setTimeout(fn, ms),
  ) {
    this.url = url;
    this.makeSocket = makeSocket;
    this.schedule = schedule;
  }

  connect(): void {
    if (this.status === "schema_mismatch") return;
    this.status = "connecting";
    const ws = this.makeSocket(this.url);
    this.socket = ws;
    ws.onopen = () => {
      this.status = "open";
      this.retryMs = 500;
      this.banner = null;
    };
    ws.onclose = () => {
      if (this.status === "schema_mismatch") return;
      this.status = "closed";
      this.banner = `disconnected, retrying in ${this.retryMs} ms`;
      const wait = this.retryMs;
      this.retryMs = Math.min(this.retryMs * 2, 8000);
      this.schedule(() => this.connect(), wait);
    };
    ws.onmessage = (ev) => this.handle(JSON.parse(ev.data) as ServerMsg);
  }

  private handle(msg: ServerMsg): void {
    if (msg.type === "state") {
      if (msg.schema_version !== SCHEMA_VERSION) {
        this.fatalSchema(msg.schema_version);
        return;
      }
      // drop stale frames; a reset shows up as a jump back near zero
      if (
        this.frame !== null &&
        msg.tick <= this.frame.tick &&
        msg.tick > this.frame.tick - 100
      ) {
        return;
      }
      this.frame = msg;
    } else if (msg.type === "ack") {
      if (msg.of === "connect") {
        if (msg.schema_version !== SCHEMA_VERSION) {
          this.fatalSchema(msg.schema_version ?? -1);
          return;
        }
        this.role = msg.role ?? null;
      }
      this.lastAck = msg;
    } else {
      this.lastError = msg.message;
    }
  }

  private fatalSchema(got: number): void {
    this.status = "schema_mismatch";
    this.banner = `schema_version mismatch: server ${got}, console ${SCHEMA_VERSION}`;
    this.socket?.close();
  }

  send(msg: object): void {
    if (this.status === "open" && this.socket) {
      this.socket.send(JSON.stringify(msg));
    }
  }
}
