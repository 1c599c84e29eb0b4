import { describe, expect, it } from "vitest";
import { Session, SocketLike } from "../src/session";
import { SCHEMA_VERSION } from "../src/protocol";

class FakeSocket implements SocketLike {
  sent: string[] = [];
  closed = false;
  onopen: (() => void) | null = null;
  onclose: (() => void) | null = null;
  onmessage: ((ev: { data: string }) => void) | null = null;
  send(data: string): void {
    this.sent.push(data);
  }
  close(): void {
    this.closed = true;
  }
  push(msg: object): void {
    this.onmessage?.({ data: JSON.stringify(msg) });
  }
}

function stateFrame(tick: number, version = SCHEMA_VERSION): object {
  return {
    type: "state",
    schema_version: version,
    tick,
    time: tick * 0.02,
    leader_wrench: [0, 0, 0],
    payload: { x: 0, y: 0, yaw: 0, height: 0.1, mass: 2 },
    followers: [],
    reward: { total: 0 },
    terminated: false,
  };
}

function makeSession() {
  const sockets: FakeSocket[] = [];
  const timers: Array<{ fn: () => void; ms: number }> = [];
  const session = new Session(
    "ws://test/ws",
    () => {
      const s = new FakeSocket();
      sockets.push(s);
      return s;
    },
    (fn, ms) => timers.push({ fn, ms }),
  );
  return { session, sockets, timers };
}

describe("Session", () => {
  it("tracks role from the connect ack", () => {
    const { session, sockets } = makeSession();
    session.connect();
    sockets[0].onopen!();
    sockets[0].push({ type: "ack", of: "connect", schema_version: SCHEMA_VERSION, role: "leader" });
    expect(session.status).toBe("open");
    expect(session.role).toBe("leader");
  });

  it("never renders a frame older than the latest received", () => {
    const { session, sockets } = makeSession();
    session.connect();
    sockets[0].onopen!();
    sockets[0].push(stateFrame(10));
    sockets[0].push(stateFrame(9)); // stale, dropped
    expect(session.frame!.tick).toBe(10);
    sockets[0].push(stateFrame(11));
    expect(session.frame!.tick).toBe(11);
  });

  it("accepts the tick jump back after a server reset", () => {
    const { session, sockets } = makeSession();
    session.connect();
    sockets[0].onopen!();
    sockets[0].push(stateFrame(5000));
    sockets[0].push(stateFrame(1));
    expect(session.frame!.tick).toBe(1);
  });

  it("reconnects with exponential backoff", () => {
    const { session, sockets, timers } = makeSession();
    session.connect();
    sockets[0].onclose!();
    expect(session.status).toBe("closed");
    expect(timers[0].ms).toBe(500);
    timers[0].fn();
    expect(sockets.length).toBe(2);
    sockets[1].onclose!();
    expect(timers[1].ms).toBe(1000);
  });

  it("treats a schema_version mismatch as fatal", () => {
    const { session, sockets, timers } = makeSession();
    session.connect();
    sockets[0].onopen!();
    sockets[0].push(stateFrame(1, SCHEMA_VERSION + 1));
    expect(session.status).toBe("schema_mismatch");
    expect(session.banner).toContain("schema_version mismatch");
    expect(sockets[0].closed).toBe(true);
    // no reconnect attempts after a fatal mismatch
    session.connect();
    expect(sockets.length).toBe(1);
    expect(timers.length).toBe(0);
  });

  it("only sends while open", () => {
    const { session, sockets } = makeSession();
    session.connect();
    session.send({ type: "reset" });
    expect(sockets[0].sent.length).toBe(0);
    sockets[0].onopen!();
    session.send({ type: "reset" });
    expect(sockets[0].sent).toEqual(['{"type":"reset"}']);
  });
});
