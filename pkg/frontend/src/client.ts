/**
 * Socket client: keeps the newest telemetry snapshot for the render loop
 * (network decoupled from drawing) and queues commands for at most one
 * second while disconnected.
 */

import { CmdMsg, parseServerMessage, ProtocolError, ServerMsg } from "./protocol.js";
import { UiSession } from "./state.js";

export interface SocketLike {
  send(data: string): void;
  close(): void;
  onopen: ((ev?: unknown) => void) | null;
  onmessage: ((ev: { data: string }) => void) | null;
  onclose: ((ev?: unknown) => void) | null;
  onerror: ((ev?: unknown) => void) | null;
  readyState: number;
}

export const OPEN = 1;
const OFFLINE_QUEUE_MS = 1000;

export class TeleopClient {
  readonly session: UiSession;
  private socket: SocketLike | null = null;
  private queue: { cmd: CmdMsg; at: number }[] = [];
  private frameDirty = false;
  parseErrors = 0;

  constructor(session: UiSession, private now: () => number = () => Date.now()) {
    this.session = session;
  }

  attach(socket: SocketLike): void {
    this.socket = socket;
    socket.onopen = () => {
      this.session.connection = "connected";
      this.flushQueue();
    };
    socket.onmessage = (ev) => this.handleMessage(ev.data);
    socket.onclose = () => {
      this.session.connection = "closed";
    };
    socket.onerror = () => {
      this.session.connection = "closed";
    };
  }

  handleMessage(data: string): void {
    let msg: ServerMsg;
    try {
      msg = parseServerMessage(data);
    } catch (err) {
      if (err instanceof ProtocolError) {
        // malformed frame: skip it, surface a badge, keep the stream alive
        this.parseErrors += 1;
        this.session.notices.push(`protocol error: ${err.message}`);
        return;
      }
      throw err;
    }
    switch (msg.type) {
      case "hello":
        this.session.applyHello(msg);
        break;
      case "telemetry":
        this.session.applyTelemetry(msg);
        this.frameDirty = true;
        break;
      case "ack":
        this.session.applyAck(msg);
        break;
      case "event":
        this.session.applyEvent(msg);
        break;
      case "error":
        this.session.notices.push(`server: ${msg.reason}`);
        break;
    }
  }

  /** True once per new snapshot: render loops poll this. */
  takeFrame(): boolean {
    const dirty = this.frameDirty;
    this.frameDirty = false;
    return dirty;
  }

  sendDraft(): void {
    if (!this.session.canCommand && this.session.role === "observer") {
      return; // observer controls are disabled
    }
    const cmd = this.session.nextCommand();
    if (this.socket && this.socket.readyState === OPEN) {
      this.socket.send(JSON.stringify(cmd));
    } else {
      this.queue.push({ cmd, at: this.now() });
    }
  }

  private flushQueue(): void {
    const cutoff = this.now() - OFFLINE_QUEUE_MS;
    const dropped = this.queue.filter((q) => q.at < cutoff).length;
    if (dropped > 0) {
      this.session.notices.push(`${dropped} queued command(s) expired offline`);
    }
    const live = this.queue.filter((q) => q.at >= cutoff);
    this.queue = [];
    for (const q of live) {
      this.socket!.send(JSON.stringify(q.cmd));
    }
  }

  /** Visible for tests: queued commands older than 1 s are dropped. */
  pendingQueue(): number {
    return this.queue.length;
  }
}
