/**
 * UI session state: the single source every rendered quantity traces to.
 *
 * Command drafts hold what the operator is asking for; acks snap the
 * controls to the server-applied values, so the UI never displays a value
 * the server did not confirm.
 */

import {
  AckMsg,
  AppliedCommand,
  CmdMsg,
  EventMsg,
  HelloMsg,
  TelemetryMsg,
} from "./protocol.js";

export interface CommandDraft {
  insertVelocity: number;   // mm/s
  targetBendDeg: number;
  bendAzimuthDeg: number;
  coilsEnabled: boolean;
  grasperCurrent: number;   // A
}

export const DEG = Math.PI / 180;

export function defaultDraft(): CommandDraft {
  return {
    insertVelocity: 0,
    targetBendDeg: 0,
    bendAzimuthDeg: 0,
    coilsEnabled: true,
    grasperCurrent: 0,
  };
}

/** Server-side ingest clamps, mirrored from the hello config. */
export function mirrorClamp(cmd: CmdMsg, hello: HelloMsg): AppliedCommand {
  const clamp = (v: number, lo: number, hi: number) => Math.min(Math.max(v, lo), hi);
  const az = Math.atan2(Math.sin(cmd.bend_azimuth), Math.cos(cmd.bend_azimuth));
  return {
    insert_velocity: clamp(cmd.insert_velocity, -hello.max_insert_speed, hello.max_insert_speed),
    target_bend: clamp(cmd.target_bend, -hello.max_bend, hello.max_bend),
    bend_azimuth: az,
    coils_enabled: cmd.coils_enabled,
    grasper_current: clamp(cmd.grasper_current, -hello.grasper_limit, hello.grasper_limit),
  };
}

export type ConnectionState = "connecting" | "connected" | "closed";

export class UiSession {
  connection: ConnectionState = "connecting";
  hello: HelloMsg | null = null;
  latest: TelemetryMsg | null = null;
  events: EventMsg[] = [];
  draft: CommandDraft = defaultDraft();
  notices: string[] = [];
  private seq = 0;
  private pending = new Map<number, CmdMsg>();

  get role(): "operator" | "observer" | "unknown" {
    return this.hello?.role ?? "unknown";
  }

  get canCommand(): boolean {
    return this.role === "operator" && this.connection === "connected";
  }

  applyHello(msg: HelloMsg): void {
    this.hello = msg;
    this.connection = "connected";
  }

  applyTelemetry(msg: TelemetryMsg): void {
    // Snapshots may arrive out of order after reconnects; keep the newest.
    if (this.latest === null || msg.tick >= this.latest.tick) {
      this.latest = msg;
    }
  }

  applyEvent(msg: EventMsg): void {
    this.events.push(msg);
    if (this.events.length > 200) {
      this.events.shift();
    }
  }

  /** Serialize the draft as the next command (strictly increasing seq). */
  nextCommand(): CmdMsg {
    this.seq += 1;
    const cmd: CmdMsg = {
      type: "cmd",
      seq: this.seq,
      insert_velocity: this.draft.insertVelocity,
      target_bend: this.draft.targetBendDeg * DEG,
      bend_azimuth: this.draft.bendAzimuthDeg * DEG,
      coils_enabled: this.draft.coilsEnabled,
      grasper_current: this.draft.grasperCurrent,
    };
    this.pending.set(cmd.seq, cmd);
    return cmd;
  }

  /**
   * Fold an ack back into the controls: clamped values snap the sliders to
   * what the server actually applied.  Returns the applied values (if any)
   * so callers can update widgets.
   */
  applyAck(ack: AckMsg): AppliedCommand | null {
    this.pending.delete(ack.seq);
    if (ack.status === "rejected") {
      this.notices.push(`command ${ack.seq} rejected: ${ack.reason ?? ""}`);
      return null;
    }
    if (ack.status === "stale") {
      return null;
    }
    const applied = ack.applied;
    if (!applied) {
      return null;
    }
    this.draft = {
      insertVelocity: applied.insert_velocity,
      targetBendDeg: applied.target_bend / DEG,
      bendAzimuthDeg: applied.bend_azimuth / DEG,
      coilsEnabled: applied.coils_enabled,
      grasperCurrent: applied.grasper_current,
    };
    return applied;
  }
}
