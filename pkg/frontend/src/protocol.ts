/**
 * teleop/1 wire protocol: message types and validation.
 *
 * Every payload is one JSON object with `type` and `schema` fields.
 * Unknown fields are ignored for forward compatibility; unknown types and
 * wrong schemas are rejected.
 */

export const PROTOCOL_SCHEMA = "teleop/1";

export interface PhantomInfo {
  name: string;
  wall_polygons: [number, number][][];
  entry_mm: [number, number];
  entry_heading_deg: number;
  tumor_center_mm: [number, number];
  tumor_radius_mm: number;
}

export interface HelloMsg {
  type: "hello";
  role: "operator" | "observer";
  power_cap: number;
  max_bend: number;          // rad, exact server clamp bound
  max_bend_deg: number;
  max_insert_speed: number;  // mm/s
  grasper_limit: number;     // A
  tick_rate: number;
  publish_rate: number;
  max_insertion_mm: number;
  phantom: PhantomInfo;
}

export interface TelemetryMsg {
  type: "telemetry";
  tick: number;
  sim_time: number;
  mode: "steering" | "imaging" | "grasping";
  insertion_mm: number;
  applied_bend_deg: number;
  bend_azimuth_deg: number;
  base_mm: [number, number];
  tip_mm: [number, number];
  tip_heading_deg: number;
  polyline_mm: [number, number][];
  currents: Record<string, number>;
  total_power: number;
  imaging_distorted: boolean;
  collision: boolean;
  tumor_reached: boolean;
  grasper_force: number;
  saturated: boolean;
  solver_warning: boolean;
}

export interface AppliedCommand {
  insert_velocity: number;
  target_bend: number;
  bend_azimuth: number;
  coils_enabled: boolean;
  grasper_current: number;
}

export interface AckMsg {
  type: "ack";
  seq: number;
  status: "accepted" | "clamped" | "stale" | "rejected";
  clamped_fields?: string[];
  applied?: AppliedCommand;
  reason?: string;
}

export interface EventMsg {
  type: "event";
  tick: number;
  event: string;
  [extra: string]: unknown;
}

export interface ErrorMsg {
  type: "error";
  reason: string;
}

export type ServerMsg = HelloMsg | TelemetryMsg | AckMsg | EventMsg | ErrorMsg;

export interface CmdMsg {
  type: "cmd";
  seq: number;
  insert_velocity: number;
  target_bend: number;
  bend_azimuth: number;
  coils_enabled: boolean;
  grasper_current: number;
}

export class ProtocolError extends Error {}

function need(obj: Record<string, unknown>, field: string, kind: string): unknown {
  const value = obj[field];
  if (value === undefined || value === null) {
    throw new ProtocolError(`missing field ${field}`);
  }
  if (kind === "number" && typeof value !== "number") {
    throw new ProtocolError(`field ${field} must be a number`);
  }
  if (kind === "boolean" && typeof value !== "boolean") {
    throw new ProtocolError(`field ${field} must be a boolean`);
  }
  if (kind === "string" && typeof value !== "string") {
    throw new ProtocolError(`field ${field} must be a string`);
  }
  if (kind === "array" && !Array.isArray(value)) {
    throw new ProtocolError(`field ${field} must be an array`);
  }
  if (kind === "object" && (typeof value !== "object" || Array.isArray(value))) {
    throw new ProtocolError(`field ${field} must be an object`);
  }
  return value;
}

/** Parse and validate one server payload (string or decoded object). */
export function parseServerMessage(raw: string | object): ServerMsg {
  let obj: Record<string, unknown>;
  if (typeof raw === "string") {
    try {
      obj = JSON.parse(raw);
    } catch {
      throw new ProtocolError("invalid JSON payload");
    }
  } else {
    obj = raw as Record<string, unknown>;
  }
  const type = obj["type"];
  if (type === "error") {
    return { type: "error", reason: String(obj["reason"] ?? "unknown") };
  }
  if (obj["schema"] !== PROTOCOL_SCHEMA) {
    throw new ProtocolError(`unsupported schema ${String(obj["schema"])}`);
  }
  switch (type) {
    case "hello": {
      const role = need(obj, "role", "string") as string;
      if (role !== "operator" && role !== "observer") {
        throw new ProtocolError(`unknown role ${role}`);
      }
      need(obj, "power_cap", "number");
      need(obj, "max_bend", "number");
      need(obj, "phantom", "object");
      return obj as unknown as HelloMsg;
    }
    case "telemetry": {
      need(obj, "tick", "number");
      need(obj, "polyline_mm", "array");
      need(obj, "tip_mm", "array");
      need(obj, "total_power", "number");
      need(obj, "imaging_distorted", "boolean");
      need(obj, "tumor_reached", "boolean");
      need(obj, "collision", "boolean");
      return obj as unknown as TelemetryMsg;
    }
    case "ack": {
      need(obj, "seq", "number");
      const status = need(obj, "status", "string") as string;
      if (!["accepted", "clamped", "stale", "rejected"].includes(status)) {
        throw new ProtocolError(`unknown ack status ${status}`);
      }
      return obj as unknown as AckMsg;
    }
    case "event": {
      need(obj, "event", "string");
      return obj as unknown as EventMsg;
    }
    default:
      throw new ProtocolError(`unknown message type ${String(type)}`);
  }
}
