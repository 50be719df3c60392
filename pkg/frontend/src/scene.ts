/**
 * Pure scene builders: telemetry in, drawable primitives out.
 *
 * Keeping these free of canvas calls makes every rendered quantity
 * testable: the draw layer just walks the primitive list.
 */

import { PhantomInfo, TelemetryMsg } from "./protocol.js";

export type Primitive =
  | { kind: "polyline"; points: [number, number][]; color: string; width: number; close?: boolean }
  | { kind: "disc"; center: [number, number]; radius: number; color: string; outline?: boolean }
  | { kind: "marker"; at: [number, number]; style: "entry" | "tip" | "distortion"; }
  | { kind: "gauge"; fraction: number; redline: number; label: string }
  | { kind: "text"; at: [number, number]; text: string; color: string };

export interface Scene {
  primitives: Primitive[];
  /** world-coordinate bounding box (slice mm) the renderer should fit */
  view: { x: number; y: number; w: number; h: number };
  placeholder: boolean;
}

const CAMERA_FOV_DEG = 120;

function phantomView(phantom: PhantomInfo | null): Scene["view"] {
  if (!phantom || phantom.wall_polygons.length === 0) {
    return { x: -10, y: -10, w: 60, h: 40 };
  }
  const xs = phantom.wall_polygons.flat().map((p) => p[0]);
  const ys = phantom.wall_polygons.flat().map((p) => p[1]);
  const minX = Math.min(...xs) - 4;
  const minY = Math.min(...ys) - 4;
  return {
    x: minX,
    y: minY,
    w: Math.max(...xs) + 4 - minX,
    h: Math.max(...ys) + 4 - minY,
  };
}

/** Top (imaging slice) view: phantom walls, rod, tumor, distortion cue. */
export function topViewScene(telemetry: TelemetryMsg | null,
                             phantom: PhantomInfo | null): Scene {
  const primitives: Primitive[] = [];
  const view = phantomView(phantom);
  if (phantom) {
    for (const poly of phantom.wall_polygons) {
      primitives.push({ kind: "polyline", points: poly, color: "#888", width: 1.5, close: true });
    }
    primitives.push({
      kind: "disc",
      center: phantom.tumor_center_mm,
      radius: phantom.tumor_radius_mm,
      color: telemetry?.tumor_reached ? "#e6b400" : "#b07a00",
      outline: telemetry?.tumor_reached ?? false,
    });
    primitives.push({ kind: "marker", at: phantom.entry_mm, style: "entry" });
  }
  if (!telemetry || telemetry.polyline_mm.length === 0) {
    return { primitives, view, placeholder: true };
  }
  if (phantom) {
    // insertion shaft from the entry port to the steerable base
    primitives.push({
      kind: "polyline",
      points: [phantom.entry_mm, telemetry.base_mm],
      color: "#4878b0",
      width: 2,
    });
  }
  primitives.push({
    kind: "polyline",
    points: telemetry.polyline_mm,
    color: telemetry.collision ? "#d03030" : "#2060c0",
    width: 2.5,
  });
  primitives.push({ kind: "marker", at: telemetry.tip_mm, style: "tip" });
  if (telemetry.imaging_distorted) {
    // the artifact blob that tracks an energized tip in the scan
    primitives.push({ kind: "marker", at: telemetry.tip_mm, style: "distortion" });
  }
  return { primitives, view, placeholder: false };
}

export interface EndoscopeView {
  /** tumor bearing relative to the camera axis, degrees, +right */
  bearingDeg: number;
  distanceMm: number;
  markerVisible: boolean;
  /** horizontal marker position in [-1, 1] across the FOV when visible */
  markerX: number;
  scene: Scene;
}

/** Forward-bearing schematic of the tip camera (120-degree FOV). */
export function endoscopeViewScene(telemetry: TelemetryMsg | null,
                                   phantom: PhantomInfo | null): EndoscopeView {
  const empty: Scene = {
    primitives: [],
    view: { x: -1.2, y: -1.2, w: 2.4, h: 2.4 },
    placeholder: true,
  };
  if (!telemetry || !phantom) {
    return { bearingDeg: 0, distanceMm: 0, markerVisible: false, markerX: 0, scene: empty };
  }
  const dx = phantom.tumor_center_mm[0] - telemetry.tip_mm[0];
  const dy = phantom.tumor_center_mm[1] - telemetry.tip_mm[1];
  const distance = Math.hypot(dx, dy);
  // tip heading is measured from the field axis (+v); so is atan2(du, dv)
  const bearingToTumor = Math.atan2(dx, dy) * 180 / Math.PI;
  let bearing = bearingToTumor - telemetry.tip_heading_deg;
  bearing = ((bearing + 540) % 360) - 180;
  const visible = Math.abs(bearing) <= CAMERA_FOV_DEG / 2;
  const markerX = visible ? bearing / (CAMERA_FOV_DEG / 2) : 0;

  const primitives: Primitive[] = [
    { kind: "disc", center: [0, 0], radius: 1.0, color: "#101418" },
    { kind: "text", at: [0, -1.1], text: `${distance.toFixed(1)} mm`, color: "#ccc" },
  ];
  if (visible) {
    const size = Math.max(0.08, Math.min(0.5, phantom.tumor_radius_mm / Math.max(distance, 1)));
    primitives.push({
      kind: "disc",
      center: [markerX, 0],
      radius: size,
      color: telemetry.tumor_reached ? "#e6b400" : "#b07a00",
      outline: telemetry.tumor_reached,
    });
  }
  return {
    bearingDeg: bearing,
    distanceMm: distance,
    markerVisible: visible,
    markerX,
    scene: {
      primitives,
      view: { x: -1.2, y: -1.2, w: 2.4, h: 2.4 },
      placeholder: false,
    },
  };
}

/** Power gauge fraction plus the hard-cap redline position. */
export function powerGauge(telemetry: TelemetryMsg | null, powerCap: number): Primitive {
  const power = telemetry?.total_power ?? 0;
  const full = Math.max(powerCap * 1.25, 1e-9);
  return {
    kind: "gauge",
    fraction: Math.min(power / full, 1),
    redline: powerCap / full,
    label: `${power.toFixed(3)} W / cap ${powerCap.toFixed(1)} W`,
  };
}
