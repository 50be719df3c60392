import { readFileSync } from "node:fs";
import { describe, expect, it } from "vitest";
import { HelloMsg, parseServerMessage, TelemetryMsg } from "../src/protocol.js";
import { endoscopeViewScene, powerGauge, topViewScene } from "../src/scene.js";

function fixtures() {
  const transcript = readFileSync(
    new URL("./fixtures/recorded_session.ndjson", import.meta.url), "utf-8")
    .trim().split("\n").map((l) => JSON.parse(l));
  const hello = parseServerMessage(
    transcript.find((e) => e.dir === "recv" && e.msg.type === "hello").msg) as HelloMsg;
  const telemetry = transcript
    .filter((e) => e.dir === "recv" && e.msg.type === "telemetry")
    .map((e) => parseServerMessage(e.msg) as TelemetryMsg);
  return { hello, telemetry };
}

const { hello, telemetry } = fixtures();
const phantom = hello.phantom;

function makeTelemetry(overrides: Partial<TelemetryMsg>): TelemetryMsg {
  return { ...telemetry[0]!, ...overrides };
}

describe("top view", () => {
  it("renders phantom walls, rod, and tumor from telemetry only", () => {
    const scene = topViewScene(telemetry[0]!, phantom);
    const polylines = scene.primitives.filter((p) => p.kind === "polyline");
    // two wall polygons + shaft + rod
    expect(polylines.length).toBe(4);
    expect(scene.placeholder).toBe(false);
  });

  it("shows the distortion overlay iff imaging is distorted", () => {
    const noisy = topViewScene(makeTelemetry({ imaging_distorted: true }), phantom);
    const clean = topViewScene(makeTelemetry({ imaging_distorted: false }), phantom);
    const marker = (s: ReturnType<typeof topViewScene>) =>
      s.primitives.filter((p) => p.kind === "marker" && p.style === "distortion");
    expect(marker(noisy).length).toBe(1);
    expect(marker(clean).length).toBe(0);
  });

  it("highlights the tumor once reached", () => {
    const hit = topViewScene(makeTelemetry({ tumor_reached: true }), phantom);
    const disc = hit.primitives.find((p) => p.kind === "disc");
    expect(disc && disc.kind === "disc" && disc.outline).toBe(true);
  });

  it("shows a placeholder for an empty polyline without crashing", () => {
    const scene = topViewScene(makeTelemetry({ polyline_mm: [] }), phantom);
    expect(scene.placeholder).toBe(true);
    expect(topViewScene(null, phantom).placeholder).toBe(true);
    expect(topViewScene(null, null).placeholder).toBe(true);
  });
});

describe("endoscope view", () => {
  it("centers the tumor marker when the tip points at it", () => {
    // place the tip 10 mm short of the tumor along +u, heading +u (90 deg)
    const t = makeTelemetry({
      tip_mm: [phantom.tumor_center_mm[0] - 10, phantom.tumor_center_mm[1]],
      tip_heading_deg: 90,
    });
    const view = endoscopeViewScene(t, phantom);
    expect(view.markerVisible).toBe(true);
    expect(Math.abs(view.bearingDeg)).toBeLessThan(1e-9);
    expect(Math.abs(view.markerX)).toBeLessThan(1e-9);
    expect(view.distanceMm).toBeCloseTo(10, 9);
  });

  it("hides the tumor outside the 120-degree field of view", () => {
    // tumor along +u from the tip, but the camera looks along -u
    const t = makeTelemetry({
      tip_mm: [phantom.tumor_center_mm[0] - 10, phantom.tumor_center_mm[1]],
      tip_heading_deg: -90,
    });
    const view = endoscopeViewScene(t, phantom);
    expect(Math.abs(view.bearingDeg)).toBeGreaterThan(60);
    expect(view.markerVisible).toBe(false);
    const discs = view.scene.primitives.filter((p) => p.kind === "disc");
    expect(discs.length).toBe(1); // only the camera background disc
  });

  it("keeps the marker just inside the FOV edge", () => {
    const t = makeTelemetry({
      tip_mm: [phantom.tumor_center_mm[0] - 10, phantom.tumor_center_mm[1]],
      tip_heading_deg: 90 - 59.9,  // bearing +59.9 deg
    });
    const view = endoscopeViewScene(t, phantom);
    expect(view.markerVisible).toBe(true);
    expect(view.markerX).toBeGreaterThan(0.99);
    expect(view.markerX).toBeLessThanOrEqual(1.0);
  });

  it("reports the distance readout from telemetry exactly", () => {
    const t = makeTelemetry({ tip_mm: [phantom.tumor_center_mm[0] - 3,
                                       phantom.tumor_center_mm[1] - 4],
                              tip_heading_deg: 45 });
    const view = endoscopeViewScene(t, phantom);
    expect(view.distanceMm).toBeCloseTo(5, 12);
    const label = view.scene.primitives.find((p) => p.kind === "text");
    expect(label && label.kind === "text" && label.text).toBe("5.0 mm");
  });
});

describe("power gauge", () => {
  it("places the redline at the cap and tracks telemetry power", () => {
    const gauge = powerGauge(makeTelemetry({ total_power: 0.6 }), hello.power_cap);
    expect(gauge.kind).toBe("gauge");
    if (gauge.kind === "gauge") {
      expect(gauge.redline).toBeCloseTo(1.2 / 1.5, 12);
      expect(gauge.fraction).toBeCloseTo(0.6 / 1.5, 12);
      expect(gauge.label).toContain("0.600 W");
    }
  });
});
