/**
 * Render-rate check: a 60-second recorded replay (600 frames at the 10 Hz
 * publish rate) must render at 10 Hz or better, i.e. the full pipeline
 * (parse, scene build, canvas walk) finishes well inside the 60 s budget.
 */

import { readFileSync } from "node:fs";
import { describe, expect, it } from "vitest";
import { HelloMsg, parseServerMessage, TelemetryMsg } from "../src/protocol.js";
import { endoscopeViewScene, powerGauge, topViewScene } from "../src/scene.js";
import { Context2DLike, renderScene } from "../src/render.js";
import { TeleopClient } from "../src/client.js";
import { UiSession } from "../src/state.js";

class RecordingContext implements Context2DLike {
  ops = 0;
  strokeStyle: unknown = "";
  fillStyle: unknown = "";
  lineWidth = 1;
  font = "";
  clearRect() { this.ops += 1; }
  beginPath() { this.ops += 1; }
  moveTo() { this.ops += 1; }
  lineTo() { this.ops += 1; }
  arc() { this.ops += 1; }
  closePath() { this.ops += 1; }
  stroke() { this.ops += 1; }
  fill() { this.ops += 1; }
  fillRect() { this.ops += 1; }
  fillText() { this.ops += 1; }
}

function loadReplay(): string[] {
  return readFileSync(new URL("./fixtures/replay_60s.ndjson", import.meta.url), "utf-8")
    .trim().split("\n");
}

function loadHello(): HelloMsg {
  const transcript = readFileSync(
    new URL("./fixtures/recorded_session.ndjson", import.meta.url), "utf-8")
    .trim().split("\n").map((l) => JSON.parse(l));
  return parseServerMessage(
    transcript.find((e: { dir: string; msg: { type: string } }) =>
      e.dir === "recv" && e.msg.type === "hello").msg) as HelloMsg;
}

describe("60-second replay", () => {
  const lines = loadReplay();
  const hello = loadHello();

  it("holds 10 Hz over the full replay", () => {
    expect(lines.length).toBe(600);
    const session = new UiSession();
    const client = new TeleopClient(session);
    session.applyHello(hello);
    const ctx = new RecordingContext();
    const vp = { width: 560, height: 420 };
    const start = performance.now();
    let frames = 0;
    for (const line of lines) {
      client.handleMessage(line);
      if (client.takeFrame()) {
        const t = session.latest!;
        renderScene(ctx, vp, topViewScene(t, hello.phantom));
        renderScene(ctx, vp, endoscopeViewScene(t, hello.phantom).scene);
        renderScene(ctx, vp, {
          primitives: [powerGauge(t, hello.power_cap)],
          view: { x: 0, y: 0, w: 1, h: 1 }, placeholder: false,
        });
        frames += 1;
      }
    }
    const elapsedMs = performance.now() - start;
    expect(frames).toBe(600);
    expect(client.parseErrors).toBe(0);
    // 600 frames in 60 s of replay time: the pipeline must keep up
    const hz = frames / (elapsedMs / 1000);
    expect(hz).toBeGreaterThanOrEqual(10);
    expect(ctx.ops).toBeGreaterThan(600 * 10);
  });

  it("replay telemetry stays inside the safety envelope", () => {
    for (const line of lines) {
      const msg = parseServerMessage(line) as TelemetryMsg;
      expect(msg.total_power).toBeLessThanOrEqual(hello.power_cap + 1e-12);
    }
  });

  it("distortion flag matches steering current activity frame by frame", () => {
    for (const line of lines) {
      const msg = parseServerMessage(line) as TelemetryMsg;
      const steeringOn = Object.entries(msg.currents)
        .some(([name, amps]) => name !== "grasper" && amps !== 0);
      expect(msg.imaging_distorted).toBe(steeringOn);
    }
  });
});
