/**
 * Canvas renderer: walks a Scene's primitive list onto a 2D context.
 *
 * The context is typed structurally so tests can pass a recording stub.
 */

import { Primitive, Scene } from "./scene.js";

export interface Context2DLike {
  clearRect(x: number, y: number, w: number, h: number): void;
  beginPath(): void;
  moveTo(x: number, y: number): void;
  lineTo(x: number, y: number): void;
  arc(x: number, y: number, r: number, a0: number, a1: number): void;
  closePath(): void;
  stroke(): void;
  fill(): void;
  fillRect(x: number, y: number, w: number, h: number): void;
  fillText(text: string, x: number, y: number): void;
  strokeStyle: string | unknown;
  fillStyle: string | unknown;
  lineWidth: number;
  font: string;
}

export interface Viewport {
  width: number;
  height: number;
}

function fit(scene: Scene, vp: Viewport) {
  const sx = vp.width / scene.view.w;
  const sy = vp.height / scene.view.h;
  const s = Math.min(sx, sy);
  return {
    s,
    // flip v: slice +v renders upward
    tx: (u: number) => (u - scene.view.x) * s,
    ty: (v: number) => vp.height - (v - scene.view.y) * s,
  };
}

export function renderScene(ctx: Context2DLike, vp: Viewport, scene: Scene): void {
  ctx.clearRect(0, 0, vp.width, vp.height);
  const { s, tx, ty } = fit(scene, vp);
  for (const p of scene.primitives) {
    drawPrimitive(ctx, vp, p, s, tx, ty);
  }
  if (scene.placeholder) {
    ctx.fillStyle = "#777";
    ctx.font = "14px sans-serif";
    ctx.fillText("waiting for telemetry...", vp.width / 2 - 70, vp.height / 2);
  }
}

function drawPrimitive(ctx: Context2DLike, vp: Viewport, p: Primitive,
                       s: number, tx: (u: number) => number, ty: (v: number) => number): void {
  switch (p.kind) {
    case "polyline": {
      if (p.points.length < 2) return;
      ctx.beginPath();
      ctx.moveTo(tx(p.points[0]![0]), ty(p.points[0]![1]));
      for (const pt of p.points.slice(1)) {
        ctx.lineTo(tx(pt[0]), ty(pt[1]));
      }
      if (p.close) ctx.closePath();
      ctx.strokeStyle = p.color;
      ctx.lineWidth = p.width;
      ctx.stroke();
      break;
    }
    case "disc": {
      ctx.beginPath();
      ctx.arc(tx(p.center[0]), ty(p.center[1]), Math.max(p.radius * s, 2), 0, 2 * Math.PI);
      ctx.fillStyle = p.color;
      ctx.fill();
      if (p.outline) {
        ctx.strokeStyle = "#fff";
        ctx.lineWidth = 2;
        ctx.stroke();
      }
      break;
    }
    case "marker": {
      const x = tx(p.at[0]);
      const y = ty(p.at[1]);
      if (p.style === "distortion") {
        // concentric artifact rings around an energized tip
        for (const r of [6, 11, 16]) {
          ctx.beginPath();
          ctx.arc(x, y, r, 0, 2 * Math.PI);
          ctx.strokeStyle = "rgba(230, 80, 80, 0.8)";
          ctx.lineWidth = 2;
          ctx.stroke();
        }
      } else {
        ctx.beginPath();
        ctx.arc(x, y, p.style === "tip" ? 4 : 5, 0, 2 * Math.PI);
        ctx.fillStyle = p.style === "tip" ? "#2060c0" : "#c03030";
        ctx.fill();
      }
      break;
    }
    case "gauge": {
      const w = vp.width - 20;
      ctx.fillStyle = "#223";
      ctx.fillRect(10, vp.height - 24, w, 14);
      ctx.fillStyle = p.fraction >= p.redline ? "#d03030" : "#30a050";
      ctx.fillRect(10, vp.height - 24, w * p.fraction, 14);
      ctx.fillStyle = "#d03030";
      ctx.fillRect(10 + w * p.redline - 1, vp.height - 28, 2, 22);
      ctx.fillStyle = "#eee";
      ctx.font = "12px sans-serif";
      ctx.fillText(p.label, 14, vp.height - 30);
      break;
    }
    case "text": {
      ctx.fillStyle = p.color;
      ctx.font = "12px sans-serif";
      ctx.fillText(p.text, tx(p.at[0]), ty(p.at[1]));
      break;
    }
  }
}
