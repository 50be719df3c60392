/**
 * Steering console wiring: sliders and toggles build the command draft,
 * acks snap them back to server-applied values, and two canvases render
 * the slice view and the endoscope camera schematic from the latest
 * telemetry snapshot.
 */

import { TeleopClient, SocketLike } from "./client.js";
import { endoscopeViewScene, powerGauge, topViewScene } from "./scene.js";
import { renderScene } from "./render.js";
import { UiSession } from "./state.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function wsUrl(): string {
  const override = new URLSearchParams(location.search).get("ws");
  if (override) return override;
  const proto = location.protocol === "https:" ? "wss:" : "ws:";
  return `${proto}//${location.host}/ws`;
}

function main(): void {
  const session = new UiSession();
  const client = new TeleopClient(session);
  const socket = new WebSocket(wsUrl());
  client.attach(socket as unknown as SocketLike);

  const topCanvas = el<HTMLCanvasElement>("top-view");
  const endoCanvas = el<HTMLCanvasElement>("endo-view");
  const gaugeCanvas = el<HTMLCanvasElement>("power-gauge");
  const bendSlider = el<HTMLInputElement>("bend");
  const bendValue = el<HTMLSpanElement>("bend-value");
  const azimuthSlider = el<HTMLInputElement>("azimuth");
  const speedSlider = el<HTMLInputElement>("speed");
  const speedValue = el<HTMLSpanElement>("speed-value");
  const coilsToggle = el<HTMLInputElement>("coils");
  const grasperSlider = el<HTMLInputElement>("grasper");
  const statusBadge = el<HTMLSpanElement>("status");
  const eventFeed = el<HTMLUListElement>("events");

  const syncControls = () => {
    bendSlider.value = session.draft.targetBendDeg.toFixed(1);
    bendValue.textContent = `${session.draft.targetBendDeg.toFixed(1)} deg`;
    azimuthSlider.value = session.draft.bendAzimuthDeg.toFixed(0);
    speedSlider.value = session.draft.insertVelocity.toFixed(1);
    speedValue.textContent = `${session.draft.insertVelocity.toFixed(1)} mm/s`;
    coilsToggle.checked = session.draft.coilsEnabled;
    grasperSlider.value = session.draft.grasperCurrent.toFixed(2);
  };

  const pushDraft = () => {
    session.draft = {
      insertVelocity: parseFloat(speedSlider.value),
      targetBendDeg: parseFloat(bendSlider.value),
      bendAzimuthDeg: parseFloat(azimuthSlider.value),
      coilsEnabled: coilsToggle.checked,
      grasperCurrent: parseFloat(grasperSlider.value),
    };
    client.sendDraft();
  };
  for (const input of [bendSlider, azimuthSlider, speedSlider, coilsToggle, grasperSlider]) {
    input.addEventListener("change", pushDraft);
  }

  let lastEventCount = 0;
  const frame = () => {
    const observer = session.role === "observer";
    for (const input of [bendSlider, azimuthSlider, speedSlider, coilsToggle, grasperSlider]) {
      input.disabled = observer || session.connection !== "connected";
    }
    statusBadge.textContent =
      `${session.connection} | ${session.role}` +
      (session.latest ? ` | t=${session.latest.sim_time.toFixed(2)}s` +
        ` | ${session.latest.mode}` +
        (session.latest.tumor_reached ? " | TUMOR REACHED" : "") +
        (session.latest.collision ? " | COLLISION" : "")
        : "");
    if (client.takeFrame() || session.latest === null) {
      const phantom = session.hello?.phantom ?? null;
      const top = topViewScene(session.latest, phantom);
      renderScene(topCanvas.getContext("2d")!, topCanvas, top);
      const endo = endoscopeViewScene(session.latest, phantom);
      renderScene(endoCanvas.getContext("2d")!, endoCanvas, endo.scene);
      const gauge = {
        primitives: [powerGauge(session.latest, session.hello?.power_cap ?? 1.2)],
        view: { x: 0, y: 0, w: 1, h: 1 },
        placeholder: false,
      };
      renderScene(gaugeCanvas.getContext("2d")!, gaugeCanvas, gauge);
      syncControls();
    }
    while (lastEventCount < session.events.length) {
      const ev = session.events[lastEventCount]!;
      const li = document.createElement("li");
      li.textContent = `tick ${ev.tick}: ${ev.event}`;
      eventFeed.prepend(li);
      lastEventCount += 1;
    }
    requestAnimationFrame(frame);
  };
  requestAnimationFrame(frame);
}

main();
