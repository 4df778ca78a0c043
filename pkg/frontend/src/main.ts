/** Browser entry point: wires the socket, keyboard, form, and canvases to
 * the pure modules. All session data lives in the UiState fold; this file
 * only renders it and forwards intents through the CommandGate.
 */

import { FrameMessage, parseServerMessage } from "./protocol.js";
import { DEFAULT_KEYMAP, Keymap, keyDescriptor, loadKeymap } from "./keymap.js";
import { UiEvent, UiState, initialUiState, reduce } from "./state.js";
import { DEFAULT_VIEWPORT, renderSceneView, sceneDrawOps } from "./scene-view.js";
import { buildManifest, canEnd, canStart } from "./session-form.js";
import { CommandGate } from "./controller.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) {
    throw new Error(`missing element #${id}`);
  }
  return node as T;
}

let ui: UiState = initialUiState();
let keymap: Keymap = DEFAULT_KEYMAP;
let flashTimer: number | undefined;

const sceneCanvas = el<HTMLCanvasElement>("scene");
const cameraCanvas = el<HTMLCanvasElement>("camera");
const statusLine = el<HTMLSpanElement>("status");
const banner = el<HTMLDivElement>("banner");
const flash = el<HTMLDivElement>("flash");
const ackLog = el<HTMLUListElement>("acks");
const startButton = el<HTMLButtonElement>("start");
const endButton = el<HTMLButtonElement>("end");
const sessionBadge = el<HTMLSpanElement>("badge");
const sessionSummary = el<HTMLDivElement>("summary");

const scheme = location.protocol === "https:" ? "wss" : "ws";
const socket = new WebSocket(`${scheme}://${location.host}/ws`);
const gate = new CommandGate(
  { send: (data) => socket.send(data) },
  () => ui,
  (id, kind) => dispatch({ type: "sent", id, kind }),
);

function dispatch(event: UiEvent): void {
  ui = reduce(ui, event);
  render();
}

function formInputs() {
  return {
    fileName: el<HTMLInputElement>("file-name").value,
    instruction: el<HTMLInputElement>("instruction").value,
    taskLabel: el<HTMLInputElement>("task-label").value,
    seed: Number(el<HTMLInputElement>("seed").value) || 0,
  };
}

function drawFrame(frame: FrameMessage): void {
  const raw = atob(frame.rgb_base64);
  const image = new ImageData(frame.width, frame.height);
  for (let i = 0; i < frame.width * frame.height; i++) {
    image.data[4 * i] = raw.charCodeAt(3 * i);
    image.data[4 * i + 1] = raw.charCodeAt(3 * i + 1);
    image.data[4 * i + 2] = raw.charCodeAt(3 * i + 2);
    image.data[4 * i + 3] = 255;
  }
  const ctx = cameraCanvas.getContext("2d");
  if (!ctx) {
    return;
  }
  createImageBitmap(image).then((bitmap) => {
    ctx.imageSmoothingEnabled = false;
    ctx.drawImage(bitmap, 0, 0, cameraCanvas.width, cameraCanvas.height);
  });
}

function render(): void {
  const role = ui.role ?? "-";
  statusLine.textContent = `${ui.connection} | ${role}`;
  banner.textContent = ui.banner ?? "";
  banner.hidden = ui.banner === null;

  if (ui.flash !== null) {
    flash.textContent = ui.flash;
    flash.hidden = false;
    window.clearTimeout(flashTimer);
    flashTimer = window.setTimeout(() => {
      flash.hidden = true;
      ui = { ...ui, flash: null };
    }, 1500);
  }

  sessionBadge.hidden = !ui.sessionActive;
  startButton.disabled = !canStart(ui, formInputs());
  endButton.disabled = !canEnd(ui);
  if (ui.containerPath !== null) {
    sessionSummary.textContent = `saved ${ui.containerPath} (${ui.sampleCount} samples)`;
  }

  ackLog.replaceChildren(
    ...ui.acks.slice(-8).map((entry) => {
      const li = document.createElement("li");
      li.textContent = entry.ok
        ? `#${entry.id} ok`
        : `#${entry.id} ${entry.error}: ${entry.message}`;
      li.className = entry.ok ? "ok" : "err";
      return li;
    }),
  );

  const ctx = sceneCanvas.getContext("2d");
  if (ctx) {
    renderSceneView(ctx, sceneDrawOps(ui.lastState, ui.areas, DEFAULT_VIEWPORT), DEFAULT_VIEWPORT);
  }
  if (ui.lastFrame !== null) {
    drawFrame(ui.lastFrame);
  }
}

socket.addEventListener("open", () => dispatch({ type: "socket_open" }));
socket.addEventListener("close", () => dispatch({ type: "socket_closed" }));
socket.addEventListener("message", (event) => {
  try {
    dispatch({ type: "server_message", message: parseServerMessage(String(event.data)) });
  } catch (exc) {
    dispatch({ type: "protocol_error", detail: String(exc) });
  }
});

window.addEventListener("keydown", (event) => {
  const target = event.target as HTMLElement | null;
  if (target && (target.tagName === "INPUT" || target.tagName === "TEXTAREA")) {
    return; // typing in the form, not teleoperating
  }
  if (gate.handleKey(keymap, keyDescriptor(event)) !== null) {
    event.preventDefault();
  }
});

startButton.addEventListener("click", () => {
  const form = formInputs();
  if (canStart(ui, form)) {
    gate.startSession(buildManifest(form));
  }
});
endButton.addEventListener("click", () => {
  if (canEnd(ui)) {
    gate.endSession();
  }
});
el<HTMLInputElement>("instruction").addEventListener("input", render);

el<HTMLInputElement>("keymap-file").addEventListener("change", async (event) => {
  const input = event.target as HTMLInputElement;
  const file = input.files?.[0];
  if (!file) {
    return;
  }
  try {
    keymap = loadKeymap(JSON.parse(await file.text()));
  } catch (exc) {
    dispatch({ type: "protocol_error", detail: `keymap rejected: ${exc}` });
  }
});

render();
