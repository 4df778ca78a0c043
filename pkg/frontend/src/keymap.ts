/** Keyboard bindings.
 *
 * The shipped table below is the documented default; loadKeymap accepts a
 * JSON object of the same shape so users can rebind keys without touching
 * code. Descriptors are KeyboardEvent.key values, with a "Shift+" prefix for
 * shifted non-character keys (shifted characters like "{" already arrive as
 * distinct key values).
 */

import { TeleopCommand, validateCommand } from "./protocol.js";

export type Keymap = Record<string, TeleopCommand>;

// Base presets run at half the configured caps (1.0 m/s, 1.5 rad/s) so a
// single keypress never rides the clamp boundary.
export const DEFAULT_KEYMAP: Keymap = {
  w: { kind: "base_velocity", linear: 0.5, angular: 0.0 },
  s: { kind: "base_velocity", linear: -0.5, angular: 0.0 },
  a: { kind: "base_velocity", linear: 0.0, angular: 0.75 },
  d: { kind: "base_velocity", linear: 0.0, angular: -0.75 },
  " ": { kind: "stop" },
  ArrowUp: { kind: "ee_increment", axis: "x", direction: 1 },
  ArrowDown: { kind: "ee_increment", axis: "x", direction: -1 },
  ArrowLeft: { kind: "ee_increment", axis: "y", direction: 1 },
  ArrowRight: { kind: "ee_increment", axis: "y", direction: -1 },
  PageUp: { kind: "ee_increment", axis: "z", direction: 1 },
  PageDown: { kind: "ee_increment", axis: "z", direction: -1 },
  "Shift+ArrowUp": { kind: "ee_increment", axis: "pitch", direction: 1 },
  "Shift+ArrowDown": { kind: "ee_increment", axis: "pitch", direction: -1 },
  "Shift+ArrowLeft": { kind: "ee_increment", axis: "yaw", direction: 1 },
  "Shift+ArrowRight": { kind: "ee_increment", axis: "yaw", direction: -1 },
  "Shift+PageUp": { kind: "ee_increment", axis: "roll", direction: 1 },
  "Shift+PageDown": { kind: "ee_increment", axis: "roll", direction: -1 },
  "[": { kind: "gripper", action: "open_step" },
  "]": { kind: "gripper", action: "close_step" },
};

/** Canonical descriptor for a key event (KeyboardEvent or a stub). */
export function keyDescriptor(event: { key: string; shiftKey?: boolean }): string {
  const key = event.key.length === 1 ? event.key.toLowerCase() : event.key;
  if (event.shiftKey && key.length > 1) {
    return `Shift+${key}`;
  }
  return key;
}

/** The command bound to a descriptor, or null for unmapped keys. */
export function commandForKey(map: Keymap, descriptor: string): TeleopCommand | null {
  const cmd = map[descriptor];
  return cmd === undefined ? null : cmd;
}

/** Validate a parsed JSON document as a keymap; throws ProtocolError. */
export function loadKeymap(json: unknown): Keymap {
  if (typeof json !== "object" || json === null || Array.isArray(json)) {
    throw new Error("keymap must be a JSON object of key -> command");
  }
  const out: Keymap = {};
  for (const [descriptor, raw] of Object.entries(json)) {
    out[descriptor] = validateCommand(raw);
  }
  return out;
}
