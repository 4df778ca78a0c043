import { describe, expect, it } from "vitest";

import { DEFAULT_KEYMAP, commandForKey, keyDescriptor, loadKeymap } from "../src/keymap.js";
import { TeleopCommand } from "../src/protocol.js";

// The full shipped binding table; the test locks every entry's exact payload.
const EXPECTED: Array<[string, TeleopCommand]> = [
  ["w", { kind: "base_velocity", linear: 0.5, angular: 0.0 }],
  ["s", { kind: "base_velocity", linear: -0.5, angular: 0.0 }],
  ["a", { kind: "base_velocity", linear: 0.0, angular: 0.75 }],
  ["d", { kind: "base_velocity", linear: 0.0, angular: -0.75 }],
  [" ", { kind: "stop" }],
  ["ArrowUp", { kind: "ee_increment", axis: "x", direction: 1 }],
  ["ArrowDown", { kind: "ee_increment", axis: "x", direction: -1 }],
  ["ArrowLeft", { kind: "ee_increment", axis: "y", direction: 1 }],
  ["ArrowRight", { kind: "ee_increment", axis: "y", direction: -1 }],
  ["PageUp", { kind: "ee_increment", axis: "z", direction: 1 }],
  ["PageDown", { kind: "ee_increment", axis: "z", direction: -1 }],
  ["Shift+ArrowUp", { kind: "ee_increment", axis: "pitch", direction: 1 }],
  ["Shift+ArrowDown", { kind: "ee_increment", axis: "pitch", direction: -1 }],
  ["Shift+ArrowLeft", { kind: "ee_increment", axis: "yaw", direction: 1 }],
  ["Shift+ArrowRight", { kind: "ee_increment", axis: "yaw", direction: -1 }],
  ["Shift+PageUp", { kind: "ee_increment", axis: "roll", direction: 1 }],
  ["Shift+PageDown", { kind: "ee_increment", axis: "roll", direction: -1 }],
  ["[", { kind: "gripper", action: "open_step" }],
  ["]", { kind: "gripper", action: "close_step" }],
];

describe("shipped keymap", () => {
  it("emits the exact command for every binding", () => {
    for (const [descriptor, command] of EXPECTED) {
      expect(commandForKey(DEFAULT_KEYMAP, descriptor)).toEqual(command);
    }
  });

  it("contains no bindings beyond the documented table", () => {
    expect(Object.keys(DEFAULT_KEYMAP).sort()).toEqual(
      EXPECTED.map(([descriptor]) => descriptor).sort(),
    );
  });

  it("maps w to the forward preset", () => {
    expect(commandForKey(DEFAULT_KEYMAP, "w")).toEqual({
      kind: "base_velocity",
      linear: 0.5,
      angular: 0.0,
    });
  });

  it("maps ArrowUp to a +x end-effector click", () => {
    expect(commandForKey(DEFAULT_KEYMAP, "ArrowUp")).toEqual({
      kind: "ee_increment",
      axis: "x",
      direction: 1,
    });
  });

  it("ignores unmapped keys", () => {
    expect(commandForKey(DEFAULT_KEYMAP, "q")).toBeNull();
    expect(commandForKey(DEFAULT_KEYMAP, "Escape")).toBeNull();
    expect(commandForKey(DEFAULT_KEYMAP, "F5")).toBeNull();
  });
});

describe("keyDescriptor", () => {
  it("lowercases single characters", () => {
    expect(keyDescriptor({ key: "W", shiftKey: true })).toBe("w");
    expect(keyDescriptor({ key: "w" })).toBe("w");
  });

  it("prefixes shifted named keys", () => {
    expect(keyDescriptor({ key: "ArrowUp", shiftKey: true })).toBe("Shift+ArrowUp");
    expect(keyDescriptor({ key: "ArrowUp", shiftKey: false })).toBe("ArrowUp");
  });

  it("keeps shifted characters as their produced character", () => {
    expect(keyDescriptor({ key: "{", shiftKey: true })).toBe("{");
  });
});

describe("loadKeymap", () => {
  it("round-trips the default table through JSON", () => {
    const loaded = loadKeymap(JSON.parse(JSON.stringify(DEFAULT_KEYMAP)));
    expect(loaded).toEqual(DEFAULT_KEYMAP);
  });

  it("accepts a remap", () => {
    const loaded = loadKeymap({ k: { kind: "ee_increment", axis: "z", direction: 1 } });
    expect(commandForKey(loaded, "k")).toEqual({
      kind: "ee_increment",
      axis: "z",
      direction: 1,
    });
    expect(commandForKey(loaded, "w")).toBeNull();
  });

  it("rejects malformed entries", () => {
    expect(() => loadKeymap({ w: { kind: "warp" } })).toThrow();
    expect(() => loadKeymap({ w: { kind: "ee_increment", axis: "x", direction: 2 } })).toThrow();
    expect(() => loadKeymap({ w: { kind: "base_velocity", linear: "fast" } })).toThrow();
    expect(() => loadKeymap([1, 2, 3])).toThrow();
    expect(() => loadKeymap(null)).toThrow();
  });
});
