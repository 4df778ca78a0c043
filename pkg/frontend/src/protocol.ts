/** Wire types for the wheelarm WebSocket service.
 *
 * Mirrors the server's JSON schema by hand; this file is the single place
 * that knows message shapes. Everything else works with these types.
 */

export type EeAxis = "x" | "y" | "z" | "roll" | "pitch" | "yaw";

export type TeleopCommand =
  | { kind: "base_velocity"; linear: number; angular: number }
  | { kind: "stop" }
  | { kind: "ee_increment"; axis: EeAxis; direction: 1 | -1 }
  | { kind: "gripper"; action: "open_step" | "close_step" };

export interface AreaSummary {
  name: string;
  x: number;
  y: number;
  heading: number;
}

export interface HelloMessage {
  type: "hello";
  role: "operator" | "observer";
  format_versions: Record<string, string>;
  areas: AreaSummary[];
}

export interface StatePayload {
  time: number;
  tick: number;
  recording: boolean;
  base: { x: number; y: number; yaw: number; linear: number; angular: number };
  ee: { position: number[]; quaternion: number[] };
  gripper: number[];
  attached: string[];
  drawer_displacement: number;
  objects: Record<string, number[]>;
}

export interface StateMessage {
  type: "state";
  payload: StatePayload;
}

export interface FrameMessage {
  type: "frame";
  camera: string;
  width: number;
  height: number;
  tick: number;
  rgb_base64: string;
}

export interface AckMessage {
  type: "ack";
  id: number | string | null;
  ok: boolean;
  error: string | null;
  message: string;
  container_path?: string | null;
  sample_count?: number;
  manifest?: Record<string, unknown>;
  [extra: string]: unknown;
}

export type ServerMessage = HelloMessage | StateMessage | FrameMessage | AckMessage;

export interface SessionManifest {
  session_id: string;
  file_name: string;
  instruction: string;
  task_label: string;
  start_time: number;
  end_time: number;
  seed: number;
}

export class ProtocolError extends Error {}

const EE_AXES: readonly string[] = ["x", "y", "z", "roll", "pitch", "yaw"];
const GRIPPER_ACTIONS: readonly string[] = ["open_step", "close_step"];

/** Validate an untyped value (JSON keymap entries, tests) as a TeleopCommand. */
export function validateCommand(raw: unknown): TeleopCommand {
  if (typeof raw !== "object" || raw === null) {
    throw new ProtocolError("command must be an object");
  }
  const cmd = raw as Record<string, unknown>;
  switch (cmd.kind) {
    case "base_velocity":
      if (typeof cmd.linear !== "number" || typeof cmd.angular !== "number") {
        throw new ProtocolError("base_velocity needs numeric linear and angular");
      }
      return { kind: "base_velocity", linear: cmd.linear, angular: cmd.angular };
    case "stop":
      return { kind: "stop" };
    case "ee_increment":
      if (!EE_AXES.includes(cmd.axis as string)) {
        throw new ProtocolError(`unknown axis ${JSON.stringify(cmd.axis)}`);
      }
      if (cmd.direction !== 1 && cmd.direction !== -1) {
        throw new ProtocolError("direction must be +1 or -1");
      }
      return { kind: "ee_increment", axis: cmd.axis as EeAxis, direction: cmd.direction };
    case "gripper":
      if (!GRIPPER_ACTIONS.includes(cmd.action as string)) {
        throw new ProtocolError(`gripper action must be one of ${GRIPPER_ACTIONS}`);
      }
      return { kind: "gripper", action: cmd.action as "open_step" | "close_step" };
    default:
      throw new ProtocolError(`unknown command kind ${JSON.stringify(cmd.kind)}`);
  }
}

const SERVER_TYPES: readonly string[] = ["hello", "state", "frame", "ack"];

/** Parse one server frame; throws ProtocolError on anything off-schema. */
export function parseServerMessage(text: string): ServerMessage {
  let value: unknown;
  try {
    value = JSON.parse(text);
  } catch {
    throw new ProtocolError("invalid JSON from server");
  }
  if (typeof value !== "object" || value === null || Array.isArray(value)) {
    throw new ProtocolError("server message must be an object");
  }
  const msg = value as Record<string, unknown>;
  if (!SERVER_TYPES.includes(msg.type as string)) {
    throw new ProtocolError(`unknown server message type ${JSON.stringify(msg.type)}`);
  }
  if (msg.type === "state" && (typeof msg.payload !== "object" || msg.payload === null)) {
    throw new ProtocolError("state message missing payload");
  }
  return msg as unknown as ServerMessage;
}

export function commandMessage(command: TeleopCommand, id: number): object {
  return { type: "command", id, command };
}

export function startSessionMessage(manifest: SessionManifest, id: number): object {
  return { type: "start_session", id, manifest };
}

export function endSessionMessage(id: number): object {
  return { type: "end_session", id };
}
