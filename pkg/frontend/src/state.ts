/** UI state as a pure fold over the connection's event log.
 *
 * reduce() never mutates its input, so replaying the same log always lands
 * on the same state; the DOM layer is a render of this object and nothing
 * else holds session data.
 */

import {
  AckMessage,
  AreaSummary,
  FrameMessage,
  ServerMessage,
  StatePayload,
} from "./protocol.js";

export type Connection = "connecting" | "open" | "closed";

export type SendKind = "command" | "start_session" | "end_session";

export interface AckEntry {
  id: number | string | null;
  ok: boolean;
  error: string | null;
  message: string;
  kind: SendKind | null;
}

export interface UiState {
  connection: Connection;
  role: "operator" | "observer" | null;
  formatVersions: Record<string, string>;
  areas: AreaSummary[];
  lastState: StatePayload | null;
  lastFrame: FrameMessage | null;
  sessionActive: boolean;
  manifest: Record<string, unknown> | null;
  containerPath: string | null;
  sampleCount: number | null;
  acks: AckEntry[];
  pending: Record<string, SendKind>;
  flash: string | null;
  banner: string | null;
}

export type UiEvent =
  | { type: "socket_open" }
  | { type: "socket_closed" }
  | { type: "sent"; id: number; kind: SendKind }
  | { type: "server_message"; message: ServerMessage }
  | { type: "protocol_error"; detail: string };

const ACK_LOG_LIMIT = 50;

export function initialUiState(): UiState {
  return {
    connection: "connecting",
    role: null,
    formatVersions: {},
    areas: [],
    lastState: null,
    lastFrame: null,
    sessionActive: false,
    manifest: null,
    containerPath: null,
    sampleCount: null,
    acks: [],
    pending: {},
    flash: null,
    banner: null,
  };
}

/** Commands may only leave the client on an open operator connection. */
export function canSendCommands(state: UiState): boolean {
  return state.connection === "open" && state.role === "operator";
}

function reduceAck(state: UiState, ack: AckMessage): UiState {
  const key = ack.id === null || ack.id === undefined ? "" : String(ack.id);
  const kind = state.pending[key] ?? null;
  const pending = { ...state.pending };
  delete pending[key];

  const entry: AckEntry = {
    id: ack.id ?? null,
    ok: ack.ok,
    error: ack.error,
    message: ack.message,
    kind,
  };
  const acks = [...state.acks, entry].slice(-ACK_LOG_LIMIT);

  let next: UiState = { ...state, acks, pending };
  if (!ack.ok && ack.error === "IkRejected") {
    next = { ...next, flash: ack.message || "IK rejected the target" };
  }
  if (ack.ok && kind === "start_session") {
    next = {
      ...next,
      sessionActive: true,
      manifest: ack.manifest ?? null,
      containerPath: null,
      sampleCount: null,
    };
  }
  if (ack.ok && kind === "end_session") {
    next = {
      ...next,
      sessionActive: false,
      manifest: null,
      containerPath: ack.container_path ?? null,
      sampleCount: ack.sample_count ?? null,
    };
  }
  return next;
}

export function reduce(state: UiState, event: UiEvent): UiState {
  switch (event.type) {
    case "socket_open":
      return { ...state, connection: "open", banner: null };
    case "socket_closed":
      return { ...state, connection: "closed", banner: "connection closed" };
    case "sent":
      return { ...state, pending: { ...state.pending, [String(event.id)]: event.kind } };
    case "protocol_error":
      // Bad frame: raise the banner, keep the last good state and frame.
      return { ...state, banner: event.detail };
    case "server_message": {
      const msg = event.message;
      const clean: UiState = { ...state, banner: null };
      switch (msg.type) {
        case "hello":
          return {
            ...clean,
            role: msg.role,
            formatVersions: msg.format_versions,
            areas: msg.areas ?? [],
          };
        case "state":
          // The broadcast recording flag is authoritative for everyone,
          // observers included, who never see start/end acks.
          return { ...clean, lastState: msg.payload, sessionActive: msg.payload.recording };
        case "frame":
          return { ...clean, lastFrame: msg };
        case "ack":
          return reduceAck(clean, msg);
      }
    }
  }
}

export function reduceLog(events: UiEvent[]): UiState {
  return events.reduce(reduce, initialUiState());
}
