/** Outbound side of the console: every message leaves through CommandGate,
 * which enforces the operator-only rule client-side and hands out
 * correlation ids. The socket is a structural type so tests can spy on it.
 */

import {
  SessionManifest,
  TeleopCommand,
  commandMessage,
  endSessionMessage,
  startSessionMessage,
} from "./protocol.js";
import { Keymap, commandForKey } from "./keymap.js";
import { SendKind, UiState, canSendCommands } from "./state.js";

export interface WireSocket {
  send(data: string): void;
}

export class CommandGate {
  private seq = 0;

  constructor(
    private socket: WireSocket,
    private getUi: () => UiState,
    private onSent?: (id: number, kind: SendKind) => void,
  ) {}

  private dispatch(kind: SendKind, build: (id: number) => object): number | null {
    if (!canSendCommands(this.getUi())) {
      return null;
    }
    const id = ++this.seq;
    this.socket.send(JSON.stringify(build(id)));
    this.onSent?.(id, kind);
    return id;
  }

  sendCommand(command: TeleopCommand): number | null {
    return this.dispatch("command", (id) => commandMessage(command, id));
  }

  startSession(manifest: SessionManifest): number | null {
    return this.dispatch("start_session", (id) => startSessionMessage(manifest, id));
  }

  endSession(): number | null {
    return this.dispatch("end_session", (id) => endSessionMessage(id));
  }

  /** Keyboard path: resolve the descriptor and send if mapped and allowed. */
  handleKey(keymap: Keymap, descriptor: string): number | null {
    const command = commandForKey(keymap, descriptor);
    if (command === null) {
      return null;
    }
    return this.sendCommand(command);
  }
}
