/** Session form logic, DOM-free: manifest assembly plus start/end gating. */

import { SessionManifest } from "./protocol.js";
import { UiState, canSendCommands } from "./state.js";

export interface FormInputs {
  fileName: string;
  instruction: string;
  taskLabel: string;
  seed: number;
}

/** Start needs an operator connection, no active session, and an instruction. */
export function canStart(ui: UiState, form: FormInputs): boolean {
  return canSendCommands(ui) && !ui.sessionActive && form.instruction.trim() !== "";
}

export function canEnd(ui: UiState): boolean {
  return canSendCommands(ui) && ui.sessionActive;
}

export function buildManifest(form: FormInputs): SessionManifest {
  const fileName = form.fileName.trim() || "session";
  return {
    session_id: fileName,
    file_name: fileName,
    instruction: form.instruction.trim(),
    task_label: form.taskLabel.trim() || "unlabeled",
    start_time: 0.0,
    end_time: 0.0,
    seed: Math.trunc(form.seed) || 0,
  };
}
