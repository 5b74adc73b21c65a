/** View state machine: forward-only task flow with a selection buffer.
 *
 * Submission is only possible while a valid selection exists (exactly one
 * option, or at least one for multi-select) and no submission is in flight;
 * once a response is acknowledged the view advances and there is no way back.
 */

import { WireProgress, WireTask } from "./api.js";

export type Phase =
  | "landing"
  | "loading"
  | "task"
  | "submitting"
  | "completed"
  | "error";

export class ViewState {
  phase: Phase = "landing";
  token = "";
  task: WireTask | null = null;
  selection = new Set<number>();
  progress: WireProgress | null = null;
  errorMessage = "";

  beginLoading(token: string): void {
    this.token = token;
    this.phase = "loading";
    this.task = null;
    this.selection.clear();
  }

  showTask(task: WireTask): void {
    this.task = task;
    this.progress = task.progress;
    this.selection.clear();
    this.phase = "task";
    this.errorMessage = "";
  }

  showCompleted(): void {
    this.task = null;
    this.phase = "completed";
  }

  showError(message: string): void {
    this.errorMessage = message;
    this.phase = "error";
  }

  /** Toggle an option: radio semantics for single-select, checkbox for multi. */
  toggle(index: number): void {
    if (this.phase !== "task" || !this.task) return;
    if (index < 0 || index >= this.task.options.length) return;
    if (this.task.multi_select) {
      if (this.selection.has(index)) this.selection.delete(index);
      else this.selection.add(index);
    } else {
      const already = this.selection.has(index);
      this.selection.clear();
      if (!already) this.selection.add(index);
    }
  }

  selectionValid(): boolean {
    if (!this.task) return false;
    if (this.task.multi_select) return this.selection.size >= 1;
    return this.selection.size === 1;
  }

  canSubmit(): boolean {
    return this.phase === "task" && this.selectionValid();
  }

  /** The request body value for the current selection. */
  answerPayload(): number | number[] {
    if (!this.task || !this.selectionValid()) {
      throw new Error("no valid selection to submit");
    }
    const indices = [...this.selection].sort((a, b) => a - b);
    return this.task.multi_select ? indices : indices[0];
  }

  /** Lock the view while the request is in flight (double-click guard). */
  beginSubmit(): void {
    if (!this.canSubmit()) throw new Error("submission not allowed in this state");
    this.phase = "submitting";
  }

  /** A failed submission returns to the task with the selection intact. */
  submitFailed(message: string): void {
    if (this.phase === "submitting") {
      this.phase = "task";
      this.errorMessage = message;
    }
  }
}
