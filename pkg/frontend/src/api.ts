/** Typed client for the assessment service endpoints. */

export interface WireProgress {
  answered: number;
  total: number;
}

export type WirePayload =
  | { type: "single"; image_id: string }
  | { type: "pair"; slot1: string; slot2: string }
  | { type: "group"; image_ids: string[] };

export interface WireTask {
  task_id: string;
  procedure: string;
  kind: string;
  prompt: string;
  options: string[];
  multi_select: boolean;
  payload: WirePayload;
  progress: WireProgress;
  procedure_note?: string;
}

export type TaskOrDone = WireTask | { completed: true };

export function isCompleted(task: TaskOrDone): task is { completed: true } {
  return (task as { completed?: boolean }).completed === true;
}

export interface SubmitReceipt {
  response_id: string;
  task_id: string;
  seq: number;
  duplicate: boolean;
}

export interface SubmitResult {
  receipt: SubmitReceipt;
  next: TaskOrDone;
}

export interface SessionState {
  study_id: string;
  expert_id: string;
  status: "active" | "completed";
  progress: WireProgress;
  cursor?: { procedure: string; item: number; kind: string };
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly category: string,
    message: string,
  ) {
    super(message);
  }
}

async function parseError(response: Response): Promise<ApiError> {
  let category = "http";
  let message = `request failed with status ${response.status}`;
  try {
    const body = (await response.json()) as { error?: string; message?: string };
    if (body.error) category = body.error;
    if (body.message) message = body.message;
  } catch {
    // non-JSON error body; keep the generic message
  }
  return new ApiError(response.status, category, message);
}

export class ApiClient {
  constructor(private readonly baseUrl: string) {}

  private url(path: string): string {
    return `${this.baseUrl}${path}`;
  }

  private async getJson<T>(path: string): Promise<T> {
    const response = await fetch(this.url(path));
    if (!response.ok) throw await parseError(response);
    return (await response.json()) as T;
  }

  sessionState(token: string): Promise<SessionState> {
    return this.getJson(`/api/sessions/${encodeURIComponent(token)}/state`);
  }

  currentTask(token: string): Promise<TaskOrDone> {
    return this.getJson(`/api/sessions/${encodeURIComponent(token)}/task`);
  }

  async submitResponse(
    token: string,
    taskId: string,
    answer: number | number[],
  ): Promise<SubmitResult> {
    const response = await fetch(
      this.url(`/api/sessions/${encodeURIComponent(token)}/responses`),
      {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify({ task_id: taskId, answer }),
      },
    );
    if (!response.ok) throw await parseError(response);
    return (await response.json()) as SubmitResult;
  }

  /** Image bytes are bearer-gated, so they cannot be plain <img src> URLs. */
  async fetchImage(token: string, imageId: string): Promise<Blob> {
    const response = await fetch(this.url(`/api/images/${encodeURIComponent(imageId)}`), {
      headers: { Authorization: `Bearer ${token}` },
    });
    if (!response.ok) throw await parseError(response);
    return response.blob();
  }
}
