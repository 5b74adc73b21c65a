/** Application wiring: one active session per tab, strictly forward flow. */

import { ApiClient, isCompleted, TaskOrDone } from "./api.js";
import { renderApp, RenderHooks } from "./render.js";
import { ViewState } from "./state.js";

export class App {
  readonly state = new ViewState();
  /** Resolves when the in-flight submission (if any) has settled; test hook. */
  pendingSubmit: Promise<void> = Promise.resolve();
  private readonly objectUrls: string[] = [];
  /** One fetch per image id per task, however often the view re-renders. */
  private imageCache = new Map<string, Promise<string>>();

  constructor(
    private readonly root: HTMLElement,
    private readonly api: ApiClient,
  ) {}

  private hooks(): RenderHooks {
    return {
      onToggle: (index) => {
        this.state.toggle(index);
        this.render();
      },
      onSubmit: () => {
        this.pendingSubmit = this.submitSelection();
      },
      onStart: (token) => {
        void this.start(token);
      },
      imageSource: (imageId) => this.imageSource(imageId),
    };
  }

  render(): void {
    renderApp(this.root, this.state, this.hooks());
  }

  async start(token: string): Promise<void> {
    this.state.beginLoading(token);
    this.render();
    try {
      await this.showNext(await this.api.currentTask(token));
    } catch (error) {
      this.state.showError(error instanceof Error ? error.message : String(error));
      this.render();
    }
  }

  private async showNext(task: TaskOrDone): Promise<void> {
    this.releaseObjectUrls();
    if (isCompleted(task)) {
      this.state.showCompleted();
    } else {
      this.state.showTask(task);
    }
    this.render();
  }

  /** Submit the current selection; no-ops unless the state allows it, so a
   * double click cannot produce a second request. */
  async submitSelection(): Promise<void> {
    if (!this.state.canSubmit() || !this.state.task) return;
    const taskId = this.state.task.task_id;
    const answer = this.state.answerPayload();
    this.state.beginSubmit();
    this.render();
    try {
      const result = await this.api.submitResponse(this.state.token, taskId, answer);
      await this.showNext(result.next);
    } catch (error) {
      this.state.submitFailed(
        error instanceof Error ? error.message : String(error),
      );
      this.render();
    }
  }

  private imageSource(imageId: string): Promise<string> {
    const cached = this.imageCache.get(imageId);
    if (cached) return cached;
    const loading = (async () => {
      const blob = await this.api.fetchImage(this.state.token, imageId);
      if (typeof URL.createObjectURL !== "function") {
        throw new Error("object URLs unavailable in this environment");
      }
      const url = URL.createObjectURL(blob);
      this.objectUrls.push(url);
      return url;
    })();
    // a failed load must stay retryable, so do not cache rejections
    loading.catch(() => this.imageCache.delete(imageId));
    this.imageCache.set(imageId, loading);
    return loading;
  }

  private releaseObjectUrls(): void {
    this.imageCache = new Map();
    if (typeof URL.revokeObjectURL !== "function") return;
    for (const url of this.objectUrls.splice(0)) {
      URL.revokeObjectURL(url);
    }
  }
}

/** Boot the client; a token in the URL fragment (#token=...) skips landing. */
export function boot(root: HTMLElement, api: ApiClient, fragment = ""): App {
  const app = new App(root, api);
  const match = /(?:^|[#&])token=([^&]+)/.exec(fragment);
  if (match) {
    void app.start(decodeURIComponent(match[1]));
  } else {
    app.render();
  }
  return app;
}
