/** DOM rendering for each task shape: one image, a labeled pair, or a
 * 10-image grid. Options always render the exact strings the service sent;
 * nothing else about an image is shown, and there is no timer anywhere. */

import { WireTask } from "./api.js";
import { ViewState } from "./state.js";

export interface RenderHooks {
  onToggle(index: number): void;
  onSubmit(): void;
  onStart(token: string): void;
  /** Resolves to a displayable URL for an image id; may reject. */
  imageSource(imageId: string): Promise<string>;
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

/** Mount an image with a retry affordance; failures never skip the task. */
export function mountImage(
  container: HTMLElement,
  imageId: string,
  source: (id: string) => Promise<string>,
): void {
  container.textContent = "";
  const img = el("img", "task-image");
  img.setAttribute("data-image-id", imageId);
  img.alt = "assessment image";
  container.appendChild(img);
  source(imageId)
    .then((url) => {
      img.src = url;
    })
    .catch(() => {
      container.textContent = "";
      const note = el("p", "image-error", "Image failed to load.");
      const retry = el("button", "retry-button", "Retry image");
      retry.setAttribute("data-testid", "retry-image");
      retry.type = "button";
      retry.addEventListener("click", () => mountImage(container, imageId, source));
      container.append(note, retry);
    });
}

function renderPayload(task: WireTask, hooks: RenderHooks): HTMLElement {
  const payload = task.payload;
  const area = el("div", "payload");
  if (payload.type === "single") {
    area.classList.add("payload-single");
    const frame = el("div", "image-frame");
    mountImage(frame, payload.image_id, hooks.imageSource);
    area.appendChild(frame);
  } else if (payload.type === "pair") {
    area.classList.add("payload-pair");
    ([
      ["Image 1", payload.slot1],
      ["Image 2", payload.slot2],
    ] as const).forEach(([label, imageId]) => {
      const figure = el("figure", "pair-slot");
      const caption = el("figcaption", "slot-label", label);
      const frame = el("div", "image-frame");
      mountImage(frame, imageId, hooks.imageSource);
      figure.append(caption, frame);
      area.appendChild(figure);
    });
  } else {
    area.classList.add("payload-group");
    const grid = el("div", "group-grid");
    for (const imageId of payload.image_ids) {
      const cell = el("div", "group-cell image-frame");
      mountImage(cell, imageId, hooks.imageSource);
      grid.appendChild(cell);
    }
    area.appendChild(grid);
  }
  return area;
}

function renderOptions(state: ViewState, task: WireTask, hooks: RenderHooks): HTMLElement {
  const list = el("div", "options");
  list.setAttribute("role", task.multi_select ? "group" : "radiogroup");
  task.options.forEach((label, index) => {
    const id = `option-${index}`;
    const row = el("label", "option-row");
    row.setAttribute("data-testid", `option-${index}`);
    const input = el("input") as HTMLInputElement;
    input.type = task.multi_select ? "checkbox" : "radio";
    input.name = "answer";
    input.id = id;
    input.value = String(index);
    input.checked = state.selection.has(index);
    input.disabled = state.phase !== "task";
    input.addEventListener("change", () => hooks.onToggle(index));
    const text = el("span", "option-label", label);
    row.append(input, text);
    list.appendChild(row);
  });
  return list;
}

function renderTaskView(state: ViewState, hooks: RenderHooks): HTMLElement {
  const task = state.task as WireTask;
  const view = el("section", "task-view");
  view.setAttribute("data-testid", "task-view");
  view.setAttribute("data-task-id", task.task_id);

  const header = el("header", "task-header");
  const badge = el("span", "procedure-badge", `${task.procedure} · ${task.kind}`);
  const progress = el(
    "span",
    "progress",
    `Answered ${task.progress.answered} of ${task.progress.total}`,
  );
  progress.setAttribute("data-testid", "progress");
  header.append(badge, progress);
  view.appendChild(header);

  if (task.procedure_note) {
    view.appendChild(el("p", "procedure-note", task.procedure_note));
  }
  view.appendChild(renderPayload(task, hooks));
  view.appendChild(el("h2", "prompt", task.prompt));
  view.appendChild(renderOptions(state, task, hooks));

  if (state.errorMessage) {
    const alert = el("p", "error-banner", state.errorMessage);
    alert.setAttribute("data-testid", "error-banner");
    view.appendChild(alert);
  }

  const submit = el("button", "submit-button", "Submit") as HTMLButtonElement;
  submit.type = "button";
  submit.setAttribute("data-testid", "submit");
  submit.disabled = !state.canSubmit();
  submit.addEventListener("click", () => hooks.onSubmit());
  view.appendChild(submit);
  return view;
}

function renderLanding(hooks: RenderHooks): HTMLElement {
  const view = el("section", "landing");
  view.setAttribute("data-testid", "landing");
  view.appendChild(el("h1", undefined, "Image assessment"));
  view.appendChild(
    el("p", undefined, "Enter the session token you received to begin."),
  );
  const input = el("input") as HTMLInputElement;
  input.type = "password";
  input.placeholder = "session token";
  input.setAttribute("data-testid", "token-input");
  const start = el("button", undefined, "Start session") as HTMLButtonElement;
  start.type = "button";
  start.setAttribute("data-testid", "start");
  start.addEventListener("click", () => {
    const token = input.value.trim();
    if (token) hooks.onStart(token);
  });
  view.append(input, start);
  return view;
}

export function renderApp(root: HTMLElement, state: ViewState, hooks: RenderHooks): void {
  root.textContent = "";
  switch (state.phase) {
    case "landing":
      root.appendChild(renderLanding(hooks));
      return;
    case "loading":
      root.appendChild(el("p", "loading", "Loading…"));
      return;
    case "completed": {
      const view = el("section", "completed");
      view.setAttribute("data-testid", "completed");
      view.appendChild(el("h1", undefined, "Thank you"));
      view.appendChild(
        el("p", undefined, "All assessments are complete. You may close this window."),
      );
      root.appendChild(view);
      return;
    }
    case "error": {
      const view = el("section", "fatal-error");
      view.setAttribute("data-testid", "fatal-error");
      view.appendChild(el("h1", undefined, "Something went wrong"));
      view.appendChild(el("p", undefined, state.errorMessage));
      root.appendChild(view);
      return;
    }
    case "task":
    case "submitting":
      root.appendChild(renderTaskView(state, hooks));
      return;
  }
}
