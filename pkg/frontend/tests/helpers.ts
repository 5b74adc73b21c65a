import { WirePayload, WireTask } from "../src/api.js";
import { CatalogCase } from "./catalogs.js";

export function payloadFor(shape: "single" | "pair" | "group"): WirePayload {
  if (shape === "single") return { type: "single", image_id: "img-00001" };
  if (shape === "pair") return { type: "pair", slot1: "img-00001", slot2: "img-00002" };
  return {
    type: "group",
    image_ids: Array.from({ length: 10 }, (_, i) => `img-${String(i + 1).padStart(5, "0")}`),
  };
}

export function taskFor(entry: CatalogCase, taskId = "T-test"): WireTask {
  return {
    task_id: taskId,
    procedure: entry.procedure,
    kind: entry.kind,
    prompt: "Prompt under test:",
    options: [...entry.options],
    multi_select: entry.multi,
    payload: payloadFor(entry.payload),
    progress: { answered: 0, total: 100 },
    ...(entry.procedure === "A4"
      ? { procedure_note: "Each pair consists of one real and one synthetic image." }
      : {}),
  };
}

export function mount(): HTMLElement {
  document.body.innerHTML = '<main id="app"></main>';
  return document.getElementById("app") as HTMLElement;
}

/** An image source that never settles; keeps DOM tests free of async noise. */
export function pendingImageSource(): (id: string) => Promise<string> {
  return () => new Promise<string>(() => undefined);
}
