import { ApiClient } from "./api.js";
import { boot } from "./app.js";

function apiBase(): string {
  const meta = document.querySelector('meta[name="cemis-api-base"]');
  const content = meta?.getAttribute("content");
  if (content) return content.replace(/\/$/, "");
  return window.location.origin;
}

const root = document.getElementById("app");
if (!root) throw new Error("missing #app mount point");
boot(root, new ApiClient(apiBase()), window.location.hash);
