import { ApiClient } from "./api.js";
import { App } from "./ui.js";
import { EvalReport } from "./roc.js";

const BASE_URL =
  new URLSearchParams(window.location.search).get("service") ?? "";

async function fetchOptional(path: string): Promise<string | null> {
  try {
    const resp = await fetch(path);
    return resp.ok ? await resp.text() : null;
  } catch {
    return null;
  }
}

async function boot(): Promise<void> {
  const root = document.getElementById("app");
  if (!root) throw new Error("missing #app mount point");
  const app = new App(root, new ApiClient(BASE_URL));
  await app.start();

  const reportText = await fetchOptional("report.json");
  const rocText = await fetchOptional("roc.csv");
  app.renderDashboard(
    reportText ? (JSON.parse(reportText) as EvalReport) : null,
    rocText,
  );
}

void boot();
