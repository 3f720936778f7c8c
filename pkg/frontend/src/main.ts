/** DOM wiring for the console: a thin layer over SessionController. */

import { ServiceClient } from "./api.js";
import { renderConvergenceChart } from "./chart.js";
import { SessionController } from "./state.js";
import { formatValue, formatVector } from "./units.js";
import type { ParameterSpec, SessionFormInput, TraceRow } from "./types.js";

const $ = <T extends HTMLElement>(sel: string): T => {
  const el = document.querySelector(sel);
  if (!el) throw new Error(`missing element ${sel}`);
  return el as T;
};

const serviceBase = location.pathname.startsWith("/console")
  ? location.origin
  : "http://127.0.0.1:8765";

const client = new ServiceClient(serviceBase);
const controller = new SessionController(client, {
  onChange: render,
  onError: (m) => banner(m, "error"),
  onStaleSuggestion: () =>
    banner("stale suggestion: another tab already recorded this observation", "warn"),
});

let parameters: ParameterSpec[] = [
  { name: "x1", low: -1, high: 1, resolution: 21 },
  { name: "x2", low: -1, high: 1, resolution: 21 },
];
let auxCsv: string | undefined;
let traceRows: TraceRow[] = [];

function banner(message: string, kind: "error" | "warn" | "info"): void {
  const el = $("#banner");
  el.textContent = message;
  el.className = `banner ${kind}`;
  el.hidden = false;
}

function clearBanner(): void {
  $("#banner").hidden = true;
}

function renderParameterRows(): void {
  const tbody = $("#param-rows");
  tbody.innerHTML = "";
  parameters.forEach((p, i) => {
    const tr = document.createElement("tr");
    tr.innerHTML = `
      <td><input data-i="${i}" data-k="name" value="${p.name}"></td>
      <td><input data-i="${i}" data-k="low" type="number" step="any" value="${p.low}"></td>
      <td><input data-i="${i}" data-k="high" type="number" step="any" value="${p.high}"></td>
      <td><input data-i="${i}" data-k="resolution" type="number" min="2" value="${p.resolution}"></td>
      <td><button data-remove="${i}" class="link">remove</button></td>`;
    tbody.appendChild(tr);
  });
  tbody.querySelectorAll("input").forEach((inp) => {
    inp.addEventListener("change", () => {
      const i = Number(inp.dataset.i);
      const k = inp.dataset.k as keyof ParameterSpec;
      const v = k === "name" ? inp.value : Number(inp.value);
      (parameters[i] as unknown as Record<string, unknown>)[k] =
        k === "resolution" ? Math.round(v as number) : v;
    });
  });
  tbody.querySelectorAll("button[data-remove]").forEach((btn) => {
    btn.addEventListener("click", (e) => {
      e.preventDefault();
      parameters.splice(Number((btn as HTMLElement).dataset.remove), 1);
      renderParameterRows();
    });
  });
}

function formInput(): SessionFormInput {
  return {
    parameters,
    goal: ($("#goal") as HTMLSelectElement).value as "minimize" | "maximize",
    acquisition: ($("#acq") as HTMLSelectElement).value as "ucb" | "ei" | "pi",
    delta: Number(($("#delta") as HTMLInputElement).value),
    kernelStrategy: ($("#strategy") as HTMLSelectElement).value as
      SessionFormInput["kernelStrategy"],
    auxCsv,
  };
}

async function refreshTrace(): Promise<void> {
  if (!controller.sessionId) return;
  const text = await controller.exportTrace();
  traceRows = text.split("\n").filter((l) => l.trim())
    .map((l) => JSON.parse(l) as TraceRow);
}

function render(): void {
  $("#setup").hidden = controller.phase !== "setup";
  $("#session").hidden = controller.phase === "setup";
  if (controller.phase === "setup") return;

  const rec = controller.record;
  $("#session-id").textContent = controller.sessionId ?? "";
  $("#session-meta").textContent = rec
    ? `${rec.kernel_strategy} kernel, ${rec.acquisition.kind} acquisition, ` +
      `${rec.goal}, status ${controller.phase}`
    : "";
  const s = controller.suggestion;
  const panel = $("#suggestion");
  if (controller.phase === "closed") {
    panel.innerHTML = "<p>session closed</p>";
  } else if (s) {
    const original = formatVector(
      controller.bounds.length
        ? controller.bounds.map((b, i) => b[0] + s.x[i] * (b[1] - b[0]))
        : s.x);
    panel.innerHTML = `
      <p class="big">iteration ${s.t}: try <strong>${original}</strong></p>
      <p class="dim">normalized: [${formatVector(s.x)}] —
        acquisition ${formatValue(s.acquisition_value, 5)},
        model mu ${formatValue(s.model.mu, 5)},
        sigma ${formatValue(s.model.sigma, 5)}</p>`;
  } else {
    panel.innerHTML = "<p>fetching suggestion…</p>";
  }
  const best = controller.bestSoFar;
  $("#best").textContent = best === null ? "–" : formatValue(best, 8);

  const tbody = $("#history-rows");
  tbody.innerHTML = "";
  for (const h of [...controller.history].reverse()) {
    const tr = document.createElement("tr");
    tr.innerHTML = `<td>${h.t}</td><td>${formatVector(h.xOriginal)}</td>` +
      `<td>${formatValue(h.y, 8)}</td><td>${formatValue(h.bestSoFar, 8)}</td>`;
    tbody.appendChild(tr);
  }
  $("#retry").hidden = controller.queue.length === 0;

  void refreshTrace().then(() => {
    $("#chart-box").innerHTML = renderConvergenceChart(traceRows);
  });
}

async function main(): Promise<void> {
  renderParameterRows();
  $("#add-param").addEventListener("click", (e) => {
    e.preventDefault();
    parameters.push({
      name: `x${parameters.length + 1}`, low: 0, high: 1, resolution: 11,
    });
    renderParameterRows();
  });
  ($("#aux-file") as HTMLInputElement).addEventListener("change", async (e) => {
    const file = (e.target as HTMLInputElement).files?.[0];
    auxCsv = file ? await file.text() : undefined;
  });
  $("#create").addEventListener("click", async (e) => {
    e.preventDefault();
    clearBanner();
    try {
      await controller.createFromForm(formInput());
      location.hash = controller.sessionId ?? "";
    } catch (err) {
      banner((err as Error).message, "error");
    }
  });
  $("#submit-y").addEventListener("click", async (e) => {
    e.preventDefault();
    clearBanner();
    const y = Number(($("#y-entry") as HTMLInputElement).value);
    try {
      await controller.submitObservation(y);
      ($("#y-entry") as HTMLInputElement).value = "";
    } catch (err) {
      banner((err as Error).message, "error");
    }
  });
  $("#retry").addEventListener("click", (e) => {
    e.preventDefault();
    void controller.retryQueued();
  });
  $("#export").addEventListener("click", async (e) => {
    e.preventDefault();
    const text = await controller.exportTrace();
    const blob = new Blob([text], { type: "application/x-ndjson" });
    const a = document.createElement("a");
    a.href = URL.createObjectURL(blob);
    a.download = `${controller.sessionId}.jsonl`;
    a.click();
    URL.revokeObjectURL(a.href);
  });
  $("#close-session").addEventListener("click", async (e) => {
    e.preventDefault();
    await controller.close();
  });

  const hash = location.hash.replace(/^#/, "");
  if (hash) {
    try {
      await controller.attach(hash);
    } catch (err) {
      banner(`could not attach to session ${hash}: ${(err as Error).message}`,
        "error");
    }
  }
  render();
}

void main();
