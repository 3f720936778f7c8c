/** Best-so-far convergence chart rendered as an SVG string.
 *
 * Pure string building (no DOM), so the renderer is unit-testable and the
 * page just assigns innerHTML.  Each point carries a tooltip with the
 * iteration's hyperparameters and jitter escalations.
 */

import { formatValue } from "./units.js";
import type { TraceRow } from "./types.js";

const W = 640;
const H = 280;
const PAD = { left: 56, right: 16, top: 16, bottom: 34 };

function esc(s: string): string {
  return s.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

export function renderConvergenceChart(rows: TraceRow[]): string {
  if (rows.length === 0) {
    return `<svg viewBox="0 0 ${W} ${H}" class="chart" role="img">` +
      `<text x="${W / 2}" y="${H / 2}" text-anchor="middle" class="empty">` +
      `no observations yet</text></svg>`;
  }
  const ts = rows.map((r) => r.t);
  const bests = rows.map((r) => r.best);
  const tMin = 1;
  const tMax = Math.max(...ts, 2);
  let yMin = Math.min(...bests);
  let yMax = Math.max(...bests);
  if (yMin === yMax) {
    yMin -= 0.5;
    yMax += 0.5;
  }
  const sx = (t: number) =>
    PAD.left + ((t - tMin) / (tMax - tMin || 1)) * (W - PAD.left - PAD.right);
  const sy = (v: number) =>
    H - PAD.bottom - ((v - yMin) / (yMax - yMin)) * (H - PAD.top - PAD.bottom);

  const parts: string[] = [];
  parts.push(`<svg viewBox="0 0 ${W} ${H}" class="chart" role="img">`);
  // axes
  parts.push(`<line x1="${PAD.left}" y1="${H - PAD.bottom}" x2="${W - PAD.right}" ` +
    `y2="${H - PAD.bottom}" class="axis"/>`);
  parts.push(`<line x1="${PAD.left}" y1="${PAD.top}" x2="${PAD.left}" ` +
    `y2="${H - PAD.bottom}" class="axis"/>`);
  for (const frac of [0, 0.5, 1]) {
    const v = yMin + frac * (yMax - yMin);
    parts.push(`<text x="${PAD.left - 6}" y="${sy(v) + 4}" text-anchor="end" ` +
      `class="tick">${esc(formatValue(v, 4))}</text>`);
  }
  const tickT = Math.max(1, Math.ceil(tMax / 8));
  for (let t = tMin; t <= tMax; t += tickT) {
    parts.push(`<text x="${sx(t)}" y="${H - PAD.bottom + 16}" ` +
      `text-anchor="middle" class="tick">${t}</text>`);
  }
  parts.push(`<text x="${(W + PAD.left) / 2}" y="${H - 6}" text-anchor="middle" ` +
    `class="label">iteration</text>`);
  // best-so-far polyline
  const pts = rows.map((r) => `${sx(r.t)},${sy(r.best)}`).join(" ");
  parts.push(`<polyline points="${pts}" class="series"/>`);
  // per-iteration markers with annotations
  for (const r of rows) {
    const notes = [
      `t=${r.t}`,
      `best=${formatValue(r.best, 6)}`,
      `y=${formatValue(r.y, 6)}`,
      r.nu2 !== null ? `nu2=${formatValue(r.nu2, 3)}` : "nu2=n/a",
      r.sigma !== null ? `sigma=${formatValue(r.sigma, 3)}` : "sigma=fixed",
      `jitter escalations=${r.jitter_escalations}`,
    ];
    if (r.warning) notes.push(`warning: ${r.warning}`);
    parts.push(
      `<circle cx="${sx(r.t)}" cy="${sy(r.best)}" r="3" class="pt` +
      `${r.warning ? " warn" : ""}">` +
      `<title>${esc(notes.join("\n"))}</title></circle>`);
  }
  parts.push("</svg>");
  return parts.join("");
}

/** Count plotted points in a rendered chart (test hook). */
export function countPlottedPoints(svg: string): number {
  return (svg.match(/<circle /g) ?? []).length;
}
