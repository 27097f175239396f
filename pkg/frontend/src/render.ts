import type { Timeline, TimelineEntry } from "./timeline.js";

function escapeHtml(text: string): string {
  return text
    .replaceAll("&", "&amp;")
    .replaceAll("<", "&lt;")
    .replaceAll(">", "&gt;")
    .replaceAll('"', "&quot;");
}

function entryHtml(entry: TimelineEntry): string {
  return (
    `<li class="event event-${escapeHtml(entry.kind)}" data-seq="${entry.seq}">` +
    `<span class="agent">${escapeHtml(entry.agentId ?? "system")}</span>` +
    `<span class="label">${escapeHtml(entry.label)}</span></li>`
  );
}

export function renderTimeline(timeline: Timeline): string {
  const items = timeline.list().map(entryHtml).join("");
  return `<ol class="timeline">${items}</ol>`;
}

export function renderSwimlanes(timeline: Timeline): string {
  const lanes: string[] = [];
  for (const [agent, entries] of timeline.swimlanes()) {
    const items = entries.map(entryHtml).join("");
    lanes.push(
      `<section class="lane"><h3>${escapeHtml(agent)}</h3>` +
        `<ol>${items}</ol></section>`,
    );
  }
  return `<div class="swimlanes">${lanes.join("")}</div>`;
}

export function renderEvidencePanel(timeline: Timeline): string {
  const items = timeline
    .evidencePointers()
    .map((p) => `<li class="evidence">${escapeHtml(p)}</li>`)
    .join("");
  return `<ul class="evidence-panel">${items}</ul>`;
}
