import { describe, expect, it } from "vitest";

import { Timeline, labelFor } from "../src/timeline.js";
import {
  renderEvidencePanel,
  renderSwimlanes,
  renderTimeline,
} from "../src/render.js";
import type { SessionEvent } from "../src/types.js";

/** A recorded 50-event stream shaped like a real session log. */
function recordedStream(): SessionEvent[] {
  const events: SessionEvent[] = [];
  const agents = ["sre-agent", "data-agent", "code-agent"];
  for (let seq = 1; seq <= 50; seq += 1) {
    const kind =
      seq === 1
        ? "status_changed"
        : seq === 50
          ? "final_report"
          : ["message_appended", "agent_started", "handoff", "mystery_kind"][
              seq % 4
            ];
    events.push({
      seq,
      kind,
      session_id: "rec-1",
      agent_id: agents[seq % agents.length],
      payload:
        kind === "final_report"
          ? {
              report: {
                session_id: "rec-1",
                root_cause: "pool exhaustion",
                evidence_pointers: ["rec-1-m3", "rec-1-m7"],
              },
            }
          : { to: "running", note: `n${seq}` },
      ts: "2025-08-19T15:21:00Z",
    });
  }
  return events;
}

describe("timeline rendering", () => {
  it("renders a recorded 50-event stream as 50 ordered entries", () => {
    const timeline = new Timeline();
    timeline.addAll(recordedStream());
    expect(timeline.list()).toHaveLength(50);
    expect(timeline.seqs()).toEqual(
      Array.from({ length: 50 }, (_v, i) => i + 1),
    );
    expect(timeline.lastSeq).toBe(50);
  });

  it("drops duplicates and heartbeats, keeps order on shuffled arrival", () => {
    const events = recordedStream();
    const shuffled = [...events].reverse();
    const timeline = new Timeline();
    timeline.addAll(shuffled);
    timeline.addAll(events); // replayed duplicates
    timeline.add({ kind: "heartbeat" });
    expect(timeline.list()).toHaveLength(50);
    expect(timeline.seqs()).toEqual(events.map((e) => e.seq));
  });

  it("renders unknown event kinds as raw payload", () => {
    const label = labelFor({
      seq: 9,
      kind: "mystery_kind",
      payload: { anything: 42 },
    });
    expect(label).toContain("mystery_kind");
    expect(label).toContain('"anything":42');
  });

  it("groups entries into per-agent swimlanes", () => {
    const timeline = new Timeline();
    timeline.addAll(recordedStream());
    const lanes = timeline.swimlanes();
    expect([...lanes.keys()].sort()).toEqual([
      "code-agent",
      "data-agent",
      "sre-agent",
    ]);
    const total = [...lanes.values()].reduce((n, l) => n + l.length, 0);
    expect(total).toBe(50);
  });

  it("exposes the evidence panel from the final report", () => {
    const timeline = new Timeline();
    timeline.addAll(recordedStream());
    expect(timeline.evidencePointers()).toEqual(["rec-1-m3", "rec-1-m7"]);
    expect(renderEvidencePanel(timeline)).toContain("rec-1-m7");
  });

  it("produces escaped html for timeline and swimlanes", () => {
    const timeline = new Timeline();
    timeline.add({
      seq: 1,
      kind: "mystery_kind",
      agent_id: "a<b>",
      payload: { html: "<script>" },
    });
    const html = renderTimeline(timeline);
    expect(html).toContain('data-seq="1"');
    expect(html).not.toContain("<script>");
    expect(renderSwimlanes(timeline)).toContain("a&lt;b&gt;");
  });
});
