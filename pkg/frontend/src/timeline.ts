import type { DiagnosticReport, SessionEvent } from "./types.js";

export interface TimelineEntry {
  seq: number;
  kind: string;
  agentId: string | null;
  label: string;
  raw: SessionEvent;
}

/** Human-readable one-liner for an event; unknown kinds fall back to the raw
 * payload so the console stays forward compatible. */
export function labelFor(event: SessionEvent): string {
  const payload = event.payload ?? {};
  switch (event.kind) {
    case "status_changed":
      return `status → ${String(payload["to"] ?? "?")}`;
    case "message_appended":
      return `message ${String(payload["message_kind"] ?? payload["kind"] ?? "")}`.trim();
    case "agent_started":
      return payload["phase"] !== undefined
        ? `phase ${String(payload["phase"])}`
        : `agent started (${String(payload["scope_id"] ?? "?")})`;
    case "handoff":
      return `handoff → ${String(payload["to"] ?? event.agent_id ?? "?")}`;
    case "plan_created":
      return "orchestration plan created";
    case "report_distilled":
      return "distilled report received";
    case "hitl_received":
      return `operator: ${String(payload["kind"] ?? "intervention")}`;
    case "final_report":
      return "final report ready";
    default:
      return `${event.kind}: ${JSON.stringify(payload)}`;
  }
}

/** Ordered, deduplicated view of one session's event stream. */
export class Timeline {
  private entries: TimelineEntry[] = [];
  private seen = new Set<number>();

  /** Highest seq rendered so far — the resume cursor for reconnects. */
  get lastSeq(): number {
    return this.entries.length ? this.entries[this.entries.length - 1].seq : 0;
  }

  /** Add one event; heartbeats and already-seen seqs render nothing. */
  add(event: SessionEvent): TimelineEntry | null {
    if (event.kind === "heartbeat" || typeof event.seq !== "number") {
      return null;
    }
    if (this.seen.has(event.seq)) {
      return null;
    }
    const entry: TimelineEntry = {
      seq: event.seq,
      kind: event.kind,
      agentId: event.agent_id ?? null,
      label: labelFor(event),
      raw: event,
    };
    this.seen.add(event.seq);
    let at = this.entries.length;
    while (at > 0 && this.entries[at - 1].seq > event.seq) {
      at -= 1;
    }
    this.entries.splice(at, 0, entry);
    return entry;
  }

  addAll(events: Iterable<SessionEvent>): void {
    for (const event of events) {
      this.add(event);
    }
  }

  list(): readonly TimelineEntry[] {
    return this.entries;
  }

  seqs(): number[] {
    return this.entries.map((e) => e.seq);
  }

  /** Entries grouped per agent — the swimlane view. */
  swimlanes(): Map<string, TimelineEntry[]> {
    const lanes = new Map<string, TimelineEntry[]>();
    for (const entry of this.entries) {
      const lane = entry.agentId ?? "system";
      const bucket = lanes.get(lane) ?? [];
      bucket.push(entry);
      lanes.set(lane, bucket);
    }
    return lanes;
  }

  /** The final report carried on the stream, if the run has finished. */
  finalReport(): DiagnosticReport | null {
    for (let i = this.entries.length - 1; i >= 0; i -= 1) {
      const entry = this.entries[i];
      if (entry.kind === "final_report") {
        return (entry.raw.payload?.["report"] as DiagnosticReport) ?? null;
      }
    }
    return null;
  }

  /** Evidence pointers from the final report — the evidence panel. */
  evidencePointers(): string[] {
    return this.finalReport()?.evidence_pointers ?? [];
  }
}
