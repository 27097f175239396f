import type {
  DiagnosticReport,
  InterventionKind,
  ScenarioSummary,
  SessionEvent,
  SessionStatus,
} from "./types.js";
import type { Timeline } from "./timeline.js";

export class GatewayError extends Error {
  constructor(
    readonly status: number,
    readonly detail: unknown,
  ) {
    super(`gateway responded ${status}: ${JSON.stringify(detail)}`);
  }
}

/** Split a byte stream into parsed NDJSON objects. */
export async function* ndjson(
  body: ReadableStream<Uint8Array>,
): AsyncGenerator<SessionEvent> {
  const reader = body.getReader();
  const decoder = new TextDecoder();
  let buffered = "";
  try {
    for (;;) {
      const { value, done } = await reader.read();
      if (done) {
        break;
      }
      buffered += decoder.decode(value, { stream: true });
      let cut = buffered.indexOf("\n");
      while (cut >= 0) {
        const line = buffered.slice(0, cut).trim();
        buffered = buffered.slice(cut + 1);
        if (line) {
          yield JSON.parse(line) as SessionEvent;
        }
        cut = buffered.indexOf("\n");
      }
    }
    const tail = buffered.trim();
    if (tail) {
      yield JSON.parse(tail) as SessionEvent;
    }
  } finally {
    reader.releaseLock();
  }
}

/** Thin typed client over the documented gateway endpoints — the console
 * never mutates session state except through `intervene`. */
export class GatewayClient {
  constructor(
    readonly baseUrl: string,
    private readonly fetchImpl: typeof fetch = fetch,
  ) {}

  private async request(path: string, init?: RequestInit): Promise<unknown> {
    const response = await this.fetchImpl(`${this.baseUrl}${path}`, init);
    const body = await response.json().catch(() => null);
    if (!response.ok) {
      throw new GatewayError(response.status, body);
    }
    return body;
  }

  listScenarios(): Promise<ScenarioSummary[]> {
    return this.request("/scenarios") as Promise<ScenarioSummary[]>;
  }

  createSession(
    scenario: string,
    preset: string,
    sessionId?: string,
  ): Promise<SessionStatus> {
    return this.request("/sessions", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ scenario, preset, session_id: sessionId }),
    }) as Promise<SessionStatus>;
  }

  getSession(sessionId: string): Promise<SessionStatus> {
    return this.request(`/sessions/${sessionId}`) as Promise<SessionStatus>;
  }

  getReport(sessionId: string): Promise<DiagnosticReport> {
    return this.request(
      `/sessions/${sessionId}/report`,
    ) as Promise<DiagnosticReport>;
  }

  intervene(
    sessionId: string,
    kind: InterventionKind,
    text?: string,
  ): Promise<unknown> {
    return this.request(`/sessions/${sessionId}/intervene`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(text === undefined ? { kind } : { kind, text }),
    });
  }

  /** One streaming pass over `/events?after=N`. */
  async *streamEvents(
    sessionId: string,
    after = 0,
    signal?: AbortSignal,
  ): AsyncGenerator<SessionEvent> {
    const response = await this.fetchImpl(
      `${this.baseUrl}/sessions/${sessionId}/events?after=${after}`,
      { signal },
    );
    if (!response.ok || response.body === null) {
      throw new GatewayError(response.status, await response.text());
    }
    yield* ndjson(response.body);
  }
}

/** Consume one streaming pass into a timeline, resuming after whatever the
 * timeline already holds. Safe to call repeatedly after disconnects: seq
 * dedup in the timeline makes the operation idempotent. */
export async function followInto(
  client: GatewayClient,
  sessionId: string,
  timeline: Timeline,
  signal?: AbortSignal,
): Promise<void> {
  for await (const event of client.streamEvents(
    sessionId,
    timeline.lastSeq,
    signal,
  )) {
    timeline.add(event);
  }
}
