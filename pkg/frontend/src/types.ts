/** Wire shapes served by the gateway. */

export interface SessionEvent {
  seq?: number;
  kind: string;
  session_id?: string;
  agent_id?: string | null;
  payload?: Record<string, unknown>;
  ts?: string;
}

export interface ScenarioSummary {
  scenario_id: string;
  presets: string[];
  [key: string]: unknown;
}

export interface SessionStatus {
  session_id: string;
  status: string;
  [key: string]: unknown;
}

export interface DiagnosticReport {
  session_id: string;
  root_cause: string;
  evidence_pointers: string[];
  verdict?: string;
  score?: number;
  [key: string]: unknown;
}

export type InterventionKind = "pause" | "resume" | "inject_guidance" | "abort";
