/** Shared types mirroring the session service's JSON bodies. */

export interface ParameterSpec {
  name: string;
  low: number;
  high: number;
  resolution: number;
}

export interface SessionFormInput {
  parameters: ParameterSpec[];
  goal: "minimize" | "maximize";
  acquisition: "ucb" | "ei" | "pi";
  delta: number;
  kernelStrategy: "plain-se" | "mixture" | "reweighted" | "reweighted-composite";
  auxCsv?: string; // raw CSV text, uploaded before session creation
  seed?: number;
}

export interface CreateSessionRequest {
  dimension: number;
  bounds: [number, number][];
  resolution: number[];
  goal: "minimize" | "maximize";
  acquisition: { kind: string; delta: number };
  kernel: { strategy: string };
  aux?: { upload_id: string } | null;
  seed?: number;
}

export interface Suggestion {
  t: number;
  x: number[];
  acquisition_value: number;
  model: { mu: number; sigma: number };
}

export interface ObservationResponse {
  t: number;
  best_so_far: number;
}

export interface TraceRow {
  t: number;
  x: number[];
  y: number;
  best: number;
  nu2: number | null;
  sigma: number | null;
  acq: number | null;
  jitter_escalations: number;
  warning?: string;
}

export interface SessionRecord {
  id: string;
  status: "ready-to-suggest" | "awaiting-observation" | "closed";
  dimension: number;
  bounds: [number, number][];
  resolution: number[];
  goal: "minimize" | "maximize";
  acquisition: { kind: string; delta: number };
  iterations: number;
  best_y: number | null;
  kernel_strategy: string;
  provenance: Record<string, number | null> | null;
}

export interface HistoryEntry {
  t: number;
  xNormalized: number[];
  xOriginal: number[];
  y: number;
  bestSoFar: number;
}

export interface ApiErrorBody {
  error: { code: string; message: string; field?: string };
}
