/** Client-side validation mirroring the service schema, so bad requests
 * are caught with a named field before any network round trip. */

import type { CreateSessionRequest, SessionFormInput } from "./types.js";

export interface FieldError {
  field: string;
  message: string;
}

export function validateForm(input: SessionFormInput): FieldError[] {
  const errors: FieldError[] = [];
  if (input.parameters.length < 1) {
    errors.push({ field: "parameters", message: "add at least one parameter" });
  }
  input.parameters.forEach((p, i) => {
    if (!p.name.trim()) {
      errors.push({ field: `parameters[${i}].name`, message: "name the parameter" });
    }
    if (!Number.isFinite(p.low) || !Number.isFinite(p.high) || !(p.low < p.high)) {
      errors.push({
        field: `parameters[${i}].bounds`,
        message: "bounds must be finite with min < max",
      });
    }
    if (!Number.isInteger(p.resolution) || p.resolution < 2) {
      errors.push({
        field: `parameters[${i}].resolution`,
        message: "resolution must be an integer of at least 2",
      });
    }
  });
  if (!(input.delta > 0 && input.delta < 1)) {
    errors.push({ field: "delta", message: "delta must lie strictly between 0 and 1" });
  }
  if (input.kernelStrategy !== "plain-se" && !input.auxCsv) {
    errors.push({
      field: "auxCsv",
      message: `the ${input.kernelStrategy} kernel needs an auxiliary dataset`,
    });
  }
  if (input.auxCsv) {
    const csvError = validateAuxCsv(input.auxCsv, input.parameters.length);
    if (csvError) errors.push(csvError);
  }
  return errors;
}

/** Check an auxiliary CSV header/shape; returns the offending column. */
export function validateAuxCsv(text: string, dimension: number): FieldError | null {
  const lines = text.split(/\r?\n/).filter((l) => l.trim().length > 0);
  if (lines.length < 2) {
    return { field: "auxCsv", message: "CSV needs a header and at least one row" };
  }
  const header = lines[0].split(",").map((h) => h.trim());
  const expected = Array.from({ length: dimension }, (_, i) => `x${i + 1}`).concat(["y"]);
  for (let i = 0; i < expected.length; i++) {
    if (header[i] !== expected[i]) {
      return {
        field: "auxCsv",
        message: `column ${i + 1} must be "${expected[i]}", got "${header[i] ?? ""}"`,
      };
    }
  }
  if (header.length !== expected.length) {
    return {
      field: "auxCsv",
      message: `expected ${expected.length} columns, got ${header.length}`,
    };
  }
  for (let r = 1; r < lines.length; r++) {
    const cells = lines[r].split(",");
    if (cells.length !== expected.length) {
      return { field: "auxCsv", message: `row ${r + 1} has ${cells.length} cells` };
    }
    for (const cell of cells) {
      if (!Number.isFinite(Number(cell))) {
        return { field: "auxCsv", message: `row ${r + 1} has a non-numeric cell` };
      }
    }
  }
  return null;
}

/** Build the create-session request body from validated form input. */
export function buildCreateRequest(
  input: SessionFormInput,
  auxUploadId?: string,
): CreateSessionRequest {
  const req: CreateSessionRequest = {
    dimension: input.parameters.length,
    bounds: input.parameters.map((p) => [p.low, p.high] as [number, number]),
    resolution: input.parameters.map((p) => p.resolution),
    goal: input.goal,
    acquisition: { kind: input.acquisition, delta: input.delta },
    kernel: { strategy: input.kernelStrategy },
  };
  if (auxUploadId) req.aux = { upload_id: auxUploadId };
  if (input.seed !== undefined) req.seed = input.seed;
  return req;
}
