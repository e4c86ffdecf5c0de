/**
 * Figure specification files: which CSVs feed which figure kind, and where
 * the image goes.
 */

import { readFileSync } from "node:fs";
import { FigureKind, isFigureKind } from "./schemas.js";

export interface FigureSpec {
  kind: FigureKind;
  inputs: string[];
  output: string;
  title?: string;
  xlabel?: string;
  ylabel?: string;
}

export class SpecError extends Error {}

export function parseFigureSpec(text: string): FigureSpec {
  let raw: unknown;
  try {
    raw = JSON.parse(text);
  } catch (e) {
    throw new SpecError(`figure spec is not valid JSON: ${(e as Error).message}`);
  }
  if (typeof raw !== "object" || raw === null) {
    throw new SpecError("figure spec must be a JSON object");
  }
  const obj = raw as Record<string, unknown>;
  const allowed = new Set(["kind", "inputs", "output", "title", "xlabel", "ylabel"]);
  for (const key of Object.keys(obj)) {
    if (!allowed.has(key)) throw new SpecError(`unknown figure spec key: ${key}`);
  }
  const kind = obj["kind"];
  if (typeof kind !== "string" || !isFigureKind(kind)) {
    throw new SpecError(
      `figure spec kind must be one of convergence, gronwall_timeseries, variance_scaling, blowup_panel; got ${JSON.stringify(kind)}`
    );
  }
  const inputs = obj["inputs"];
  if (!Array.isArray(inputs) || inputs.length === 0 || !inputs.every((p) => typeof p === "string")) {
    throw new SpecError("figure spec needs a non-empty string array `inputs`");
  }
  const output = obj["output"];
  if (typeof output !== "string" || output.length === 0) {
    throw new SpecError("figure spec needs a string `output` path");
  }
  const spec: FigureSpec = { kind, inputs: inputs as string[], output };
  for (const key of ["title", "xlabel", "ylabel"] as const) {
    const v = obj[key];
    if (v !== undefined) {
      if (typeof v !== "string") throw new SpecError(`${key} must be a string`);
      spec[key] = v;
    }
  }
  return spec;
}

export function loadFigureSpec(path: string): FigureSpec {
  return parseFigureSpec(readFileSync(path, "utf-8"));
}
