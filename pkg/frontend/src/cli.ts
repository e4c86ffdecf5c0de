#!/usr/bin/env node
/**
 * plots <figure-spec-file>
 *
 * Reads study CSVs named by the figure spec and writes one deterministic SVG.
 * Exit codes: 0 ok, 2 spec/schema error, 1 anything else.
 */

import { mkdirSync, readFileSync, writeFileSync } from "node:fs";
import { dirname } from "node:path";
import { SchemaError, parseCsv } from "./csv.js";
import { SpecError, loadFigureSpec } from "./figspec.js";
import { render } from "./render.js";

export function run(specPath: string): void {
  const spec = loadFigureSpec(specPath);
  const tables = spec.inputs.map((p) => parseCsv(readFileSync(p, "utf-8")));
  const svg = render(spec.kind, tables, {
    title: spec.title,
    xlabel: spec.xlabel,
    ylabel: spec.ylabel,
  });
  mkdirSync(dirname(spec.output), { recursive: true });
  writeFileSync(spec.output, svg, "utf-8");
}

function main(argv: string[]): number {
  if (argv.length !== 1) {
    console.error("usage: plots <figure-spec-file>");
    return 2;
  }
  try {
    run(argv[0]);
    return 0;
  } catch (e) {
    if (e instanceof SpecError || e instanceof SchemaError) {
      console.error(`plots: ${(e as Error).message}`);
      return 2;
    }
    console.error(`plots: ${(e as Error).message}`);
    return 1;
  }
}

if (import.meta.url === `file://${process.argv[1]}`) {
  process.exit(main(process.argv.slice(2)));
}
