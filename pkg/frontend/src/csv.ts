/**
 * Strict reader for the primary component's CSV outputs.
 *
 * Layout: optional `# key=value` comment lines, then the header row, then
 * numeric rows.  Schema violations fail fast and name the offending column.
 */

export interface Table {
  columns: string[];
  rows: number[][];
  comments: Record<string, string>;
}

export class SchemaError extends Error {}

export function parseCsv(text: string): Table {
  const lines = text.split(/\r?\n/).filter((l) => l.length > 0);
  const comments: Record<string, string> = {};
  let i = 0;
  while (i < lines.length && lines[i].startsWith("#")) {
    const m = lines[i].slice(1).trim().match(/^([\w.-]+)=(.*)$/);
    if (m) comments[m[1]] = m[2];
    i += 1;
  }
  if (i >= lines.length) {
    throw new SchemaError("CSV has no header row");
  }
  const columns = lines[i].split(",").map((c) => c.trim());
  const rows: number[][] = [];
  for (let j = i + 1; j < lines.length; j++) {
    const parts = lines[j].split(",");
    if (parts.length !== columns.length) {
      throw new SchemaError(
        `row ${j + 1} has ${parts.length} fields, expected ${columns.length}`
      );
    }
    rows.push(parts.map((p) => Number(p)));
  }
  if (rows.length === 0) {
    throw new SchemaError("CSV has no data rows");
  }
  return { columns, rows, comments };
}

export function requireColumns(table: Table, required: string[]): void {
  const missing = required.filter((c) => !table.columns.includes(c));
  if (missing.length > 0) {
    throw new SchemaError(
      `input CSV is missing required column(s): ${missing.join(", ")}`
    );
  }
}

export function column(table: Table, name: string): number[] {
  const idx = table.columns.indexOf(name);
  if (idx < 0) {
    throw new SchemaError(`input CSV is missing required column(s): ${name}`);
  }
  return table.rows.map((r) => r[idx]);
}
