import { readFileSync } from "node:fs";
import { basename } from "node:path";

/** Raised when a CSV lacks a column a figure needs. */
export class SchemaError extends Error {}

export interface Table {
  file: string;
  columns: string[];
  rows: string[][];
}

/**
 * Parse a trace CSV and check that every required column is present.
 *
 * The trace writer never quotes fields, so a plain split is exact.
 * A header-only file yields an empty row list; a file without the
 * required headers (including a zero-byte file) is a schema error
 * naming each missing column.
 */
export function readCsv(path: string, required: readonly string[]): Table {
  const file = basename(path);
  const text = readFileSync(path, "utf8");
  const lines = text.split("\n").filter((line) => line.length > 0);
  const columns = lines.length > 0 ? lines[0].split(",") : [];
  const missing = required.filter((name) => !columns.includes(name));
  if (missing.length > 0) {
    const quoted = missing.map((name) => `"${name}"`).join(", ");
    throw new SchemaError(`${file} is missing required column ${quoted}`);
  }
  const rows = lines.slice(1).map((line) => line.split(","));
  return { file, columns, rows };
}

export function column(table: Table, name: string): string[] {
  const idx = table.columns.indexOf(name);
  if (idx < 0) {
    throw new SchemaError(`${table.file} is missing required column "${name}"`);
  }
  return table.rows.map((row) => row[idx] ?? "");
}

export function numberColumn(table: Table, name: string): number[] {
  return column(table, name).map((value) => {
    const parsed = Number(value);
    if (!Number.isFinite(parsed)) {
      throw new SchemaError(`${table.file} has a non-numeric value ${JSON.stringify(value)} in column "${name}"`);
    }
    return parsed;
  });
}
