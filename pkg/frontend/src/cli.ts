import { writeFileSync } from "node:fs";
import { pathToFileURL } from "node:url";

import { SchemaError } from "./csv.js";
import { FIGURE_KINDS, renderFigure, type FigureKind } from "./figures.js";

const USAGE = `usage: plot <figure-kind> --trace-dir DIR --out FILE
figure kinds: ${FIGURE_KINDS.join(", ")}`;

export function main(argv: string[]): number {
  let kind: string | undefined;
  let traceDir: string | undefined;
  let out: string | undefined;
  for (let i = 0; i < argv.length; i++) {
    const arg = argv[i];
    if (arg === "--trace-dir") traceDir = argv[++i];
    else if (arg === "--out") out = argv[++i];
    else if (arg === "--help" || arg === "-h") {
      console.log(USAGE);
      return 0;
    } else if (!kind) kind = arg;
    else {
      console.error(`error: unexpected argument ${arg}\n${USAGE}`);
      return 2;
    }
  }
  if (!kind || !traceDir || !out) {
    console.error(`error: figure kind, --trace-dir and --out are required\n${USAGE}`);
    return 2;
  }
  if (!(FIGURE_KINDS as readonly string[]).includes(kind)) {
    console.error(`error: unknown figure kind "${kind}" (expected one of ${FIGURE_KINDS.join(", ")})`);
    return 2;
  }
  try {
    const svg = renderFigure(kind as FigureKind, traceDir);
    writeFileSync(out, svg);
  } catch (err) {
    if (err instanceof SchemaError || (err as NodeJS.ErrnoException).code === "ENOENT") {
      console.error(`error: ${(err as Error).message}`);
      return 2;
    }
    throw err;
  }
  console.log(`figure written to ${out}`);
  return 0;
}

if (process.argv[1] && import.meta.url === pathToFileURL(process.argv[1]).href) {
  process.exit(main(process.argv.slice(2)));
}
