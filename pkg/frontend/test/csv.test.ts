import { mkdtempSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { describe, expect, it } from "vitest";

import { column, numberColumn, readCsv, SchemaError } from "../src/csv.js";

function tempCsv(name: string, text: string): string {
  const dir = mkdtempSync(join(tmpdir(), "plots-csv-"));
  const path = join(dir, name);
  writeFileSync(path, text);
  return path;
}

describe("readCsv", () => {
  it("parses rows under the required header", () => {
    const path = tempCsv("aex.csv", "t_ref_ns,node,cum_aex\n0,1,0\n100,2,3\n");
    const table = readCsv(path, ["t_ref_ns", "node", "cum_aex"]);
    expect(table.rows).toHaveLength(2);
    expect(column(table, "node")).toEqual(["1", "2"]);
    expect(numberColumn(table, "cum_aex")).toEqual([0, 3]);
  });

  it("accepts a header-only file as empty data", () => {
    const path = tempCsv("drift.csv", "t_ref_ns,node,node_time_ns,drift_ns\n");
    const table = readCsv(path, ["t_ref_ns", "drift_ns"]);
    expect(table.rows).toEqual([]);
    expect(numberColumn(table, "drift_ns")).toEqual([]);
  });

  it("names the missing column", () => {
    const path = tempCsv("drift.csv", "t_ref_ns,node,node_time_ns,oops\n1,2,3,4\n");
    expect(() => readCsv(path, ["t_ref_ns", "node", "drift_ns"]))
      .toThrowError(/drift\.csv is missing required column "drift_ns"/);
  });

  it("names every missing column of a zero-byte file", () => {
    const path = tempCsv("ta.csv", "");
    expect(() => readCsv(path, ["t_ref_ns", "cum_ta_ref"]))
      .toThrowError(/"t_ref_ns", "cum_ta_ref"/);
  });

  it("rejects non-numeric cells when numbers are requested", () => {
    const path = tempCsv("aex.csv", "t_ref_ns,node,cum_aex\n0,1,wat\n");
    const table = readCsv(path, ["cum_aex"]);
    expect(() => numberColumn(table, "cum_aex")).toThrowError(SchemaError);
    expect(() => numberColumn(table, "cum_aex")).toThrowError(/cum_aex/);
  });
});
