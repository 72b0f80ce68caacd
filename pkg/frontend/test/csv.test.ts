import { readFileSync } from "node:fs";
import { join } from "node:path";
import { fileURLToPath } from "node:url";
import { describe, expect, it } from "vitest";
import { aggregate, CsvFormatError, parseRecords } from "../src/csv.js";

const here = fileURLToPath(new URL(".", import.meta.url));
const fixture = (name: string) =>
  readFileSync(join(here, "fixtures", name), "utf-8");

describe("parseRecords", () => {
  it("parses a real harness output", () => {
    const records = parseRecords(fixture("change_m.csv"));
    expect(records).toHaveLength(12);
    expect(records[0].sweep).toBe(2);
    expect(records[0].meanErr).toBeGreaterThanOrEqual(0);
  });

  it("rejects a wrong header with row 1", () => {
    expect(() => parseRecords("a,b,c\n1,2,3")).toThrowError(/row 1/);
  });

  it("rejects a short row with its row number", () => {
    const text = "sweep,seed,mean_err,var_err,runtime_s\n2,0,0.1,0.2,0.001\n5,1,0.3\n";
    expect(() => parseRecords(text)).toThrowError(CsvFormatError);
    expect(() => parseRecords(text)).toThrowError(/row 3/);
  });

  it("rejects non-numeric fields with the field name", () => {
    const text = "sweep,seed,mean_err,var_err,runtime_s\n2,0,oops,0.2,0.001\n";
    expect(() => parseRecords(text)).toThrowError(/mean_err/);
  });

  it("rejects empty input and header-only input", () => {
    expect(() => parseRecords("")).toThrowError(/empty/);
    expect(() => parseRecords("sweep,seed,mean_err,var_err,runtime_s\n"))
      .toThrowError(/no data rows/);
  });
});

describe("aggregate", () => {
  it("computes per-sweep mean and population standard deviation", () => {
    const records = parseRecords(
      "sweep,seed,mean_err,var_err,runtime_s\n" +
      "2,0,0.1,0.4,0.01\n2,1,0.3,0.8,0.01\n10,0,0.05,0.1,0.01\n");
    const points = aggregate(records);
    expect(points).toHaveLength(2);
    expect(points[0].sweep).toBe(2);
    expect(points[0].meanErr).toBeCloseTo(0.2, 12);
    expect(points[0].meanErrStd).toBeCloseTo(0.1, 12);
    expect(points[0].varErr).toBeCloseTo(0.6, 12);
    expect(points[0].seedCount).toBe(2);
    expect(points[1].sweep).toBe(10);
    expect(points[1].meanErrStd).toBe(0);
  });

  it("sorts sweep values ascending", () => {
    const records = parseRecords(
      "sweep,seed,mean_err,var_err,runtime_s\n" +
      "100,0,0.1,0.1,0.01\n2,0,0.2,0.2,0.01\n10,0,0.3,0.3,0.01\n");
    expect(aggregate(records).map((p) => p.sweep)).toEqual([2, 10, 100]);
  });
});
