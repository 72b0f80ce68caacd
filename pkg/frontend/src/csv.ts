/**
 * Parsing and aggregation of experiment result CSVs.
 *
 * Expected schema (one row per sweep-value/seed run):
 *   sweep,seed,mean_err,var_err,runtime_s
 */

import { readFileSync } from "node:fs";
import Papa from "papaparse";

export const EXPECTED_HEADER = ["sweep", "seed", "mean_err", "var_err", "runtime_s"];

export interface SeedRecord {
  sweep: number;
  seed: number;
  meanErr: number;
  varErr: number;
  runtimeS: number;
}

/** Seed-aggregated statistics for one sweep value. */
export interface SweepPoint {
  sweep: number;
  meanErr: number;
  meanErrStd: number;
  varErr: number;
  varErrStd: number;
  seedCount: number;
}

export class CsvFormatError extends Error {
  constructor(message: string, public readonly row?: number) {
    super(row === undefined ? message : `row ${row}: ${message}`);
    this.name = "CsvFormatError";
  }
}

function parseNumber(raw: string, field: string, row: number): number {
  const value = Number(raw);
  if (raw.trim() === "" || !Number.isFinite(value)) {
    throw new CsvFormatError(`field ${field} is not a finite number (got ${JSON.stringify(raw)})`, row);
  }
  return value;
}

/** Parse a results CSV, reporting the offending row on any malformation. */
export function parseRecords(csvText: string): SeedRecord[] {
  if (csvText.trim() === "") {
    throw new CsvFormatError("empty CSV");
  }
  const parsed = Papa.parse<string[]>(csvText.trim(), { skipEmptyLines: true });
  if (parsed.errors.length > 0) {
    const err = parsed.errors[0];
    throw new CsvFormatError(err.message, (err.row ?? 0) + 1);
  }
  const rows = parsed.data;
  if (rows.length === 0) {
    throw new CsvFormatError("empty CSV");
  }
  const header = rows[0].map((h) => h.trim());
  if (JSON.stringify(header) !== JSON.stringify(EXPECTED_HEADER)) {
    throw new CsvFormatError(
      `unexpected header [${header.join(",")}]; expected [${EXPECTED_HEADER.join(",")}]`, 1);
  }
  if (rows.length === 1) {
    throw new CsvFormatError("no data rows");
  }
  return rows.slice(1).map((cells, i) => {
    const row = i + 2; // 1-based, after the header
    if (cells.length !== EXPECTED_HEADER.length) {
      throw new CsvFormatError(`expected ${EXPECTED_HEADER.length} fields, got ${cells.length}`, row);
    }
    return {
      sweep: parseNumber(cells[0], "sweep", row),
      seed: parseNumber(cells[1], "seed", row),
      meanErr: parseNumber(cells[2], "mean_err", row),
      varErr: parseNumber(cells[3], "var_err", row),
      runtimeS: parseNumber(cells[4], "runtime_s", row),
    };
  });
}

export function readRecords(path: string): SeedRecord[] {
  return parseRecords(readFileSync(path, "utf-8"));
}

function mean(values: number[]): number {
  return values.reduce((a, b) => a + b, 0) / values.length;
}

function std(values: number[]): number {
  const m = mean(values);
  return Math.sqrt(mean(values.map((v) => (v - m) * (v - m))));
}

/** Collapse per-seed records into per-sweep mean and standard deviation. */
export function aggregate(records: SeedRecord[]): SweepPoint[] {
  const groups = new Map<number, SeedRecord[]>();
  for (const rec of records) {
    const bucket = groups.get(rec.sweep) ?? [];
    bucket.push(rec);
    groups.set(rec.sweep, bucket);
  }
  return [...groups.entries()]
    .sort((a, b) => a[0] - b[0])
    .map(([sweep, recs]) => ({
      sweep,
      meanErr: mean(recs.map((r) => r.meanErr)),
      meanErrStd: std(recs.map((r) => r.meanErr)),
      varErr: mean(recs.map((r) => r.varErr)),
      varErrStd: std(recs.map((r) => r.varErr)),
      seedCount: recs.length,
    }));
}
