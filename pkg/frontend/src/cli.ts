#!/usr/bin/env node
/**
 * Render experiment CSVs into convergence figures.
 *
 * Usage:
 *   collective-fpf-plots <change-m|change-n|finite> --in results.csv
 *                        [--outdir figures] [--format png|svg]
 *
 * change-n additionally prints the log-log slope of the mean error when
 * the sweep has at least two values.  Exits 1 on malformed input (the
 * message names the offending CSV row).
 */

import { join } from "node:path";
import { CsvFormatError } from "./csv.js";
import type { FigureSpec } from "./figure.js";
import { render } from "./render.js";
import { loglogSlope } from "./slope.js";

const KINDS: Record<string, Omit<FigureSpec, "inputCsv" | "outputPath">> = {
  "change-m": {
    xLabel: "M (agents)",
    title: "Collective filter vs independent-Kalman mixture",
    meanLabel: "mean error",
    varLabel: "variance error",
  },
  "change-n": {
    xLabel: "N (particles)",
    title: "Particle filter vs collective filter",
    meanLabel: "mean error",
    varLabel: "variance error",
  },
  finite: {
    xLabel: "N (particles)",
    title: "Finite-state particle filter vs exact filter",
    meanLabel: "total-variation distance",
    varLabel: "observation-variance error",
  },
};

export interface CliOptions {
  kind: string;
  input: string;
  outdir: string;
  format: "png" | "svg";
}

export function parseArgs(argv: string[]): CliOptions {
  const [kind, ...rest] = argv;
  if (!kind || !(kind in KINDS)) {
    throw new Error(
      `first argument must be one of ${Object.keys(KINDS).join(", ")}`);
  }
  const options: CliOptions = { kind, input: "", outdir: "figures", format: "png" };
  for (let i = 0; i < rest.length; i += 2) {
    const flag = rest[i];
    const value = rest[i + 1];
    if (value === undefined) {
      throw new Error(`flag ${flag} needs a value`);
    }
    if (flag === "--in") options.input = value;
    else if (flag === "--outdir") options.outdir = value;
    else if (flag === "--format") {
      if (value !== "png" && value !== "svg") {
        throw new Error(`--format must be png or svg, got ${value}`);
      }
      options.format = value;
    } else {
      throw new Error(`unknown flag ${flag}`);
    }
  }
  if (!options.input) {
    throw new Error("--in <results.csv> is required");
  }
  return options;
}

export function run(argv: string[], log: (line: string) => void = console.log): number {
  let options: CliOptions;
  try {
    options = parseArgs(argv);
  } catch (err) {
    console.error(`usage error: ${(err as Error).message}`);
    return 1;
  }
  const spec: FigureSpec = {
    ...KINDS[options.kind],
    inputCsv: options.input,
    outputPath: join(options.outdir, `${options.kind}.${options.format}`),
  };
  try {
    const { outputPath, points } = render(spec);
    log(`wrote ${outputPath} (${points.length} sweep values)`);
    if (options.kind === "change-n" && points.length >= 2) {
      const slope = loglogSlope(points.map((p) => p.sweep),
                                points.map((p) => p.meanErr));
      log(`log-log slope of mean error vs N: ${slope.toFixed(3)}`);
    }
    return 0;
  } catch (err) {
    if (err instanceof CsvFormatError) {
      console.error(`malformed input: ${err.message}`);
    } else if ((err as NodeJS.ErrnoException).code === "ENOENT") {
      console.error(`input file not found: ${options.input}`);
    } else {
      console.error(`error: ${(err as Error).message}`);
    }
    return 1;
  }
}

const invokedDirectly = process.argv[1]?.endsWith("cli.js")
  || process.argv[1]?.endsWith("collective-fpf-plots");
if (invokedDirectly) {
  process.exit(run(process.argv.slice(2)));
}
