/** File output: read a results CSV, build the figure, write SVG or PNG. */

import { mkdirSync, writeFileSync } from "node:fs";
import { dirname } from "node:path";
import { Resvg } from "@resvg/resvg-js";
import { aggregate, readRecords, type SweepPoint } from "./csv.js";
import { buildFigureSvg, type FigureSpec } from "./figure.js";

export interface RenderResult {
  outputPath: string;
  points: SweepPoint[];
}

export function svgToPng(svg: string): Buffer {
  return new Resvg(svg, { background: "white" }).render().asPng();
}

/** Render one figure from its spec; the output extension picks SVG/PNG. */
export function render(spec: FigureSpec): RenderResult {
  const points = aggregate(readRecords(spec.inputCsv));
  const svg = buildFigureSvg(points, spec);
  mkdirSync(dirname(spec.outputPath), { recursive: true });
  if (spec.outputPath.endsWith(".svg")) {
    writeFileSync(spec.outputPath, svg);
  } else {
    writeFileSync(spec.outputPath, svgToPng(svg));
  }
  return { outputPath: spec.outputPath, points };
}
