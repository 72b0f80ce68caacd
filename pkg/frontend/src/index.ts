export { aggregate, parseRecords, readRecords, CsvFormatError,
         EXPECTED_HEADER } from "./csv.js";
export type { SeedRecord, SweepPoint } from "./csv.js";
export { buildFigureSvg, MEAN_COLOR, VAR_COLOR } from "./figure.js";
export type { FigureSpec } from "./figure.js";
export { render, svgToPng } from "./render.js";
export { loglogSlope } from "./slope.js";
export { parseArgs, run } from "./cli.js";
