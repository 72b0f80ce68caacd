/**
 * Convergence-figure construction: two error series against a log-scaled
 * sweep axis, each point carrying a +/- one-standard-deviation whisker.
 * Rendering happens fully server-side through echarts' SSR SVG mode.
 */

import { CustomChart, LineChart } from "echarts/charts";
import { GridComponent, LegendComponent, TitleComponent } from "echarts/components";
import { init, use } from "echarts/core";
import { SVGRenderer } from "echarts/renderers";
import type { SweepPoint } from "./csv.js";

use([LineChart, CustomChart, GridComponent, LegendComponent, TitleComponent,
     SVGRenderer]);

/** What to draw and where to put it. */
export interface FigureSpec {
  inputCsv: string;
  xLabel: string;              // sweep-variable name ("M" or "N")
  title: string;
  meanLabel: string;           // first series (blue)
  varLabel: string;            // second series (orange)
  outputPath: string;          // .png or .svg decides the encoding
  width?: number;
  height?: number;
}

export const MEAN_COLOR = "#1f77b4"; // blue
export const VAR_COLOR = "#ff7f0e"; // orange

interface SeriesData {
  points: [number, number][];
  whiskers: [number, number, number][]; // x, low, high
}

function seriesData(points: SweepPoint[], value: (p: SweepPoint) => number,
                    spread: (p: SweepPoint) => number): SeriesData {
  return {
    points: points.map((p) => [p.sweep, value(p)]),
    // zero-spread points (single seed) would render as empty strokes
    whiskers: points
      .filter((p) => spread(p) > 0)
      .map((p): [number, number, number] => [
        p.sweep,
        Math.max(value(p) - spread(p), 0),
        value(p) + spread(p),
      ]),
  };
}

// eslint-disable-next-line @typescript-eslint/no-explicit-any
function whiskerSeries(name: string, color: string, data: [number, number, number][]): any {
  return {
    name,
    type: "custom",
    data,
    silent: true,
    z: 1,
    renderItem: (_params: unknown, api: any) => {
      const x = api.value(0);
      const top = api.coord([x, api.value(2)]);
      const bottom = api.coord([x, api.value(1)]);
      const cap = 4;
      const style = { stroke: color, fill: "none", lineWidth: 1 };
      const line = (x1: number, y1: number, x2: number, y2: number) => ({
        type: "line",
        shape: { x1, y1, x2, y2 },
        style,
      });
      return {
        type: "group",
        children: [
          line(top[0], top[1], bottom[0], bottom[1]),
          line(top[0] - cap, top[1], top[0] + cap, top[1]),
          line(bottom[0] - cap, bottom[1], bottom[0] + cap, bottom[1]),
        ],
      };
    },
  };
}

/** Build the figure as an SVG string. */
export function buildFigureSvg(points: SweepPoint[], spec: FigureSpec): string {
  if (points.length === 0) {
    throw new Error("no sweep points to plot");
  }
  const mean = seriesData(points, (p) => p.meanErr, (p) => p.meanErrStd);
  const variance = seriesData(points, (p) => p.varErr, (p) => p.varErrStd);
  const chart = init(null, null, {
    renderer: "svg",
    ssr: true,
    width: spec.width ?? 720,
    height: spec.height ?? 480,
  });
  chart.setOption({
    animation: false,
    title: { text: spec.title, left: "center" },
    legend: { bottom: 0, data: [spec.meanLabel, spec.varLabel] },
    grid: { left: 70, right: 30, top: 50, bottom: 70 },
    xAxis: {
      type: "log",
      name: spec.xLabel,
      nameLocation: "middle",
      nameGap: 28,
      minorSplitLine: { show: true },
    },
    yAxis: {
      type: "value",
      name: "normalized error",
      nameLocation: "middle",
      nameGap: 50,
      min: 0,
    },
    series: [
      {
        name: spec.meanLabel,
        type: "line",
        data: mean.points,
        itemStyle: { color: MEAN_COLOR },
        lineStyle: { color: MEAN_COLOR },
        symbol: "circle",
        symbolSize: 8,
        z: 2,
      },
      {
        name: spec.varLabel,
        type: "line",
        data: variance.points,
        itemStyle: { color: VAR_COLOR },
        lineStyle: { color: VAR_COLOR },
        symbol: "circle",
        symbolSize: 8,
        z: 2,
      },
      whiskerSeries(`${spec.meanLabel} ±1sd`, MEAN_COLOR, mean.whiskers),
      whiskerSeries(`${spec.varLabel} ±1sd`, VAR_COLOR, variance.whiskers),
    ],
  });
  const svg = chart.renderToSVGString();
  chart.dispose();
  return svg;
}
