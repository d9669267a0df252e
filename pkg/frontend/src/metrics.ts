/** Metrics panel: accuracy and max-delta per step as two polylines. */

import type { Canvas2DLike } from "./grid.js";
import type { ViewStore } from "./store.js";

export interface LineLike extends Canvas2DLike {
  beginPath(): void;
  moveTo(x: number, y: number): void;
  lineTo(x: number, y: number): void;
  stroke(): void;
}

export const ACCURACY_COLOR = "#2ca02c";
export const DELTA_COLOR = "#d62728";

export function renderMetrics(
  store: ViewStore,
  ctx: LineLike,
  width: number,
  height: number,
): number {
  ctx.clearRect(0, 0, width, height);
  const series = store.metricsSeries;
  if (series.length === 0) return 0;
  const step = series.length > 1 ? width / (series.length - 1) : 0;

  const deltas = series.map((p) => p.maxDelta);
  const deltaMax = Math.max(...deltas, 1e-12);
  drawLine(ctx, DELTA_COLOR, series.length, step, (i) => {
    return height - (deltas[i]! / deltaMax) * (height - 4) - 2;
  });

  if (series.some((p) => p.accuracy !== null)) {
    drawLine(ctx, ACCURACY_COLOR, series.length, step, (i) => {
      const a = series[i]!.accuracy ?? 0;
      return height - a * (height - 4) - 2;
    });
  }
  return series.length;
}

function drawLine(
  ctx: LineLike,
  color: string,
  count: number,
  step: number,
  yAt: (i: number) => number,
): void {
  ctx.strokeStyle = color;
  ctx.lineWidth = 1.5;
  ctx.globalAlpha = 1.0;
  ctx.beginPath();
  for (let i = 0; i < count; i++) {
    const x = count > 1 ? i * step : 0;
    if (i === 0) ctx.moveTo(x, yAt(i));
    else ctx.lineTo(x, yAt(i));
  }
  ctx.stroke();
}
