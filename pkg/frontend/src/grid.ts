/** Canvas grid renderer. Immediate-mode: one fillRect per patch, colored by
 * predicted class with opacity proportional to the max belief. Below the
 * zoom threshold patches are flat color cells; above it, thumbnails draw
 * underneath when the session has them (level-of-detail). Pending
 * annotations get a white outline until the server acknowledges them,
 * acknowledged annotations a black one. */

import { ANNOTATED_OUTLINE, PENDING_OUTLINE, classColor } from "./palette.js";
import type { ViewStore } from "./store.js";

/** The 2D-context subset the renderer needs; tests inject a recorder.
 * Style properties mirror the DOM union so a real context satisfies it. */
export interface Canvas2DLike {
  fillStyle: string | CanvasGradient | CanvasPattern;
  strokeStyle: string | CanvasGradient | CanvasPattern;
  globalAlpha: number;
  lineWidth: number;
  fillRect(x: number, y: number, w: number, h: number): void;
  strokeRect(x: number, y: number, w: number, h: number): void;
  clearRect(x: number, y: number, w: number, h: number): void;
  drawImage?(image: unknown, x: number, y: number, w: number, h: number): void;
}

export interface ImageProvider {
  /** Returns a drawable image for the vertex if already loaded, else starts
   * loading and returns null (render again when it fires onLoad). */
  get(vertex: number): unknown | null;
}

export const THUMBNAIL_MIN_CELL_PX = 24;

export interface RenderStats {
  cellsDrawn: number;
  cellPx: number;
}

export function renderGrid(
  store: ViewStore,
  ctx: Canvas2DLike,
  width: number,
  height: number,
  images: ImageProvider | null = null,
): RenderStats {
  ctx.clearRect(0, 0, width, height);
  const panels: Array<{ values: number[]; xOffset: number; panelWidth: number }> = [];
  if (store.compare && store.zeroShotPredictions.length === store.numPatches) {
    const half = Math.floor(width / 2);
    panels.push({ values: store.zeroShotPredictions, xOffset: 0, panelWidth: half });
    panels.push({ values: store.predictions, xOffset: half, panelWidth: width - half });
  } else {
    panels.push({ values: store.predictions, xOffset: 0, panelWidth: width });
  }

  const { rows, cols } = store.layout;
  if (rows === 0 || cols === 0) return { cellsDrawn: 0, cellPx: 0 };
  let cellsDrawn = 0;
  let cellPx = 0;
  for (const panel of panels) {
    const cell = Math.min(panel.panelWidth / cols, height / rows);
    cellPx = cell;
    const useThumbs =
      images !== null &&
      store.hasThumbnails &&
      cell >= THUMBNAIL_MIN_CELL_PX &&
      ctx.drawImage !== undefined;
    for (let v = 0; v < store.numPatches; v++) {
      const x = panel.xOffset + (v % cols) * cell;
      const y = Math.floor(v / cols) * cell;
      if (useThumbs) {
        const image = images!.get(v);
        if (image !== null) {
          ctx.globalAlpha = 1.0;
          ctx.drawImage!(image, x, y, cell, cell);
        }
      }
      ctx.fillStyle = classColor(panel.values[v] ?? 0);
      ctx.globalAlpha = useThumbs ? 0.55 : clamp01(store.confidence[v] ?? 1.0);
      ctx.fillRect(x, y, cell, cell);
      cellsDrawn++;
    }
    // overlays only on the live (right/main) panel
    if (panel.values === store.predictions) {
      ctx.globalAlpha = 1.0;
      ctx.lineWidth = Math.max(1, cell * 0.12);
      for (const [vertex] of store.annotations) {
        if (store.pending.has(vertex)) continue;
        ctx.strokeStyle = ANNOTATED_OUTLINE;
        strokeCell(ctx, panel.xOffset, vertex, cols, cell);
      }
      for (const [vertex] of store.pending) {
        ctx.strokeStyle = PENDING_OUTLINE;
        strokeCell(ctx, panel.xOffset, vertex, cols, cell);
      }
    }
  }
  ctx.globalAlpha = 1.0;
  return { cellsDrawn, cellPx };
}

function strokeCell(
  ctx: Canvas2DLike,
  xOffset: number,
  vertex: number,
  cols: number,
  cell: number,
): void {
  const x = xOffset + (vertex % cols) * cell;
  const y = Math.floor(vertex / cols) * cell;
  ctx.strokeRect(x + 1, y + 1, cell - 2, cell - 2);
}

function clamp01(x: number): number {
  return x < 0 ? 0 : x > 1 ? 1 : x;
}

/** Map a click position back to a vertex id, or null outside the grid.
 * In compare mode only the live (right) panel is clickable. */
export function vertexAt(
  store: ViewStore,
  x: number,
  y: number,
  width: number,
  height: number,
): number | null {
  const { rows, cols } = store.layout;
  if (rows === 0 || cols === 0) return null;
  let xOffset = 0;
  let panelWidth = width;
  if (store.compare) {
    const half = Math.floor(width / 2);
    if (x < half) return null;
    xOffset = half;
    panelWidth = width - half;
  }
  const cell = Math.min(panelWidth / cols, height / rows);
  const col = Math.floor((x - xOffset) / cell);
  const row = Math.floor(y / cell);
  if (col < 0 || col >= cols || row < 0) return null;
  const vertex = row * cols + col;
  return vertex < store.numPatches ? vertex : null;
}
