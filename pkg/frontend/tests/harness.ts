/** Test plumbing: spawn the real refinement service and a recording canvas
 * standing in for a browser 2D context. */

import { spawn, type ChildProcess } from "node:child_process";
import { mkdtempSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";

import type { Canvas2DLike } from "../src/grid.js";
import type { LineLike } from "../src/metrics.js";

export interface ServiceHandle {
  baseUrl: string;
  stop(): Promise<void>;
}

export async function startService(port: number): Promise<ServiceHandle> {
  const scratch = mkdtempSync(join(tmpdir(), "patchcrf-ui-"));
  const child: ChildProcess = spawn(
    "patchcrf",
    ["serve", "--port", String(port), "--scratch-dir", scratch],
    { stdio: ["ignore", "pipe", "pipe"] },
  );
  let stderr = "";
  child.stderr?.on("data", (chunk) => (stderr += String(chunk)));
  const baseUrl = `http://127.0.0.1:${port}`;

  const deadline = Date.now() + 30_000;
  for (;;) {
    if (child.exitCode !== null) {
      throw new Error(`service exited early (${child.exitCode}): ${stderr}`);
    }
    try {
      const res = await fetch(baseUrl + "/");
      if (res.ok) break;
    } catch {
      /* not up yet */
    }
    if (Date.now() > deadline) {
      child.kill("SIGKILL");
      throw new Error(`service did not come up in time: ${stderr}`);
    }
    await sleep(150);
  }

  return {
    baseUrl,
    stop: () =>
      new Promise<void>((resolve) => {
        child.once("exit", () => resolve());
        child.kill("SIGTERM");
        setTimeout(() => child.kill("SIGKILL"), 3000).unref();
      }),
  };
}

export function sleep(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}

export interface FillOp {
  kind: "fill" | "stroke";
  x: number;
  y: number;
  w: number;
  h: number;
  style: string;
  alpha: number;
}

/** Records draw calls so assertions can inspect what a patch rendered as. */
export class RecordingContext implements Canvas2DLike, LineLike {
  fillStyle = "";
  strokeStyle = "";
  globalAlpha = 1;
  lineWidth = 1;
  ops: FillOp[] = [];
  clears = 0;
  paths = 0;

  fillRect(x: number, y: number, w: number, h: number): void {
    this.ops.push({ kind: "fill", x, y, w, h, style: this.fillStyle, alpha: this.globalAlpha });
  }

  strokeRect(x: number, y: number, w: number, h: number): void {
    this.ops.push({ kind: "stroke", x, y, w, h, style: this.strokeStyle, alpha: this.globalAlpha });
  }

  clearRect(): void {
    this.clears++;
    this.ops = [];
  }

  beginPath(): void {
    this.paths++;
  }

  moveTo(): void {}
  lineTo(): void {}
  stroke(): void {}

  /** Last fill covering the given point (what the pixel would show). */
  fillAt(x: number, y: number): FillOp | undefined {
    return [...this.ops]
      .reverse()
      .find((op) => op.kind === "fill" && x >= op.x && x < op.x + op.w && y >= op.y && y < op.y + op.h);
  }

  strokesAt(x: number, y: number): FillOp[] {
    return this.ops.filter(
      (op) => op.kind === "stroke" && x >= op.x && x < op.x + op.w && y >= op.y && y < op.y + op.h,
    );
  }
}

export function cellCenter(
  vertex: number,
  cols: number,
  cellPx: number,
  xOffset = 0,
): { x: number; y: number } {
  return {
    x: xOffset + (vertex % cols) * cellPx + cellPx / 2,
    y: Math.floor(vertex / cols) * cellPx + cellPx / 2,
  };
}
