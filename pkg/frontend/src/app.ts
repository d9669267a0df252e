/** The annotation console: wires the API client, the view store, and the
 * renderers. No inference happens client-side; the console converges to
 * server state by folding stream events and refetching snapshots after
 * steps. */

import { ApiClient, ApiError } from "./client.js";
import type { Canvas2DLike, ImageProvider } from "./grid.js";
import { renderGrid, vertexAt } from "./grid.js";
import type { LineLike } from "./metrics.js";
import { renderMetrics } from "./metrics.js";
import { ViewStore } from "./store.js";

const STATE_INCLUDE = "predictions,metrics,annotations,confidence";

export interface ConsoleOptions {
  onRender?: () => void;
  images?: ImageProvider | null;
}

export class AnnotationConsole {
  readonly store = new ViewStore();
  private abort: AbortController | null = null;
  private streamDone: Promise<void> | null = null;
  stepping = false;

  constructor(
    readonly client: ApiClient,
    private readonly opts: ConsoleOptions = {},
  ) {}

  /** Fetch the initial snapshot and subscribe to the event stream. */
  async connect(sessionId: string): Promise<void> {
    this.store.sessionId = sessionId;
    await this.refreshState();
    this.abort = new AbortController();
    const startAfter = this.store.lastEventSeq; // avoid replaying history twice
    this.streamDone = this.followEvents(sessionId, startAfter + 1, this.abort.signal);
  }

  async disconnect(): Promise<void> {
    this.abort?.abort();
    try {
      await this.streamDone;
    } catch {
      /* aborted */
    }
  }

  private async followEvents(sessionId: string, since: number, signal: AbortSignal): Promise<void> {
    try {
      for await (const event of this.client.events(sessionId, { since, signal })) {
        const stale = this.store.applyEvent(event);
        if (stale) await this.refreshState();
        this.opts.onRender?.();
      }
    } catch (err) {
      if (!signal.aborted) throw err;
    }
  }

  async refreshState(): Promise<void> {
    const state = await this.client.getState(this.store.sessionId, STATE_INCLUDE);
    this.store.applyState(state);
    this.opts.onRender?.();
  }

  /** Optimistic annotate: clamp locally, POST, roll back on a 4xx reject.
   * The pending mark clears when the annotation event comes back. */
  async annotate(vertex: number, label: number): Promise<boolean> {
    this.store.annotateOptimistic(vertex, label);
    this.opts.onRender?.();
    try {
      await this.client.annotate(this.store.sessionId, [{ vertex, label }]);
      return true;
    } catch (err) {
      if (err instanceof ApiError && err.status >= 400 && err.status < 500) {
        this.store.rollbackAnnotation(vertex);
        this.opts.onRender?.();
        return false;
      }
      throw err;
    }
  }

  async annotateAtPixel(x: number, y: number, width: number, height: number): Promise<boolean> {
    const vertex = vertexAt(this.store, x, y, width, height);
    if (vertex === null) return false;
    return this.annotate(vertex, this.store.brush);
  }

  /** One or more message-passing iterations; false when the session was
   * busy (another step in flight, HTTP 409). */
  async step(count = 1): Promise<boolean> {
    this.stepping = true;
    this.opts.onRender?.();
    try {
      await this.client.step(this.store.sessionId, count);
      return true;
    } catch (err) {
      if (err instanceof ApiError && err.status === 409) return false;
      throw err;
    } finally {
      this.stepping = false;
      this.opts.onRender?.();
    }
  }

  /** Step until the engine reports convergence (bounded by maxSteps). */
  async runUntilConverged(maxSteps = 50): Promise<boolean> {
    for (let i = 0; i < maxSteps; i++) {
      const res = await this.client.step(this.store.sessionId, 1).catch((err) => {
        if (err instanceof ApiError && err.status === 409) return null;
        throw err;
      });
      if (res === null) return false;
      if (res.converged) return true;
    }
    return false;
  }

  setBrush(classIndex: number): void {
    this.store.brush = Math.max(0, Math.min(classIndex, this.store.numClasses - 1));
  }

  toggleCompare(): void {
    this.store.compare = !this.store.compare;
    this.opts.onRender?.();
  }

  drawGrid(ctx: Canvas2DLike, width: number, height: number) {
    return renderGrid(this.store, ctx, width, height, this.opts.images ?? null);
  }

  drawMetrics(ctx: LineLike, width: number, height: number): number {
    return renderMetrics(this.store, ctx, width, height);
  }
}
