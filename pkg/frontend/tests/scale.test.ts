/** Scale check: a 10^4-patch session renders fully and a click-to-ack
 * annotation cycle completes with no dropped stream events. */

import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { AnnotationConsole } from "../src/app.js";
import { ApiClient } from "../src/client.js";
import { classColor } from "../src/palette.js";
import { vertexAt } from "../src/grid.js";
import { RecordingContext, cellCenter, sleep, startService, type ServiceHandle } from "./harness.js";

let service: ServiceHandle;
let client: ApiClient;

beforeAll(async () => {
  service = await startService(8932);
  client = new ApiClient(service.baseUrl);
}, 120_000);

afterAll(async () => {
  await service?.stop();
});

describe("10k-patch session", () => {
  it("renders the full grid and completes a click-to-ack cycle without dropped events", async () => {
    const created = await client.createSession({
      synthetic: { num_classes: 10, patches_per_class: 1000, unary_noise: 0.4, seed: 1 },
      seed: 1,
    });
    expect(created.num_patches).toBe(10_000);

    const console_ = new AnnotationConsole(client);
    await console_.connect(created.session_id);
    const store = console_.store;

    // full-grid render: every patch drawn, at interactive cost
    const ctx = new RecordingContext();
    const t0 = performance.now();
    const stats = console_.drawGrid(ctx, 1000, 1000);
    const renderMs = performance.now() - t0;
    expect(stats.cellsDrawn).toBe(10_000);
    expect(renderMs).toBeLessThan(1000);

    // click in the middle of the grid -> resolves to a vertex
    const clickX = 503;
    const clickY = 497;
    const vertex = vertexAt(store, clickX, clickY, 1000, 1000);
    expect(vertex).not.toBeNull();

    // click-to-ack: optimistic clamp now, server ack on the stream
    console_.setBrush(7);
    const accepted = await console_.annotateAtPixel(clickX, clickY, 1000, 1000);
    expect(accepted).toBe(true);
    const deadline = Date.now() + 10_000;
    while (store.pending.size > 0) {
      if (Date.now() > deadline) throw new Error("annotation was never acknowledged");
      await sleep(20);
    }
    expect(store.annotations.get(vertex!)).toBe(7);

    // one step while streaming; wait for its event
    await console_.step(1);
    const stepDeadline = Date.now() + 20_000;
    while (store.metricsSeries.length < 1) {
      if (Date.now() > stepDeadline) throw new Error("step event never arrived");
      await sleep(20);
    }

    // continuity: created + annotation + step with no gaps in seq
    expect(store.droppedEvents).toBe(0);
    expect(store.lastEventSeq).toBeGreaterThanOrEqual(2);

    // the annotated patch renders its clamped class
    const ctx2 = new RecordingContext();
    const stats2 = console_.drawGrid(ctx2, 1000, 1000);
    const { x, y } = cellCenter(vertex!, store.layout.cols, stats2.cellPx);
    const fill = ctx2.fillAt(x, y);
    expect(fill!.style).toBe(classColor(7));

    await console_.disconnect();
  }, 180_000);
});
