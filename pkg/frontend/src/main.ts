/** Browser bootstrap: toolbar, canvas wiring, lazy thumbnail loading. */

import { AnnotationConsole } from "./app.js";
import { ApiClient } from "./client.js";
import type { ImageProvider } from "./grid.js";
import { classColor } from "./palette.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

class LazyImages implements ImageProvider {
  private cache = new Map<number, HTMLImageElement | null>();

  constructor(
    private readonly client: ApiClient,
    private readonly sessionId: string,
    private readonly onLoad: () => void,
  ) {}

  get(vertex: number): HTMLImageElement | null {
    const hit = this.cache.get(vertex);
    if (hit !== undefined) return hit;
    this.cache.set(vertex, null);
    const img = new Image();
    img.onload = () => {
      this.cache.set(vertex, img);
      this.onLoad();
    };
    img.onerror = () => this.cache.set(vertex, null);
    img.src = this.client.thumbnailUrl(this.sessionId, vertex);
    return null;
  }
}

function apiBase(params: URLSearchParams): string {
  // priority: explicit ?api= override, then same-origin when served over
  // http(s) (e.g. mounted at /ui by the service), then the meta fallback
  const override = params.get("api");
  if (override) return override;
  if (window.location.protocol.startsWith("http")) return window.location.origin;
  const meta = document.querySelector("meta[name=patchcrf-api]") as HTMLMetaElement | null;
  return meta?.content || "http://127.0.0.1:8000";
}

async function start(): Promise<void> {
  const params = new URLSearchParams(window.location.search);
  const client = new ApiClient(apiBase(params));

  const grid = el<HTMLCanvasElement>("grid");
  const metrics = el<HTMLCanvasElement>("metrics");
  const statusLine = el<HTMLDivElement>("status");
  const legend = el<HTMLDivElement>("legend");

  let console_: AnnotationConsole;
  let scheduled = false;
  const render = () => {
    if (scheduled || !console_) return;
    scheduled = true;
    requestAnimationFrame(() => {
      scheduled = false;
      const gctx = grid.getContext("2d")!;
      console_.drawGrid(gctx, grid.width, grid.height);
      const mctx = metrics.getContext("2d")!;
      console_.drawMetrics(mctx, metrics.width, metrics.height);
      const s = console_.store;
      const accuracy = s.accuracy !== null ? ` accuracy ${(s.accuracy * 100).toFixed(1)}%` : "";
      statusLine.textContent =
        `${s.status} | iteration ${s.iteration} | ${s.annotations.size} annotations` +
        `${s.pending.size ? ` (${s.pending.size} pending)` : ""}${accuracy}`;
    });
  };

  // session: reuse ?session=, else create a demo synthetic one
  let sessionId = params.get("session");
  if (!sessionId) {
    const created = await client.createSession({
      synthetic: { num_classes: 5, patches_per_class: 200, unary_noise: 0.4, seed: 0 },
      seed: 0,
    });
    sessionId = created.session_id;
  }
  console_ = new AnnotationConsole(client, {
    onRender: render,
    images: new LazyImages(client, sessionId, render),
  });
  await console_.connect(sessionId);

  // class brush legend
  legend.innerHTML = "";
  console_.store.classNames.forEach((name, i) => {
    const chip = document.createElement("button");
    chip.className = "chip";
    chip.style.background = classColor(i);
    chip.textContent = name;
    chip.onclick = () => {
      console_.setBrush(i);
      for (const other of legend.children) other.classList.remove("active");
      chip.classList.add("active");
    };
    if (i === 0) chip.classList.add("active");
    legend.appendChild(chip);
  });

  grid.addEventListener("click", (ev) => {
    const rect = grid.getBoundingClientRect();
    const x = ((ev.clientX - rect.left) / rect.width) * grid.width;
    const y = ((ev.clientY - rect.top) / rect.height) * grid.height;
    void console_.annotateAtPixel(x, y, grid.width, grid.height);
  });

  el<HTMLButtonElement>("step").onclick = () => void console_.step(1);
  el<HTMLButtonElement>("run").onclick = () => void console_.runUntilConverged();
  el<HTMLButtonElement>("compare").onclick = () => console_.toggleCompare();

  render();
}

void start();
