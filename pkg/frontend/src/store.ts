/** Client-side view state: a mirror of server state plus transient UI bits
 * (brush, pending annotations, metrics series). The server is the only
 * source of truth — every mutation here is either a fetched snapshot, a
 * server event, or an optimistic annotation that is rolled back on reject
 * and confirmed by its annotation event. */

import type {
  AnnotationEventPayload,
  ServerEvent,
  StateResponse,
  StepEventPayload,
} from "./types.js";

export interface MetricsPoint {
  iteration: number;
  maxDelta: number;
  accuracy: number | null;
}

export interface PendingAnnotation {
  label: number;
  previousPrediction: number;
  previousConfidence: number;
}

export interface GridLayout {
  rows: number;
  cols: number;
}

export function layoutFor(numPatches: number, grid: [number, number] | null): GridLayout {
  if (grid) return { rows: grid[0], cols: grid[1] };
  const cols = Math.ceil(Math.sqrt(numPatches));
  return { rows: Math.ceil(numPatches / cols), cols };
}

export class ViewStore {
  sessionId = "";
  numPatches = 0;
  numClasses = 0;
  classNames: string[] = [];
  layout: GridLayout = { rows: 0, cols: 0 };
  hasThumbnails = false;
  status: StateResponse["status"] = "idle";
  iteration = 0;

  predictions: number[] = [];
  zeroShotPredictions: number[] = [];
  confidence: number[] = [];
  annotations = new Map<number, number>();
  pending = new Map<number, PendingAnnotation>();

  metricsSeries: MetricsPoint[] = [];
  zeroShotAccuracy: number | null = null;
  accuracy: number | null = null;

  brush = 0;
  compare = false;

  lastEventSeq = -1;
  droppedEvents = 0;

  /** Replace the mirrored server state with a fetched snapshot. */
  applyState(state: StateResponse): void {
    this.sessionId = state.session_id;
    this.numPatches = state.num_patches;
    this.numClasses = state.num_classes;
    this.classNames = state.class_names;
    this.layout = layoutFor(state.num_patches, state.grid);
    this.hasThumbnails = state.has_thumbnails;
    this.status = state.status;
    this.iteration = state.iteration;
    if (state.predictions) this.predictions = state.predictions;
    if (state.zero_shot_predictions) this.zeroShotPredictions = state.zero_shot_predictions;
    if (state.confidence) this.confidence = state.confidence;
    if (state.annotations) {
      this.annotations = new Map(
        Object.entries(state.annotations).map(([v, l]) => [Number(v), l]),
      );
      // anything the server already knows about is no longer pending
      for (const vertex of [...this.pending.keys()]) {
        if (this.annotations.has(vertex)) this.pending.delete(vertex);
      }
    }
    if (state.metrics) {
      this.accuracy = state.metrics.accuracy ?? null;
      this.zeroShotAccuracy = state.metrics.zero_shot_accuracy ?? null;
    }
  }

  /** Optimistically clamp a patch to the brush class; returns the rollback. */
  annotateOptimistic(vertex: number, label: number): PendingAnnotation {
    const snapshot: PendingAnnotation = {
      label,
      previousPrediction: this.predictions[vertex] ?? 0,
      previousConfidence: this.confidence[vertex] ?? 0,
    };
    this.pending.set(vertex, snapshot);
    this.predictions[vertex] = label;
    this.confidence[vertex] = 1.0;
    return snapshot;
  }

  rollbackAnnotation(vertex: number): void {
    const snapshot = this.pending.get(vertex);
    if (!snapshot) return;
    this.pending.delete(vertex);
    this.predictions[vertex] = snapshot.previousPrediction;
    this.confidence[vertex] = snapshot.previousConfidence;
  }

  /** Fold one server event into the view. Returns true if the event implies
   * the mirrored arrays are stale and should be refetched. */
  applyEvent(event: ServerEvent): boolean {
    if (this.lastEventSeq >= 0 && event.seq > this.lastEventSeq + 1) {
      this.droppedEvents += event.seq - this.lastEventSeq - 1;
    }
    this.lastEventSeq = Math.max(this.lastEventSeq, event.seq);
    switch (event.type) {
      case "created":
        return false;
      case "annotation": {
        const p = event.payload as unknown as AnnotationEventPayload;
        this.annotations.set(p.vertex, p.label);
        this.pending.delete(p.vertex); // acknowledged
        this.predictions[p.vertex] = p.label;
        this.confidence[p.vertex] = 1.0;
        return false;
      }
      case "step": {
        const p = event.payload as unknown as StepEventPayload;
        this.iteration = p.iteration;
        this.metricsSeries.push({
          iteration: p.iteration,
          maxDelta: p.max_delta,
          accuracy: p.accuracy ?? null,
        });
        if (p.accuracy !== undefined) this.accuracy = p.accuracy;
        this.status = p.converged ? "converged" : "idle";
        return true; // beliefs changed server-side
      }
      default:
        return false;
    }
  }
}
