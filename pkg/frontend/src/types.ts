/** Payload types of the refinement service's HTTP/JSON contract. */

export interface CreateSessionResponse {
  session_id: string;
  num_patches: number;
  num_classes: number;
  class_names: string[];
  seed: number;
  zero_shot_accuracy: number | null;
  grid: [number, number] | null;
}

export interface Metrics {
  iteration: number;
  num_annotations: number;
  max_delta: number | null;
  accuracy?: number | null;
  accuracy_excl_annotated?: number | null;
  zero_shot_accuracy?: number | null;
}

export interface StateResponse {
  session_id: string;
  status: "idle" | "stepping" | "converged";
  iteration: number;
  num_patches: number;
  num_classes: number;
  class_names: string[];
  has_thumbnails: boolean;
  grid: [number, number] | null;
  predictions?: number[];
  zero_shot_predictions?: number[];
  confidence?: number[];
  annotations?: Record<string, number>;
  metrics?: Metrics;
}

export interface AnnotateResponse {
  accepted: number;
  overridden: number;
  queued: boolean;
}

export interface StepResponse {
  iterations_run: number;
  max_delta: number;
  seconds_per_iteration: number[];
  converged: boolean;
}

export interface AnnotationEventPayload {
  vertex: number;
  label: number;
  previous_label: number | null;
  timestamp: string;
}

export interface StepEventPayload {
  iteration: number;
  max_delta: number;
  seconds: number;
  converged: boolean;
  accuracy?: number;
  accuracy_excl_annotated?: number;
}

export interface ServerEvent {
  seq: number;
  type: "created" | "annotation" | "step";
  payload: Record<string, unknown>;
}
