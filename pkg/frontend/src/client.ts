/** Typed client for the refinement service, including an SSE reader built on
 * fetch streaming so the same code runs in browsers and in node tests. */

import type {
  AnnotateResponse,
  CreateSessionResponse,
  ServerEvent,
  StateResponse,
  StepResponse,
} from "./types.js";

export class ApiError extends Error {
  constructor(readonly status: number, message: string) {
    super(message);
  }
}

async function requireOk(res: Response): Promise<Response> {
  if (!res.ok) {
    let detail = res.statusText;
    try {
      const body = (await res.json()) as { detail?: string };
      if (body.detail) detail = String(body.detail);
    } catch {
      /* non-JSON error body */
    }
    throw new ApiError(res.status, detail);
  }
  return res;
}

export class ApiClient {
  constructor(readonly baseUrl: string) {}

  private url(path: string): string {
    return this.baseUrl.replace(/\/$/, "") + path;
  }

  async createSession(body: Record<string, unknown>): Promise<CreateSessionResponse> {
    const res = await requireOk(
      await fetch(this.url("/sessions"), {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify(body),
      }),
    );
    return (await res.json()) as CreateSessionResponse;
  }

  async getState(sessionId: string, include: string): Promise<StateResponse> {
    const res = await requireOk(
      await fetch(this.url(`/sessions/${sessionId}/state?include=${include}`)),
    );
    return (await res.json()) as StateResponse;
  }

  async annotate(
    sessionId: string,
    items: Array<{ vertex: number; label: number }>,
  ): Promise<AnnotateResponse> {
    const res = await requireOk(
      await fetch(this.url(`/sessions/${sessionId}/annotations`), {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify(items),
      }),
    );
    return (await res.json()) as AnnotateResponse;
  }

  async step(sessionId: string, count = 1): Promise<StepResponse> {
    const res = await requireOk(
      await fetch(this.url(`/sessions/${sessionId}/step`), {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify({ count }),
      }),
    );
    return (await res.json()) as StepResponse;
  }

  thumbnailUrl(sessionId: string, vertex: number): string {
    return this.url(`/sessions/${sessionId}/thumbnails/${vertex}`);
  }

  /** Follow the session's server-sent-event stream from `since` onward.
   * Yields parsed events; ends when the server closes (max_events reached)
   * or the signal aborts. Heartbeat comments are skipped. */
  async *events(
    sessionId: string,
    opts: { since?: number; maxEvents?: number; pollSeconds?: number; signal?: AbortSignal } = {},
  ): AsyncGenerator<ServerEvent> {
    const params = new URLSearchParams();
    if (opts.since !== undefined) params.set("since", String(opts.since));
    if (opts.maxEvents !== undefined) params.set("max_events", String(opts.maxEvents));
    if (opts.pollSeconds !== undefined) params.set("poll_seconds", String(opts.pollSeconds));
    const res = await requireOk(
      await fetch(this.url(`/sessions/${sessionId}/events?${params}`), {
        headers: { accept: "text/event-stream" },
        signal: opts.signal ?? null,
      }),
    );
    const reader = res.body!.getReader();
    const decoder = new TextDecoder();
    let buffer = "";
    try {
      for (;;) {
        const { done, value } = await reader.read();
        if (done) break;
        buffer += decoder.decode(value, { stream: true });
        let split;
        while ((split = buffer.indexOf("\n\n")) >= 0) {
          const block = buffer.slice(0, split);
          buffer = buffer.slice(split + 2);
          const event = parseSseBlock(block);
          if (event) yield event;
        }
      }
    } finally {
      reader.releaseLock();
    }
  }
}

export function parseSseBlock(block: string): ServerEvent | null {
  let id = -1;
  let type = "";
  let data = "";
  for (const line of block.split("\n")) {
    if (line.startsWith(":")) continue; // heartbeat/comment
    if (line.startsWith("id: ")) id = Number(line.slice(4));
    else if (line.startsWith("event: ")) type = line.slice(7);
    else if (line.startsWith("data: ")) data = line.slice(6);
  }
  if (!type || id < 0) return null;
  return {
    seq: id,
    type: type as ServerEvent["type"],
    payload: data ? (JSON.parse(data) as Record<string, unknown>) : {},
  };
}
