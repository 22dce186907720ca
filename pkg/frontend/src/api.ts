// Typed client for the pointsup annotation service HTTP API.

export interface Progress {
  labeled: number;
  total: number;
}

export interface ViewRect {
  x: number;
  y: number;
  w: number;
  h: number;
  scale?: number;
}

export interface MarkerStyle {
  radius: number;
  highlight_box: number;
}

export interface ViewGeometry {
  context_view: ViewRect;
  zoom_view: ViewRect;
  marker: MarkerStyle;
}

export interface TaskPayload {
  task_id: number;
  instance_id: number | string;
  image_url: string;
  image_width: number;
  image_height: number;
  category: string;
  bbox: [number, number, number, number];
  point: { x: number; y: number };
  view_geometry: ViewGeometry;
  progress: Progress;
}

export interface DonePayload {
  done: true;
  progress: Progress;
}

export type NextResponse = TaskPayload | DonePayload;

export function isDone(r: NextResponse): r is DonePayload {
  return (r as DonePayload).done === true;
}

export interface SessionInfo {
  session_id: string;
  dataset_id: string;
  n_points: number;
  seed: number;
  total_tasks: number;
  labeled: number;
}

export interface Ack {
  ok: boolean;
  duplicate: boolean;
  progress: Progress;
  done: boolean;
}

export interface SessionStats {
  labeled: number;
  total: number;
  mean_s_per_point: number | null;
  agreement: number | null;
}

export type PointLabel = 'object' | 'background';

export class ApiError extends Error {
  constructor(
    public status: number,
    public payload: Record<string, unknown>,
  ) {
    super(`HTTP ${status}: ${payload['error'] ?? 'request failed'}`);
  }
}

async function asJson<T>(res: Response): Promise<T> {
  const body = (await res.json()) as Record<string, unknown>;
  if (!res.ok) {
    throw new ApiError(res.status, body);
  }
  return body as T;
}

export class ApiClient {
  constructor(readonly serverUrl: string) {}

  private url(path: string): string {
    return this.serverUrl.replace(/\/$/, '') + path;
  }

  imageUrl(imagePath: string): string {
    return this.url(imagePath);
  }

  async createSession(nPoints: number, seed: number): Promise<SessionInfo> {
    const res = await fetch(this.url('/sessions'), {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify({ n_points: nPoints, seed }),
    });
    return asJson<SessionInfo>(res);
  }

  async next(sessionId: string): Promise<NextResponse> {
    return asJson<NextResponse>(await fetch(this.url(`/sessions/${sessionId}/next`)));
  }

  async submit(
    sessionId: string,
    taskId: number,
    label: PointLabel,
    elapsedMs: number,
  ): Promise<Ack> {
    const res = await fetch(this.url(`/sessions/${sessionId}/labels`), {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify({ task_id: taskId, label, elapsed_ms: elapsedMs }),
    });
    return asJson<Ack>(res);
  }

  async stats(sessionId: string): Promise<SessionStats> {
    return asJson<SessionStats>(await fetch(this.url(`/sessions/${sessionId}/stats`)));
  }
}
