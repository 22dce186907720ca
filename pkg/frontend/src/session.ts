// Workbench state machine: one active task at a time, keyboard-first
// labeling, server-driven task order. The client is stateless across
// reloads: the session id lives in the URL and the cursor comes from the
// server on every (re)start.

import { ApiClient, isDone, type PointLabel, type SessionStats, type TaskPayload } from './api';
import { contextLayout, paintView, zoomLayout, type ViewLayout } from './views';

export type ImageLoader = (url: string) => Promise<CanvasImageSource | null>;

export interface WorkbenchElements {
  contextCanvas: HTMLCanvasElement;
  zoomCanvas: HTMLCanvasElement;
  category: HTMLElement;
  progress: HTMLElement;
  status: HTMLElement;
  doneScreen: HTMLElement;
  taskScreen: HTMLElement;
}

export interface WorkbenchOptions {
  nPoints?: number;
  seed?: number;
  imageLoader?: ImageLoader;
  now?: () => number;
}

function defaultLoader(): ImageLoader {
  const cache = new Map<string, Promise<CanvasImageSource | null>>();
  return (url: string) => {
    let hit = cache.get(url);
    if (!hit) {
      hit = new Promise((resolve) => {
        const img = new Image();
        img.onload = () => resolve(img);
        img.onerror = () => resolve(null);
        img.src = url;
      });
      cache.set(url, hit);
    }
    return hit;
  };
}

export class Workbench {
  readonly api: ApiClient;
  sessionId = '';
  task: TaskPayload | null = null;
  layouts: { context: ViewLayout; zoom: ViewLayout } | null = null;
  private timerStart = 0;
  private submitting = false;
  private retriedImage = false;
  private readonly loadImage: ImageLoader;
  private readonly now: () => number;
  private readonly nPoints: number;
  private readonly seed: number;

  constructor(
    serverUrl: string,
    readonly els: WorkbenchElements,
    opts: WorkbenchOptions = {},
  ) {
    this.api = new ApiClient(serverUrl);
    this.loadImage = opts.imageLoader ?? defaultLoader();
    this.now = opts.now ?? (() => performance.now());
    this.nPoints = opts.nPoints ?? 10;
    this.seed = opts.seed ?? 0;
  }

  /** Resume the session named in the URL, or create a fresh one. */
  async start(win: Window): Promise<void> {
    const params = new URLSearchParams(win.location.search);
    const existing = params.get('session');
    if (existing) {
      this.sessionId = existing;
    } else {
      const info = await this.api.createSession(this.nPoints, this.seed);
      this.sessionId = info.session_id;
      params.set('session', this.sessionId);
      win.history.replaceState(null, '', `?${params.toString()}`);
    }
    win.document.addEventListener('keydown', (ev) => this.onKey(ev as KeyboardEvent));
    await this.showNext();
  }

  async showNext(): Promise<void> {
    const res = await this.api.next(this.sessionId);
    if (isDone(res)) {
      this.task = null;
      await this.showCompletion();
      return;
    }
    await this.renderTask(res);
  }

  async renderTask(task: TaskPayload): Promise<void> {
    this.task = task;
    this.els.taskScreen.hidden = false;
    this.els.doneScreen.hidden = true;
    this.els.category.textContent = task.category;
    this.els.progress.textContent = `${task.progress.labeled} / ${task.progress.total}`;
    this.els.status.textContent = '';

    let image = await this.loadImage(this.api.imageUrl(task.image_url));
    if (image === null && !this.retriedImage) {
      this.retriedImage = true;
      this.setStatus('image failed to load, retrying…');
      image = await this.loadImage(this.api.imageUrl(task.image_url) + '?retry=1');
    }
    this.retriedImage = false;

    const context = contextLayout(task);
    const zoom = zoomLayout(task);
    this.layouts = { context, zoom };
    paintView(this.els.zoomCanvas, image, task, zoom, { drawBox: false });
    paintView(this.els.contextCanvas, image, task, context, {
      drawBox: true,
      categoryLabel: task.category,
    });
    // expose marker positions for drivers and debugging
    this.els.contextCanvas.dataset.markerX = String(context.markerX);
    this.els.contextCanvas.dataset.markerY = String(context.markerY);
    this.els.zoomCanvas.dataset.markerX = String(zoom.markerX);
    this.els.zoomCanvas.dataset.markerY = String(zoom.markerY);
    this.setStatus('');
    // the clock starts only once both views are on screen
    this.timerStart = this.now();
    this.submitting = false;
  }

  onKey(ev: KeyboardEvent): void {
    const key = ev.key.toLowerCase();
    if (key === '1' || key === 'o') {
      void this.capture('object');
    } else if (key === '0' || key === 'b') {
      void this.capture('background');
    }
  }

  /** Submit a label for the displayed task; double inputs are debounced. */
  async capture(label: PointLabel): Promise<void> {
    if (!this.task || this.submitting) return;
    this.submitting = true;
    const elapsed = Math.max(this.now() - this.timerStart, 0);
    try {
      const ack = await this.api.submit(this.sessionId, this.task.task_id, label, elapsed);
      this.els.progress.textContent = `${ack.progress.labeled} / ${ack.progress.total}`;
      await this.showNext();
    } catch (err) {
      // server rejected the label: keep the task on screen and let the
      // annotator answer again
      this.setStatus(`submission failed (${(err as Error).message}); please retry`);
      this.submitting = false;
    }
  }

  private async showCompletion(): Promise<void> {
    const stats: SessionStats = await this.api.stats(this.sessionId);
    this.els.taskScreen.hidden = true;
    this.els.doneScreen.hidden = false;
    const mean = stats.mean_s_per_point;
    const agreement = stats.agreement;
    this.els.doneScreen.innerHTML = `
      <h2>Session complete</h2>
      <p><span id="done-count">${stats.labeled}</span> points labeled.</p>
      <p>Mean time per point: <span id="done-mean">${mean === null ? 'n/a' : mean.toFixed(3)}</span> s</p>
      <p>Agreement with ground truth: <span id="done-agreement">${
        agreement === null ? 'n/a' : (agreement * 100).toFixed(1) + '%'
      }</span></p>`;
  }

  private setStatus(text: string): void {
    this.els.status.textContent = text;
  }
}
