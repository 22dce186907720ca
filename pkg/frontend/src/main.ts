// Boot the workbench against the configured server (same origin by default,
// window.POINTSUP_SERVER or ?server=... to point elsewhere during dev).

import { Workbench, type WorkbenchElements } from './session';

declare global {
  interface Window {
    POINTSUP_SERVER?: string;
    workbench?: Workbench;
  }
}

export function collectElements(doc: Document): WorkbenchElements {
  const get = <T extends HTMLElement>(id: string): T => {
    const el = doc.getElementById(id);
    if (!el) throw new Error(`missing #${id} in the page`);
    return el as T;
  };
  return {
    contextCanvas: get<HTMLCanvasElement>('context-view'),
    zoomCanvas: get<HTMLCanvasElement>('zoom-view'),
    category: get('category'),
    progress: get('progress'),
    status: get('status'),
    doneScreen: get('done-screen'),
    taskScreen: get('task-screen'),
  };
}

function serverUrl(win: Window): string {
  const fromQuery = new URLSearchParams(win.location.search).get('server');
  return fromQuery ?? win.POINTSUP_SERVER ?? win.location.origin;
}

export async function boot(win: Window): Promise<Workbench> {
  const els = collectElements(win.document);
  const params = new URLSearchParams(win.location.search);
  const bench = new Workbench(serverUrl(win), els, {
    nPoints: Number(params.get('points') ?? 10),
    seed: Number(params.get('seed') ?? 0),
  });
  win.document.getElementById('btn-object')?.addEventListener('click', () => void bench.capture('object'));
  win.document
    .getElementById('btn-background')
    ?.addEventListener('click', () => void bench.capture('background'));
  await bench.start(win);
  win.workbench = bench;
  return bench;
}

if (typeof window !== 'undefined' && typeof document !== 'undefined' && document.getElementById('task-screen')) {
  window.addEventListener('DOMContentLoaded', () => void boot(window));
  if (document.readyState !== 'loading') {
    void boot(window);
  }
}
