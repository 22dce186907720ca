import { describe, expect, it } from 'vitest';

import type { TaskPayload } from '../src/api';
import { boxInView, contextLayout, zoomLayout } from '../src/views';

function task(overrides: Partial<TaskPayload> = {}): TaskPayload {
  return {
    task_id: 0,
    instance_id: 1,
    image_url: '/images/x.png',
    image_width: 64,
    image_height: 64,
    category: 'blob',
    bbox: [10, 8, 20, 16],
    point: { x: 14.25, y: 12.5 },
    view_geometry: {
      context_view: { x: 6, y: 4.8, w: 28, h: 22.4 },
      zoom_view: { x: 0, y: 0, w: 64, h: 64, scale: 4 },
      marker: { radius: 6, highlight_box: 24 },
    },
    progress: { labeled: 0, total: 20 },
    ...overrides,
  };
}

describe('contextLayout', () => {
  it('scales the server crop to fit the view box', () => {
    const layout = contextLayout(task(), 480);
    // crop is 28 x 22.4 image px; the wide side pins the scale
    expect(layout.scale).toBeCloseTo(480 / 28, 12);
    expect(layout.width).toBe(480);
    expect(layout.height).toBe(Math.round(22.4 * (480 / 28)));
  });

  it('places the marker exactly under the crop transform', () => {
    const t = task();
    const layout = contextLayout(t, 480);
    const s = 480 / 28;
    expect(layout.markerX).toBeCloseTo((14.25 - 6) * s, 12);
    expect(layout.markerY).toBeCloseTo((12.5 - 4.8) * s, 12);
  });

  it('maps the bounding box with the same transform', () => {
    const t = task();
    const layout = contextLayout(t, 480);
    const box = boxInView(t, layout);
    expect(box.x).toBeCloseTo((10 - 6) * layout.scale, 12);
    expect(box.y).toBeCloseTo((8 - 4.8) * layout.scale, 12);
    expect(box.w).toBeCloseTo(20 * layout.scale, 12);
    expect(box.h).toBeCloseTo(16 * layout.scale, 12);
  });
});

describe('zoomLayout', () => {
  it('uses the server magnification', () => {
    const layout = zoomLayout(task());
    expect(layout.scale).toBe(4);
    expect(layout.width).toBe(256);
    expect(layout.markerX).toBeCloseTo(14.25 * 4, 12);
    expect(layout.markerY).toBeCloseTo(12.5 * 4, 12);
  });

  it('keeps the marker inside the canvas for clamped windows', () => {
    // a corner point whose zoom window was shifted by the server
    const t = task({
      point: { x: 2, y: 3 },
      view_geometry: {
        context_view: { x: 0, y: 0, w: 30, h: 30 },
        zoom_view: { x: 0, y: 0, w: 16, h: 16, scale: 4 },
        marker: { radius: 6, highlight_box: 24 },
      },
    });
    const layout = zoomLayout(t);
    expect(layout.markerX).toBeGreaterThanOrEqual(0);
    expect(layout.markerY).toBeGreaterThanOrEqual(0);
    expect(layout.markerX).toBeLessThanOrEqual(layout.width);
    expect(layout.markerY).toBeLessThanOrEqual(layout.height);
  });
});
