// Layout math and canvas painting for the two task views. The geometry
// (crop rectangles, zoom scale) comes from the server; the client only
// applies the transforms, so the layout functions are pure and testable.

import type { TaskPayload, ViewRect } from './api';

export interface ViewLayout {
  // canvas size in CSS pixels and the source crop it displays
  width: number;
  height: number;
  crop: ViewRect;
  scale: number; // screen px per image px
  // marker position in canvas coordinates
  markerX: number;
  markerY: number;
}

export const CONTEXT_MAX_SIDE = 480;

/** Whole-object view: server crop scaled to fit a CONTEXT_MAX_SIDE box. */
export function contextLayout(task: TaskPayload, maxSide: number = CONTEXT_MAX_SIDE): ViewLayout {
  const crop = task.view_geometry.context_view;
  const scale = Math.min(maxSide / crop.w, maxSide / crop.h);
  return layoutFor(crop, scale, task.point.x, task.point.y);
}

/** Zoomed patch centered on the point, at the server-provided magnification. */
export function zoomLayout(task: TaskPayload): ViewLayout {
  const crop = task.view_geometry.zoom_view;
  return layoutFor(crop, crop.scale ?? 4, task.point.x, task.point.y);
}

function layoutFor(crop: ViewRect, scale: number, px: number, py: number): ViewLayout {
  return {
    width: Math.round(crop.w * scale),
    height: Math.round(crop.h * scale),
    crop,
    scale,
    markerX: (px - crop.x) * scale,
    markerY: (py - crop.y) * scale,
  };
}

/** Box rectangle expressed in a view's canvas coordinates. */
export function boxInView(task: TaskPayload, layout: ViewLayout) {
  const [bx, by, bw, bh] = task.bbox;
  return {
    x: (bx - layout.crop.x) * layout.scale,
    y: (by - layout.crop.y) * layout.scale,
    w: bw * layout.scale,
    h: bh * layout.scale,
  };
}

export interface PaintOptions {
  drawBox: boolean;
  categoryLabel?: string;
}

export function paintView(
  canvas: HTMLCanvasElement,
  image: CanvasImageSource | null,
  task: TaskPayload,
  layout: ViewLayout,
  opts: PaintOptions,
): void {
  canvas.width = layout.width;
  canvas.height = layout.height;
  const ctx = canvas.getContext('2d');
  if (!ctx) return; // jsdom has no 2d context; layout is still applied
  ctx.imageSmoothingEnabled = layout.scale < 2;
  ctx.fillStyle = '#222';
  ctx.fillRect(0, 0, layout.width, layout.height);
  if (image) {
    ctx.drawImage(
      image,
      layout.crop.x,
      layout.crop.y,
      layout.crop.w,
      layout.crop.h,
      0,
      0,
      layout.width,
      layout.height,
    );
  }
  if (opts.drawBox) {
    const box = boxInView(task, layout);
    ctx.strokeStyle = '#ffd43b';
    ctx.lineWidth = 2;
    ctx.strokeRect(box.x, box.y, box.w, box.h);
    if (opts.categoryLabel) {
      ctx.font = '14px sans-serif';
      ctx.fillStyle = '#ffd43b';
      ctx.fillText(opts.categoryLabel, box.x + 4, Math.max(box.y - 6, 14));
    }
  }
  drawMarker(ctx, task, layout, opts.drawBox);
}

function drawMarker(
  ctx: CanvasRenderingContext2D,
  task: TaskPayload,
  layout: ViewLayout,
  withHighlightBox: boolean,
): void {
  const marker = task.view_geometry.marker;
  if (withHighlightBox) {
    // green box so the marker stays spottable on large objects
    const side = marker.highlight_box;
    ctx.strokeStyle = '#2ecc40';
    ctx.lineWidth = 2;
    ctx.strokeRect(layout.markerX - side / 2, layout.markerY - side / 2, side, side);
  }
  ctx.beginPath();
  ctx.arc(layout.markerX, layout.markerY, marker.radius, 0, 2 * Math.PI);
  ctx.strokeStyle = '#b55ef0';
  ctx.lineWidth = 2;
  ctx.stroke();
  ctx.beginPath();
  ctx.arc(layout.markerX, layout.markerY, 1.5, 0, 2 * Math.PI);
  ctx.fillStyle = '#b55ef0';
  ctx.fill();
}
