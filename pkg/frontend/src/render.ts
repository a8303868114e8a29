// Canvas drawing for the console: grayscale slice, remaining-angle dial,
// rotation-axis arrow, and the translation vector toward the target plane.
// Formatting helpers are split out so tests can check displayed values
// without a canvas.

import { Guidance, SlicePayload } from "./api.js";

export function dialDegrees(angleRad: number): number {
  return (angleRad * 180) / Math.PI;
}

export function dialText(angleRad: number): string {
  return `${dialDegrees(angleRad).toFixed(1)}°`;
}

export function translationText(translation: number[]): string {
  const mag = Math.hypot(translation[0], translation[1], translation[2]);
  return `|t| = ${mag.toFixed(3)}`;
}

export function drawSlice(ctx: CanvasRenderingContext2D, slice: SlicePayload): void {
  const image = ctx.createImageData(slice.width, slice.height);
  for (let i = 0; i < slice.pixels.length; i++) {
    const v = slice.pixels[i];
    image.data[4 * i] = v;
    image.data[4 * i + 1] = v;
    image.data[4 * i + 2] = v;
    image.data[4 * i + 3] = 255;
  }
  ctx.putImageData(image, 0, 0);
}

export function drawGuidance(
  ctx: CanvasRenderingContext2D,
  guidance: Guidance,
  size: number,
): void {
  const cx = size / 2;
  const cy = size / 2;

  // remaining-angle dial, bottom-left corner
  const r = size * 0.11;
  const dx = r + 8;
  const dy = size - r - 8;
  ctx.strokeStyle = "#3a3f44";
  ctx.lineWidth = 3;
  ctx.beginPath();
  ctx.arc(dx, dy, r, 0, 2 * Math.PI);
  ctx.stroke();
  ctx.strokeStyle = "#ffd166";
  ctx.beginPath();
  ctx.arc(dx, dy, r, -Math.PI / 2, -Math.PI / 2 + guidance.angle);
  ctx.stroke();
  ctx.fillStyle = "#ffd166";
  ctx.font = `${Math.round(size * 0.055)}px sans-serif`;
  ctx.textAlign = "center";
  ctx.fillText(dialText(guidance.angle), dx, dy + 4);

  // rotation axis projected onto the view plane
  const ax = guidance.axis[0];
  const ay = guidance.axis[1];
  const planar = Math.hypot(ax, ay);
  if (planar > 1e-6) {
    const len = size * 0.28;
    const ex = cx + (ax / planar) * len;
    const ey = cy - (ay / planar) * len;
    arrow(ctx, cx, cy, ex, ey, "#ef476f");
  }

  // translation toward the plane, drawn from center, z ignored
  const tx = guidance.translation[0];
  const ty = guidance.translation[1];
  const tmag = Math.hypot(tx, ty);
  if (tmag > 1e-6) {
    const len = Math.min(tmag, 0.5) * size;
    arrow(ctx, cx, cy, cx + (tx / tmag) * len, cy - (ty / tmag) * len, "#06d6a0");
  }
  ctx.fillStyle = "#06d6a0";
  ctx.textAlign = "left";
  ctx.fillText(translationText(guidance.translation), 8, Math.round(size * 0.07));
}

function arrow(
  ctx: CanvasRenderingContext2D,
  x0: number,
  y0: number,
  x1: number,
  y1: number,
  color: string,
): void {
  const head = 7;
  const angle = Math.atan2(y1 - y0, x1 - x0);
  ctx.strokeStyle = color;
  ctx.fillStyle = color;
  ctx.lineWidth = 2;
  ctx.beginPath();
  ctx.moveTo(x0, y0);
  ctx.lineTo(x1, y1);
  ctx.stroke();
  ctx.beginPath();
  ctx.moveTo(x1, y1);
  ctx.lineTo(x1 - head * Math.cos(angle - 0.4), y1 - head * Math.sin(angle - 0.4));
  ctx.lineTo(x1 - head * Math.cos(angle + 0.4), y1 - head * Math.sin(angle + 0.4));
  ctx.closePath();
  ctx.fill();
}
