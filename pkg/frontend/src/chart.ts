/** Minimal canvas line chart: one series, time on x, autoscaled y. */

import type { SeriesPoint } from "./model.js";

export interface ChartStyle {
  stroke: string;
  gridColor: string;
  textColor: string;
}

const DEFAULT_STYLE: ChartStyle = {
  stroke: "#2a9d8f",
  gridColor: "#e0e4e8",
  textColor: "#5a6570",
};

export function drawSeries(
  canvas: HTMLCanvasElement,
  points: readonly SeriesPoint[],
  style: Partial<ChartStyle> = {},
): void {
  const { stroke, gridColor, textColor } = { ...DEFAULT_STYLE, ...style };
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  const w = canvas.width;
  const h = canvas.height;
  const padLeft = 44;
  const padBottom = 18;
  const padTop = 8;
  ctx.clearRect(0, 0, w, h);
  if (points.length === 0) {
    ctx.fillStyle = textColor;
    ctx.font = "12px sans-serif";
    ctx.fillText("no data yet", padLeft, h / 2);
    return;
  }

  const t0 = points[0]!.ts_ms;
  const t1 = points[points.length - 1]!.ts_ms;
  let lo = Infinity;
  let hi = -Infinity;
  for (const p of points) {
    lo = Math.min(lo, p.value);
    hi = Math.max(hi, p.value);
  }
  if (hi - lo < 1e-9) {
    lo -= 0.5;
    hi += 0.5;
  }
  const spanT = Math.max(t1 - t0, 1);
  const plotW = w - padLeft - 6;
  const plotH = h - padTop - padBottom;
  const x = (ts: number) => padLeft + ((ts - t0) / spanT) * plotW;
  const y = (v: number) => padTop + (1 - (v - lo) / (hi - lo)) * plotH;

  ctx.strokeStyle = gridColor;
  ctx.fillStyle = textColor;
  ctx.font = "11px sans-serif";
  ctx.lineWidth = 1;
  for (const frac of [0, 0.5, 1]) {
    const value = lo + (hi - lo) * frac;
    const gy = y(value);
    ctx.beginPath();
    ctx.moveTo(padLeft, gy);
    ctx.lineTo(w - 6, gy);
    ctx.stroke();
    ctx.fillText(value.toFixed(2), 4, gy + 4);
  }

  ctx.strokeStyle = stroke;
  ctx.lineWidth = 1.6;
  ctx.beginPath();
  points.forEach((p, i) => {
    if (i === 0) ctx.moveTo(x(p.ts_ms), y(p.value));
    else ctx.lineTo(x(p.ts_ms), y(p.value));
  });
  ctx.stroke();

  const hours = (spanT / 3_600_000).toFixed(1);
  ctx.fillText(`${hours} h window`, padLeft, h - 5);
}
