// Paints a decoded frame bitmap onto a canvas, one cell per pixel.

import type { Bitmap } from "./pbm";

const LIT = "#7fd4ff";
const DARK = "#0a1014";

export function paintBitmap(canvas: HTMLCanvasElement, bitmap: Bitmap): void {
  canvas.width = bitmap.width;
  canvas.height = bitmap.height;
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  ctx.fillStyle = DARK;
  ctx.fillRect(0, 0, bitmap.width, bitmap.height);
  ctx.fillStyle = LIT;
  for (let y = 0; y < bitmap.height; y++) {
    for (let x = 0; x < bitmap.width; x++) {
      if (bitmap.bits[y * bitmap.width + x]) ctx.fillRect(x, y, 1, 1);
    }
  }
}
