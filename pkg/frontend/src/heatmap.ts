/** Canvas heatmap rendering for frame playback. */

export function valueRange(cells: number[]): [number, number] {
  let lo = Infinity;
  let hi = -Infinity;
  for (const v of cells) {
    if (v < lo) lo = v;
    if (v > hi) hi = v;
  }
  if (!Number.isFinite(lo)) {
    return [0, 1];
  }
  return lo === hi ? [lo, lo + 1] : [lo, hi];
}

/** Cold-to-hot ramp: dark blue, cyan, yellow, red. */
export function colorFor(value: number, lo: number, hi: number): [number, number, number] {
  const t = Math.min(1, Math.max(0, (value - lo) / (hi - lo)));
  if (t < 1 / 3) {
    const u = t * 3;
    return [0, Math.round(80 + 175 * u), Math.round(120 + 135 * u)];
  }
  if (t < 2 / 3) {
    const u = (t - 1 / 3) * 3;
    return [Math.round(255 * u), 255, Math.round(255 * (1 - u))];
  }
  const u = (t - 2 / 3) * 3;
  return [255, Math.round(255 * (1 - u)), 0];
}

export function cellsToRgba(
  cells: number[],
  lo: number,
  hi: number,
): Uint8ClampedArray<ArrayBuffer> {
  const rgba = new Uint8ClampedArray(new ArrayBuffer(cells.length * 4));
  for (let i = 0; i < cells.length; i += 1) {
    const [r, g, b] = colorFor(cells[i], lo, hi);
    rgba[4 * i] = r;
    rgba[4 * i + 1] = g;
    rgba[4 * i + 2] = b;
    rgba[4 * i + 3] = 255;
  }
  return rgba;
}

export function drawFrame(
  canvas: HTMLCanvasElement,
  cells: number[],
  width: number,
  height: number,
  range?: [number, number],
): void {
  const [lo, hi] = range ?? valueRange(cells);
  canvas.width = width;
  canvas.height = height;
  const ctx = canvas.getContext("2d");
  if (!ctx) {
    return;
  }
  const image = new ImageData(cellsToRgba(cells, lo, hi), width, height);
  ctx.putImageData(image, 0, 0);
}
