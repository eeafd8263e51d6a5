/** Client-side delta folding: the changed-cells-only transport is rebuilt
 * into full frames exactly, entry by entry. */

import type { Frame, FrameDelta } from "./types.js";

export function applyDelta(cells: number[], delta: FrameDelta): number[] {
  const next = cells.slice();
  for (const [index, value] of delta.entries) {
    next[index] = value;
  }
  return next;
}

/** Fold deltas over a base frame, returning every frame including the base. */
export function foldFrames(base: Frame, deltas: FrameDelta[]): Frame[] {
  const frames: Frame[] = [{ step: base.step, cells: base.cells.slice() }];
  let cells = base.cells;
  for (const delta of deltas) {
    cells = applyDelta(cells, delta);
    frames.push({ step: delta.step, cells });
  }
  return frames;
}

export function framesEqual(a: Frame, b: Frame): boolean {
  if (a.step !== b.step || a.cells.length !== b.cells.length) {
    return false;
  }
  for (let i = 0; i < a.cells.length; i += 1) {
    // Object.is distinguishes -0 from 0 and treats NaN as equal to itself.
    if (!Object.is(a.cells[i], b.cells[i])) {
      return false;
    }
  }
  return true;
}
