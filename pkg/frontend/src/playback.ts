/** Frame playback over a stored window: the first frame arrives full, the
 * rest as changed-cells deltas folded client-side. */

import { ApiClient } from "./api.js";
import { foldFrames } from "./foldDeltas.js";
import type { Frame } from "./types.js";

export class PlaybackController {
  readonly nodeId: string;
  readonly from: number;
  readonly to: number;
  private frames: Frame[] = [];

  constructor(
    private readonly api: ApiClient,
    nodeId: string,
    from: number,
    to: number,
  ) {
    if (to < from) {
      throw new Error(`playback window inverted: [${from}, ${to}]`);
    }
    this.nodeId = nodeId;
    this.from = from;
    this.to = to;
  }

  async load(): Promise<void> {
    if (this.to === this.from) {
      const full = await this.api.getFrames(this.nodeId, this.from, this.to);
      this.frames = full.frames;
      return;
    }
    const packed = await this.api.getFrameDeltas(this.nodeId, this.from, this.to);
    this.frames = foldFrames(packed.base, packed.deltas);
  }

  get loaded(): boolean {
    return this.frames.length > 0;
  }

  get stepRange(): [number, number] {
    return [this.from, this.to];
  }

  frameAt(step: number): Frame {
    const index = step - this.from;
    const frame = this.frames[index];
    if (!frame) {
      throw new Error(`step ${step} outside loaded window [${this.from}, ${this.to}]`);
    }
    return frame;
  }

  /** Re-fetch one frame full-size, for spot checks against the folded copy. */
  fetchFull(step: number): Promise<Frame> {
    return this.api.getFrames(this.nodeId, step, step).then((r) => r.frames[0]);
  }
}
