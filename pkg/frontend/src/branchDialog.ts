/** Branch dialog logic: input validation and the server round trip.
 * Server rejections (409 duplicates, 409 not-yet-simulated, 422 invariants)
 * surface inline with the server's own reason. */

import { ApiClient, ApiError } from "./api.js";
import type { AnnotationRecord, NodeRecord } from "./types.js";

export interface BranchInput {
  step: number;
  overrides: Record<string, unknown>;
  annotations: AnnotationRecord[];
}

export type Validation =
  | { ok: true; input: BranchInput }
  | { ok: false; reason: string };

export function validateBranchInput(
  node: NodeRecord,
  stepText: string,
  overridesText: string,
  annotationKind = "",
  annotationText = "",
): Validation {
  const step = Number(stepText);
  if (!Number.isInteger(step)) {
    return { ok: false, reason: `branch step must be an integer, got "${stepText}"` };
  }
  const [start, end] = node.window;
  if (step < start || step > end) {
    return { ok: false, reason: `step ${step} outside simulated window [${start}, ${end}]` };
  }
  let overrides: Record<string, unknown> = {};
  const trimmed = overridesText.trim();
  if (trimmed.length > 0) {
    try {
      const parsed: unknown = JSON.parse(trimmed);
      if (typeof parsed !== "object" || parsed === null || Array.isArray(parsed)) {
        return { ok: false, reason: "overrides must be a JSON object" };
      }
      overrides = parsed as Record<string, unknown>;
    } catch (err) {
      return { ok: false, reason: `overrides are not valid JSON: ${(err as Error).message}` };
    }
  }
  const annotations: AnnotationRecord[] = [];
  if (annotationKind) {
    if (annotationKind === "conditional" && annotationText.trim() === "") {
      return { ok: false, reason: "conditional annotations need the prescribed action" };
    }
    annotations.push({ kind: annotationKind, text: annotationText });
  }
  return { ok: true, input: { step, overrides, annotations } };
}

export type BranchOutcome =
  | { ok: true; nodeId: string }
  | { ok: false; reason: string; existing?: string };

/** POST the branch; on success callers refresh the tree and select the child. */
export async function submitBranch(
  api: ApiClient,
  nodeId: string,
  input: BranchInput,
): Promise<BranchOutcome> {
  try {
    const response = await api.branchNode(nodeId, {
      at_step: input.step,
      overrides: input.overrides,
      annotations: input.annotations,
    });
    return { ok: true, nodeId: response.node_id };
  } catch (err) {
    if (err instanceof ApiError) {
      return { ok: false, reason: `${err.errorName}: ${err.message}` };
    }
    throw err;
  }
}
