/** View model over GET /tree: a flattened, depth-annotated forest that
 * mirrors the server manifest exactly and never mutates it locally. */

import type { NodeRecord, TreePayload } from "./types.js";

export interface TreeRow {
  node: NodeRecord;
  rootId: string;
  depth: number;
  branchStep: number | null;
  statusBadge: string;
  annotationMarkers: string[];
}

export interface TreeViewModel {
  rows: TreeRow[];
  selectedId: string | null;
  cursorStep: number;
}

const STATUS_BADGES: Record<string, string> = {
  pending: "…",
  running: "▶",
  complete: "✓",
  reused: "↺",
  failed: "✗",
};

function rowsForTree(payload: TreePayload, rootId: string): TreeRow[] {
  const tree = payload.trees.find((t) => t.root_id === rootId);
  if (!tree) {
    return [];
  }
  const byParent = new Map<string | null, NodeRecord[]>();
  for (const node of tree.nodes) {
    const list = byParent.get(node.parent_id) ?? [];
    list.push(node);
    byParent.set(node.parent_id, list);
  }
  const rows: TreeRow[] = [];
  const visit = (node: NodeRecord, depth: number) => {
    rows.push({
      node,
      rootId,
      depth,
      branchStep: node.branch_point ? node.branch_point.branch_step : null,
      statusBadge: STATUS_BADGES[node.status] ?? "?",
      annotationMarkers: node.annotations.map((a) => a.kind[0].toUpperCase()),
    });
    for (const child of byParent.get(node.node_id) ?? []) {
      visit(child, depth + 1);
    }
  };
  const root = tree.nodes.find((n) => n.parent_id === null);
  if (root) {
    visit(root, 0);
  }
  return rows;
}

export function buildTreeView(payload: TreePayload, previous?: TreeViewModel): TreeViewModel {
  const rows = payload.trees.flatMap((tree) => rowsForTree(payload, tree.root_id));
  const selectedId =
    previous && rows.some((r) => r.node.node_id === previous.selectedId)
      ? previous.selectedId
      : rows[0]?.node.node_id ?? null;
  const cursorStep = previous ? previous.cursorStep : 0;
  return { rows, selectedId, cursorStep };
}

export function selectNode(vm: TreeViewModel, nodeId: string): TreeViewModel {
  if (!vm.rows.some((r) => r.node.node_id === nodeId)) {
    return vm;
  }
  return { ...vm, selectedId: nodeId };
}

export function setCursor(vm: TreeViewModel, step: number): TreeViewModel {
  return { ...vm, cursorStep: step };
}

export function selectedNode(vm: TreeViewModel): NodeRecord | null {
  return vm.rows.find((r) => r.node.node_id === vm.selectedId)?.node ?? null;
}

/** Steps the UI may scrub for a node: lineage makes everything from the
 * root's start visible, so playback spans [0, node end]. */
export function displayWindow(node: NodeRecord): [number, number] {
  return [0, node.window[1]];
}

export function runningNodes(vm: TreeViewModel): string[] {
  return vm.rows.filter((r) => r.node.status === "running").map((r) => r.node.node_id);
}
