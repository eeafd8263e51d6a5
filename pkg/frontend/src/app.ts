/** DOM wiring: tree panel, branch dialog, heatmap playback, savings panel.
 * State lives on the server; the page re-derives its view from GET /tree and
 * GET /report, polling while runs are in flight. */

import { ApiClient } from "./api.js";
import { submitBranch, validateBranchInput } from "./branchDialog.js";
import { drawFrame, valueRange } from "./heatmap.js";
import { PlaybackController } from "./playback.js";
import { buildSavingsView } from "./savings.js";
import {
  buildTreeView,
  displayWindow,
  runningNodes,
  selectNode,
  selectedNode,
  setCursor,
  TreeViewModel,
} from "./treeView.js";
import type { TreePayload } from "./types.js";

const POLL_MS = 1000;

interface AppState {
  api: ApiClient;
  payload: TreePayload | null;
  vm: TreeViewModel | null;
  playback: PlaybackController | null;
}

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

async function refreshTree(state: AppState): Promise<void> {
  try {
    state.payload = await state.api.getTree();
  } catch {
    el<HTMLElement>("status-line").textContent = "no store yet: create a simulation";
    return;
  }
  state.vm = buildTreeView(state.payload, state.vm ?? undefined);
  renderTree(state);
  renderNodeDetail(state);
  await refreshSavings(state);
}

function renderTree(state: AppState): void {
  const list = el<HTMLUListElement>("tree-list");
  list.innerHTML = "";
  if (!state.vm) return;
  for (const row of state.vm.rows) {
    const item = document.createElement("li");
    item.className = `tree-row status-${row.node.status}`;
    if (row.node.node_id === state.vm.selectedId) item.classList.add("selected");
    item.style.paddingLeft = `${row.depth * 18 + 6}px`;
    const branchText = row.branchStep === null ? "" : ` @${row.branchStep}`;
    const marks = row.annotationMarkers.length ? ` [${row.annotationMarkers.join("")}]` : "";
    item.textContent =
      `${row.statusBadge} ${row.node.node_id}${branchText} ` +
      `(${row.node.window[0]}–${row.node.window[1]})${marks}`;
    item.onclick = () => {
      if (!state.vm) return;
      state.vm = selectNode(state.vm, row.node.node_id);
      renderTree(state);
      renderNodeDetail(state);
      void loadPlayback(state);
    };
    list.appendChild(item);
  }
}

function renderNodeDetail(state: AppState): void {
  const detail = el<HTMLElement>("node-detail");
  const node = state.vm ? selectedNode(state.vm) : null;
  if (!node) {
    detail.textContent = "no node selected";
    return;
  }
  const lines = [
    `node ${node.node_id}  status ${node.status}`,
    `window [${node.window[0]}, ${node.window[1]}]`,
    `params ${JSON.stringify(node.params)}`,
  ];
  if (node.suffix_link) {
    lines.push(
      `reuses ${node.suffix_link.donor_id} from step ${node.suffix_link.from_step}`,
    );
  }
  for (const a of node.annotations) {
    lines.push(`· ${a.kind}: ${a.text}`);
  }
  if (node.failure) lines.push(`failure: ${node.failure}`);
  detail.textContent = lines.join("\n");
}

async function loadPlayback(state: AppState): Promise<void> {
  if (!state.vm || !state.payload) return;
  const node = selectedNode(state.vm);
  if (!node) return;
  const [lo, hi] = displayWindow(node);
  if (hi <= lo) {
    el<HTMLElement>("playback-range").textContent = "nothing stored yet";
    return;
  }
  state.playback = new PlaybackController(state.api, node.node_id, lo, hi);
  try {
    await state.playback.load();
  } catch (err) {
    el<HTMLElement>("playback-range").textContent = `stored range unavailable: ${String(err)}`;
    state.playback = null;
    return;
  }
  const scrubber = el<HTMLInputElement>("scrubber");
  scrubber.min = String(lo);
  scrubber.max = String(hi);
  const step = Math.min(Math.max(state.vm.cursorStep, lo), hi);
  scrubber.value = String(step);
  state.vm = setCursor(state.vm, step);
  el<HTMLElement>("playback-range").textContent = `steps ${lo}–${hi}`;
  renderFrame(state);
}

function renderFrame(state: AppState): void {
  if (!state.playback || !state.vm || !state.payload) return;
  const frame = state.playback.frameAt(state.vm.cursorStep);
  const { width, height } = state.payload.spec;
  const canvas = el<HTMLCanvasElement>("heatmap");
  const firstFrame = state.playback.frameAt(state.playback.stepRange[0]);
  drawFrame(canvas, frame.cells, width, height, valueRange(firstFrame.cells.concat(frame.cells)));
  el<HTMLElement>("cursor-label").textContent = `step ${frame.step}`;
}

async function refreshSavings(state: AppState): Promise<void> {
  const panel = el<HTMLElement>("savings-panel");
  try {
    const view = buildSavingsView(await state.api.getReport());
    if (!view) {
      panel.textContent = "savings appear once every branch has run";
      return;
    }
    const header =
      `ratio ${view.ratio.toFixed(4)}  ` +
      `branching ${view.stepsBranching} vs linear ${view.stepsLinear} ` +
      `(saved ${view.savedSteps})` +
      (view.adviceLine ? `\n${view.adviceLine}` : "");
    const rows = view.bars
      .map((b) => {
        const seg = (pct: number, cls: string) =>
          `<span class="bar ${cls}" style="width:${pct.toFixed(1)}%"></span>`;
        return (
          `<div class="bar-row"><code>${b.id}</code> ` +
          seg(b.freshPct, "fresh") + seg(b.replayPct, "replay") + seg(b.reusedPct, "reused") +
          ` <small>${b.fresh}f/${b.replay}rp/${b.reused}ru</small></div>`
        );
      })
      .join("");
    panel.innerHTML = `<pre>${header}</pre>${rows}`;
  } catch {
    panel.textContent = "savings appear once every branch has run";
  }
}

function wireBranchDialog(state: AppState): void {
  el<HTMLButtonElement>("branch-submit").onclick = async () => {
    const feedback = el<HTMLElement>("branch-feedback");
    if (!state.vm) return;
    const node = selectedNode(state.vm);
    if (!node) {
      feedback.textContent = "select a node first";
      return;
    }
    const validation = validateBranchInput(
      node,
      el<HTMLInputElement>("branch-step").value,
      el<HTMLTextAreaElement>("branch-overrides").value,
      el<HTMLSelectElement>("branch-annotation-kind").value,
      el<HTMLInputElement>("branch-annotation-text").value,
    );
    if (!validation.ok) {
      feedback.textContent = validation.reason;
      return;
    }
    const outcome = await submitBranch(state.api, node.node_id, validation.input);
    if (!outcome.ok) {
      feedback.textContent = outcome.reason;
      return;
    }
    feedback.textContent = `created ${outcome.nodeId}`;
    await refreshTree(state);
    if (state.vm) {
      state.vm = selectNode(state.vm, outcome.nodeId);
      renderTree(state);
      renderNodeDetail(state);
    }
  };
}

function wireRunButton(state: AppState): void {
  el<HTMLButtonElement>("run-submit").onclick = async () => {
    if (!state.vm) return;
    const node = selectedNode(state.vm);
    if (!node) return;
    const until = Number(el<HTMLInputElement>("run-until").value);
    const feedback = el<HTMLElement>("branch-feedback");
    try {
      const token = await state.api.runNode(node.node_id, until);
      feedback.textContent = `run started (${token.token.slice(0, 8)})`;
    } catch (err) {
      feedback.textContent = String(err);
    }
    await refreshTree(state);
  };
}

function wireScrubber(state: AppState): void {
  el<HTMLInputElement>("scrubber").oninput = (event) => {
    if (!state.vm) return;
    const step = Number((event.target as HTMLInputElement).value);
    state.vm = setCursor(state.vm, step);
    renderFrame(state);
  };
}

export async function startApp(baseUrl: string): Promise<void> {
  const state: AppState = {
    api: new ApiClient(baseUrl),
    payload: null,
    vm: null,
    playback: null,
  };
  wireBranchDialog(state);
  wireRunButton(state);
  wireScrubber(state);
  await refreshTree(state);
  await loadPlayback(state);
  setInterval(() => {
    void (async () => {
      const before = state.vm ? runningNodes(state.vm).join(",") : "";
      await refreshTree(state);
      const after = state.vm ? runningNodes(state.vm).join(",") : "";
      if (before !== after) {
        await loadPlayback(state);
      }
    })();
  }, POLL_MS);
}

declare global {
  interface Window {
    branchsimStart: (baseUrl: string) => Promise<void>;
  }
}

if (typeof window !== "undefined") {
  window.branchsimStart = startApp;
}
