/** Savings panel data: the branching ratio plus per-node bars showing how
 * much work was fresh, replayed, or reused. */

import type { ReportPayload, SavingsPayload } from "./types.js";

export interface SavingsBar {
  id: string;
  fresh: number;
  replay: number;
  reused: number;
  total: number;
  freshPct: number;
  replayPct: number;
  reusedPct: number;
}

export interface SavingsView {
  ratio: number;
  stepsLinear: number;
  stepsBranching: number;
  savedSteps: number;
  bars: SavingsBar[];
  adviceLine: string | null;
}

function bar(node: SavingsPayload["nodes"][number], scale: number): SavingsBar {
  const total = node.fresh + node.replay + node.reused;
  return {
    id: node.id,
    fresh: node.fresh,
    replay: node.replay,
    reused: node.reused,
    total,
    freshPct: scale > 0 ? (100 * node.fresh) / scale : 0,
    replayPct: scale > 0 ? (100 * node.replay) / scale : 0,
    reusedPct: scale > 0 ? (100 * node.reused) / scale : 0,
  };
}

export function buildSavingsView(report: ReportPayload): SavingsView | null {
  const savings = report.savings;
  if (!savings) {
    return null;
  }
  const scale = Math.max(
    1,
    ...savings.nodes.map((n) => n.fresh + n.replay + n.reused),
  );
  const advice = report.advice;
  return {
    ratio: savings.ratio,
    stepsLinear: savings.steps_linear,
    stepsBranching: savings.steps_branching,
    savedSteps: savings.steps_linear - savings.steps_branching,
    bars: savings.nodes.map((n) => bar(n, scale)),
    adviceLine: advice
      ? `${advice.verdict} (prefix ${advice.prefix_classes}, suffix ${advice.suffix_classes})`
      : null,
  };
}
