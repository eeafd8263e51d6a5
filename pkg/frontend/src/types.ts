/** Payload shapes of the branchsim HTTP/JSON API. */

export interface GridSpec {
  simulator_id: string;
  width: number;
  height: number;
  cell_size_h: number;
}

export interface BranchPointRecord {
  branch_step: number;
  parent_state_digest: string;
  overrides: Record<string, unknown>;
}

export interface AnnotationRecord {
  kind: string;
  text: string;
}

export interface SuffixLinkRecord {
  donor_id: string;
  from_step: number;
  donor_from_step: number;
  until_step: number;
}

export interface NodeRecord {
  node_id: string;
  parent_id: string | null;
  branch_point: BranchPointRecord | null;
  params: Record<string, unknown>;
  window: [number, number];
  status: string;
  annotations: AnnotationRecord[];
  suffix_link: SuffixLinkRecord | null;
  failure: string | null;
}

export interface TreeManifest {
  root_id: string;
  child_seq: number;
  nodes: NodeRecord[];
}

export interface TreePayload {
  spec: GridSpec;
  checkpoint_interval: number;
  trees: TreeManifest[];
}

export interface Frame {
  step: number;
  cells: number[];
}

export interface FrameDelta {
  step: number;
  entries: [number, number][];
}

export interface FramesFull {
  frames: Frame[];
}

export interface FramesDelta {
  base: Frame;
  deltas: FrameDelta[];
}

export interface RunToken {
  token: string;
}

export interface RunStatus {
  status: "running" | "complete" | "failed";
  node_id: string;
  error: string | null;
}

export interface SavingsNode {
  id: string;
  fresh: number;
  replay: number;
  reused: number;
}

export interface SavingsPayload {
  steps_linear: number;
  steps_branching: number;
  ratio: number;
  nodes: SavingsNode[];
}

export interface EquivalenceClassPayload {
  digest: string;
  members: string[];
}

export interface ReportPayload {
  savings: SavingsPayload | null;
  equivalence: {
    interval: [number, number];
    observation: { mode: string; roi: number[] | null };
    classes: EquivalenceClassPayload[];
  } | null;
  advice: {
    verdict: string;
    prefix_classes: number;
    suffix_classes: number;
  } | null;
}
