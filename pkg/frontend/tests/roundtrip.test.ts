/** Round trip against the real service: the dialog path produces the same
 * tree manifest as a direct API call, and delta playback renders frames
 * identical to full fetches. Spawns `python3 -m branchsim serve` per store. */

import { spawn, ChildProcess } from "node:child_process";
import { mkdtempSync, rmSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterAll, describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { submitBranch, validateBranchInput } from "../src/branchDialog.js";
import { framesEqual } from "../src/foldDeltas.js";
import { PlaybackController } from "../src/playback.js";
import { buildTreeView, selectedNode, selectNode } from "../src/treeView.js";
import type { TreePayload } from "../src/types.js";

const PYTHON = process.env.BRANCHSIM_PYTHON ?? "python3";

const SPEC = { simulator_id: "vesselgrid", width: 12, height: 12, cell_size_h: 1.0 };
const PARAMS = {
  diffusion: 0.2, vx: 0.1, vy: -0.05, dt: 0.5,
  source_cells: [78], source_amp: 1.0, source_period: 8,
};
const SEEDS = { "40": 1.0 };

interface Server {
  api: ApiClient;
  stop: () => void;
}

const cleanups: (() => void)[] = [];

afterAll(() => {
  for (const stop of cleanups) stop();
});

async function startServer(): Promise<Server> {
  const storeDir = mkdtempSync(join(tmpdir(), "branchsim-ui-"));
  const port = 8600 + Math.floor(Math.random() * 800);
  const proc: ChildProcess = spawn(
    PYTHON,
    ["-m", "branchsim", "serve", "--store", join(storeDir, "store"), "--port", String(port)],
    { stdio: ["ignore", "pipe", "pipe"] },
  );
  let stderr = "";
  proc.stderr?.on("data", (chunk: Buffer) => {
    stderr += chunk.toString();
  });
  const stop = () => {
    proc.kill("SIGTERM");
    rmSync(storeDir, { recursive: true, force: true });
  };
  cleanups.push(stop);

  const base = `http://127.0.0.1:${port}`;
  const deadline = Date.now() + 30_000;
  for (;;) {
    try {
      const ping = await fetch(`${base}/healthz`);
      if (ping.ok) break;
    } catch {
      // not up yet
    }
    if (Date.now() > deadline || proc.exitCode !== null) {
      stop();
      throw new Error(`service did not start: exit=${proc.exitCode} stderr=${stderr}`);
    }
    await new Promise((resolve) => setTimeout(resolve, 100));
  }
  return { api: new ApiClient(base), stop };
}

async function seedSimulation(api: ApiClient): Promise<string> {
  const { root_id } = await api.createSimulation({ spec: SPEC, params: PARAMS, seeds: SEEDS });
  const { token } = await api.runNode(root_id, 24);
  const status = await api.pollRun(token);
  expect(status.status).toBe("complete");
  return root_id;
}

describe("UI round trip against the live service", () => {
  it(
    "branch via the dialog equals the direct API call, manifest for manifest",
    { timeout: 120_000 },
    async () => {
      const branchStep = 16;
      const overrides = { source_amp: 2.0 };
      const annotation = { kind: "evaluative", text: "stronger inflow" };

      // path A: the dialog flow (validate against the rendered tree, submit)
      const serverA = await startServer();
      const rootA = await seedSimulation(serverA.api);
      const vmA = selectNode(buildTreeView(await serverA.api.getTree()), rootA);
      const nodeA = selectedNode(vmA);
      expect(nodeA).not.toBeNull();
      const validated = validateBranchInput(
        nodeA!, String(branchStep), JSON.stringify(overrides), annotation.kind, annotation.text,
      );
      expect(validated.ok).toBe(true);
      if (!validated.ok) return;
      const outcome = await submitBranch(serverA.api, rootA, validated.input);
      expect(outcome.ok).toBe(true);
      const treeA: TreePayload = await serverA.api.getTree();

      // path B: the equivalent direct API call on a fresh store
      const serverB = await startServer();
      const rootB = await seedSimulation(serverB.api);
      await serverB.api.branchNode(rootB, {
        at_step: branchStep,
        overrides,
        annotations: [annotation],
      });
      const treeB: TreePayload = await serverB.api.getTree();

      expect(treeA).toEqual(treeB);

      // rejected dialogs surface the server reason without changing the tree
      const late = validateBranchInput(nodeA!, "23", "{}");
      expect(late.ok).toBe(true);
      if (late.ok) {
        const rejected = await submitBranch(serverA.api, rootA, { ...late.input, step: 99 });
        expect(rejected.ok).toBe(false);
        if (!rejected.ok) expect(rejected.reason).toContain("NotYetSimulated");
        expect(await serverA.api.getTree()).toEqual(treeA);
      }

      serverA.stop();
      serverB.stop();
    },
  );

  it(
    "delta playback renders frames identical to full fetches",
    { timeout: 120_000 },
    async () => {
      const server = await startServer();
      const root = await seedSimulation(server.api);
      const child = (
        await server.api.branchNode(root, { at_step: 16, overrides: { diffusion: 0.25 } })
      ).node_id;
      const { token } = await server.api.runNode(child, 24);
      expect((await server.api.pollRun(token)).status).toBe("complete");

      // window crosses the branch point; lineage resolves into the parent
      const playback = new PlaybackController(server.api, child, 4, 24);
      await playback.load();
      for (const step of [4, 9, 16, 20, 24]) {
        const folded = playback.frameAt(step);
        const full = await playback.fetchFull(step);
        expect(framesEqual(folded, full)).toBe(true);
      }
      server.stop();
    },
  );
});
