/**
 * Contract tests for the simulator stub: spawn the built stub against
 * temporary job directories and check the protocol responses.
 */

import { execFileSync, spawnSync } from "node:child_process";
import * as fs from "node:fs";
import * as os from "node:os";
import * as path from "node:path";
import { describe, expect, it } from "vitest";

const STUB = path.join(__dirname, "..", "dist", "stub.js");

function makeJobDir(
  jobId: string,
  genome: object = { version: 1, type: "realvector", payload: { values: [0, 0], bounds: [[-5, 5], [-5, 5]] } },
  objText?: string
): string {
  const dir = fs.mkdtempSync(path.join(os.tmpdir(), "stub-job-"));
  const input = {
    protocol_version: 1,
    job_id: jobId,
    individual_type: (genome as { type: string }).type,
    genome,
    geometry_file: "geometry.obj",
    params: {},
  };
  fs.writeFileSync(path.join(dir, "input.json"), JSON.stringify(input));
  if (objText !== undefined) {
    fs.writeFileSync(path.join(dir, "geometry.obj"), objText);
  }
  return dir;
}

function runStub(args: string[], dir: string) {
  return spawnSync("node", [STUB, ...args, dir], { encoding: "utf-8" });
}

function readOutput(dir: string) {
  return JSON.parse(fs.readFileSync(path.join(dir, "output.json"), "utf-8"));
}

const JOB = "00112233aabbccdd";

describe("echo_constant", () => {
  it("echoes the constant and the job id", () => {
    const dir = makeJobDir(JOB);
    const res = runStub(["echo_constant", "42.0"], dir);
    expect(res.status).toBe(0);
    expect(readOutput(dir)).toEqual({ job_id: JOB, status: "ok", metrics: { score: 42 } });
  });
});

describe("rastrigin", () => {
  it("is zero at the origin", () => {
    const dir = makeJobDir(JOB);
    expect(runStub(["rastrigin"], dir).status).toBe(0);
    const out = readOutput(dir);
    expect(out.job_id).toBe(JOB);
    expect(out.status).toBe("ok");
    expect(Math.abs(out.metrics.f)).toBeLessThan(1e-12);
  });

  it("matches the formula at (1, 1)", () => {
    const genome = { version: 1, type: "realvector", payload: { values: [1, 1], bounds: [[-5, 5], [-5, 5]] } };
    const dir = makeJobDir(JOB, genome);
    runStub(["rastrigin"], dir);
    expect(readOutput(dir).metrics.f).toBeCloseTo(2.0, 9);
  });

  it("rejects non-realvector genomes gracefully", () => {
    const genome = { version: 1, type: "pointcloud", payload: {} };
    const dir = makeJobDir(JOB, genome);
    expect(runStub(["rastrigin"], dir).status).toBe(0);
    expect(readOutput(dir).status).toBe("error");
  });
});

describe("vertex_count", () => {
  it("counts v-lines of a cuboid mesh", () => {
    const obj = Array.from({ length: 8 }, (_, i) => `v ${i} 0 0`).join("\n") + "\nf 1 2 3\n";
    const dir = makeJobDir(JOB, undefined, obj);
    expect(runStub(["vertex_count"], dir).status).toBe(0);
    expect(readOutput(dir)).toEqual({ job_id: JOB, status: "ok", metrics: { vertices: 8 } });
  });

  it("errors when geometry.obj is absent", () => {
    const dir = makeJobDir(JOB);
    expect(runStub(["vertex_count"], dir).status).toBe(0);
    expect(readOutput(dir).status).toBe("error");
  });
});

describe("sleep", () => {
  it("delays then reports ok", () => {
    const dir = makeJobDir(JOB);
    const started = Date.now();
    expect(runStub(["sleep", "0.3"], dir).status).toBe(0);
    expect(Date.now() - started).toBeGreaterThanOrEqual(250);
    expect(readOutput(dir).status).toBe("ok");
  });
});

describe("fail", () => {
  it("exits with the requested code and writes no output", () => {
    const dir = makeJobDir(JOB);
    const res = runStub(["fail", "3"], dir);
    expect(res.status).toBe(3);
    expect(fs.existsSync(path.join(dir, "output.json"))).toBe(false);
  });
});

describe("protocol hygiene", () => {
  it("exits 1 with a status=error output on malformed input.json", () => {
    const dir = fs.mkdtempSync(path.join(os.tmpdir(), "stub-job-"));
    fs.writeFileSync(path.join(dir, "input.json"), "{not json");
    const res = runStub(["echo_constant", "1.0"], dir);
    expect(res.status).toBe(1);
    expect(readOutput(dir).status).toBe("error");
  });

  it("is stateless: identical job dirs give byte-identical outputs", () => {
    const dirA = makeJobDir(JOB);
    const dirB = makeJobDir(JOB);
    runStub(["rastrigin"], dirA);
    runStub(["rastrigin"], dirB);
    const a = fs.readFileSync(path.join(dirA, "output.json"), "utf-8");
    const b = fs.readFileSync(path.join(dirB, "output.json"), "utf-8");
    expect(a).toBe(b);
  });

  it("always echoes the input job id", () => {
    for (const args of [["echo_constant", "7"], ["rastrigin"], ["sleep", "0"]]) {
      const dir = makeJobDir(JOB);
      runStub(args, dir);
      expect(readOutput(dir).job_id).toBe(JOB);
    }
  });
});
