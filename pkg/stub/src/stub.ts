/**
 * Reference external simulator for the evoforge job protocol.
 *
 * Invocation: node stub.js <mode> [mode-arg] <job_dir>
 *
 * The job directory holds input.json (and geometry.obj for geometric
 * genomes); the stub writes output.json and exits.  It has no physics and
 * no state: the same job directory always produces byte-identical output.
 *
 * Modes:
 *   echo_constant <value>   -> metrics {"score": value}
 *   rastrigin               -> {"f": ...} computed on a realvector payload
 *   vertex_count            -> {"vertices": n} from `v` lines in geometry.obj
 *   sleep <seconds>         -> delays, then reports ok
 *   fail <exit_code>        -> exits with the given code, no output.json
 */

import * as fs from "node:fs";
import * as path from "node:path";

interface JobInput {
  protocol_version: number;
  job_id: string;
  individual_type: string;
  genome: { version: number; type: string; payload: Record<string, unknown> };
  geometry_file: string;
  params: Record<string, unknown>;
}

interface JobOutput {
  job_id: string;
  status: "ok" | "invalid" | "error";
  metrics?: Record<string, number>;
  message?: string;
}

function writeOutput(jobDir: string, out: JobOutput): void {
  fs.writeFileSync(path.join(jobDir, "output.json"), JSON.stringify(out));
}

function rastrigin(values: number[]): number {
  let sum = 10 * values.length;
  for (const v of values) {
    sum += v * v - 10 * Math.cos(2 * Math.PI * v);
  }
  return sum;
}

function countObjVertices(objText: string): number {
  let n = 0;
  for (const line of objText.split("\n")) {
    if (line.startsWith("v ")) n += 1;
  }
  return n;
}

function sleep(seconds: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, seconds * 1000));
}

async function main(argv: string[]): Promise<number> {
  if (argv.length < 2) {
    process.stderr.write("usage: stub <mode> [mode-arg] <job_dir>\n");
    return 2;
  }
  const mode = argv[0];
  const jobDir = argv[argv.length - 1];
  const modeArg = argv.length > 2 ? argv[1] : undefined;

  // fail mode must not produce output.json at all
  if (mode === "fail") {
    process.stderr.write("stub: failing on request\n");
    return modeArg !== undefined ? parseInt(modeArg, 10) : 1;
  }

  let input: JobInput;
  try {
    const raw = fs.readFileSync(path.join(jobDir, "input.json"), "utf-8");
    input = JSON.parse(raw) as JobInput;
    if (typeof input.job_id !== "string" || input.job_id.length === 0) {
      throw new Error("input.json has no job_id");
    }
  } catch (err) {
    writeOutput(jobDir, {
      job_id: "",
      status: "error",
      message: `malformed input.json: ${String(err)}`,
    });
    return 1;
  }

  const jobId = input.job_id;
  try {
    switch (mode) {
      case "echo_constant": {
        const value = Number(modeArg);
        if (!Number.isFinite(value)) {
          writeOutput(jobDir, { job_id: jobId, status: "error", message: "echo_constant needs a numeric argument" });
          return 0;
        }
        writeOutput(jobDir, { job_id: jobId, status: "ok", metrics: { score: value } });
        return 0;
      }
      case "rastrigin": {
        if (input.genome.type !== "realvector") {
          writeOutput(jobDir, {
            job_id: jobId,
            status: "error",
            message: `rastrigin mode needs a realvector genome, got ${input.genome.type}`,
          });
          return 0;
        }
        const values = input.genome.payload.values as number[];
        writeOutput(jobDir, { job_id: jobId, status: "ok", metrics: { f: rastrigin(values) } });
        return 0;
      }
      case "vertex_count": {
        const objText = fs.readFileSync(
          path.join(jobDir, input.geometry_file), "utf-8"
        );
        writeOutput(jobDir, {
          job_id: jobId,
          status: "ok",
          metrics: { vertices: countObjVertices(objText) },
        });
        return 0;
      }
      case "sleep": {
        const seconds = Number(modeArg);
        await sleep(Number.isFinite(seconds) ? seconds : 1);
        writeOutput(jobDir, { job_id: jobId, status: "ok", metrics: { slept_s: seconds } });
        return 0;
      }
      default: {
        writeOutput(jobDir, { job_id: jobId, status: "error", message: `unknown mode ${mode}` });
        return 0;
      }
    }
  } catch (err) {
    writeOutput(jobDir, { job_id: jobId, status: "error", message: String(err) });
    return 0;
  }
}

main(process.argv.slice(2)).then(
  (code) => process.exit(code),
  (err) => {
    process.stderr.write(`stub crashed: ${String(err)}\n`);
    process.exit(1);
  }
);
