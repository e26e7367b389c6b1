"""Command-line surface: run, resume, report, export-mesh.

Exit codes: 0 success, 2 config/artifact error, 3 runtime failure.
An interrupt (SIGINT/SIGTERM) sets a flag the evolver loop polls; the run
checkpoints at the next quiescent point and exits 0 rather than killing
in-flight simulator processes.
"""

from __future__ import annotations

import argparse
import json
import signal
import sys
from pathlib import Path

from .config import ParseError, ValidationError, parse_config, with_overrides
from .genomes import DeserializeError, deserialize, tessellate_genome
from .geometry import mesh_to_obj
from .runner import (
    CHECKPOINT_FILE,
    CONFIG_SNAPSHOT,
    generate_report,
    resume_experiment,
    run_experiment,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


class _StopFlag:
    def __init__(self):
        self.stop = False

    def __call__(self) -> bool:
        return self.stop

    def install(self):
        def handler(signum, frame):
            self.stop = True

        signal.signal(signal.SIGINT, handler)
        signal.signal(signal.SIGTERM, handler)


def _fail(code: int, message: str) -> int:
    print(message, file=sys.stderr)
    return code


def cmd_run(args) -> int:
    try:
        text = Path(args.config).read_text(encoding="utf-8")
    except OSError as e:
        return _fail(EXIT_CONFIG, f"cannot read config: {e}")
    try:
        config = parse_config(text)
    except (ParseError, ValidationError) as e:
        return _fail(EXIT_CONFIG, f"bad config: {e}")
    config = with_overrides(
        config, seed=args.seed, max_evaluations=args.max_evals, out_dir=args.out_dir
    )
    flag = _StopFlag()
    flag.install()
    try:
        summary = run_experiment(config, should_stop=flag)
    except Exception as e:
        return _fail(EXIT_RUNTIME, f"run failed: {e}")
    status = "interrupted; checkpoint written" if summary.interrupted else "complete"
    print(f"run {status}: {summary.evaluations} evaluations in {config.out_dir}")
    return EXIT_OK


def cmd_resume(args) -> int:
    out = Path(args.out_dir)
    if not (out / CHECKPOINT_FILE).exists() or not (out / CONFIG_SNAPSHOT).exists():
        return _fail(EXIT_CONFIG, f"no resumable run in {out}")
    flag = _StopFlag()
    flag.install()
    try:
        config = parse_config((out / CONFIG_SNAPSHOT).read_text(encoding="utf-8"))
    except (ParseError, ValidationError, OSError) as e:
        return _fail(EXIT_CONFIG, f"bad config snapshot: {e}")
    try:
        summary = resume_experiment(out, should_stop=flag)
    except (json.JSONDecodeError, KeyError, ValueError) as e:
        return _fail(EXIT_CONFIG, f"corrupt checkpoint: {e}")
    except Exception as e:
        return _fail(EXIT_RUNTIME, f"resume failed: {e}")
    if summary.evaluations >= config.max_evaluations and not summary.interrupted:
        print(f"run already complete at {summary.evaluations} evaluations")
    else:
        print(f"resumed to {summary.evaluations} evaluations in {out}")
    return EXIT_OK


def cmd_report(args) -> int:
    try:
        report = generate_report(args.out_dir)
    except (FileNotFoundError, OSError) as e:
        return _fail(EXIT_CONFIG, f"missing or empty log: {e}")
    except (ParseError, ValidationError) as e:
        return _fail(EXIT_CONFIG, f"bad config snapshot: {e}")
    print(f"evaluations: {report['evals']} ({report['valid_evals']} valid)")
    if report.get("best_objectives") is not None:
        objs = ", ".join(repr(v) for v in report["best_objectives"])
        print(f"best objectives: [{objs}]  (genome {report['best_genome_id']})")
    if "front_size" in report:
        print(f"rank-0 front: {report['front_size']} designs")
    print(f"report written to {Path(args.out_dir) / 'report.json'}")
    return EXIT_OK


def cmd_export_mesh(args) -> int:
    try:
        genome = deserialize(Path(args.genome).read_text(encoding="utf-8"))
    except (OSError, DeserializeError) as e:
        return _fail(EXIT_CONFIG, f"bad genome document: {e}")
    mesh = tessellate_genome(genome)
    if mesh is None:
        return _fail(EXIT_CONFIG, "genome has no geometry (real vector)")
    Path(args.out).write_text(mesh_to_obj(mesh), encoding="utf-8")
    print(f"wrote {len(mesh.vertices)} vertices, {len(mesh.triangles)} triangles to {args.out}")
    return EXIT_OK


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="evoforge",
        description="Evolve hardware designs against black-box evaluators.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment from a config file")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--seed", type=int, default=None, help="override config seed")
    p_run.add_argument("--max-evals", type=int, default=None, help="override evaluation budget")
    p_run.add_argument("--out-dir", default=None, help="override output directory")
    p_run.set_defaults(func=cmd_run)

    p_resume = sub.add_parser("resume", help="continue a checkpointed run")
    p_resume.add_argument("--out-dir", required=True)
    p_resume.set_defaults(func=cmd_resume)

    p_report = sub.add_parser("report", help="summarize a finished run")
    p_report.add_argument("--out-dir", required=True)
    p_report.set_defaults(func=cmd_report)

    p_export = sub.add_parser("export-mesh", help="tessellate a genome document to OBJ")
    p_export.add_argument("--genome", required=True)
    p_export.add_argument("--out", required=True)
    p_export.set_defaults(func=cmd_export_mesh)
    return parser


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
