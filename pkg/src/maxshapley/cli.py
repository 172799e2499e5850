"""Command-line entry point.

Commands:
    attribute         attribute one sample's answer to its sources
    evaluate          run an experiment over a dataset and write report files
    compare           like evaluate, defaulting to every method
    precompute-table  write the rank-pair probability table for m players
    replay            rerun a previous output directory from its recorded transcripts

Exit codes: 0 success, 1 usage, 2 data, 3 oracle/transport, 4 numeric.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path
from typing import Sequence

from maxshapley import __version__
from maxshapley.config import ROLES, RunConfig, load_config_file, parse_config, write_snapshot
from maxshapley.core.maxgame import build_pair_probability_table
from maxshapley.errors import MaxShapleyError, UsageError
from maxshapley.evaluation.dataset import load_dataset
from maxshapley.evaluation.experiment import (
    METHOD_NAMES,
    ChatBundle,
    ExperimentReport,
    run_experiment,
    run_job,
    write_report,
)
from maxshapley.judge.backends import ChatBackend, HTTPChatBackend, RecordingBackend, ReplayBackend
from maxshapley.judge.cache import UtilityCache
from maxshapley.judge.mock import MockChatBackend
from maxshapley.judge.prompts import PromptTemplates
from maxshapley.seeding import derive_seed

logger = logging.getLogger("maxshapley")

COMPARE_DEFAULT = ["maxshapley", "fullshapley", "mcu", "mca", "kernelshap", "loo"]


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="maxshapley", description="Source attribution for retrieval-augmented answers.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, methods=True):
        p.add_argument("--config", help="JSON or YAML run configuration")
        p.add_argument("--dataset", help="JSONL dataset, or 'demo' for the bundled sample")
        p.add_argument("--schema", choices=("binary", "graded"))
        if methods:
            p.add_argument("--method", "--methods", dest="methods", action="append",
                           help=f"method (repeatable or comma-separated): {', '.join(METHOD_NAMES)}; "
                                "budgets as mcu:20, mca:10, kernelshap:64 or kernelshap:all")
        p.add_argument("--runs", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--clipping-threshold", type=float)
        p.add_argument("--clip-maxshapley", action=argparse.BooleanOptionalAction, default=None)
        p.add_argument("--temperature", type=float)
        p.add_argument("--distill", action=argparse.BooleanOptionalAction, default=None)
        p.add_argument("--parallelism", type=int)
        p.add_argument("--keypoint-cap", type=int)
        p.add_argument("--canonical-cache", action=argparse.BooleanOptionalAction, default=None,
                       help="cache utilities by sorted coalition (default on)")
        p.add_argument("--empty-value", type=float, help="constant U(empty) instead of a zero-source query")
        p.add_argument("--out", help="output directory")
        p.add_argument("--mode", choices=("live", "record", "replay"))
        p.add_argument("--transcripts", help="transcript directory (default <out>/transcripts)")
        p.add_argument("--templates", help="directory of prompt template overrides")
        p.add_argument("--mock-answer-mode", choices=("concat", "extractive"))

    p = sub.add_parser("attribute", help="attribute one sample")
    common(p)
    p.add_argument("--query-id", help="sample to attribute (default: first in the dataset)")
    p.add_argument("--answer", help="answer text to attribute instead of generating one")
    p.add_argument("--output", help="also write the JSON record to this file")

    for name in ("evaluate", "compare"):
        common(sub.add_parser(name, help=f"{name} methods over a dataset"))

    p = sub.add_parser("precompute-table", help="write the pair-probability table sidecar")
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--output", "--out", dest="output", help="file to write (default pair_table_m<M>.bin)")

    p = sub.add_parser("replay", help="rerun from a resolved config snapshot and its transcripts")
    p.add_argument("--config", required=True, help="config.json written by an earlier run")
    p.add_argument("--out", help="output directory (default <original out>/replay)")
    return parser


_FLAG_KEYS = ("dataset", "schema", "methods", "runs", "seed", "clipping_threshold", "clip_maxshapley",
              "temperature", "distill", "parallelism", "keypoint_cap", "canonical_cache", "empty_value", "out",
              "mode", "transcripts", "templates", "mock_answer_mode", "query_id", "answer")


def config_from_args(args: argparse.Namespace) -> RunConfig:
    flags = {k: getattr(args, k, None) for k in _FLAG_KEYS}
    flags["command"] = args.command
    file_values = load_config_file(args.config) if getattr(args, "config", None) else {}
    if args.command == "compare" and flags["methods"] is None and "methods" not in file_values:
        flags["methods"] = COMPARE_DEFAULT
    if args.command == "evaluate" and flags["methods"] is None and "methods" not in file_values:
        flags["methods"] = ["maxshapley", "fullshapley"]
    return parse_config(file_values, flags)


# -- bundle construction ------------------------------------------------------------


def make_backend(config: RunConfig, role: str) -> ChatBackend:
    transcript = config.transcript_dir / f"{role}.jsonl"
    if config.mode == "replay":
        return ReplayBackend(transcript)
    endpoint = config.endpoint(role)
    backend = (MockChatBackend(config.mock_answer_mode, record_requests=False) if endpoint.api == "mock"
               else HTTPChatBackend(endpoint))
    if config.mode == "record":
        transcript.parent.mkdir(parents=True, exist_ok=True)
        transcript.write_text("", encoding="utf-8")
        backend = RecordingBackend(backend, transcript)
    return backend


def make_bundle(config: RunConfig) -> ChatBundle:
    templates = PromptTemplates.from_directory(config.templates) if config.templates else PromptTemplates()
    backends = {role: make_backend(config, role) for role in ROLES}
    return ChatBundle(backends["search"], backends["judge"], backends["attribution"],
                      endpoints={role: config.endpoint(role) for role in ROLES}, templates=templates,
                      empty_value=config.empty_value, use_ground_truth=config.use_ground_truth)


# -- commands -------------------------------------------------------------------


def _fmt(x: float, digits: int = 3) -> str:
    return "-" if x is None or (isinstance(x, float) and math.isnan(x)) else f"{x:.{digits}f}"


def format_summary(report: ExperimentReport) -> str:
    header = f"{'method':<16}{'jaccard':>9}{'±se':>8}{'tau_b':>9}{'±se':>8}{'tokens':>12}{'cost':>10}{'failed':>8}"
    lines = [header, "-" * len(header)]
    for s in report.summaries:
        lines.append(f"{s.method:<16}{_fmt(s.mean_jaccard):>9}{_fmt(s.stderr_jaccard):>8}{_fmt(s.mean_tau_b):>9}"
                     f"{_fmt(s.stderr_tau_b):>8}{s.mean_tokens:>12.1f}{_fmt(s.mean_cost, 4):>10}{s.n_failed:>8}")
    return "\n".join(lines)


def cmd_attribute(config: RunConfig, output: str | None = None) -> dict:
    samples = load_dataset(config.dataset_path() if config.dataset else _demo(config), config.schema)
    if not samples:
        raise UsageError("dataset holds no samples")
    if config.query_id is None:
        sample = samples[0]
    else:
        matches = [s for s in samples if s.query_id == config.query_id]
        if not matches:
            raise UsageError(f"query_id {config.query_id!r} not in dataset")
        sample = matches[0]
    specs = config.method_specs()
    if len(specs) != 1:
        raise UsageError("attribute takes exactly one method")
    spec = specs[0]
    bundle = make_bundle(config)
    write_snapshot(config)
    seed = derive_seed(config.seed, sample.query_id, 0)

    if spec.name == "maxshapley":
        result = bundle.maxshapley(sample, seed, config.pipeline_config(), answer=config.answer)
        record = result.to_record()
        record["answer"] = result.answer
        record["clipped"] = result.attribution.clipped
        record["flags"] = list(result.flags)
    else:
        rec = run_job(spec, sample, 0, bundle, config.experiment_config(), UtilityCache())
        if rec.error:
            raise UsageError(f"{spec.label} failed: {rec.error}")
        record = {"query_id": rec.query_id, "method": rec.method, "phi": rec.phi, "phi_unclipped": rec.phi_unclipped,
                  "clipped": rec.clipped, "tokens_in": rec.tokens_in, "tokens_out": rec.tokens_out,
                  "oracle_calls": rec.oracle_calls, "seed": rec.seed}
    text = json.dumps(record, indent=2)
    (config.out_dir / "attribution.json").write_text(text + "\n", encoding="utf-8")
    if output:
        Path(output).write_text(text + "\n", encoding="utf-8")
    print(text)
    return record


def _demo(config: RunConfig) -> Path:
    config.dataset = "demo"
    return config.dataset_path()


def cmd_evaluate(config: RunConfig) -> ExperimentReport:
    samples = load_dataset(config.dataset_path(), config.schema)
    bundle = make_bundle(config)
    write_snapshot(config)
    report = run_experiment(samples, config.method_specs(), bundle, config.experiment_config())
    paths = write_report(report, config.out_dir)
    (config.out_dir / "run_metadata.json").write_text(json.dumps(report.metadata, indent=2, sort_keys=True) + "\n",
                                                      encoding="utf-8")
    print(format_summary(report))
    print(f"\nwrote {', '.join(p.name for p in paths.values())} to {config.out_dir}")
    return report


def cmd_precompute_table(m: int, output: str | None) -> Path:
    table = build_pair_probability_table(m)
    path = Path(output or f"pair_table_m{m}.bin")
    path.parent.mkdir(parents=True, exist_ok=True)
    table.save(path)
    print(f"m={m} first_position={table.first_position!r}")
    for i in range(2, m + 1):
        print("  rank %d: %s" % (i, " ".join(f"{table.margin_prob(i, j):.6f}" for j in range(1, i))))
    print(f"wrote {path}")
    return path


def cmd_replay(snapshot_path: str, out: str | None) -> None:
    snapshot = load_config_file(snapshot_path)
    command = snapshot.get("command")
    if command not in ("attribute", "evaluate", "compare"):
        raise UsageError(f"snapshot {snapshot_path} records no replayable command")
    snapshot["mode"] = "replay"
    snapshot["out"] = out or str(Path(snapshot["out"]) / "replay")
    config = parse_config(snapshot)
    if command == "attribute":
        cmd_attribute(config)
    else:
        cmd_evaluate(config)


def dispatch(args: argparse.Namespace) -> None:
    if args.command == "precompute-table":
        cmd_precompute_table(args.m, args.output)
    elif args.command == "replay":
        cmd_replay(args.config, args.out)
    else:
        config = config_from_args(args)
        if args.command == "attribute":
            cmd_attribute(config, args.output)
        else:
            if args.command == "compare" and len(config.method_specs()) < 2:
                raise UsageError("compare needs at least two methods")
            cmd_evaluate(config)


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        return _fail(exc)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        dispatch(args)
    except MaxShapleyError as exc:
        return _fail(exc)
    return 0


def _fail(exc: MaxShapleyError) -> int:
    print(json.dumps({"error": exc.category, "exit_code": exc.exit_code, "message": str(exc)}), file=sys.stderr)
    return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
