"""Command-line entry point.

Exit status: 0 when nothing was found, 1 when problems were reported by
``rules`` or ``llm``, 2 on usage or operational errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __doc__ as package_doc
from .codemodel import SourceFile, model_source
from .errors import NotInjectable, QlintError
from .evaluate import MetricsReport, match_warnings, render_report
from .inject import inject
from .llm import AnalysisMode, Diagnostics, RunArchive, run_all_problems
from .obfuscate import obfuscate_file
from .problems import ProblemType, parse_problem_list
from .providers import (
    HashingEmbedder,
    HttpChatProvider,
    HttpEmbedder,
    ReplayChatProvider,
    ReplayEmbedder,
    chat_config,
    embed_config,
    load_config,
)
from .rag import KnowledgeBase, RagStore, build_index, candidates_from_truth, retrieve
from .records import append_truth, dumps_records, read_truth, read_warnings
from .rules import run_detectors

log = logging.getLogger("qlint")

EXIT_CLEAN, EXIT_FOUND, EXIT_ERROR = 0, 1, 2


def _python_files(paths: list[str]) -> list[Path]:
    files: list[Path] = []
    for p in map(Path, paths):
        if p.is_dir():
            files.extend(sorted(f for f in p.rglob("*.py") if f.is_file()))
        elif p.is_file():
            files.append(p)
        else:
            raise FileNotFoundError(f"no such file or directory: {p}")
    return files


def _emit(records: list[dict], out: str | None) -> None:
    text = dumps_records(records)
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _print_human(warnings) -> None:
    for w in warnings:
        lines = ",".join(map(str, w.lines))
        print(f"{w.file}:{lines}: {w.problem.value}: {w.explanation}")


def cmd_rules(args: argparse.Namespace) -> int:
    problems = parse_problem_list(args.problems)
    found = []
    failed = False
    for path in _python_files(args.paths):
        try:
            model = model_source(SourceFile.load(path).text, str(path))
        except (SyntaxError, UnicodeDecodeError) as exc:
            print(f"{path}: cannot analyse: {exc}", file=sys.stderr)
            failed = True
            continue
        found.extend(run_detectors(model, problems))
    if args.out or args.format == "jsonl":
        _emit([w.to_record() for w in found], args.out)
    if args.format == "text":
        _print_human(found)
    if failed:
        return EXIT_ERROR
    return EXIT_FOUND if found else EXIT_CLEAN


def _embedder_from_spec(spec: str, config: dict, embed_mock: str | None):
    kind, _, rest = spec.partition(":")
    if kind == "hash":
        dim, _, seed = rest.partition(":")
        return HashingEmbedder(int(dim), int(seed or 0))
    if kind == "replay" or embed_mock:
        if not embed_mock:
            raise QlintError("this knowledge base needs --embed-mock DIR for query embeddings")
        dim = int(rest.rsplit(":", 1)[-1])
        return ReplayEmbedder(embed_mock, dim)
    if kind == "http":
        return HttpEmbedder(embed_config(config))
    raise QlintError(f"unknown embedder {spec!r}")


def cmd_llm(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    mode = AnalysisMode(args.mode)
    if args.mock:
        provider = ReplayChatProvider(args.mock)
        concurrency = args.max_concurrency or 1
    else:
        cfg = chat_config(config)
        provider = HttpChatProvider(cfg)
        concurrency = args.max_concurrency or cfg.max_concurrency
    rag = None
    if mode is AnalysisMode.rag:
        if not args.kb:
            raise QlintError("--mode rag needs --kb DIR")
        kb = KnowledgeBase.load(args.kb)
        rag = RagStore(kb, _embedder_from_spec(kb.manifest["embedder"], config, args.embed_mock))
    archive = RunArchive(args.run_dir) if args.run_dir else None
    problems = parse_problem_list(args.problems)

    warnings, failures = [], []
    diagnostics = Diagnostics()
    for path in _python_files(args.paths):
        source = SourceFile.load(path)
        source = SourceFile(str(path), source.text)
        result = run_all_problems(provider, source, mode, rag, problems, concurrency,
                                  diagnostics=diagnostics, archive=archive)
        warnings.extend(result.warnings)
        failures.extend(result.errors)
    for f in failures:
        print(f"{f.file}: {f.problem.value}: {f.kind}: {f.message}", file=sys.stderr)
    for d in diagnostics.items:
        print(f"note: {d}", file=sys.stderr)
    if archive is not None:
        (archive.directory / "diagnostics.json").write_text(
            json.dumps({"diagnostics": diagnostics.items,
                        "errors": [f"{f.file}: {f.problem.value}: {f.kind}" for f in failures]},
                       indent=2) + "\n", encoding="utf-8")
    if args.out or args.format == "jsonl":
        _emit([w.to_record() for w in warnings], args.out)
    if args.format == "text":
        _print_human(warnings)
    if failures:
        return EXIT_ERROR
    return EXIT_FOUND if warnings else EXIT_CLEAN


def cmd_kb_build(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    if args.embedder == "hash":
        embedder = HashingEmbedder(args.dimension, args.seed)
    elif args.embedder == "replay":
        if not args.embed_mock:
            raise QlintError("--embedder replay needs --embed-mock DIR")
        embedder = ReplayEmbedder(args.embed_mock, args.dimension)
    else:
        embedder = HttpEmbedder(embed_config(config))
    kb = build_index(candidates_from_truth(args.truth, args.src), embedder)
    kb.save(args.out)
    m = kb.manifest
    print(f"{m['files_included']} files included, {m['files_excluded']} excluded "
          f"(token limit {m['token_limit']})")
    return EXIT_CLEAN


def cmd_kb_retrieve(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    kb = KnowledgeBase.load(args.kb)
    embedder = _embedder_from_spec(kb.manifest["embedder"], config, args.embed_mock)
    problem = ProblemType.parse(args.problem)
    text = SourceFile.load(args.file).text
    entry, distance = retrieve(kb.indices[problem], embedder.embed(text))
    if args.json:
        print(json.dumps({"id": entry.id, "problem": problem.value, "source_path": entry.source_path,
                          "distance": distance}))
    else:
        sys.stdout.write(entry.annotated_source)
    return EXIT_CLEAN


def cmd_obfuscate(args: argparse.Namespace) -> int:
    target, sidecar = obfuscate_file(args.file, args.seed, args.out)
    print(target)
    print(sidecar)
    return EXIT_CLEAN


def cmd_inject(args: argparse.Namespace) -> int:
    problem = ProblemType.parse(args.problem)
    text = SourceFile.load(args.file).text
    recorded_path = args.out or args.file
    result = inject(problem, text, args.seed, str(recorded_path))
    if args.out:
        Path(args.out).write_bytes(result.text.encode("utf-8"))
    else:
        sys.stdout.write(result.text)
    if args.truth:
        append_truth(args.truth, result.truth)
    print(f"injected {problem.value} at line(s) {sorted(result.truth.lines)}: {result.description}",
          file=sys.stderr)
    if result.side_effects:
        print("side effects: " + ", ".join(p.value for p in result.side_effects), file=sys.stderr)
    return EXIT_CLEAN


def cmd_eval(args: argparse.Namespace) -> int:
    truth = read_truth(args.truth)
    labels = args.label or []
    if labels and len(labels) != len(args.pred):
        raise QlintError("give one --label per --pred")
    reports = {}
    for i, pred in enumerate(args.pred):
        label = labels[i] if labels else Path(pred).stem
        reports[label] = MetricsReport.from_match(match_warnings(read_warnings(pred), truth))
    sys.stdout.write(render_report(reports, args.format, args.per_problem))
    return EXIT_CLEAN


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qlint", description=package_doc)
    parser.add_argument("--config", help="JSON config file (default: $QLINT_CONFIG)")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("rules", help="run the rule-based detectors")
    p.add_argument("paths", nargs="+")
    p.add_argument("--problems", help="comma-separated problem names (default: all)")
    p.add_argument("--out", help="write warnings as JSON lines to this file")
    p.add_argument("--format", choices=["text", "jsonl"], default="text",
                   help="stdout format when --out is not given")
    p.set_defaults(func=cmd_rules)

    p = sub.add_parser("llm", help="run the LLM detection pipeline")
    p.add_argument("paths", nargs="+")
    p.add_argument("--mode", choices=[m.value for m in AnalysisMode], required=True)
    p.add_argument("--kb", help="knowledge base directory (rag mode)")
    p.add_argument("--mock", help="replay chat responses from this directory")
    p.add_argument("--embed-mock", help="replay query embeddings from this directory")
    p.add_argument("--problems", help="comma-separated problem names (default: all)")
    p.add_argument("--out", help="write warnings as JSON lines to this file")
    p.add_argument("--format", choices=["text", "jsonl"], default="text")
    p.add_argument("--run-dir", help="archive prompts, responses and diagnostics here")
    p.add_argument("--max-concurrency", type=int, help="parallel provider requests")
    p.set_defaults(func=cmd_llm)

    kb = sub.add_parser("kb", help="knowledge base tools")
    kb_sub = kb.add_subparsers(dest="kb_command", required=True)
    p = kb_sub.add_parser("build", help="build the knowledge base from true positives")
    p.add_argument("--truth", required=True, help="true-positive records (JSON lines)")
    p.add_argument("--src", required=True, help="directory the record paths are relative to")
    p.add_argument("--out", required=True)
    p.add_argument("--embedder", choices=["http", "hash", "replay"], default="http")
    p.add_argument("--dimension", type=int, default=256, help="dimension for hash/replay embedders")
    p.add_argument("--seed", type=int, default=0, help="seed of the hash embedder")
    p.add_argument("--embed-mock", help="embedding fixtures for --embedder replay")
    p.set_defaults(func=cmd_kb_build)
    p = kb_sub.add_parser("retrieve", help="show the nearest example for a file")
    p.add_argument("--problem", required=True)
    p.add_argument("--file", required=True)
    p.add_argument("--kb", required=True)
    p.add_argument("--embed-mock")
    p.add_argument("--json", action="store_true", help="print id and distance instead of the source")
    p.set_defaults(func=cmd_kb_retrieve)

    p = sub.add_parser("obfuscate", help="rename user-defined identifiers")
    p.add_argument("file")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", help="output path (default: <stem>.obf.py)")
    p.set_defaults(func=cmd_obfuscate)

    p = sub.add_parser("inject", help="inject one problem into a clean file")
    p.add_argument("file")
    p.add_argument("--problem", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="write the mutant here (default: stdout)")
    p.add_argument("--truth", help="append the ground-truth record to this file")
    p.set_defaults(func=cmd_inject)

    p = sub.add_parser("eval", help="score predictions against ground truth")
    p.add_argument("--truth", required=True)
    p.add_argument("--pred", required=True, action="append", help="prediction file (repeatable)")
    p.add_argument("--label", action="append", help="row label for each --pred")
    p.add_argument("--per-problem", action="store_true")
    p.add_argument("--format", choices=["text", "json"], default="text")
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except NotInjectable as exc:
        print(f"qlint: not injectable: {exc}", file=sys.stderr)
    except (QlintError, OSError, ValueError, KeyError, SyntaxError) as exc:
        print(f"qlint: error: {exc}", file=sys.stderr)
    return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
