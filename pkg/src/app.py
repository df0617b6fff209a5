# ==============================================
# File: src/app.py
# Description: seed-clone command line: parse, graph, train, eval, detect, stats, synth
# ==============================================
from __future__ import annotations
from pathlib import Path
from typing import Dict, List, Optional, Sequence
import argparse
import json
import logging
import sys

from prettytable import PrettyTable
from pydantic import ValidationError

from src.core.encoding import build_vocab, to_tensors
from src.core.errors import EmptyGraph, SeedError
from src.core.gmn import forward_pair
from src.core.ir_parser import IrParser, format_module
from src.core.pipeline import ClonePipeline, PipelineConfig, snippet_graph
from src.core.semantic_graph import GraphVariant, SemanticGraph, build_graph, export, graph_stats
from src.tools.checkpoint import load_checkpoint
from src.tools.config import build_run_config, load_config_file
from src.tools.corpus import scan_corpus
from src.tools.log import setup_logging
from src.tools.synthetic import write_synthetic_corpus

logger = logging.getLogger(__name__)

VARIANTS = [v.value for v in GraphVariant]


def _parse_file(path: Path, strict: bool):
    parser = IrParser(strict=strict)
    functions = parser.parse(Path(path).read_text(encoding="utf-8"))
    for skipped in parser.skipped:
        logger.warning("%s:%s: skipped unsupported '%s'", path, skipped.line or "?", skipped.opcode)
    return functions


# ---------------------------
# Subcommands
# ---------------------------
def cmd_parse(args: argparse.Namespace) -> int:
    sys.stdout.write(format_module(_parse_file(args.file, args.strict)))
    return 0


def cmd_graph(args: argparse.Namespace) -> int:
    variant = GraphVariant(args.variant)
    for fn in _parse_file(args.file, args.strict):
        text = export(build_graph(fn, variant), args.format)
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
    return 0


def _run_config(args: argparse.Namespace):
    overrides = {"seed": args.seed, "variant": args.variant, "strict": True if args.strict else None}
    return build_run_config(load_config_file(args.config), overrides)


def cmd_train(args: argparse.Namespace) -> int:
    run_config = _run_config(args)
    pipeline = ClonePipeline(run_config, PipelineConfig(out=Path(args.out)))
    state = pipeline.run_training(Path(args.corpus))
    result, report = state["result"], state["report"]
    best = result.history[result.best_epoch - 1]
    summary = {
        "checkpoint": str(args.out),
        "best_epoch": result.best_epoch,
        "epochs_run": len(result.history),
        "threshold": result.threshold,
        "val_f1": best.val_f1,
        "test": report.model_dump(),
    }
    if len(state["reports"]) > 1:
        summary["test_groups"] = {name: r.model_dump() for name, r in state["reports"].items()}
    sys.stdout.write(json.dumps(summary) + "\n")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    run_config = build_run_config(load_config_file(args.config), {"strict": True if args.strict else None})
    pipeline = ClonePipeline(run_config, PipelineConfig(eval_split=args.split))
    state = pipeline.run_evaluation(Path(args.corpus), Path(args.checkpoint))
    reports = state["reports"]
    if len(reports) == 1:
        sys.stdout.write(state["report"].model_dump_json() + "\n")
        return 0
    # one line per test group, then the average
    for name, report in [*reports.items(), ("average", state["report"])]:
        sys.stdout.write(json.dumps({"group": name, **report.model_dump()}) + "\n")
    return 0


def cmd_detect(args: argparse.Namespace) -> int:
    checkpoint = load_checkpoint(Path(args.checkpoint))
    config = checkpoint.config
    texts = sorted(Path(p).read_text(encoding="utf-8") for p in (args.file_a, args.file_b))
    tensors = []
    for label, text in zip(("first", "second"), texts):
        functions = IrParser(strict=args.strict).parse(text)
        if not functions:
            raise EmptyGraph(f"{label} input (in content order) defines no functions")
        tensors.append(to_tensors(snippet_graph(functions, config.variant, label), checkpoint.vocab))
    score = forward_pair(tensors[0], tensors[1], checkpoint.params, config.iterations)
    verdict = "clone" if score.similarity >= checkpoint.threshold else "nonclone"
    sys.stdout.write(json.dumps({"similarity": score.similarity, "verdict": verdict,
                                 "threshold": checkpoint.threshold}) + "\n")
    return 0


def _variant_rows(graphs: List[SemanticGraph]) -> Dict[str, float]:
    stats = [graph_stats(g) for g in graphs]
    count = max(len(stats), 1)
    return {
        "graphs": len(stats),
        "nodes": sum(s.total_nodes for s in stats),
        "operand nodes": sum(s.operand_nodes for s in stats),
        "mean operand nodes": sum(s.operand_nodes for s in stats) / count,
        "data-flow edges": sum(s.dataflow_edges for s in stats),
        "control-flow edges": sum(s.edges["control"] for s in stats),
        "vocabulary": len(build_vocab(graphs)),
    }


def cmd_stats(args: argparse.Namespace) -> int:
    index = scan_corpus(Path(args.corpus), strict=args.strict)
    variants = [GraphVariant(args.variant)] if args.variant else list(GraphVariant)
    columns = {}
    for variant in variants:
        graphs = [snippet_graph(index.functions[s.key], variant, s.key) for s in index.snippets()]
        columns[variant.value] = _variant_rows(graphs)

    table = PrettyTable()
    table.field_names = ["metric"] + list(columns) + (["seed / seed+type"] if len(columns) > 1 else [])
    table.align = "r"
    table.align["metric"] = "l"
    for metric in next(iter(columns.values())):
        row = [metric] + [_fmt_stat(columns[v][metric]) for v in columns]
        if len(columns) > 1:
            base, typed = columns["seed"][metric], columns["seed+type"][metric]
            row.append(f"{base / typed:.2f}" if typed else "-")
        table.add_row(row)
    sys.stdout.write(table.get_string() + "\n")
    return 0


def _fmt_stat(value: float) -> str:
    return f"{value:.2f}" if isinstance(value, float) else str(value)


def cmd_synth(args: argparse.Namespace) -> int:
    paths = write_synthetic_corpus(Path(args.out), args.problems, args.variants, args.seed)
    sys.stdout.write(f"{len(paths)} snippets written to {args.out}\n")
    return 0


# ---------------------------
# Argument parsing
# ---------------------------
def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="seed-clone", description="Semantic code clone detection over LLVM IR graphs")
    parser.add_argument("--verbose", action="store_true", help="debug logging")
    parser.add_argument("--log-format", choices=["text", "json"], default="text")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("parse", help="pretty-print the functions of an IR file")
    p.add_argument("file")
    p.add_argument("--strict", action="store_true")
    p.set_defaults(func=cmd_parse)

    p = sub.add_parser("graph", help="export the semantic graph of every function in an IR file")
    p.add_argument("file")
    p.add_argument("--variant", choices=VARIANTS, default="seed")
    p.add_argument("--format", choices=["json", "dot"], default="json")
    p.add_argument("--strict", action="store_true")
    p.set_defaults(func=cmd_graph)

    p = sub.add_parser("train", help="train on a corpus and write a checkpoint")
    p.add_argument("corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--variant", choices=VARIANTS)
    p.add_argument("--strict", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a split of the corpus")
    p.add_argument("corpus")
    p.add_argument("checkpoint")
    p.add_argument("--split", choices=["train", "val", "test"], default="test")
    p.add_argument("--config")
    p.add_argument("--strict", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("detect", help="score one pair of IR files")
    p.add_argument("file_a")
    p.add_argument("file_b")
    p.add_argument("checkpoint")
    p.add_argument("--strict", action="store_true")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("stats", help="graph size statistics over a corpus")
    p.add_argument("corpus")
    p.add_argument("--variant", choices=VARIANTS)
    p.add_argument("--strict", action="store_true")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("synth", help="write the bundled synthetic corpus")
    p.add_argument("out")
    p.add_argument("--problems", type=int, default=8)
    p.add_argument("--variants", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(args.verbose, args.log_format)
    try:
        return args.func(args)
    except (SeedError, FileNotFoundError, ValidationError) as exc:
        logger.error("%s", " ".join(str(exc).split()) or type(exc).__name__)
        return 1
    except Exception:
        logger.exception("internal error")
        return 2


if __name__ == "__main__":
    sys.exit(main())
