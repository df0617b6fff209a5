# ==============================================
# File: src/core/pipeline.py
# Description: Train / evaluate orchestration as a langgraph StateGraph. Each
#              stage is a node that takes the pipeline state and returns an
#              updated copy; events are kept in the state's scratchpad.
# ==============================================
from __future__ import annotations
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, TypedDict
import logging

from langgraph.graph import StateGraph, START, END

from src.core.encoding import GraphTensors, Vocabulary, build_vocab, to_tensors
from src.core.errors import InvalidSplit
from src.core.ir_parser import IrFunction
from src.core.semantic_graph import GraphVariant, SemanticGraph, build_graph, merge_graphs
from src.core.training import EvalReport, LabeledPair, TrainConfig, TrainResult, evaluate, train
from src.tools.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from src.tools.config import RunConfig
from src.tools.corpus import (
    CorpusIndex, SplitSpec, make_splits, parse_id_groups, parse_id_ranges, sample_pairs, scan_corpus, write_pairs,
)

logger = logging.getLogger(__name__)

SPLITS = ("train", "val", "test")


class PipelineState(TypedDict, total=False):
    corpus_root: Path
    checkpoint_path: Optional[Path]
    train_config: TrainConfig
    index: CorpusIndex
    splits: SplitSpec
    graphs: Dict[str, SemanticGraph]
    vocab: Vocabulary
    tensors: Dict[str, GraphTensors]
    pairs: Dict[str, List[LabeledPair]]
    result: TrainResult
    checkpoint: Checkpoint
    report: EvalReport
    reports: Dict[str, EvalReport]
    scratchpad: List[Dict[str, Any]]


@dataclass
class PipelineConfig:
    out: Optional[Path] = None
    eval_split: str = "test"


def snippet_graph(functions: Sequence[IrFunction], variant: GraphVariant, name: str) -> SemanticGraph:
    """One graph per file: the disjoint union of its function graphs."""
    return merge_graphs([build_graph(fn, variant) for fn in functions], name=name)


def _output_paths(out: Path) -> Dict[str, Path]:
    paths = {"history": Path(f"{out}.history.jsonl")}
    paths.update({split: Path(f"{out}.pairs.{split}.txt") for split in SPLITS})
    return paths


class ClonePipeline:
    def __init__(self, run_config: RunConfig, config: Optional[PipelineConfig] = None):
        self.run_config = run_config
        self.config = config or PipelineConfig()
        self.graph = self._build_graph()

    # ---------------------------
    # Nodes
    # ---------------------------
    def _node_load_checkpoint(self, state: PipelineState) -> PipelineState:
        checkpoint = load_checkpoint(state["checkpoint_path"])
        new: PipelineState = dict(state)
        new["checkpoint"] = checkpoint
        new["train_config"] = checkpoint.config
        new["vocab"] = checkpoint.vocab
        if checkpoint.splits:
            new["splits"] = SplitSpec.from_dict(checkpoint.splits)
        new.setdefault("scratchpad", []).append(
            {"event": "checkpoint_loaded", "threshold": checkpoint.threshold, "vocab": len(checkpoint.vocab)})
        return new

    def _node_scan(self, state: PipelineState) -> PipelineState:
        index = scan_corpus(state["corpus_root"], strict=self.run_config.strict)
        new: PipelineState = dict(state)
        new["index"] = index
        new.setdefault("scratchpad", []).append(
            {"event": "scanned", "problems": len(index.problems), "snippets": index.total,
             "skipped": len(index.skipped)})
        return new

    def _with_splits(self, state: PipelineState, splits: SplitSpec, source: str) -> PipelineState:
        splits.assert_disjoint()
        unknown = (splits.train | splits.val | splits.test) - set(state["index"].problems)
        if unknown:
            raise InvalidSplit(f"split names problems missing from the corpus: {sorted(unknown)}")
        new: PipelineState = dict(state)
        new["splits"] = splits
        new.setdefault("scratchpad", []).append(
            {"event": "split", "source": source,
             **{k: len(v) for k, v in splits.as_dict().items()}})
        return new

    def _node_split_given(self, state: PipelineState) -> PipelineState:
        return self._with_splits(state, state["splits"], "given")

    def _node_split_explicit(self, state: PipelineState) -> PipelineState:
        rc = self.run_config
        train_ids, val_ids = [parse_id_ranges(text) if text else None
                              for text in (rc.train_problems, rc.val_problems)]
        groups = parse_id_groups(rc.test_problems) if rc.test_problems else []
        splits = make_splits(state["index"], train_ids, val_ids,
                             test=groups[0] if len(groups) == 1 else None,
                             test_groups=groups if len(groups) > 1 else None)
        return self._with_splits(state, splits, "explicit")

    def _node_split_ratio(self, state: PipelineState) -> PipelineState:
        splits = make_splits(state["index"], ratios=self.run_config.split_ratio, seed=state["train_config"].seed)
        return self._with_splits(state, splits, "ratio")

    def _node_build_graphs(self, state: PipelineState) -> PipelineState:
        index, splits = state["index"], state["splits"]
        variant = state["train_config"].variant
        wanted = splits.train | splits.val | splits.test
        graphs = {s.key: snippet_graph(index.functions[s.key], variant, s.key) for s in index.snippets(wanted)}
        new: PipelineState = dict(state)
        new["graphs"] = graphs
        new.setdefault("scratchpad", []).append({"event": "graphs_built", "count": len(graphs)})
        return new

    def _node_sample(self, state: PipelineState) -> PipelineState:
        rc = self.run_config
        seed = state["train_config"].seed
        splits = state["splits"]
        pairs: Dict[str, List[LabeledPair]] = {
            "train": sample_pairs(state["index"], splits.train, rc.train_pairs, seed),
            "val": sample_pairs(state["index"], splits.val, rc.eval_pairs, seed + 1),
        }
        groups = splits.eval_groups()
        for offset, (name, ids) in enumerate(groups.items()):
            pairs[name] = sample_pairs(state["index"], ids, rc.eval_pairs, seed + 2 + offset)
        if len(groups) > 1:
            pairs["test"] = [p for name in groups for p in pairs[name]]
        new: PipelineState = dict(state)
        new["pairs"] = pairs
        new.setdefault("scratchpad", []).append(
            {"event": "sampled", **{k: len(v) for k, v in pairs.items()}})
        return new

    def _node_encode(self, state: PipelineState) -> PipelineState:
        graphs, splits = state["graphs"], state["splits"]
        vocab = state.get("vocab")
        if vocab is None:
            train_keys = {s.key for s in state["index"].snippets(splits.train)}
            vocab = build_vocab(g for key, g in graphs.items() if key in train_keys)
        new: PipelineState = dict(state)
        new["vocab"] = vocab
        new["tensors"] = {key: to_tensors(g, vocab) for key, g in graphs.items()}
        new.setdefault("scratchpad", []).append({"event": "encoded", "vocab": len(vocab)})
        return new

    def _node_train(self, state: PipelineState) -> PipelineState:
        out = self.config.out
        config = state["train_config"]
        paths = _output_paths(out) if out else {}
        if out:
            for split in SPLITS:
                write_pairs(paths[split], state["pairs"][split])
        result = train(state["pairs"]["train"], state["pairs"]["val"], state["tensors"],
                       len(state["vocab"]), config, paths.get("history"))
        if out:
            save_checkpoint(out, result.params, state["vocab"], result.threshold,
                            config, state["splits"].as_dict())
        new: PipelineState = dict(state)
        new["result"] = result
        new.setdefault("scratchpad", []).append(
            {"event": "trained", "best_epoch": result.best_epoch, "threshold": result.threshold})
        return new

    def _node_evaluate(self, state: PipelineState) -> PipelineState:
        source = state["checkpoint"] if "checkpoint" in state else state["result"]
        split = self.config.eval_split
        names = list(state["splits"].eval_groups()) if split == "test" else [split]
        reports = {
            name: evaluate(state["pairs"][name], state["tensors"], source.params, source.threshold,
                           state["train_config"].iterations)
            for name in names
        }
        report = reports[names[0]] if len(names) == 1 else EvalReport.average(list(reports.values()))
        new: PipelineState = dict(state)
        new["reports"] = reports
        new["report"] = report
        new.setdefault("scratchpad", []).append(
            {"event": "evaluated", "split": split, "groups": len(reports), "f1": report.f1})
        return new

    # ---------------------------
    # Routing
    # ---------------------------
    def _should_load_checkpoint(self, state: PipelineState) -> str:
        return "load" if state.get("checkpoint_path") else "fresh"

    def _should_compute_splits(self, state: PipelineState) -> str:
        if "splits" in state:
            return "given"
        if self.run_config.train_problems or self.run_config.val_problems:
            return "explicit"
        return "ratio"

    def _should_train(self, state: PipelineState) -> str:
        return "evaluate" if "checkpoint" in state else "train"

    def _build_graph(self):
        g = StateGraph(PipelineState)
        g.add_node("load_checkpoint", self._node_load_checkpoint)
        g.add_node("scan", self._node_scan)
        g.add_node("split_given", self._node_split_given)
        g.add_node("split_explicit", self._node_split_explicit)
        g.add_node("split_ratio", self._node_split_ratio)
        g.add_node("build_graphs", self._node_build_graphs)
        g.add_node("sample", self._node_sample)
        g.add_node("encode", self._node_encode)
        g.add_node("train", self._node_train)
        g.add_node("evaluate", self._node_evaluate)

        g.add_conditional_edges(START, self._should_load_checkpoint, {
            "load": "load_checkpoint",
            "fresh": "scan",
        })
        g.add_edge("load_checkpoint", "scan")
        g.add_conditional_edges("scan", self._should_compute_splits, {
            "given": "split_given",
            "explicit": "split_explicit",
            "ratio": "split_ratio",
        })
        for node in ("split_given", "split_explicit", "split_ratio"):
            g.add_edge(node, "build_graphs")
        g.add_edge("build_graphs", "sample")
        g.add_edge("sample", "encode")
        g.add_conditional_edges("encode", self._should_train, {
            "train": "train",
            "evaluate": "evaluate",
        })
        g.add_edge("train", "evaluate")
        g.add_edge("evaluate", END)
        return g.compile()

    # ---------------------------
    # Runners
    # ---------------------------
    def run_training(self, corpus_root: Path, splits: Optional[SplitSpec] = None) -> PipelineState:
        '''
        takes the corpus root and optional precomputed splits as input;
        scans, splits, samples, trains and evaluates on the test split (every test group)

        returns :
        PipelineState(
            index=CorpusIndex(...), splits=SplitSpec(...), pairs={"train": [...], "val": [...], "test": [...]},
            vocab=Vocabulary(...), result=TrainResult(...),
            report=EvalReport(threshold=0.41, tp=45, fp=3, tn=47, fn=5, precision=0.94, recall=0.9, f1=0.92),
            reports={"test": EvalReport(...)},
            scratchpad=[{"event": "scanned", ...}, {"event": "split", ...}, ..., {"event": "evaluated", ...}],
        )
        '''
        state: PipelineState = {"corpus_root": Path(corpus_root), "train_config": self.run_config.train,
                                "scratchpad": []}
        if splits is not None:
            # overlapping splits abort before any corpus work
            splits.assert_disjoint()
            state["splits"] = splits
        logger.debug("Running training graph on %s", corpus_root)
        return self.graph.invoke(state)

    def run_evaluation(self, corpus_root: Path, checkpoint_path: Path) -> PipelineState:
        '''
        takes the corpus root and a checkpoint path as input; model settings, vocabulary,
        splits and threshold all come from the checkpoint

        returns :
        PipelineState(
            checkpoint=Checkpoint(...), splits=SplitSpec(...), pairs={...},
            report=EvalReport(...),                       # average over test groups when there are several
            reports={"test1": EvalReport(...), "test2": EvalReport(...)},
            scratchpad=[{"event": "checkpoint_loaded", ...}, ..., {"event": "evaluated", ...}],
        )
        '''
        state: PipelineState = {"corpus_root": Path(corpus_root), "checkpoint_path": Path(checkpoint_path),
                                "train_config": self.run_config.train, "scratchpad": []}
        logger.debug("Running evaluation graph on %s with %s", corpus_root, checkpoint_path)
        return self.graph.invoke(state)
