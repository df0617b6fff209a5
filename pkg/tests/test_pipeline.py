import json

import pytest

from src.core.errors import InsufficientPairs, InvalidSplit, OverlappingSplit
from src.core.gmn import ModelParams
from src.core.pipeline import ClonePipeline, PipelineConfig
from src.core.training import EvalReport, score_pairs, select_threshold
from src.tools.config import build_run_config
from src.tools.corpus import SplitSpec, read_pairs

pytestmark = pytest.mark.slow


@pytest.fixture(scope="module")
def trained(synthetic_corpus, tmp_path_factory):
    out = tmp_path_factory.mktemp("run") / "model.safetensors"
    pipeline = ClonePipeline(build_run_config({}, {}), PipelineConfig(out=out))
    return out, pipeline.run_training(synthetic_corpus)


def _small_run(corpus, out, **overrides):
    values = {"epochs": 3, "embed_dim": 8, "edge_dim": 4, "iterations": 2, "train_pairs": 40, "eval_pairs": 20}
    values.update(overrides)
    return ClonePipeline(build_run_config({}, values), PipelineConfig(out=out)).run_training(corpus)


def test_learns_the_synthetic_corpus(trained):
    _, state = trained
    result = state["result"]
    assert result.history[result.best_epoch - 1].val_f1 >= 0.9
    assert state["report"].f1 >= 0.7
    assert len(result.history) <= 30


def test_early_epochs_reduce_training_loss(trained):
    losses = [h.train_loss for h in trained[1]["result"].history[:5]]
    violations = sum(b > a for a, b in zip(losses, losses[1:]))
    assert violations <= 1


def test_training_moves_the_model(trained):
    state = trained[1]
    config, val_pairs = state["train_config"], state["pairs"]["val"]
    history = state["result"].history
    assert history[0].train_loss > 0
    untrained = ModelParams.initialize(config.gmn_config(), len(state["vocab"]), config.seed)
    scores = score_pairs(val_pairs, state["tensors"], untrained, config.iterations)
    _, untrained_f1 = select_threshold(scores, [p.problem_a == p.problem_b for p in val_pairs])
    assert max(h.val_f1 for h in history) > untrained_f1


def test_outputs_written(trained):
    out, state = trained
    history = [json.loads(line) for line in open(f"{out}.history.jsonl", encoding="utf-8")]
    assert [h["epoch"] for h in history] == [h.epoch for h in state["result"].history]
    for split in ("train", "val", "test"):
        assert read_pairs(f"{out}.pairs.{split}.txt") == state["pairs"][split]
    events = [e["event"] for e in state["scratchpad"]]
    assert events == ["scanned", "split", "graphs_built", "sampled", "encoded", "trained", "evaluated"]
    assert state["scratchpad"][1]["source"] == "ratio"


def test_pairs_respect_the_split(trained):
    state = trained[1]
    splits = state["splits"]
    splits.assert_disjoint()
    for name in ("train", "val", "test"):
        allowed = getattr(splits, name)
        assert all(p.problem_a in allowed and p.problem_b in allowed for p in state["pairs"][name])


def test_checkpoint_evaluation_reproduces_test_report(trained, synthetic_corpus):
    out, state = trained
    pipeline = ClonePipeline(build_run_config({}, {}))
    evaluated = pipeline.run_evaluation(synthetic_corpus, out)
    assert evaluated["report"] == state["report"]
    assert evaluated["splits"] == state["splits"]
    assert "result" not in evaluated
    events = [e["event"] for e in evaluated["scratchpad"]]
    assert events == ["checkpoint_loaded", "scanned", "split", "graphs_built", "sampled", "encoded", "evaluated"]
    assert evaluated["scratchpad"][2]["source"] == "given"


def test_runs_are_deterministic(synthetic_corpus, tmp_path):
    first = _small_run(synthetic_corpus, tmp_path / "a.safetensors", seed=4)
    second = _small_run(synthetic_corpus, tmp_path / "b.safetensors", seed=4)
    assert (tmp_path / "a.safetensors.history.jsonl").read_bytes() == \
        (tmp_path / "b.safetensors.history.jsonl").read_bytes()
    assert first["report"].model_dump_json() == second["report"].model_dump_json()
    assert (tmp_path / "a.safetensors.vocab").read_bytes() == (tmp_path / "b.safetensors.vocab").read_bytes()


def test_overlapping_splits_abort_before_scanning(tmp_path):
    overlap = SplitSpec(frozenset({"1", "2"}), frozenset({"2"}), frozenset({"3"}))
    pipeline = ClonePipeline(build_run_config({}, {}))
    with pytest.raises(OverlappingSplit):
        pipeline.run_training(tmp_path / "no-such-corpus", splits=overlap)


def test_split_with_unknown_problem(synthetic_corpus):
    splits = SplitSpec(frozenset({"1"}), frozenset({"2"}), frozenset({"99"}))
    with pytest.raises(InvalidSplit):
        ClonePipeline(build_run_config({}, {})).run_training(synthetic_corpus, splits=splits)


def test_explicit_ranges_leave_the_rest_for_test(synthetic_corpus, tmp_path):
    state = _small_run(synthetic_corpus, tmp_path / "m.safetensors", epochs=1,
                       train_problems="1-4", val_problems="5-6")
    assert state["splits"].as_dict() == {"train": ["1", "2", "3", "4"], "val": ["5", "6"], "test": ["7", "8"]}


def test_single_problem_split_cannot_form_nonclones(synthetic_corpus, tmp_path):
    with pytest.raises(InsufficientPairs):
        _small_run(synthetic_corpus, tmp_path / "m.safetensors", epochs=1,
                   train_problems="1-5", val_problems="6", test_problems="7-8")


def test_several_test_groups_are_reported_and_averaged(synthetic_corpus, tmp_path):
    out = tmp_path / "m.safetensors"
    state = _small_run(synthetic_corpus, out, epochs=1,
                       train_problems="1-2", val_problems="3-4", test_problems="5-6;7-8")
    assert state["scratchpad"][1]["source"] == "explicit"
    assert state["splits"].as_dict()["test2"] == ["7", "8"]
    reports = state["reports"]
    assert list(reports) == ["test1", "test2"]
    assert state["report"] == EvalReport.average([reports["test1"], reports["test2"]])
    assert state["pairs"]["test"] == state["pairs"]["test1"] + state["pairs"]["test2"]
    assert all(p.problem_a in {"5", "6"} for p in state["pairs"]["test1"])

    evaluated = ClonePipeline(build_run_config({}, {"eval_pairs": 20})).run_evaluation(synthetic_corpus, out)
    assert evaluated["reports"] == reports
    assert evaluated["report"] == state["report"]
