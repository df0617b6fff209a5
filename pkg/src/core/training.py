# ==============================================
# File: src/core/training.py
# Description: Pair loss, mini-batch SGD loop, validation threshold selection
#              and precision / recall / F1 evaluation
# ==============================================
from __future__ import annotations
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Literal, Mapping, Optional, Sequence, Tuple
import logging

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from sklearn.metrics import confusion_matrix, precision_recall_curve, precision_recall_fscore_support

from src.core.encoding import GraphTensors
from src.core.errors import DegenerateData
from src.core.gmn import GmnConfig, ModelParams, backward_pair, forward_pair
from src.core.loss import PairLabel, pair_loss
from src.core.semantic_graph import GraphVariant

logger = logging.getLogger(__name__)

__all__ = [
    "TrainConfig", "LabeledPair", "EvalReport", "HistoryRecord", "TrainResult",
    "pair_loss", "train", "select_threshold", "evaluate", "score_pairs", "confusion_counts",
]


class TrainConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    epochs: int = Field(default=30, ge=1, description="Maximum number of passes over the training pairs")
    batch_size: int = Field(default=16, ge=1, description="Pairs per SGD step")
    learning_rate: float = Field(default=0.05, ge=0.0, description="Plain SGD step size")
    margin: float = Field(default=0.5, gt=0.0, lt=2.0, description="Hinge margin on cosine similarity")
    iterations: int = Field(default=5, ge=1, description="Propagation rounds per pair")
    seed: int = Field(default=0, ge=0, description="Seeds initialisation and shuffling")
    variant: GraphVariant = Field(default=GraphVariant.SEED, description="Graph construction variant")
    patience: int = Field(default=10, ge=1, description="Epochs without validation F1 gain before stopping")
    embed_dim: int = Field(default=32, ge=1, description="Node embedding / hidden size")
    edge_dim: int = Field(default=32, ge=1, description="Edge vector size")
    dtype: Literal["float64", "float32"] = Field(default="float64", description="Training precision")

    def gmn_config(self) -> GmnConfig:
        return GmnConfig(embed_dim=self.embed_dim, edge_dim=self.edge_dim,
                         iterations=self.iterations, dtype=self.dtype)


@dataclass(frozen=True)
class LabeledPair:
    """Two snippet keys (``problem/snippet``) and whether they share a problem."""
    key_a: str
    key_b: str
    label: PairLabel
    problem_a: str
    problem_b: str

    def __post_init__(self):
        same = self.problem_a == self.problem_b
        if same != (PairLabel(self.label) is PairLabel.CLONE):
            raise ValueError(f"label {self.label} contradicts problems {self.problem_a}/{self.problem_b}")


class EvalReport(BaseModel):
    threshold: float
    tp: int
    fp: int
    tn: int
    fn: int
    precision: float
    recall: float
    f1: float

    @classmethod
    def from_scores(cls, threshold: float, scores: Sequence[float], is_clone: Sequence[bool]) -> "EvalReport":
        predicted = np.asarray(scores) >= threshold
        tp, fp, tn, fn = confusion_counts(scores, is_clone, threshold)
        precision, recall, f1 = prf(is_clone, predicted)
        return cls(threshold=threshold, tp=tp, fp=fp, tn=tn, fn=fn,
                   precision=precision, recall=recall, f1=f1)

    @classmethod
    def average(cls, reports: Sequence["EvalReport"]) -> "EvalReport":
        """Counts summed over the test groups; precision, recall and F1 are group means."""
        return cls(
            threshold=reports[0].threshold,
            tp=sum(r.tp for r in reports), fp=sum(r.fp for r in reports),
            tn=sum(r.tn for r in reports), fn=sum(r.fn for r in reports),
            precision=float(np.mean([r.precision for r in reports])),
            recall=float(np.mean([r.recall for r in reports])),
            f1=float(np.mean([r.f1 for r in reports])),
        )


class HistoryRecord(BaseModel):
    epoch: int
    train_loss: float
    val_f1: float
    threshold: float


@dataclass
class TrainResult:
    params: ModelParams
    threshold: float
    best_epoch: int
    history: List[HistoryRecord] = field(default_factory=list)


# ---------------------------
# Metrics
# ---------------------------
def prf(is_clone: Sequence[bool], predicted: Sequence[bool]) -> Tuple[float, float, float]:
    precision, recall, f1, _ = precision_recall_fscore_support(
        np.asarray(is_clone, dtype=bool), np.asarray(predicted, dtype=bool),
        average="binary", pos_label=True, zero_division=0,
    )
    return float(precision), float(recall), float(f1)


def confusion_counts(scores: np.ndarray, is_clone: np.ndarray, threshold: float) -> Tuple[int, int, int, int]:
    predicted = np.asarray(scores) >= threshold
    actual = np.asarray(is_clone, dtype=bool)
    tn, fp, fn, tp = confusion_matrix(actual, predicted, labels=[False, True]).ravel()
    return int(tp), int(fp), int(tn), int(fn)


def _require_both_labels(labels: np.ndarray, what: str) -> None:
    if labels.size == 0 or labels.all() or not labels.any():
        raise DegenerateData(f"{what} needs at least one clone and one nonclone pair")


def select_threshold(scores: Sequence[float], is_clone: Sequence[bool]) -> Tuple[float, float]:
    """Pick the cut-point with the best F1; ties go to the larger threshold.

    Candidates are the lowest score (everything predicted clone) and the
    midpoints between adjacent distinct scores. `precision_recall_curve`
    sweeps the distinct scores; each one stands for the midpoint below it.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(is_clone, dtype=bool)
    _require_both_labels(labels, "threshold selection")
    precision, recall, cuts = precision_recall_curve(labels, scores)
    precision, recall = precision[:-1], recall[:-1]
    total = precision + recall
    f1 = np.divide(2.0 * precision * recall, total, out=np.zeros_like(total), where=total > 0)
    best = np.flatnonzero(np.isclose(f1, f1.max(), rtol=0.0, atol=1e-12))[-1]
    distinct = np.unique(scores)
    k = int(np.searchsorted(distinct, cuts[best]))
    threshold = distinct[0] if k == 0 else (distinct[k - 1] + distinct[k]) / 2.0
    return float(threshold), float(f1[best])


# ---------------------------
# Scoring
# ---------------------------
def score_pairs(pairs: Sequence[LabeledPair], graphs: Mapping[str, GraphTensors],
                params: ModelParams, iterations: int) -> np.ndarray:
    return np.array([forward_pair(graphs[p.key_a], graphs[p.key_b], params, iterations).similarity
                     for p in pairs], dtype=np.float64)


def _clone_mask(pairs: Sequence[LabeledPair]) -> np.ndarray:
    return np.array([PairLabel(p.label) is PairLabel.CLONE for p in pairs], dtype=bool)


def evaluate(pairs: Sequence[LabeledPair], graphs: Mapping[str, GraphTensors],
             params: ModelParams, threshold: float, iterations: int = 5) -> EvalReport:
    scores = score_pairs(pairs, graphs, params, iterations)
    report = EvalReport.from_scores(threshold, scores, _clone_mask(pairs))
    logger.info("Evaluated %d pairs at threshold %.4f: P=%.3f R=%.3f F1=%.3f",
                len(pairs), threshold, report.precision, report.recall, report.f1)
    return report


# ---------------------------
# Training loop
# ---------------------------
def _sgd_epoch(pairs: Sequence[LabeledPair], graphs: Mapping[str, GraphTensors], params: ModelParams,
               config: TrainConfig, rng: np.random.Generator) -> float:
    order = rng.permutation(len(pairs))
    total = 0.0
    for start in range(0, len(order), config.batch_size):
        batch = order[start:start + config.batch_size]
        grads = params.zeros_like()
        for idx in batch:
            pair = pairs[int(idx)]
            loss, _, pair_grads = backward_pair(graphs[pair.key_a], graphs[pair.key_b], pair.label,
                                                params, config.iterations, config.margin)
            grads.axpy(1.0, pair_grads)
            total += loss
        params.axpy(-config.learning_rate / len(batch), grads)
    return total / len(pairs)


def train(train_pairs: Sequence[LabeledPair], val_pairs: Sequence[LabeledPair],
          graphs: Mapping[str, GraphTensors], vocab_size: int, config: TrainConfig,
          history_path: Optional[Path] = None) -> TrainResult:
    '''
    SGD over shuffled mini-batches of train_pairs; after every epoch the validation
    pairs pick a threshold and the parameters with the best validation F1 are kept.
    Stops after `patience` epochs without improvement.

    returns :
    TrainResult(
        params=ModelParams(...),    # copy taken at the best epoch
        threshold=0.41,
        best_epoch=7,
        history=[HistoryRecord(epoch=1, train_loss=0.21, val_f1=0.74, threshold=0.38), ...],
    )
    '''
    _require_both_labels(_clone_mask(train_pairs), "training split")
    val_mask = _clone_mask(val_pairs)
    _require_both_labels(val_mask, "validation split")

    params = ModelParams.initialize(config.gmn_config(), vocab_size, config.seed)
    rng = np.random.default_rng(config.seed)
    best: Optional[TrainResult] = None
    history: List[HistoryRecord] = []
    stale = 0
    if history_path is not None:
        Path(history_path).write_text("", encoding="utf-8")

    for epoch in range(1, config.epochs + 1):
        train_loss = _sgd_epoch(train_pairs, graphs, params, config, rng)
        val_scores = score_pairs(val_pairs, graphs, params, config.iterations)
        threshold, val_f1 = select_threshold(val_scores, val_mask)
        record = HistoryRecord(epoch=epoch, train_loss=train_loss, val_f1=val_f1, threshold=threshold)
        history.append(record)
        if history_path is not None:
            with open(history_path, "a", encoding="utf-8") as fh:
                fh.write(record.model_dump_json() + "\n")
        logger.info("Epoch %d: train_loss=%.5f val_f1=%.4f threshold=%.4f",
                    epoch, train_loss, val_f1, threshold)

        if best is None or val_f1 > max(h.val_f1 for h in history[:-1]):
            best = TrainResult(params.copy(), threshold, epoch)
            stale = 0
        else:
            stale += 1
            if stale >= config.patience:
                logger.info("Early stop after epoch %d (best epoch %d)", epoch, best.best_epoch)
                break

    best.history = history
    return best
