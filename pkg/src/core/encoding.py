# ==============================================
# File: src/core/encoding.py
# Description: Token vocabulary and the numeric view of a semantic graph
# ==============================================
from __future__ import annotations
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Optional
import hashlib
import logging

import numpy as np

from src.core.semantic_graph import EdgeType, NodeKind, SemanticGraph

logger = logging.getLogger(__name__)

UNK = "<unk>"
LABEL_KEY = "label"
EDGE_INDEX = {EdgeType.DATA: 0, EdgeType.CONTROL: 1}


def vocab_key(kind: NodeKind, token: str) -> str:
    # block names carry no semantics; every label node shares one slot
    return LABEL_KEY if kind == NodeKind.LABEL else token


class Vocabulary:
    """Dense token index with `<unk>` pinned at 0."""

    def __init__(self, tokens: Iterable[str] = (), frozen: bool = False):
        self._index: Dict[str, int] = {UNK: 0}
        self.frozen = False
        for token in tokens:
            self.add(token)
        self.frozen = frozen

    def add(self, token: str) -> int:
        if token in self._index:
            return self._index[token]
        if self.frozen:
            return 0
        self._index[token] = len(self._index)
        return self._index[token]

    def freeze(self) -> "Vocabulary":
        self.frozen = True
        return self

    def index(self, token: str) -> int:
        return self._index.get(token, 0)

    def __contains__(self, token: str) -> bool:
        return token in self._index

    def __len__(self) -> int:
        return len(self._index)

    @property
    def tokens(self) -> List[str]:
        return sorted(self._index, key=self._index.__getitem__)

    def digest(self) -> str:
        return hashlib.sha256("\n".join(self.tokens).encode("utf-8")).hexdigest()

    def save(self, path: Path) -> None:
        Path(path).write_text("\n".join(self.tokens) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: Path) -> "Vocabulary":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        if not lines or lines[0] != UNK:
            raise ValueError(f"{path}: vocabulary must start with {UNK}")
        return cls(lines[1:], frozen=True)


def build_vocab(graphs: Iterable[SemanticGraph]) -> Vocabulary:
    keys = {vocab_key(node.kind, node.token) for g in graphs for node in g.nodes}
    keys.discard(UNK)
    vocab = Vocabulary(sorted(keys), frozen=True)
    logger.info("Vocabulary built: %d entries", len(vocab))
    return vocab


@dataclass(frozen=True)
class GraphTensors:
    """Token indices plus edge arrays; everything the network needs from a graph."""
    tokens: np.ndarray
    src: np.ndarray
    dst: np.ndarray
    etype: np.ndarray
    name: str = ""

    @property
    def num_nodes(self) -> int:
        return int(self.tokens.shape[0])

    @property
    def num_edges(self) -> int:
        return int(self.src.shape[0])

    def permuted(self, perm: np.ndarray) -> "GraphTensors":
        """Relabel nodes so that old node i becomes node perm[i]."""
        perm = np.asarray(perm, dtype=np.int64)
        tokens = np.empty_like(self.tokens)
        tokens[perm] = self.tokens
        return GraphTensors(tokens, perm[self.src], perm[self.dst], self.etype.copy(), self.name)


def to_tensors(g: SemanticGraph, vocab: Vocabulary) -> GraphTensors:
    tokens = np.array([vocab.index(vocab_key(n.kind, n.token)) for n in g.nodes], dtype=np.int64)
    src = np.array([e.src for e in g.edges], dtype=np.int64)
    dst = np.array([e.dst for e in g.edges], dtype=np.int64)
    etype = np.array([EDGE_INDEX[e.etype] for e in g.edges], dtype=np.int64)
    return GraphTensors(tokens, src, dst, etype, g.function)


def encode_graph(g: SemanticGraph | GraphTensors, vocab: Optional[Vocabulary],
                 embedding: np.ndarray) -> np.ndarray:
    """Initial node features: row i is the embedding of node i's token."""
    tensors = g if isinstance(g, GraphTensors) else to_tensors(g, vocab)
    return embedding[tensors.tokens]
