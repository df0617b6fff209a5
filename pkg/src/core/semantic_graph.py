# ==============================================
# File: src/core/semantic_graph.py
# Description: Operation-centric semantic graph (data flow + control flow)
#              built from a parsed IR function, plus stats and export
# ==============================================
from __future__ import annotations
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple
import json
import logging
import re

import networkx as nx

from src.core.ir_parser import Instruction, IrFunction, OperandKind

logger = logging.getLogger(__name__)


class NodeKind(str, Enum):
    OPERATION = "operation"
    LABEL = "label"
    CONSTANT = "constant"
    INPUT = "input"
    IDENTIFIER = "identifier"
    DATATYPE = "datatype"


class EdgeType(str, Enum):
    DATA = "data"
    CONTROL = "control"


class GraphVariant(str, Enum):
    SEED = "seed"
    SEED_TYPE = "seed+type"
    SEED_IDENTIFIER = "seed+identifier"


OPERAND_KINDS = (NodeKind.CONSTANT, NodeKind.INPUT, NodeKind.IDENTIFIER, NodeKind.DATATYPE)
SMALL_INT_LIMIT = 255


@dataclass(frozen=True)
class Node:
    id: int
    kind: NodeKind
    token: str


@dataclass(frozen=True)
class Edge:
    src: int
    dst: int
    etype: EdgeType


@dataclass
class SemanticGraph:
    nodes: List[Node] = field(default_factory=list)
    edges: List[Edge] = field(default_factory=list)
    variant: GraphVariant = GraphVariant.SEED
    function: str = ""

    def __len__(self) -> int:
        return len(self.nodes)

    def add_node(self, kind: NodeKind, token: str) -> int:
        node = Node(len(self.nodes), kind, token)
        self.nodes.append(node)
        return node.id

    def to_networkx(self) -> nx.MultiDiGraph:
        g = nx.MultiDiGraph(function=self.function, variant=self.variant.value)
        for node in self.nodes:
            g.add_node(node.id, kind=node.kind.value, token=node.token)
        for edge in self.edges:
            g.add_edge(edge.src, edge.dst, etype=edge.etype.value)
        return g


@dataclass
class GraphStats:
    nodes: Dict[str, int]
    edges: Dict[str, int]
    distinct_tokens: int
    components: int

    @property
    def operand_nodes(self) -> int:
        return sum(self.nodes.get(kind.value, 0) for kind in OPERAND_KINDS)

    @property
    def dataflow_edges(self) -> int:
        return self.edges.get(EdgeType.DATA.value, 0)

    @property
    def total_nodes(self) -> int:
        return sum(self.nodes.values())

    @property
    def total_edges(self) -> int:
        return sum(self.edges.values())


def constant_token(literal: str) -> str:
    """Bucket a constant literal: small ints keep their value, the rest collapse."""
    if literal.startswith("@"):
        return literal
    if re.fullmatch(r"-?\d+", literal):
        return literal if abs(int(literal)) <= SMALL_INT_LIMIT else "@int"
    if re.fullmatch(r"-?[\d.]+(?:[eE][-+]?\d+)?|0x[KLMHR]?[0-9A-Fa-f]+", literal):
        return "@float"
    return literal


class _GraphBuilder:
    """Holds the per-function lookup tables while the graph is assembled."""

    def __init__(self, fn: IrFunction, variant: GraphVariant):
        self.fn = fn
        self.variant = variant
        self.graph = SemanticGraph(variant=variant, function=fn.name)
        self.op_node: Dict[int, int] = {}
        self.const_nodes: Dict[Tuple[int, str], int] = {}
        self.label_node: Dict[str, int] = {}
        self.input_node: Dict[str, int] = {}
        self.value_node: Dict[str, int] = {}
        self.producer: Dict[str, int] = {}
        self.instructions: List[Instruction] = fn.instructions
        self._edge_seen: set = set()

    def add_edge(self, src: int, dst: int, etype: EdgeType) -> None:
        key = (src, dst, etype)
        if src == dst or key in self._edge_seen:
            return
        self._edge_seen.add(key)
        self.graph.edges.append(Edge(src, dst, etype))

    def create_nodes(self) -> None:
        g = self.graph
        for name, dtype in self.fn.params:
            self.input_node[name] = g.add_node(NodeKind.INPUT, dtype)
        index = 0
        for block in self.fn.blocks:
            self.label_node[block.label] = g.add_node(NodeKind.LABEL, f"label:{block.label}")
            for ins in block.instructions:
                self.op_node[index] = g.add_node(NodeKind.OPERATION, ins.opcode)
                for op in ins.operands:
                    if op.variant != OperandKind.CONSTANT:
                        continue
                    token = constant_token(op.name)
                    if (index, token) not in self.const_nodes:
                        self.const_nodes[(index, token)] = g.add_node(NodeKind.CONSTANT, token)
                if ins.result is not None:
                    self.producer[ins.result] = index
                    if self.variant == GraphVariant.SEED_IDENTIFIER:
                        self.value_node[ins.result] = g.add_node(NodeKind.IDENTIFIER, ins.result)
                    elif self.variant == GraphVariant.SEED_TYPE:
                        self.value_node[ins.result] = g.add_node(
                            NodeKind.DATATYPE, ins.value_dtype() or "void")
                index += 1


def add_dataflow_edges(builder: _GraphBuilder) -> None:
    for index, ins in enumerate(builder.instructions):
        consumer = builder.op_node[index]
        for op in ins.operands:
            if op.variant == OperandKind.VALUE:
                if op.name in builder.producer:
                    builder.add_edge(builder.op_node[builder.producer[op.name]], consumer, EdgeType.DATA)
                if op.name in builder.value_node:
                    builder.add_edge(builder.value_node[op.name], consumer, EdgeType.DATA)
            elif op.variant == OperandKind.INPUT and op.name in builder.input_node:
                builder.add_edge(builder.input_node[op.name], consumer, EdgeType.DATA)
            elif op.variant == OperandKind.CONSTANT:
                builder.add_edge(builder.const_nodes[(index, constant_token(op.name))], consumer, EdgeType.DATA)


def add_controlflow_edges(builder: _GraphBuilder) -> None:
    index = 0
    for block in builder.fn.blocks:
        label = builder.label_node[block.label]
        for ins in block.instructions:
            op_node = builder.op_node[index]
            builder.add_edge(label, op_node, EdgeType.CONTROL)
            for target in ins.targets:
                builder.add_edge(op_node, builder.label_node[target], EdgeType.CONTROL)
            index += 1


def build_graph(fn: IrFunction, variant: GraphVariant = GraphVariant.SEED) -> SemanticGraph:
    """Build the semantic graph of one function.

    Nodes are emitted in a fixed order: inputs, then per block its label node
    followed by each instruction's operation node, constant nodes and (in the
    ablation variants) the node standing for its result value.
    """
    variant = GraphVariant(variant)
    builder = _GraphBuilder(fn, variant)
    builder.create_nodes()
    add_dataflow_edges(builder)
    add_controlflow_edges(builder)
    logger.debug("Built %s graph for @%s: %d nodes, %d edges",
                 variant.value, fn.name, len(builder.graph.nodes), len(builder.graph.edges))
    return builder.graph


def merge_graphs(graphs: Sequence[SemanticGraph], name: Optional[str] = None) -> SemanticGraph:
    """Disjoint union of several function graphs (one snippet = one file)."""
    if not graphs:
        return SemanticGraph(function=name or "")
    merged = SemanticGraph(variant=graphs[0].variant,
                           function=name or "+".join(g.function for g in graphs))
    for g in graphs:
        offset = len(merged.nodes)
        for node in g.nodes:
            merged.add_node(node.kind, node.token)
        merged.edges.extend(Edge(e.src + offset, e.dst + offset, e.etype) for e in g.edges)
    return merged


def graph_stats(g: SemanticGraph) -> GraphStats:
    node_counts = Counter(node.kind.value for node in g.nodes)
    edge_counts = Counter(edge.etype.value for edge in g.edges)
    components = nx.number_weakly_connected_components(g.to_networkx()) if g.nodes else 0
    return GraphStats(
        nodes={kind.value: node_counts.get(kind.value, 0) for kind in NodeKind},
        edges={etype.value: edge_counts.get(etype.value, 0) for etype in EdgeType},
        distinct_tokens=len({node.token for node in g.nodes}),
        components=components,
    )


# ---------------------------
# Export
# ---------------------------
_DOT_SHAPES = {
    NodeKind.OPERATION: "ellipse",
    NodeKind.LABEL: "box",
    NodeKind.CONSTANT: "plaintext",
    NodeKind.INPUT: "invhouse",
    NodeKind.IDENTIFIER: "note",
    NodeKind.DATATYPE: "hexagon",
}
_DOT_STYLES = {
    EdgeType.DATA: 'style=solid, color="black"',
    EdgeType.CONTROL: 'style=dashed, color="blue"',
}
_DOT_KEYWORDS = {"node", "edge", "graph", "digraph", "subgraph", "strict"}


def _dot_quote(text: str) -> str:
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"') + '"'


def _dot_ref(token: str) -> str:
    if re.fullmatch(r"[A-Za-z_]\w*", token) and token.lower() not in _DOT_KEYWORDS:
        return token
    return _dot_quote(token)


def _dot_ids(g: SemanticGraph) -> List[str]:
    """Node ids that carry the token; repeated tokens get an `n<id>_` prefix."""
    counts = Counter(n.token for n in g.nodes)
    return [_dot_ref(n.token if counts[n.token] == 1 else f"n{n.id}_{n.token}") for n in g.nodes]


def to_json(g: SemanticGraph) -> str:
    payload = {
        "function": g.function,
        "variant": g.variant.value,
        "nodes": [{"id": n.id, "kind": n.kind.value, "token": n.token} for n in g.nodes],
        "edges": [{"src": e.src, "dst": e.dst, "etype": e.etype.value} for e in g.edges],
    }
    return json.dumps(payload, separators=(",", ":"), ensure_ascii=False)


def to_dot(g: SemanticGraph) -> str:
    lines = [f"digraph {_dot_quote(g.function)} {{",
             f"  // variant: {g.variant.value}",
             '  node [fontname="monospace"];']
    ids = _dot_ids(g)
    for n in g.nodes:
        lines.append(f"  {ids[n.id]} [label={_dot_quote(n.token)}, shape={_DOT_SHAPES[n.kind]}];")
    for e in g.edges:
        lines.append(f"  {ids[e.src]} -> {ids[e.dst]} [{_DOT_STYLES[e.etype]}];")
    lines.append("}")
    return "\n".join(lines) + "\n"


def export(g: SemanticGraph, fmt: str = "json") -> str:
    if fmt == "json":
        return to_json(g)
    if fmt == "dot":
        return to_dot(g)
    raise ValueError(f"unknown export format '{fmt}'")
