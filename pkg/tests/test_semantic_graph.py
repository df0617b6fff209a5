import json
from collections import Counter

import networkx as nx
import pytest

from src.core.ir_parser import parse_module
from src.core.semantic_graph import (
    EdgeType, GraphVariant, NodeKind, build_graph, constant_token, export, graph_stats, merge_graphs,
)

OP, LBL, CONST, INP = "operation", "label", "constant", "input"

# Hand-derived graphs: node multiset by (kind, token), per-type edge sets by
# (src token, dst token), plus exact data / control edge counts.
ORACLES = {
    ("fig2_sum_loop.ll", "main"): {
        "nodes": {(INP, "i32"): 1, (LBL, "label:entry"): 1, (LBL, "label:1"): 1, (LBL, "label:3"): 1,
                  (LBL, "label:7"): 1, (OP, "br"): 3, (OP, "phi"): 2, (OP, "icmp.sgt"): 1, (OP, "add"): 2,
                  (OP, "printf"): 1, (OP, "ret"): 1, (CONST, "0"): 3, (CONST, "-1"): 1, (CONST, "@str"): 1},
        "data": {("0", "phi"), ("add", "phi"), ("i32", "phi"), ("phi", "icmp.sgt"), ("0", "icmp.sgt"),
                 ("icmp.sgt", "br"), ("phi", "add"), ("-1", "add"), ("@str", "printf"), ("phi", "printf"),
                 ("0", "ret")},
        "control": {("label:entry", "br"), ("br", "label:1"), ("label:1", "phi"), ("label:1", "icmp.sgt"),
                    ("label:1", "br"), ("br", "label:3"), ("br", "label:7"), ("label:3", "add"),
                    ("label:3", "br"), ("label:7", "printf"), ("label:7", "ret")},
        "counts": (14, 14),
    },
    ("straight_line.ll", "add3"): {
        "nodes": {(INP, "i32"): 2, (LBL, "label:entry"): 1, (OP, "add"): 1, (OP, "mul"): 1, (OP, "ret"): 1,
                  (CONST, "3"): 1},
        "data": {("i32", "add"), ("add", "mul"), ("3", "mul"), ("mul", "ret")},
        "control": {("label:entry", "add"), ("label:entry", "mul"), ("label:entry", "ret")},
        "counts": (5, 3),
    },
    ("memory_ops.ll", "store_it"): {
        "nodes": {(INP, "i32"): 1, (LBL, "label:entry"): 1, (OP, "alloca"): 1, (OP, "store"): 1,
                  (OP, "load"): 1, (OP, "ret"): 1},
        "data": {("i32", "store"), ("alloca", "store"), ("alloca", "load")},
        "control": {("label:entry", "alloca"), ("label:entry", "store"), ("label:entry", "load"),
                    ("label:entry", "ret")},
        "counts": (3, 4),
    },
    ("diamond.ll", "max2"): {
        "nodes": {(INP, "i32"): 2, (LBL, "label:entry"): 1, (LBL, "label:then"): 1, (LBL, "label:else"): 1,
                  (LBL, "label:join"): 1, (OP, "icmp.sgt"): 1, (OP, "br"): 3, (OP, "phi"): 1, (OP, "ret"): 1},
        "data": {("i32", "icmp.sgt"), ("icmp.sgt", "br"), ("i32", "phi"), ("phi", "ret")},
        "control": {("label:entry", "icmp.sgt"), ("label:entry", "br"), ("br", "label:then"),
                    ("br", "label:else"), ("label:then", "br"), ("br", "label:join"), ("label:else", "br"),
                    ("label:join", "phi"), ("label:join", "ret")},
        "counts": (6, 10),
    },
    ("switch.ll", "pick"): {
        "nodes": {(INP, "i32"): 1, (LBL, "label:entry"): 1, (LBL, "label:zero"): 1, (LBL, "label:one"): 1,
                  (LBL, "label:other"): 1, (OP, "switch"): 1, (OP, "ret"): 3, (CONST, "0"): 1, (CONST, "1"): 1,
                  (CONST, "10"): 1, (CONST, "@int"): 1, (CONST, "-1"): 1},
        "data": {("i32", "switch"), ("0", "switch"), ("1", "switch"), ("10", "ret"), ("@int", "ret"),
                 ("-1", "ret")},
        "control": {("label:entry", "switch"), ("switch", "label:other"), ("switch", "label:zero"),
                    ("switch", "label:one"), ("label:zero", "ret"), ("label:one", "ret"), ("label:other", "ret")},
        "counts": (6, 7),
    },
    ("calls.ll", "greet"): {
        "nodes": {(LBL, "label:entry"): 1, (OP, "puts"): 1, (OP, "load"): 1, (OP, "add"): 1, (OP, "store"): 1,
                  (OP, "exit"): 1, (OP, "ret"): 1, (CONST, "@str"): 1, (CONST, "@global"): 2, (CONST, "1"): 1,
                  (CONST, "0"): 1},
        "data": {("@str", "puts"), ("@global", "load"), ("load", "add"), ("1", "add"), ("add", "store"),
                 ("@global", "store"), ("0", "exit")},
        "control": {("label:entry", op) for op in ("puts", "load", "add", "store", "exit", "ret")},
        "counts": (7, 6),
    },
    ("old_labels.ll", "f"): {
        "nodes": {(INP, "i32"): 1, (LBL, "label:entry"): 1, (LBL, "label:3"): 1, (LBL, "label:4"): 1,
                  (OP, "icmp.eq"): 1, (OP, "br"): 1, (OP, "ret"): 2, (OP, "sub"): 1, (CONST, "0"): 1,
                  (CONST, "1"): 2},
        "data": {("i32", "icmp.eq"), ("0", "icmp.eq"), ("icmp.eq", "br"), ("1", "ret"), ("i32", "sub"),
                 ("1", "sub"), ("sub", "ret")},
        "control": {("label:entry", "icmp.eq"), ("label:entry", "br"), ("br", "label:3"), ("br", "label:4"),
                    ("label:3", "ret"), ("label:4", "sub"), ("label:4", "ret")},
        "counts": (7, 7),
    },
    ("floats.ll", "scale"): {
        "nodes": {(INP, "double"): 1, (INP, "float"): 1, (LBL, "label:entry"): 1, (OP, "fpext"): 1,
                  (OP, "fmul"): 2, (OP, "fneg"): 1, (OP, "fptosi"): 1, (OP, "add"): 1, (OP, "sitofp"): 1,
                  (OP, "ret"): 1, (CONST, "@float"): 1, (CONST, "@int"): 1},
        "data": {("float", "fpext"), ("double", "fmul"), ("fpext", "fmul"), ("fmul", "fmul"),
                 ("@float", "fmul"), ("fmul", "fneg"), ("fneg", "fptosi"), ("fptosi", "add"), ("@int", "add"),
                 ("add", "sitofp"), ("sitofp", "ret")},
        "control": {("label:entry", op) for op in ("fpext", "fmul", "fneg", "fptosi", "add", "sitofp", "ret")},
        "counts": (11, 8),
    },
    ("self_loop.ll", "spin"): {
        "nodes": {(INP, "i32"): 1, (LBL, "label:entry"): 1, (LBL, "label:loop"): 1, (LBL, "label:exit"): 1,
                  (OP, "br"): 2, (OP, "phi"): 2, (OP, "add"): 1, (OP, "icmp.uge"): 1, (OP, "ret"): 1,
                  (CONST, "0"): 1, (CONST, "1"): 2},
        "data": {("0", "phi"), ("add", "phi"), ("1", "phi"), ("phi", "add"), ("1", "add"), ("add", "icmp.uge"),
                 ("i32", "icmp.uge"), ("icmp.uge", "br"), ("phi", "ret")},
        "control": {("label:entry", "br"), ("br", "label:loop"), ("label:loop", "phi"), ("label:loop", "add"),
                    ("label:loop", "icmp.uge"), ("label:loop", "br"), ("br", "label:exit"), ("label:exit", "ret")},
        "counts": (9, 10),
    },
    ("duplicate_uses.ll", "square_plus"): {
        "nodes": {(INP, "i32"): 1, (LBL, "label:entry"): 1, (OP, "mul"): 1, (OP, "add"): 3, (OP, "select"): 1,
                  (OP, "ret"): 1, (CONST, "7"): 3, (CONST, "1"): 1},
        "data": {("i32", "mul"), ("mul", "add"), ("add", "add"), ("7", "add"), ("1", "select"),
                 ("add", "select"), ("7", "select"), ("select", "ret")},
        "control": {("label:entry", op) for op in ("mul", "add", "select", "ret")},
        "counts": (10, 6),
    },
    ("two_functions.ll", "widen"): {
        "nodes": {(INP, "i8"): 1, (LBL, "label:entry"): 1, (OP, "zext"): 1, (OP, "ret"): 1},
        "data": {("i8", "zext"), ("zext", "ret")},
        "control": {("label:entry", "zext"), ("label:entry", "ret")},
        "counts": (2, 2),
    },
    ("two_functions.ll", "dispatch"): {
        "nodes": {(INP, "ptr"): 2, (LBL, "label:entry"): 1, (OP, "getelementptr"): 1, (OP, "load"): 1,
                  (OP, "indirect_call"): 1, (OP, "unreachable"): 1, (CONST, "2"): 1},
        "data": {("ptr", "getelementptr"), ("2", "getelementptr"), ("getelementptr", "load"),
                 ("ptr", "indirect_call"), ("load", "indirect_call")},
        "control": {("label:entry", op) for op in ("getelementptr", "load", "indirect_call", "unreachable")},
        "counts": (5, 4),
    },
}


def _function(load_fixture, name, fn_name):
    return next(fn for fn in load_fixture(name) if fn.name == fn_name)


def _edge_triples(g, etype):
    return {(g.nodes[e.src].token, g.nodes[e.dst].token) for e in g.edges if e.etype == etype}


@pytest.mark.parametrize("key", list(ORACLES), ids=lambda k: f"{k[0]}:{k[1]}")
def test_graph_matches_oracle(load_fixture, key):
    oracle = ORACLES[key]
    g = build_graph(_function(load_fixture, *key), GraphVariant.SEED)
    assert Counter((n.kind.value, n.token) for n in g.nodes) == Counter(oracle["nodes"])
    assert _edge_triples(g, EdgeType.DATA) == oracle["data"]
    assert _edge_triples(g, EdgeType.CONTROL) == oracle["control"]
    stats = graph_stats(g)
    assert (stats.dataflow_edges, stats.edges["control"]) == oracle["counts"]


@pytest.mark.parametrize("key", list(ORACLES), ids=lambda k: f"{k[0]}:{k[1]}")
def test_structural_invariants(load_fixture, key):
    fn = _function(load_fixture, *key)
    for variant in GraphVariant:
        g = build_graph(fn, variant)
        ids = {n.id for n in g.nodes}
        assert [n.id for n in g.nodes] == list(range(len(g.nodes)))
        assert all(e.src in ids and e.dst in ids and e.src != e.dst for e in g.edges)
        assert len({(e.src, e.dst, e.etype) for e in g.edges}) == len(g.edges)
        # every operation hangs off its block label
        labelled = {e.dst for e in g.edges
                    if e.etype == EdgeType.CONTROL and g.nodes[e.src].kind == NodeKind.LABEL}
        assert {n.id for n in g.nodes if n.kind == NodeKind.OPERATION} <= labelled


def test_variants_add_operand_nodes(load_fixture):
    (fn,) = load_fixture("fig2_sum_loop.ll")
    seed = graph_stats(build_graph(fn, GraphVariant.SEED))
    typed_graph = build_graph(fn, GraphVariant.SEED_TYPE)
    typed = graph_stats(typed_graph)
    ident_graph = build_graph(fn, GraphVariant.SEED_IDENTIFIER)
    ident = graph_stats(ident_graph)

    assert seed.operand_nodes == 6
    assert typed.nodes["datatype"] == 6
    assert ident.nodes["identifier"] == 6
    assert typed.operand_nodes == ident.operand_nodes == 12
    assert typed.dataflow_edges == ident.dataflow_edges == 14 + 8
    assert Counter(n.token for n in typed_graph.nodes if n.kind == NodeKind.DATATYPE) == {"i32": 5, "i1": 1}
    assert {n.token for n in ident_graph.nodes if n.kind == NodeKind.IDENTIFIER} == {
        "sum.0", "i.0", "2", "4", "5", "8"}


def test_single_block_has_no_branch_edges(load_fixture):
    (fn,) = load_fixture("straight_line.ll")
    g = build_graph(fn)
    assert all(g.nodes[e.dst].kind != NodeKind.LABEL for e in g.edges)


@pytest.mark.parametrize("literal, token", [
    ("0", "0"), ("-1", "-1"), ("255", "255"), ("-255", "-255"), ("256", "@int"), ("-1000", "@int"),
    ("1.5", "@float"), ("5.000000e-01", "@float"), ("0x3FF0000000000000", "@float"),
    ("@str", "@str"), ("@global", "@global"), ("undef", "undef"),
])
def test_constant_buckets(literal, token):
    assert constant_token(literal) == token


def test_merge_graphs_is_disjoint_union(load_fixture):
    graphs = [build_graph(fn) for fn in load_fixture("two_functions.ll")]
    merged = merge_graphs(graphs, name="two_functions")
    assert len(merged.nodes) == sum(len(g.nodes) for g in graphs)
    assert len(merged.edges) == sum(len(g.edges) for g in graphs)
    assert graph_stats(merged).components == 2
    expected = nx.disjoint_union(graphs[0].to_networkx(), graphs[1].to_networkx())
    matcher = nx.algorithms.isomorphism.MultiDiGraphMatcher(
        merged.to_networkx(), expected,
        node_match=lambda a, b: a["token"] == b["token"] and a["kind"] == b["kind"])
    assert matcher.is_isomorphic()


def test_stats_on_edgeless_graph():
    (fn,) = parse_module("define void @f() {\nentry:\n  ret void\n}\n")
    g = build_graph(fn)
    g.edges.clear()
    stats = graph_stats(g)
    assert stats.total_edges == 0
    assert stats.edges == {"data": 0, "control": 0}


class TestExport:
    def test_json_schema(self, load_fixture):
        (fn,) = load_fixture("fig2_sum_loop.ll")
        payload = json.loads(export(build_graph(fn, GraphVariant.SEED_TYPE), "json"))
        assert set(payload) == {"function", "variant", "nodes", "edges"}
        assert payload["function"] == "main"
        assert payload["variant"] == "seed+type"
        assert all(set(n) == {"id", "kind", "token"} for n in payload["nodes"])
        assert all(set(e) == {"src", "dst", "etype"} and e["etype"] in ("data", "control")
                   for e in payload["edges"])

    def test_single_node_json(self):
        (fn,) = parse_module("define void @f() {\nentry:\n  ret void\n}\n")
        g = build_graph(fn)
        g.nodes[:] = g.nodes[:1]
        g.edges.clear()
        payload = json.loads(export(g, "json"))
        assert len(payload["nodes"]) == 1
        assert payload["edges"] == []

    def test_dot_marks_branch_to_label(self, load_fixture):
        (fn,) = load_fixture("fig2_sum_loop.ll")
        dot = export(build_graph(fn), "dot")
        assert dot.startswith('digraph "main" {')
        assert dot.rstrip().endswith("}")
        branch_lines = [l for l in dot.splitlines() if 'br -> "label:3"' in l]
        assert branch_lines and all("style=dashed" in l for l in branch_lines)
        assert all(l.rstrip().endswith("];") for l in branch_lines)
        assert '"label:3" [label="label:3", shape=box];' in dot
        assert "shape=box" in dot and "shape=ellipse" in dot

    def test_dot_ids_are_unique_and_keep_tokens(self, load_fixture):
        (fn,) = load_fixture("fig2_sum_loop.ll")
        g = build_graph(fn)
        dot = export(g, "dot")
        node_lines = [l for l in dot.splitlines() if "shape=" in l and "->" not in l]
        ids = [l.split(" [", 1)[0].strip() for l in node_lines]
        assert len(ids) == len(set(ids)) == len(g.nodes)
        assert "printf" in ids
        assert sum(1 for i in ids if i.endswith("_br")) == 3

    def test_export_is_deterministic(self, load_fixture):
        (fn,) = load_fixture("fig2_sum_loop.ll")
        for fmt in ("json", "dot"):
            assert export(build_graph(fn), fmt) == export(build_graph(fn), fmt)

    def test_unknown_format(self, load_fixture):
        (fn,) = load_fixture("straight_line.ll")
        with pytest.raises(ValueError):
            export(build_graph(fn), "yaml")


def test_fixture_corpus_variant_direction(load_fixture):
    functions = [fn for name in {key[0] for key in ORACLES} for fn in load_fixture(name)]
    totals = {}
    for variant in GraphVariant:
        stats = [graph_stats(build_graph(fn, variant)) for fn in functions]
        totals[variant] = (sum(s.operand_nodes for s in stats), sum(s.dataflow_edges for s in stats))
    seed, typed, ident = (totals[v] for v in GraphVariant)
    assert seed[0] < typed[0] == ident[0]
    assert seed[1] < typed[1] == ident[1]
