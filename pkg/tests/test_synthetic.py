import networkx as nx
import pytest

from src.core.ir_parser import parse_module
from src.core.semantic_graph import NodeKind, build_graph, merge_graphs
from src.tools.synthetic import template_names, write_synthetic_corpus

CHARACTERISTIC = {"sum_to_n": "add", "factorial": "mul", "gcd": "srem", "fibonacci": "printf",
                  "power": "mul", "count_digits": "sdiv", "is_prime": "srem", "array_max": "select"}


def _functions(path):
    return {fn.name: fn for fn in parse_module(path.read_text(), strict=True)}


def _operations(fn):
    return {n.token for n in build_graph(fn).nodes if n.kind == NodeKind.OPERATION}


def _snippet_graph(path):
    return merge_graphs([build_graph(fn) for fn in _functions(path).values()]).to_networkx()


def _same_node(a, b):
    # label tokens carry the renamed block names
    return a["kind"] == b["kind"] and (a["kind"] == NodeKind.LABEL.value or a["token"] == b["token"])


def _shape_classes(paths):
    classes = []
    for g in map(_snippet_graph, paths):
        if not any(nx.is_isomorphic(g, rep, node_match=_same_node) for rep in classes):
            classes.append(g)
    return classes


def test_same_seed_same_bytes(tmp_path):
    a = write_synthetic_corpus(tmp_path / "a", problems=3, variants=3, seed=5)
    b = write_synthetic_corpus(tmp_path / "b", problems=3, variants=3, seed=5)
    assert [p.read_bytes() for p in a] == [p.read_bytes() for p in b]


def test_every_snippet_defines_solve_and_driver(synthetic_corpus):
    for path in synthetic_corpus.glob("*/*.ll"):
        functions = _functions(path)
        assert set(functions) == {"solve", "main"}
        assert "solve" in _operations(functions["main"])


@pytest.mark.parametrize("pid,name", list(enumerate(template_names(), start=1)))
def test_variants_differ_in_graph_shape(synthetic_corpus, pid, name):
    paths = sorted((synthetic_corpus / str(pid)).glob("*.ll"))
    assert len(paths) == 8
    assert len(_shape_classes(paths)) >= 3
    for path in paths:
        assert CHARACTERISTIC[name] in _operations(_functions(path)["solve"])


def test_some_solvers_use_stack_slots(synthetic_corpus):
    with_slots = [("alloca" in _operations(_functions(p)["solve"])) for p in synthetic_corpus.glob("*/*.ll")]
    assert any(with_slots)
    assert not all(with_slots)


@pytest.mark.parametrize("problems", [0, len(template_names()) + 1])
def test_problem_count_bounds(tmp_path, problems):
    with pytest.raises(ValueError):
        write_synthetic_corpus(tmp_path, problems=problems)
