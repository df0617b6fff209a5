from pathlib import Path

import numpy as np
import pytest

from src.core.encoding import GraphTensors
from src.core.gmn import GmnConfig, ModelParams
from src.core.ir_parser import parse_module
from src.tools.synthetic import write_synthetic_corpus

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture
def load_fixture():
    def _load(name: str, strict: bool = False):
        return parse_module((FIXTURES / name).read_text(encoding="utf-8"), strict=strict)
    return _load


@pytest.fixture(scope="session")
def synthetic_corpus(tmp_path_factory) -> Path:
    root = tmp_path_factory.mktemp("synthetic")
    write_synthetic_corpus(root, problems=8, variants=8, seed=0)
    return root


def make_random_graph(rng: np.random.Generator, vocab_size: int, n_nodes: int, n_edges: int) -> GraphTensors:
    tokens = rng.integers(0, vocab_size, size=n_nodes)
    src = rng.integers(0, n_nodes, size=n_edges)
    dst = rng.integers(0, n_nodes, size=n_edges)
    keep = src != dst
    etype = rng.integers(0, 2, size=n_edges)
    return GraphTensors(tokens.astype(np.int64), src[keep].astype(np.int64),
                        dst[keep].astype(np.int64), etype[keep].astype(np.int64))


@pytest.fixture
def random_graph():
    return make_random_graph


@pytest.fixture
def small_params():
    def _make(seed: int = 0, vocab_size: int = 6, embed_dim: int = 4, edge_dim: int = 3,
              scale: float = 1.0) -> ModelParams:
        config = GmnConfig(embed_dim=embed_dim, edge_dim=edge_dim, iterations=2)
        params = ModelParams.initialize(config, vocab_size, seed)
        rng = np.random.default_rng(seed + 1000)
        # biases and embeddings drawn from [-0.5, 0.5]
        for name, t in params.items():
            if t.ndim == 1 or name in ("embedding", "edge_vectors"):
                t[...] = rng.uniform(-0.5, 0.5, size=t.shape) * scale
        return params
    return _make
