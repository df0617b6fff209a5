# ==============================================
# File: src/core/gmn.py
# Description: Graph matching network in numpy: joint propagation of a graph
#              pair with cross-graph attention, GRU node update, gated readout,
#              cosine head, and hand-written reverse-mode gradients
# ==============================================
from __future__ import annotations
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Optional, Tuple
import logging

import numpy as np

from src.core.encoding import GraphTensors
from src.core.errors import EmptyGraph
from src.core.loss import PairLabel, pair_loss, pair_loss_grad

logger = logging.getLogger(__name__)

NORM_EPS = 1e-12


@dataclass
class GmnConfig:
    embed_dim: int = 32
    edge_dim: int = 32
    iterations: int = 5
    dtype: str = "float64"


def param_shapes(config: GmnConfig, vocab_size: int) -> Dict[str, Tuple[int, ...]]:
    d, de = config.embed_dim, config.edge_dim
    return {
        "embedding": (vocab_size, d),
        "edge_vectors": (2, de),
        "edge_proj": (d, de),
        "msg_fwd": (d, 2 * d + de),
        "msg_rev": (d, 2 * d + de),
        "gru_wz": (d, 2 * d),
        "gru_wr": (d, 2 * d),
        "gru_wn": (d, 2 * d),
        "gru_uz": (d, d),
        "gru_ur": (d, d),
        "gru_un": (d, d),
        "gru_bz": (d,),
        "gru_br": (d,),
        "gru_bn": (d,),
        "gate_w": (d, d),
        "gate_b": (d,),
        "trans_w": (d, d),
        "trans_b": (d,),
        "out_w1": (d, d),
        "out_b1": (d,),
        "out_w2": (d, d),
        "out_b2": (d,),
    }


PARAM_NAMES: Tuple[str, ...] = tuple(param_shapes(GmnConfig(), 1))


class ModelParams:
    """Named parameter tensors, always iterated in PARAM_NAMES order."""

    def __init__(self, tensors: Dict[str, np.ndarray]):
        missing = [name for name in PARAM_NAMES if name not in tensors]
        if missing:
            raise KeyError(f"missing parameter tensors: {missing}")
        self.tensors = {name: tensors[name] for name in PARAM_NAMES}

    @classmethod
    def initialize(cls, config: GmnConfig, vocab_size: int, seed: int = 0) -> "ModelParams":
        rng = np.random.default_rng(seed)
        dtype = np.dtype(config.dtype)
        tensors = {}
        for name, shape in param_shapes(config, vocab_size).items():
            if name in ("embedding", "edge_vectors"):
                value = rng.uniform(-0.1, 0.1, size=shape)
            elif len(shape) == 1:
                value = np.zeros(shape)
            else:
                limit = np.sqrt(6.0 / (shape[0] + shape[1]))
                value = rng.uniform(-limit, limit, size=shape)
            tensors[name] = value.astype(dtype)
        return cls(tensors)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.tensors[name]

    def items(self) -> Iterator[Tuple[str, np.ndarray]]:
        for name in PARAM_NAMES:
            yield name, self.tensors[name]

    @property
    def dtype(self) -> np.dtype:
        return self.tensors["embedding"].dtype

    @property
    def vocab_size(self) -> int:
        return int(self.tensors["embedding"].shape[0])

    def zeros_like(self) -> "ModelParams":
        return ModelParams({name: np.zeros_like(t) for name, t in self.items()})

    def copy(self) -> "ModelParams":
        return ModelParams({name: t.copy() for name, t in self.items()})

    def axpy(self, alpha: float, other: "ModelParams") -> None:
        """In place: self += alpha * other."""
        for name, t in self.items():
            t += np.asarray(alpha, dtype=t.dtype) * other[name]

    def scale(self, alpha: float) -> None:
        for _, t in self.items():
            t *= np.asarray(alpha, dtype=t.dtype)

    def check_shapes(self, config: GmnConfig) -> None:
        expected = param_shapes(config, self.vocab_size)
        for name, t in self.items():
            if tuple(t.shape) != expected[name]:
                raise ValueError(f"parameter '{name}' has shape {t.shape}, expected {expected[name]}")

    def all_finite(self) -> bool:
        return all(bool(np.all(np.isfinite(t))) for _, t in self.items())


# ---------------------------
# Building blocks (forward + backward)
# ---------------------------
def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _edge_inputs(g: GraphTensors, params: ModelParams) -> Tuple[np.ndarray, np.ndarray]:
    e = params["edge_vectors"][g.etype]
    return e, e @ params["edge_proj"].T


def _message_forward(h: np.ndarray, g: GraphTensors, params: ModelParams):
    e, w = _edge_inputs(g, params)
    z_fwd = np.concatenate([h[g.src], h[g.dst], e], axis=1)
    z_rev = np.concatenate([h[g.dst], h[g.src], e], axis=1)
    p_fwd = z_fwd @ params["msg_fwd"].T
    p_rev = z_rev @ params["msg_rev"].T
    m = np.zeros_like(h)
    np.add.at(m, g.dst, p_fwd * w)
    np.add.at(m, g.src, p_rev * w)
    return m, (e, w, z_fwd, z_rev, p_fwd, p_rev)


def _message_backward(dm: np.ndarray, g: GraphTensors, params: ModelParams, cache,
                      grads: Dict[str, np.ndarray]) -> np.ndarray:
    e, w, z_fwd, z_rev, p_fwd, p_rev = cache
    d = dm.shape[1]
    dh = np.zeros_like(dm)
    dm_fwd, dm_rev = dm[g.dst], dm[g.src]
    dw = dm_fwd * p_fwd + dm_rev * p_rev
    dp_fwd, dp_rev = dm_fwd * w, dm_rev * w
    grads["msg_fwd"] += dp_fwd.T @ z_fwd
    grads["msg_rev"] += dp_rev.T @ z_rev
    dz_fwd = dp_fwd @ params["msg_fwd"]
    dz_rev = dp_rev @ params["msg_rev"]
    np.add.at(dh, g.src, dz_fwd[:, :d] + dz_rev[:, d:2 * d])
    np.add.at(dh, g.dst, dz_fwd[:, d:2 * d] + dz_rev[:, :d])
    grads["edge_proj"] += dw.T @ e
    de = dz_fwd[:, 2 * d:] + dz_rev[:, 2 * d:] + dw @ params["edge_proj"]
    np.add.at(grads["edge_vectors"], g.etype, de)
    return dh


def _normalize(h: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    norms = np.linalg.norm(h, axis=1, keepdims=True)
    safe = np.where(norms < NORM_EPS, 1.0, norms)
    u = np.where(norms < NORM_EPS, 0.0, h / safe)
    return u, safe


def _normalize_backward(u: np.ndarray, norms: np.ndarray, du: np.ndarray) -> np.ndarray:
    # zero rows were mapped to a constant, so they pass no gradient
    live = np.any(u != 0.0, axis=1, keepdims=True)
    return np.where(live, (du - u * np.sum(u * du, axis=1, keepdims=True)) / norms, 0.0)


def _row_softmax(x: np.ndarray) -> np.ndarray:
    z = np.exp(x - x.max(axis=1, keepdims=True))
    return z / z.sum(axis=1, keepdims=True)


def _softmax_backward(alpha: np.ndarray, dalpha: np.ndarray) -> np.ndarray:
    return alpha * (dalpha - np.sum(dalpha * alpha, axis=1, keepdims=True))


def _attention_forward(ha: np.ndarray, hb: np.ndarray):
    ua, na = _normalize(ha)
    ub, nb = _normalize(hb)
    sim = ua @ ub.T
    alpha_a = _row_softmax(sim)
    alpha_b = _row_softmax(sim.T)
    mu_a = ha - alpha_a @ hb
    mu_b = hb - alpha_b @ ha
    return mu_a, mu_b, (ua, na, ub, nb, alpha_a, alpha_b)


def _attention_backward(dmu_a: np.ndarray, dmu_b: np.ndarray, ha: np.ndarray, hb: np.ndarray,
                        cache) -> Tuple[np.ndarray, np.ndarray]:
    ua, na, ub, nb, alpha_a, alpha_b = cache
    dha = dmu_a - alpha_b.T @ dmu_b
    dhb = dmu_b - alpha_a.T @ dmu_a
    dsim = _softmax_backward(alpha_a, -dmu_a @ hb.T)
    dsim += _softmax_backward(alpha_b, -dmu_b @ ha.T).T
    dha += _normalize_backward(ua, na, dsim @ ub)
    dhb += _normalize_backward(ub, nb, dsim.T @ ua)
    return dha, dhb


def _gru_forward(h: np.ndarray, m: np.ndarray, mu: np.ndarray, params: ModelParams):
    x = np.concatenate([m, mu], axis=1)
    z = _sigmoid(x @ params["gru_wz"].T + h @ params["gru_uz"].T + params["gru_bz"])
    r = _sigmoid(x @ params["gru_wr"].T + h @ params["gru_ur"].T + params["gru_br"])
    rh = r * h
    n = np.tanh(x @ params["gru_wn"].T + rh @ params["gru_un"].T + params["gru_bn"])
    h_next = (1.0 - z) * n + z * h
    return h_next, (x, z, r, rh, n)


def _gru_backward(dh_next: np.ndarray, h: np.ndarray, params: ModelParams, cache,
                  grads: Dict[str, np.ndarray]) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    x, z, r, rh, n = cache
    d = h.shape[1]
    dh = dh_next * z
    dz = dh_next * (h - n)
    dan = dh_next * (1.0 - z) * (1.0 - n * n)
    grads["gru_wn"] += dan.T @ x
    grads["gru_un"] += dan.T @ rh
    grads["gru_bn"] += dan.sum(axis=0)
    dx = dan @ params["gru_wn"]
    drh = dan @ params["gru_un"]
    dh += drh * r
    dar = drh * h * r * (1.0 - r)
    daz = dz * z * (1.0 - z)
    for gate, da in (("r", dar), ("z", daz)):
        grads[f"gru_w{gate}"] += da.T @ x
        grads[f"gru_u{gate}"] += da.T @ h
        grads[f"gru_b{gate}"] += da.sum(axis=0)
        dx += da @ params[f"gru_w{gate}"]
        dh += da @ params[f"gru_u{gate}"]
    return dh, dx[:, :d], dx[:, d:]


def _readout_forward(h: np.ndarray, params: ModelParams):
    gate = _sigmoid(h @ params["gate_w"].T + params["gate_b"])
    trans = h @ params["trans_w"].T + params["trans_b"]
    pooled = np.sum(gate * trans, axis=0)
    hidden = np.tanh(params["out_w1"] @ pooled + params["out_b1"])
    h_graph = params["out_w2"] @ hidden + params["out_b2"]
    return h_graph, (gate, trans, pooled, hidden)


def _readout_backward(dg: np.ndarray, h: np.ndarray, params: ModelParams, cache,
                      grads: Dict[str, np.ndarray]) -> np.ndarray:
    gate, trans, pooled, hidden = cache
    grads["out_w2"] += np.outer(dg, hidden)
    grads["out_b2"] += dg
    da1 = (params["out_w2"].T @ dg) * (1.0 - hidden * hidden)
    grads["out_w1"] += np.outer(da1, pooled)
    grads["out_b1"] += da1
    dpooled = params["out_w1"].T @ da1
    dgate_pre = dpooled * trans * gate * (1.0 - gate)
    dtrans = dpooled * gate
    grads["gate_w"] += dgate_pre.T @ h
    grads["gate_b"] += dgate_pre.sum(axis=0)
    grads["trans_w"] += dtrans.T @ h
    grads["trans_b"] += dtrans.sum(axis=0)
    return dgate_pre @ params["gate_w"] + dtrans @ params["trans_w"]


def _cosine(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = float(np.linalg.norm(a)), float(np.linalg.norm(b))
    if na < NORM_EPS or nb < NORM_EPS:
        return 0.0
    return float(a @ b) / (na * nb)


def _cosine_backward(a: np.ndarray, b: np.ndarray, s: float) -> Tuple[np.ndarray, np.ndarray]:
    na, nb = float(np.linalg.norm(a)), float(np.linalg.norm(b))
    if na < NORM_EPS or nb < NORM_EPS:
        return np.zeros_like(a), np.zeros_like(b)
    return b / (na * nb) - s * a / (na * na), a / (na * nb) - s * b / (nb * nb)


# ---------------------------
# Public operations
# ---------------------------
def message_pass(h: np.ndarray, g: GraphTensors, params: ModelParams) -> np.ndarray:
    """Sum of edge-weighted messages arriving along both directions of every edge."""
    return _message_forward(h, g, params)[0]


def cross_attention(ha: np.ndarray, hb: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    mu_a, mu_b, _ = _attention_forward(ha, hb)
    return mu_a, mu_b


def attention_weights(ha: np.ndarray, hb: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    cache = _attention_forward(ha, hb)[2]
    return cache[4], cache[5]


def node_update(h_prev: np.ndarray, m: np.ndarray, mu: np.ndarray, params: ModelParams) -> np.ndarray:
    return _gru_forward(h_prev, m, mu, params)[0]


def readout(h: np.ndarray, params: ModelParams) -> np.ndarray:
    return _readout_forward(h, params)[0]


@dataclass
class PairState:
    """Node matrices of both graphs for t = 0..T."""
    states_a: List[np.ndarray] = field(default_factory=list)
    states_b: List[np.ndarray] = field(default_factory=list)

    @property
    def iterations(self) -> int:
        return max(len(self.states_a) - 1, 0)


@dataclass
class PairScore:
    graph_a: np.ndarray
    graph_b: np.ndarray
    similarity: float
    state: Optional[PairState] = None


def _forward(ga: GraphTensors, gb: GraphTensors, params: ModelParams, iterations: int):
    if ga.num_nodes == 0 or gb.num_nodes == 0:
        raise EmptyGraph(f"cannot score a pair with an empty graph ({ga.name!r}, {gb.name!r})")
    emb = params["embedding"]
    ha, hb = emb[ga.tokens], emb[gb.tokens]
    state = PairState([ha], [hb])
    caches = []
    for _ in range(iterations):
        m_a, msg_a = _message_forward(ha, ga, params)
        m_b, msg_b = _message_forward(hb, gb, params)
        mu_a, mu_b, att = _attention_forward(ha, hb)
        ha_next, gru_a = _gru_forward(ha, m_a, mu_a, params)
        hb_next, gru_b = _gru_forward(hb, m_b, mu_b, params)
        caches.append((ha, hb, msg_a, msg_b, att, gru_a, gru_b))
        ha, hb = ha_next, hb_next
        state.states_a.append(ha)
        state.states_b.append(hb)
    vec_a, read_a = _readout_forward(ha, params)
    vec_b, read_b = _readout_forward(hb, params)
    score = PairScore(vec_a, vec_b, _cosine(vec_a, vec_b), state)
    return score, (caches, read_a, read_b)


def forward_pair(ga: GraphTensors, gb: GraphTensors, params: ModelParams,
                 iterations: int = 5) -> PairScore:
    '''
    takes two encoded graphs, the model parameters and the number of propagation rounds

    returns :
    PairScore(
        graph_a=array([...]),       # gated readout of graph a, shape (embed_dim,)
        graph_b=array([...]),
        similarity=0.83,            # cosine of the two readouts, in [-1, 1]
        state=PairState(...),       # node states after every propagation round
    )
    '''
    return _forward(ga, gb, params, iterations)[0]


def backward_pair(ga: GraphTensors, gb: GraphTensors, label: PairLabel | str,
                  params: ModelParams, iterations: int = 5,
                  margin: float = 0.5) -> Tuple[float, PairScore, ModelParams]:
    """Loss, score and exact gradients of the pair loss for every parameter tensor."""
    score, (caches, read_a, read_b) = _forward(ga, gb, params, iterations)
    loss = pair_loss(score.similarity, label, margin)
    grads = params.zeros_like()
    ds = pair_loss_grad(score.similarity, label, margin)
    if ds == 0.0:
        return loss, score, grads

    g = grads.tensors
    dvec_a, dvec_b = _cosine_backward(score.graph_a, score.graph_b, score.similarity)
    dha = _readout_backward(ds * dvec_a, score.state.states_a[-1], params, read_a, g)
    dhb = _readout_backward(ds * dvec_b, score.state.states_b[-1], params, read_b, g)
    for ha, hb, msg_a, msg_b, att, gru_a, gru_b in reversed(caches):
        dha_prev, dm_a, dmu_a = _gru_backward(dha, ha, params, gru_a, g)
        dhb_prev, dm_b, dmu_b = _gru_backward(dhb, hb, params, gru_b, g)
        datt_a, datt_b = _attention_backward(dmu_a, dmu_b, ha, hb, att)
        dha = dha_prev + datt_a + _message_backward(dm_a, ga, params, msg_a, g)
        dhb = dhb_prev + datt_b + _message_backward(dm_b, gb, params, msg_b, g)
    np.add.at(g["embedding"], ga.tokens, dha)
    np.add.at(g["embedding"], gb.tokens, dhb)
    return loss, score, grads
