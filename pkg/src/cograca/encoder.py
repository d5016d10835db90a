"""Connectivity-graph construction and a two-layer graph-attention encoder.

Graphs are built from correlation matrices by zeroing anticorrelations; node
attributes are the rows of the thresholded matrix. The encoder applies two
attention layers (ReLU score, masked softmax over the 1-hop neighborhood,
ReLU update) followed by mean pooling. Forward and reverse passes are
written out by hand so gradients are exact and fully deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "ConnectivityGraph",
    "EncoderParams",
    "GraphEmbedding",
    "build_graph",
    "gat_layer",
    "encode_graph",
    "encode_graph_vjp",
]


@dataclass(frozen=True)
class ConnectivityGraph:
    """One visit's brain network: nonnegative adjacency plus node attributes.

    The adjacency keeps thresholded correlation values with a unit diagonal
    (every node is its own neighbor). Attributes are per-node feature rows;
    ``build_graph`` sets them to the thresholded matrix itself, so the
    attribute dimension equals the node count there.
    """

    adjacency: np.ndarray
    attributes: np.ndarray

    def __post_init__(self) -> None:
        adj = np.asarray(self.adjacency, dtype=np.float64)
        att = np.asarray(self.attributes, dtype=np.float64)
        if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
            raise ValueError(f"adjacency must be square, got shape {adj.shape}")
        v = adj.shape[0]
        if not np.all(np.isfinite(adj)) or not np.all(np.isfinite(att)):
            raise ValueError("graph contains non-finite entries")
        if np.abs(adj - adj.T).max() > 1e-8:
            raise ValueError("adjacency must be symmetric")
        if adj.min() < 0.0 or adj.max() > 1.0 + 1e-12:
            raise ValueError("adjacency entries must lie in [0, 1]")
        if np.abs(np.diag(adj) - 1.0).max() > 1e-6:
            raise ValueError("adjacency diagonal must be 1 (self-loops)")
        if att.ndim != 2 or att.shape[0] != v:
            raise ValueError(
                f"attributes must have one row per node, got {att.shape} for {v} nodes"
            )
        object.__setattr__(self, "adjacency", adj)
        object.__setattr__(self, "attributes", att)

    @property
    def n_nodes(self) -> int:
        return self.adjacency.shape[0]

    def neighbor_mask(self) -> np.ndarray:
        return self.adjacency > 0.0


def build_graph(corr: np.ndarray) -> ConnectivityGraph:
    """Turn a correlation matrix into a ConnectivityGraph.

    Negative entries are set to zero; the unit diagonal doubles as the
    self-loop. Attribute row p is node p's thresholded connection profile.
    """
    corr = np.asarray(corr, dtype=np.float64)
    if corr.ndim != 2 or corr.shape[0] != corr.shape[1]:
        raise ValueError(f"correlation matrix must be square, got shape {corr.shape}")
    if not np.all(np.isfinite(corr)):
        raise ValueError("correlation matrix contains non-finite entries")
    if np.abs(corr - corr.T).max() > 1e-8:
        raise ValueError("correlation matrix must be symmetric")
    if corr.min() < -1.0 - 1e-12 or corr.max() > 1.0 + 1e-12:
        raise ValueError("correlation entries must lie in [-1, 1]")
    if np.abs(np.diag(corr) - 1.0).max() > 1e-6:
        raise ValueError("correlation matrix must have a unit diagonal")
    thresholded = np.where(corr > 0.0, corr, 0.0)
    return ConnectivityGraph(adjacency=thresholded, attributes=thresholded.copy())


@dataclass(frozen=True)
class EncoderParams:
    """Trainable weights: per layer a linear map W and an attention vector m
    of length twice the layer's output dimension (query and key halves)."""

    w1: np.ndarray
    m1: np.ndarray
    w2: np.ndarray
    m2: np.ndarray

    def __post_init__(self) -> None:
        for name, arr in self.as_dict().items():
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"parameter {name} contains non-finite entries")
        h1 = self.w1.shape[1]
        h2 = self.w2.shape[1]
        if self.m1.shape != (2 * h1,):
            raise ValueError(f"m1 must have length {2 * h1}, got {self.m1.shape}")
        if self.w2.shape[0] != h1:
            raise ValueError(
                f"layer dims do not chain: w1 outputs {h1}, w2 expects {self.w2.shape[0]}"
            )
        if self.m2.shape != (2 * h2,):
            raise ValueError(f"m2 must have length {2 * h2}, got {self.m2.shape}")

    @classmethod
    def init(
        cls, d_in: int, hidden: int = 32, out: int = 16, rng: np.random.Generator | None = None
    ) -> "EncoderParams":
        """Glorot-uniform initialization from a seeded generator."""
        if rng is None:
            rng = np.random.default_rng(0)

        def glorot(fan_in: int, fan_out: int, shape) -> np.ndarray:
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            return rng.uniform(-limit, limit, size=shape)

        return cls(
            w1=glorot(d_in, hidden, (d_in, hidden)),
            m1=glorot(2 * hidden, 1, (2 * hidden,)),
            w2=glorot(hidden, out, (hidden, out)),
            m2=glorot(2 * out, 1, (2 * out,)),
        )

    def as_dict(self) -> dict[str, np.ndarray]:
        return {"w1": self.w1, "m1": self.m1, "w2": self.w2, "m2": self.m2}

    @property
    def d_in(self) -> int:
        return self.w1.shape[0]

    @property
    def d_out(self) -> int:
        return self.w2.shape[1]


@dataclass(frozen=True)
class GraphEmbedding:
    """Encoder output for one graph: node embeddings, their mean (the pooled
    graph embedding), and the per-layer attention matrices."""

    nodes: np.ndarray
    pooled: np.ndarray
    attentions: tuple[np.ndarray, ...]


def _layer_forward(w: np.ndarray, m: np.ndarray, feats: np.ndarray, mask: np.ndarray):
    """One attention layer over a batch. feats (N,V,d_in), mask (N,V,V) bool.

    Score e_pq = ReLU(s_p + t_q) with s, t the query/key halves of m applied
    to the transformed features; softmax is restricted to each node's
    neighborhood. Returns (h_out (N,V,d_out), attention (N,V,V), cache).
    """
    h = w.shape[1]
    z = feats @ w
    s = z @ m[:h]
    t = z @ m[h:]
    e_raw = s[:, :, None] + t[:, None, :]
    scores = np.where(mask, np.maximum(e_raw, 0.0), -np.inf)
    scores = scores - scores.max(axis=2, keepdims=True)
    expd = np.exp(scores)
    attn = expd / expd.sum(axis=2, keepdims=True)
    pre = attn @ z
    h_out = np.maximum(pre, 0.0)
    cache = (feats, z, e_raw, attn, pre, mask)
    return h_out, attn, cache


def _layer_backward(w: np.ndarray, m: np.ndarray, cache, d_h_out: np.ndarray):
    """Reverse of _layer_forward. Returns (d_feats, d_w, d_m).

    ReLU uses subgradient 0 at 0, matching the forward's max(., 0).
    """
    feats, z, e_raw, attn, pre, mask = cache
    h = w.shape[1]
    d_pre = d_h_out * (pre > 0.0)
    d_attn = np.einsum("nvh,nqh->nvq", d_pre, z)
    d_z = np.einsum("nvq,nvh->nqh", attn, d_pre)
    inner = (attn * d_attn).sum(axis=2, keepdims=True)
    d_e = np.where(mask & (e_raw > 0.0), attn * (d_attn - inner), 0.0)
    d_s = d_e.sum(axis=2)
    d_t = d_e.sum(axis=1)
    d_z += d_s[:, :, None] * m[:h] + d_t[:, :, None] * m[h:]
    d_m = np.concatenate(
        [np.einsum("nv,nvh->h", d_s, z), np.einsum("nv,nvh->h", d_t, z)]
    )
    d_w = np.einsum("nvd,nvh->dh", feats, d_z)
    d_feats = d_z @ w.T
    return d_feats, d_w, d_m


def encode_batch(params: EncoderParams, feats: np.ndarray, masks: np.ndarray):
    """Encode a stack of graphs sharing a node count.

    feats (N,V,D), masks (N,V,V) bool. Returns (pooled (N,r), node
    embeddings (N,V,r), attentions per layer, caches for the reverse pass).
    """
    if feats.shape[2] != params.d_in:
        raise ValueError(
            f"attribute dimension {feats.shape[2]} does not match encoder input {params.d_in}"
        )
    h1, a1, c1 = _layer_forward(params.w1, params.m1, feats, masks)
    h2, a2, c2 = _layer_forward(params.w2, params.m2, h1, masks)
    pooled = h2.mean(axis=1)
    return pooled, h2, (a1, a2), (c1, c2)


def encode_batch_vjp(params: EncoderParams, caches, d_pooled: np.ndarray) -> dict[str, np.ndarray]:
    """Gradients of sum_n <d_pooled[n], pooled[n]> with respect to all params."""
    c1, c2 = caches
    n_nodes = c1[0].shape[1]
    d_h2 = np.repeat(d_pooled[:, None, :] / n_nodes, n_nodes, axis=1)
    d_h1, d_w2, d_m2 = _layer_backward(params.w2, params.m2, c2, d_h2)
    _, d_w1, d_m1 = _layer_backward(params.w1, params.m1, c1, d_h1)
    return {"w1": d_w1, "m1": d_m1, "w2": d_w2, "m2": d_m2}


def gat_layer(
    w: np.ndarray, m: np.ndarray, graph: ConnectivityGraph, h_in: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Apply one attention layer to a single graph's node features."""
    h_in = np.asarray(h_in, dtype=np.float64)
    if h_in.ndim != 2 or h_in.shape[0] != graph.n_nodes:
        raise ValueError(
            f"features must be (n_nodes, d_in), got {h_in.shape} for {graph.n_nodes} nodes"
        )
    if h_in.shape[1] != w.shape[0]:
        raise ValueError(f"feature dim {h_in.shape[1]} does not match weight rows {w.shape[0]}")
    h_out, attn, _ = _layer_forward(w, m, h_in[None], graph.neighbor_mask()[None])
    return h_out[0], attn[0]


def encode_graph(params: EncoderParams, graph: ConnectivityGraph) -> GraphEmbedding:
    """Two attention layers then mean pooling, for a single graph."""
    pooled, nodes, attns, _ = encode_batch(
        params, graph.attributes[None], graph.neighbor_mask()[None]
    )
    return GraphEmbedding(
        nodes=nodes[0], pooled=pooled[0], attentions=tuple(a[0] for a in attns)
    )


def encode_graph_vjp(
    params: EncoderParams, graph: ConnectivityGraph, d_pooled: np.ndarray
) -> dict[str, np.ndarray]:
    """Exact reverse-mode gradient of <d_pooled, pooled embedding> with
    respect to every parameter array."""
    d_pooled = np.asarray(d_pooled, dtype=np.float64)
    if d_pooled.shape != (params.d_out,):
        raise ValueError(
            f"upstream gradient must have shape ({params.d_out},), got {d_pooled.shape}"
        )
    _, _, _, caches = encode_batch(params, graph.attributes[None], graph.neighbor_mask()[None])
    return encode_batch_vjp(params, caches, d_pooled[None])
