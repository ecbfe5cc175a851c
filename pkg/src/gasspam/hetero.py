"""Heterogeneous graph convolution over the user-item-comment graph.

Per layer l, edges are updated from the concatenation of their own state and
their two endpoints; users and items attend over (neighbour, edge) pairs and
combine the result with a projection of their own state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .autodiff import (
    ShapeError,
    Tensor,
    batch_dot,
    concat,
    masked_softmax,
    matmul,
    relu,
    reshape,
    slice_rows,
    take_rows,
    weighted_sum,
    where_mask,
)
from .graph import ITEM, USER, SampledBlock


class ConfigError(ValueError):
    pass


def _init(rng, fan_in, fan_out, dtype):
    """Glorot uniform."""
    lim = math.sqrt(6.0 / (fan_in + fan_out))
    return Tensor(rng.uniform(-lim, lim, (fan_in, fan_out)).astype(dtype), requires_grad=True)


@dataclass
class SideParams:
    """Aggregation (W, b), attention (Q, K) and combination (V) weights of one node type."""

    W: Tensor
    b: Tensor
    Q: Tensor
    K: Tensor
    V: Tensor

    @classmethod
    def create(cls, rng, d_self, d_nbr_node, d_nbr_edge, d_out, d_att, dtype):
        d_cand = d_nbr_node + d_nbr_edge
        return cls(
            W=_init(rng, d_cand, d_out, dtype),
            b=Tensor(np.zeros(d_out, dtype=dtype), requires_grad=True),
            Q=_init(rng, d_self, d_att, dtype),
            K=_init(rng, d_cand, d_att, dtype),
            V=_init(rng, d_self, d_out, dtype),
        )


@dataclass
class HeteroLayerParams:
    W_E: Tensor
    b_E: Tensor
    user: SideParams
    item: SideParams

    @classmethod
    def create(cls, rng, d_edge, d_user, d_item, d_out, d_att=None, dtype=np.float64):
        d_att = d_att or d_out
        return cls(
            W_E=_init(rng, d_edge + d_user + d_item, d_out, dtype),
            b_E=Tensor(np.zeros(d_out, dtype=dtype), requires_grad=True),
            user=SideParams.create(rng, d_user, d_item, d_edge, d_out, d_att, dtype),
            item=SideParams.create(rng, d_item, d_user, d_edge, d_out, d_att, dtype),
        )

    def side(self, side: str) -> SideParams:
        return self.user if side == USER else self.item

    def named(self, prefix: str) -> dict[str, Tensor]:
        out = {f"{prefix}.W_E": self.W_E, f"{prefix}.b_E": self.b_E}
        for tag, sp in (("U", self.user), ("I", self.item)):
            for field in ("W", "b", "Q", "K", "V"):
                out[f"{prefix}.{field}_{tag}"] = getattr(sp, field)
        return out

    @property
    def out_dims(self) -> tuple[int, int, int]:
        d = self.W_E.shape[1]
        return d, self.user.V.shape[1] + self.user.W.shape[1], self.item.V.shape[1] + self.item.W.shape[1]


def init_hetero_params(rng, d_edge, d_user, d_item, L, d_hidden, d_att=None, dtype=np.float64):
    layers = []
    for _ in range(L):
        p = HeteroLayerParams.create(rng, d_edge, d_user, d_item, d_hidden, d_att, dtype)
        layers.append(p)
        d_edge, d_user, d_item = p.out_dims
    return layers


def edge_update(h_e: Tensor, h_u: Tensor, h_i: Tensor, W_E: Tensor, b_E: Tensor | None = None) -> Tensor:
    """h_e^l = ReLU(W_E . concat(h_e, h_U(e), h_I(e))) for a batch of edges."""
    x = concat([h_e, h_u, h_i], axis=-1)
    if x.shape[-1] != W_E.shape[0]:
        raise ShapeError(f"edge_update: input dim {x.shape[-1]} but W_E expects {W_E.shape[0]}")
    z = matmul(x, W_E)
    if b_E is not None:
        z = z + b_E
    return relu(z)


def attention_aggregate(h_key: Tensor, candidates: Tensor, mask, Q: Tensor, K: Tensor):
    """Scaled dot-product attention of each key over its candidate set.

    h_key (n, d_self); candidates (n, M, d_cand) -> (weighted sum (n, d_cand), weights (n, M)).
    Rows with no valid candidate get zero weights and a zero sum.
    """
    mask = np.asarray(mask, dtype=bool)
    q = matmul(h_key, Q)
    k = matmul(candidates, K)
    scores = batch_dot(q, k) * (1.0 / math.sqrt(Q.shape[1]))
    w = masked_softmax(scores, mask, allow_empty=True)
    return weighted_sum(w, candidates), w


_KEY_CACHE: dict[int, np.ndarray] = {}


def _slot_key_vector(d: int) -> np.ndarray:
    r = _KEY_CACHE.get(d)
    if r is None:
        r = _KEY_CACHE[d] = np.random.default_rng(12345).normal(size=d)
    return r


def _canonical_order(node_states, nn_idx, edge_states, ne_idx, mask) -> np.ndarray:
    """Slot permutation that depends only on candidate contents (valid slots first)."""
    dn = node_states.shape[-1]
    r = _slot_key_vector(dn + edge_states.shape[-1])
    nk = (node_states * r[:dn]).sum(axis=-1)
    ek = (edge_states * r[dn:]).sum(axis=-1)
    key = np.where(mask, nk[nn_idx] + ek[ne_idx], np.inf)
    return np.argsort(key, axis=1, kind="stable")


def aggregate_indexed(
    h_self: Tensor,
    node_states: Tensor,
    nn_idx,
    edge_states: Tensor,
    ne_idx,
    mask,
    W: Tensor,
    b: Tensor | None,
    Q: Tensor,
    K: Tensor,
    V: Tensor,
) -> Tensor:
    """Aggregate-and-combine with candidates given as row indices into state tables.

    Candidate j of row r is concat(node_states[nn_idx[r, j]], edge_states[ne_idx[r, j]]).
    W and K act on that concatenation; they are applied to the state tables
    before gathering, which gives the same result as projecting the attention
    output because the weights of a non-empty row sum to one.
    """
    mask = np.asarray(mask, dtype=bool)
    nn_idx = np.asarray(nn_idx, dtype=np.int64)
    ne_idx = np.asarray(ne_idx, dtype=np.int64)
    dn, de = node_states.shape[-1], edge_states.shape[-1]
    if W.shape[0] != dn + de or K.shape[0] != dn + de:
        raise ShapeError(f"node_update: candidate dim {dn + de} but W expects {W.shape[0]}, K expects {K.shape[0]}")
    if h_self.shape[-1] != V.shape[0] or h_self.shape[-1] != Q.shape[0]:
        raise ShapeError(f"node_update: self dim {h_self.shape[-1]} but V expects {V.shape[0]}")
    perm = _canonical_order(node_states.data, nn_idx, edge_states.data, ne_idx, mask)
    nn_idx = np.take_along_axis(nn_idx, perm, axis=1)
    ne_idx = np.take_along_axis(ne_idx, perm, axis=1)
    mask = np.take_along_axis(mask, perm, axis=1)

    def project(M_):
        a = matmul(node_states, slice_rows(M_, 0, dn))
        c = matmul(edge_states, slice_rows(M_, dn, dn + de))
        return where_mask(mask, take_rows(a, nn_idx) + take_rows(c, ne_idx))

    keys = project(K)
    vals = project(W)
    scores = batch_dot(matmul(h_self, Q), keys) * (1.0 / math.sqrt(Q.shape[1]))
    w = masked_softmax(scores, mask, allow_empty=True)
    z = weighted_sum(w, vals)
    if b is not None:
        z = z + b
    h_n = where_mask(mask.any(axis=1), relu(z))
    return concat([matmul(h_self, V), h_n], axis=-1)


def aggregate_combine(
    h_self: Tensor, nbr_nodes: Tensor, nbr_edges: Tensor, mask, W: Tensor, b: Tensor | None, Q: Tensor, K: Tensor, V: Tensor
) -> Tensor:
    """concat(V . h_self, ReLU(W . ATTN(h_self, {concat(h_nbr, h_edge)}))) over gathered candidates.

    Candidates are first laid out in canonical slot order, so the result does
    not depend on how neighbours were listed, and placeholders are zeroed so
    their contents never matter.
    """
    mask = np.asarray(mask, dtype=bool)
    n, M = mask.shape
    dn, de = nbr_nodes.shape[-1], nbr_edges.shape[-1]
    nodes = reshape(where_mask(mask, nbr_nodes), (n * M, dn))
    edges = reshape(where_mask(mask, nbr_edges), (n * M, de))
    ident = np.arange(n * M).reshape(n, M)
    perm = _canonical_order(nodes.data, ident, edges.data, ident, mask)
    flat = (np.arange(n)[:, None] * M + perm).reshape(-1)
    nodes, edges = take_rows(nodes, flat), take_rows(edges, flat)
    return aggregate_indexed(h_self, nodes, ident, edges, ident, np.take_along_axis(mask, perm, axis=1), W, b, Q, K, V)


def node_update(h_self: Tensor, nbr_nodes: Tensor, nbr_edges: Tensor, mask, params: HeteroLayerParams, side: str) -> Tensor:
    """Aggregate-and-combine for users (side='user') or items (side='item')."""
    sp = params.side(side)
    return aggregate_combine(h_self, nbr_nodes, nbr_edges, mask, sp.W, sp.b, sp.Q, sp.K, sp.V)


def forward(block: SampledBlock, h0_edges: Tensor, h0_users: Tensor, h0_items: Tensor, params: Sequence[HeteroLayerParams]):
    """Run the layered propagation over a sampled block.

    ``h0_*`` hold layer-0 states aligned with ``block.layers[0]`` keys.  Returns
    (z_e, z_u, z_i), one row per batch edge.
    """
    if len(params) != block.L:
        raise ConfigError(f"block has {block.L} layers but {len(params)} parameter layers were given")
    E, U, I = h0_edges, h0_users, h0_items
    for l in range(1, block.L + 1):
        layer, p = block.layers[l], params[l - 1]
        E_new = edge_update(
            take_rows(E, layer.edge_self), take_rows(U, layer.edge_user), take_rows(I, layer.edge_item), p.W_E, p.b_E
        )
        states = {USER: U, ITEM: I}
        new = {}
        for side, other in ((USER, ITEM), (ITEM, USER)):
            selfs, ne, nn, mk = layer.nbr[side]
            sp = p.side(side)
            new[side] = aggregate_indexed(
                take_rows(states[side], selfs), states[other], nn, E, ne, mk, sp.W, sp.b, sp.Q, sp.K, sp.V
            )
        E, U, I = E_new, new[USER], new[ITEM]
    return take_rows(E, block.out_edge), take_rows(U, block.out_user), take_rows(I, block.out_item)


# ---------------------------------------------------------------- meta-path form


@dataclass(frozen=True)
class MetaPathSchema:
    """Node types A^0 .. A^L along a path and the edge type linking consecutive ones."""

    node_types: tuple[str, ...]
    edge_types: tuple[str, ...]

    def __post_init__(self):
        if len(self.edge_types) != len(self.node_types) - 1:
            raise ConfigError("a meta-path with L+1 node types needs L edge types")


def metapath_layer(
    h_self: Tensor,
    self_type: str,
    nbr_nodes: Tensor,
    nbr_type: str,
    nbr_edges: Tensor,
    edge_type: str,
    mask,
    schema: MetaPathSchema,
    l: int,
    typed: dict,
) -> Tensor:
    """Typed aggregate-and-combine at layer ``l`` of a meta-path.

    ``typed`` maps ("W"|"b"|"Q"|"K", src_type, dst_type, l) and ("V", dst_type, l)
    to tensors, where src is the neighbour type A^{l-1} and dst is A^l.
    """
    if not 1 <= l < len(schema.node_types):
        raise ConfigError(f"layer {l} outside meta-path of length {len(schema.node_types) - 1}")
    if schema.node_types[l] != self_type or schema.node_types[l - 1] != nbr_type:
        raise ConfigError(
            f"layer {l} expects {schema.node_types[l - 1]}->{schema.node_types[l]}, got {nbr_type}->{self_type}"
        )
    if schema.edge_types[l - 1] != edge_type:
        raise ConfigError(f"layer {l} expects edge type {schema.edge_types[l - 1]}, got {edge_type}")
    try:
        W = typed[("W", nbr_type, self_type, l)]
        b = typed.get(("b", nbr_type, self_type, l))
        Q = typed[("Q", nbr_type, self_type, l)]
        K = typed[("K", nbr_type, self_type, l)]
        V = typed[("V", self_type, l)]
    except KeyError as err:
        raise ConfigError(f"missing typed parameter {err.args[0]}") from None
    return aggregate_combine(h_self, nbr_nodes, nbr_edges, mask, W, b, Q, K, V)


XIANYU_PATHS = (
    MetaPathSchema(("U", "I", "U"), ("E", "E")),
    MetaPathSchema(("I", "U", "I"), ("E", "E")),
)


def xianyu_typed_params(layers: Sequence[HeteroLayerParams]) -> dict:
    """Express the bipartite layer weights in meta-path form (I->U uses user weights)."""
    typed = {}
    for l, p in enumerate(layers, 1):
        for dst, src, sp in (("U", "I", p.user), ("I", "U", p.item)):
            typed[("W", src, dst, l)] = sp.W
            typed[("b", src, dst, l)] = sp.b
            typed[("Q", src, dst, l)] = sp.Q
            typed[("K", src, dst, l)] = sp.K
            typed[("V", dst, l)] = sp.V
    return typed
