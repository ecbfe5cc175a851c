"""Small constructions and brute-force oracles shared by the test modules."""

from __future__ import annotations

import math

import numpy as np

from gasspam.graph import CommentGraph, CommentRecord, build_graph
from gasspam.model import GasModel, build_model_config, init_params
from gasspam.text import Vocabulary

WORDS = ["buy", "cheap", "add", "vx", "nice", "item", "fast", "ship"]


def rec(cid, user, item, tokens, t, label=None):
    return CommentRecord(cid, user, item, tuple(tokens), t, label)


def three_edge_records():
    # u0 -e0- i0, u0 -e1- i1, u1 -e2- i1
    return [
        rec("e0", "u0", "i0", ["buy", "cheap", "vx"], 10, 1),
        rec("e1", "u0", "i1", ["nice", "item"], 20, 0),
        rec("e2", "u1", "i1", ["add", "vx", "fast", "ship"], 30, 1),
    ]


def four_comment_records():
    return three_edge_records() + [rec("e3", "u2", "i2", ["cheap", "add", "vx"], 40, 0)]


def toy_vocab():
    v = Vocabulary()
    for w in WORDS:
        v.add(w)
    return v


def toy_model(records, variant="gas", layers=2, comment_edges=(), seed=0, features=False, **overrides):
    """A float64 model with tiny dimensions over ``records``."""
    rng = np.random.default_rng(seed + 100)
    vocab = toy_vocab()
    vectors = rng.normal(0.0, 0.5, (len(vocab), 4))
    uf = itf = None
    if features:
        uf = {r.user_id: rng.normal(size=3) for r in records}
        itf = {r.item_id: rng.normal(size=2) for r in records}
    graph = build_graph(records, uf, itf)
    cg = CommentGraph([r.comment_id for r in records], comment_edges)
    dims = dict(n_filters=3, d_hidden=4, classifier_hidden=3, d_node=3, M_xianyu=16, M_comment=64)
    dims.update(overrides)
    cfg = build_model_config(graph, vectors, variant=variant, layers=layers, precision="f64", **dims)
    params = init_params(cfg, vectors, seed=seed)
    return GasModel(params, vocab, graph, cg if variant == "gas" else None)


# ---------------------------------------------------------------- metric oracles


def brute_auc(scores, labels):
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    total = 0.0
    for p in pos:
        for n in neg:
            total += 1.0 if p > n else 0.5 if p == n else 0.0
    return total / (len(pos) * len(neg))


def brute_confusion(scores, labels, t):
    tp = sum(1 for s, y in zip(scores, labels) if s >= t and y == 1)
    fp = sum(1 for s, y in zip(scores, labels) if s >= t and y == 0)
    fn = sum(1 for s, y in zip(scores, labels) if s < t and y == 1)
    return tp, fp, fn


def brute_f1(scores, labels, t):
    tp, fp, fn = brute_confusion(scores, labels, t)
    if tp == 0:
        return 0.0
    p = tp / (tp + fp)
    r = tp / (tp + fn)
    return 2 * p * r / (p + r)


def brute_pr(scores, labels):
    n_pos = sum(labels)
    out = []
    for t in sorted(set(scores)):
        tp, fp, _ = brute_confusion(scores, labels, t)
        out.append((t, tp / (tp + fp), tp / n_pos if n_pos else 0.0))
    return out


def brute_recall_at_precision(scores, labels, p):
    best = 0.0
    for _, prec, recall in brute_pr(scores, labels):
        if prec >= p:
            best = max(best, recall)
    return best


def brute_knn(x, K):
    xn = x / np.linalg.norm(x, axis=1, keepdims=True)
    sims = xn @ xn.T
    out = []
    for i in range(len(x)):
        cand = sorted((j for j in range(len(x)) if j != i), key=lambda j: (-sims[i, j], j))
        out.append(cand[:K])
    return np.array(out)


# ---------------------------------------------------------------- straight-line forward


def _relu(v):
    return np.array([max(0.0, float(a)) for a in v])


def _attend(key, cands, Q, K, W, b):
    """ReLU(W^T . sum_j softmax_j(q.k_j / sqrt(d)) c_j + b), or zeros without candidates."""
    if not cands:
        return np.zeros(W.shape[1])
    q = key @ Q
    scores = [float(q @ (c @ K)) / math.sqrt(Q.shape[1]) for c in cands]
    top = max(scores)
    ex = [math.exp(s - top) for s in scores]
    z = sum(ex)
    agg = sum((e / z) * c for e, c in zip(ex, cands))
    return _relu(agg @ W + b)


def trace_forward(records, L, h0_edge, h0_user, h0_item, layers, exclude_self=True):
    """Per batch edge, evaluate the layered recursion directly over full neighbourhoods.

    ``h0_*`` are dicts keyed by comment/user/item id; ``layers`` is a list of
    dicts of numpy arrays named like the model parameters (W_E, b_E, W_U, ...).
    Neighbourhoods are complete (callers pick M at least the maximum degree).
    With ``exclude_self`` the batch comment is dropped from the neighbour lists
    of its own user and item at the top layer only.
    """
    by_user, by_item = {}, {}
    for r in records:
        by_user.setdefault(r.user_id, []).append(r)
        by_item.setdefault(r.item_id, []).append(r)

    def make(batch):
        def h(l, kind, x):
            if l == 0:
                return {"e": h0_edge, "u": h0_user, "i": h0_item}[kind][x]
            p = layers[l - 1]
            if kind == "e":
                r = next(r for r in records if r.comment_id == x)
                cat = np.concatenate([h(l - 1, "e", x), h(l - 1, "u", r.user_id), h(l - 1, "i", r.item_id)])
                return _relu(cat @ p["W_E"] + p["b_E"])
            if kind == "u":
                nbrs = [r for r in by_user[x] if not (exclude_self and l == L and r.comment_id == batch)]
                cands = [np.concatenate([h(l - 1, "i", r.item_id), h(l - 1, "e", r.comment_id)]) for r in nbrs]
                own = h(l - 1, "u", x)
                return np.concatenate([own @ p["V_U"], _attend(own, cands, p["Q_U"], p["K_U"], p["W_U"], p["b_U"])])
            nbrs = [r for r in by_item[x] if not (exclude_self and l == L and r.comment_id == batch)]
            cands = [np.concatenate([h(l - 1, "u", r.user_id), h(l - 1, "e", r.comment_id)]) for r in nbrs]
            own = h(l - 1, "i", x)
            return np.concatenate([own @ p["V_I"], _attend(own, cands, p["Q_I"], p["K_I"], p["W_I"], p["b_I"])])

        return h

    out = {}
    for r in records:
        h = make(r.comment_id)
        out[r.comment_id] = (h(L, "e", r.comment_id), h(L, "u", r.user_id), h(L, "i", r.item_id))
    return out
