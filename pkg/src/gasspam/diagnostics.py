"""Embedding-smoothing diagnostic and case-study neighbour statistics."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import metrics
from .graph import BipartiteGraph, CommentGraph, neighbor_spam_stats
from .knn import KnnConfig, nn_descent


@dataclass
class LogRegConfig:
    iterations: int = 200
    learning_rate: float = 0.1
    l2: float = 1e-4
    test_fraction: float = 0.3
    threshold: float = 0.5

    def __post_init__(self):
        if self.iterations < 0 or self.learning_rate <= 0 or self.l2 < 0:
            raise ValueError("logistic regression needs iterations >= 0, learning_rate > 0, l2 >= 0")
        if not 0.0 < self.test_fraction < 1.0:
            raise ValueError("test_fraction must lie in (0, 1)")


def fit_logreg(X: np.ndarray, y: np.ndarray, cfg: LogRegConfig = LogRegConfig()):
    """Full-batch gradient descent on the mean logistic loss plus (l2/2)|w|^2.

    Features are standardised with the training mean and std.  Returns a
    scoring function mapping rows to probabilities.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    sd[sd == 0] = 1.0
    Z = (X - mu) / sd
    w = np.zeros(X.shape[1])
    b = 0.0
    for _ in range(cfg.iterations):
        p = 1.0 / (1.0 + np.exp(-(Z @ w + b)))
        g = p - y
        w -= cfg.learning_rate * (Z.T @ g / len(y) + cfg.l2 * w)
        b -= cfg.learning_rate * g.mean()

    def score(Xq):
        return 1.0 / (1.0 + np.exp(-(((np.asarray(Xq, dtype=np.float64) - mu) / sd) @ w + b)))

    return score


def smooth_embeddings(embeddings: np.ndarray, ids: Sequence[str], graph: CommentGraph) -> np.ndarray:
    """Row i becomes the mean over itself and its graph neighbours that have rows."""
    embeddings = np.asarray(embeddings, dtype=np.float64)
    pos = {c: k for k, c in enumerate(ids)}
    out = np.empty_like(embeddings)
    for k, c in enumerate(ids):
        rows = [k] + [pos[n] for n in graph.adj.get(c, {}) if n in pos]
        out[k] = embeddings[rows].mean(axis=0)
    return out


def stratified_split(labels: np.ndarray, test_fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(seed)
    train, test = [], []
    for cls in (0, 1):
        idx = np.flatnonzero(labels == cls)
        idx = idx[rng.permutation(len(idx))]
        n_test = int(round(test_fraction * len(idx)))
        if len(idx) >= 2:
            n_test = min(max(n_test, 1), len(idx) - 1)
        test.append(idx[:n_test])
        train.append(idx[n_test:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(test))


def smoothing_diagnostic(
    embeddings: np.ndarray,
    labels,
    comment_graph: CommentGraph,
    seed: int = 0,
    ids: Sequence[str] | None = None,
    cfg: LogRegConfig = LogRegConfig(),
) -> dict:
    """Test (AUC, F1) of one logistic regression on raw rows and one on smoothed rows.

    ``ids`` names the comment of each row (default: the graph's node order).
    Both classifiers share the same stratified split.
    """
    embeddings = np.asarray(embeddings, dtype=np.float64)
    y = np.asarray(labels).astype(np.int64)
    if ids is None:
        ids = comment_graph.nodes
    if not len(ids) == len(y) == len(embeddings):
        raise ValueError(f"rows ({len(embeddings)}), labels ({len(y)}) and ids ({len(ids)}) differ in length")
    train, test = stratified_split(y, cfg.test_fraction, seed)
    out = {}
    for name, X in (("raw", embeddings), ("smoothed", smooth_embeddings(embeddings, ids, comment_graph))):
        score = fit_logreg(X[train], y[train], cfg)
        s = score(X[test])
        out[name] = (metrics.roc_auc(s, y[test]), metrics.f1_at(s, y[test], cfg.threshold))
    return out


def knn_comment_graph(X: np.ndarray, ids: Sequence[str], K: int = 5, seed: int = 0) -> CommentGraph:
    """Plain cosine KNN graph over rows (no user/item filtering)."""
    idx, sims = nn_descent(X, KnnConfig(K=K), seed)
    g = CommentGraph(ids)
    for i, row in enumerate(idx):
        for j, s in zip(row, sims[i]):
            g.add_edge(ids[i], ids[int(j)], float(s))
    return g


def clustered_embeddings(
    seed: int,
    n_clusters: int = 80,
    sizes: tuple[int, int] = (3, 12),
    dim: int = 16,
    spam_share: float = 0.3,
    class_shift: float = 0.6,
    noise: float = 0.5,
):
    """Rows grouped into label-pure clusters whose members are noisy copies of a centre.

    Spam and normal centres come from unit Gaussians whose means differ by
    ``class_shift`` along every axis / sqrt(dim).  Returns (X, labels, ids).
    """
    rng = np.random.default_rng(seed)
    shift = np.full(dim, class_shift / np.sqrt(dim))
    X, y = [], []
    for _ in range(n_clusters):
        lab = int(rng.random() < spam_share)
        centre = rng.normal(size=dim) + (shift if lab else -shift)
        n = int(rng.integers(sizes[0], sizes[1] + 1))
        X.append(centre + noise * rng.normal(size=(n, dim)))
        y += [lab] * n
    X = np.vstack(X)
    ids = [f"x{k:05d}" for k in range(len(X))]
    return X, np.asarray(y, dtype=np.int64), ids


def case_study(
    comment_graph: CommentGraph,
    comment_ids: Sequence[str],
    labels: dict[str, int],
    gas_scores,
    local_scores,
    precision: float = 0.90,
    bipartite: BipartiteGraph | None = None,
) -> dict:
    """Neighbour statistics for spam the full model recalls but the local model misses.

    Each model operates at the threshold giving its best recall with precision
    at least ``precision`` on these comments.  Counts are of labelled spam
    neighbours on the comment graph (and, when given, in the local context).
    """
    y = np.array([labels[c] for c in comment_ids], dtype=np.int64)
    gas_scores = np.asarray(gas_scores, dtype=np.float64)
    local_scores = np.asarray(local_scores, dtype=np.float64)

    def hits(s):
        t = metrics.threshold_at_precision(s, y, precision)
        return (s >= t if t is not None else np.zeros(len(s), dtype=bool)), t

    gas_hit, t_gas = hits(gas_scores)
    loc_hit, t_loc = hits(local_scores)
    groups = {
        "gas_only": (y == 1) & gas_hit & ~loc_hit,
        "local_false_negatives": (y == 1) & ~loc_hit,
        "gas_false_negatives": (y == 1) & ~gas_hit,
    }
    out = {"thresholds": {"gas": t_gas, "local": t_loc}, "precision": precision}
    for name, sel in groups.items():
        ids = [c for c, k in zip(comment_ids, sel) if k]
        row = {"count": len(ids), "comment_graph_spam_neighbors": neighbor_spam_stats(comment_graph, ids, labels)}
        if bipartite is not None:
            row["local_spam_neighbors"] = neighbor_spam_stats(bipartite, ids, labels)
        out[name] = row
    return out
