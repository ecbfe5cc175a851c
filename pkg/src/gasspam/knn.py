"""Comment-graph construction: dedup -> SIF embeddings -> NN-Descent KNN -> filtering."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .graph import CommentGraph, CommentRecord

log = logging.getLogger(__name__)


class KnnConfigError(ValueError):
    pass


@dataclass
class SifConfig:
    a: float = 1e-3
    remove_pc: bool = True

    def __post_init__(self):
        if not self.a > 0:
            raise KnnConfigError("SIF smoothing constant a must be positive")


@dataclass
class KnnConfig:
    K: int = 10
    iterations: int = 10
    sample_rate: float = 0.5
    delta: float = 0.001  # stop when updates < delta * n * K
    pool: int = 0  # working list length; 0 means max(K, 3K capped at n - 1)

    def working_size(self, n: int) -> int:
        size = self.pool if self.pool > 0 else 3 * self.K
        return max(self.K, min(size, n - 1))


def dedup(records: Sequence[CommentRecord]) -> tuple[list[CommentRecord], dict[str, list[str]]]:
    """Collapse comments with identical token sequences.

    The representative is the member with the smallest comment_id; the returned
    map sends each representative id to every member id (itself included).
    """
    groups: dict[tuple, list[CommentRecord]] = {}
    for r in records:
        groups.setdefault(r.tokens, []).append(r)
    reps = {}
    members: dict[str, list[str]] = {}
    for recs in groups.values():
        rep = min(recs, key=lambda r: r.comment_id)
        reps[rep.comment_id] = rep
        members[rep.comment_id] = sorted(r.comment_id for r in recs)
    unique = [r for r in records if r.comment_id in reps]
    return unique, members


def sif_embed(
    sequences: Sequence[Sequence[int]], vectors: np.ndarray, word_probs: np.ndarray, cfg: SifConfig = SifConfig()
) -> np.ndarray:
    """Smooth-inverse-frequency sentence vectors.

    Each sentence is the mean of a/(a + p(w)) * v_w over its words; with
    ``remove_pc`` the projection on the first singular direction of the stacked
    matrix is subtracted.  Empty sentences map to zero.
    """
    if len(sequences) == 0:
        raise ValueError("sif_embed: empty corpus")
    vectors = np.asarray(vectors, dtype=np.float64)
    weights = cfg.a / (cfg.a + np.asarray(word_probs, dtype=np.float64))
    out = np.zeros((len(sequences), vectors.shape[1]))
    for r, seq in enumerate(sequences):
        if len(seq):
            ids = np.asarray(seq, dtype=np.int64)
            out[r] = (weights[ids, None] * vectors[ids]).sum(axis=0) / len(ids)
    if cfg.remove_pc:
        u = first_singular_vector(out)
        out = out - np.outer(out @ u, u)
    return out


def first_singular_vector(x: np.ndarray) -> np.ndarray:
    _, _, vt = np.linalg.svd(x, full_matrices=False)
    return vt[0]


def _normalize(x: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    return np.divide(x, norms, out=np.zeros_like(x, dtype=np.float64), where=norms > 0)


def _rowdot(xn: np.ndarray, a: np.ndarray, b: np.ndarray, chunk: int = 1 << 16) -> np.ndarray:
    out = np.empty(len(a))
    for s in range(0, len(a), chunk):
        out[s : s + chunk] = np.einsum("ij,ij->i", xn[a[s : s + chunk]], xn[b[s : s + chunk]])
    return out


def nn_descent(x: np.ndarray, cfg: KnnConfig = KnnConfig(), seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Approximate K-nearest-neighbour lists under cosine similarity.

    Rounds are synchronous: every node's local join proposes candidate pairs,
    and all neighbour lists are merged together at the end of the round.
    Returns (indices, similarities), each (n, K), rows sorted by descending
    similarity with ties broken by index.
    """
    n = len(x)
    if cfg.K < 1 or n <= cfg.K:
        raise KnnConfigError(f"need 1 <= K < n, got K={cfg.K}, n={n}")
    K = cfg.working_size(n)
    xn = _normalize(np.asarray(x, dtype=np.float64))
    rng = np.random.default_rng(seed)

    idx = np.empty((n, K), dtype=np.int64)
    for i in range(n):
        pick = rng.choice(n - 1, size=K, replace=False)
        idx[i] = pick + (pick >= i)
    rows = np.repeat(np.arange(n), K)
    sims = _rowdot(xn, rows, idx.reshape(-1)).reshape(n, K)
    isnew = np.ones((n, K), dtype=bool)
    idx, sims, isnew, _ = _merge(n, K, rows, idx.reshape(-1), sims.reshape(-1), isnew.reshape(-1))

    n_sample = max(1, int(round(cfg.sample_rate * K)))
    triu: dict[int, tuple] = {}
    for it in range(cfg.iterations):
        new_lists: list[list[int]] = [[] for _ in range(n)]
        old_lists: list[list[int]] = [[] for _ in range(n)]
        for i in range(n):
            old_lists[i] = idx[i, ~isnew[i]].tolist()
            fresh = np.flatnonzero(isnew[i])
            if len(fresh) > n_sample:
                fresh = np.sort(rng.choice(fresh, size=n_sample, replace=False))
            isnew[i, fresh] = False
            new_lists[i] = idx[i, fresh].tolist()
        rev_new: list[list[int]] = [[] for _ in range(n)]
        rev_old: list[list[int]] = [[] for _ in range(n)]
        for i in range(n):
            for j in new_lists[i]:
                rev_new[j].append(i)
            for j in old_lists[i]:
                rev_old[j].append(i)
        pa, pb = [], []
        for v in range(n):
            rn, ro = rev_new[v], rev_old[v]
            if len(rn) > n_sample:
                rn = rng.choice(rn, size=n_sample, replace=False).tolist()
            if len(ro) > n_sample:
                ro = rng.choice(ro, size=n_sample, replace=False).tolist()
            new_set = set(new_lists[v]).union(rn)
            if not new_set:
                continue
            new = np.array(sorted(new_set), dtype=np.int64)
            old = np.array(sorted(set(old_lists[v]).union(ro) - new_set), dtype=np.int64)
            if len(new) not in triu:
                triu[len(new)] = np.triu_indices(len(new), k=1)
            a, b = triu[len(new)]
            pa.append(new[a])
            pb.append(new[b])
            if len(old):
                pa.append(np.repeat(new, len(old)))
                pb.append(np.tile(old, len(new)))
        if not pa:
            break
        pa = np.concatenate(pa)
        pb = np.concatenate(pb)
        keep = pa != pb
        pa, pb = pa[keep], pb[keep]
        s = _rowdot(xn, pa, pb)
        pr, pc, ps = np.concatenate([pa, pb]), np.concatenate([pb, pa]), np.concatenate([s, s])
        # a proposal below a row's current K-th similarity can never enter that row
        ok = ps >= sims[pr, K - 1]
        pr, pc, ps = pr[ok], pc[ok], ps[ok]
        cand_rows = np.concatenate([rows, pr])
        cand_cols = np.concatenate([idx.reshape(-1), pc])
        cand_sims = np.concatenate([sims.reshape(-1), ps])
        cand_new = np.concatenate([isnew.reshape(-1), np.ones(len(pr), dtype=bool)])
        origin = np.concatenate([np.zeros(n * K, dtype=np.int8), np.ones(len(pr), dtype=np.int8)])
        idx, sims, isnew, updates = _merge(n, K, cand_rows, cand_cols, cand_sims, cand_new, origin)
        log.debug("nn_descent round %d: %d updates", it + 1, updates)
        if updates <= cfg.delta * n * cfg.K:
            break
    return idx[:, : cfg.K].copy(), sims[:, : cfg.K].copy()


def _merge(n, K, rows, cols, sims, isnew, origin=None):
    """Keep the K best distinct candidates per row; count entries that are new to a row."""
    if origin is None:
        origin = np.zeros(len(rows), dtype=np.int8)
    # one int64 key per (row, col, origin): duplicates keep the existing entry
    key = (rows * n + cols) * 2 + origin
    order = np.argsort(key, kind="stable")
    key = key[order] >> 1
    first = np.ones(len(key), dtype=bool)
    first[1:] = key[1:] != key[:-1]
    order = order[first]
    rows, cols, sims, isnew, origin = rows[order], cols[order], sims[order], isnew[order], origin[order]
    # entries are now sorted by (row, col); stable sorts give (row, -sim, col)
    o = np.argsort(-sims, kind="stable")
    o = o[np.argsort(rows[o], kind="stable")]
    rows, cols, sims, isnew, origin = rows[o], cols[o], sims[o], isnew[o], origin[o]
    starts = np.searchsorted(rows, np.arange(n))
    rank = np.arange(len(rows)) - starts[rows]
    top = rank < K
    updates = int((origin[top] == 1).sum())
    return (
        cols[top].reshape(n, K), sims[top].reshape(n, K), isnew[top].reshape(n, K), updates
    )


def filter_pairs(
    knn_idx: np.ndarray,
    knn_sims: np.ndarray,
    unique: Sequence[CommentRecord],
    records: Sequence[CommentRecord],
    groups: dict[str, list[str]] | None = None,
) -> CommentGraph:
    """Turn candidate lists over deduplicated comments into a Comment Graph.

    A pair survives only if the two comments differ in both user and item; the
    graph is symmetrised and every duplicate inherits its representative's
    neighbours (subject to the same rule).
    """
    by_id = {r.comment_id: r for r in records}
    graph = CommentGraph(r.comment_id for r in records)

    def allowed(a: CommentRecord, b: CommentRecord) -> bool:
        return a.comment_id != b.comment_id and a.user_id != b.user_id and a.item_id != b.item_id

    rep_edges: dict[str, list[tuple[str, float]]] = {r.comment_id: [] for r in unique}
    for i, row in enumerate(knn_idx):
        a = unique[i]
        for j, s in zip(row, knn_sims[i]):
            b = unique[int(j)]
            if allowed(a, b):
                graph.add_edge(a.comment_id, b.comment_id, float(s))
                rep_edges[a.comment_id].append((b.comment_id, float(s)))
                rep_edges[b.comment_id].append((a.comment_id, float(s)))
    for rep, members in (groups or {}).items():
        for m in members:
            if m == rep:
                continue
            for nb, s in rep_edges.get(rep, []):
                if allowed(by_id[m], by_id[nb]):
                    graph.add_edge(m, nb, s)
    return graph


def build_comment_graph(
    records: Sequence[CommentRecord],
    vocab,
    vectors: np.ndarray,
    sif: SifConfig = SifConfig(),
    knn: KnnConfig = KnnConfig(),
    seed: int = 0,
) -> tuple[CommentGraph, dict]:
    unique, groups = dedup(records)
    seqs = [[vocab.id(t) for t in r.tokens] for r in unique]
    counts = np.zeros(len(vocab))
    for r in records:
        for t in r.tokens:
            counts[vocab.id(t)] += 1
    probs = counts / counts.sum() if counts.sum() > 0 else counts
    emb = sif_embed(seqs, vectors, probs, sif)
    idx, sims = nn_descent(emb, knn, seed)
    graph = filter_pairs(idx, sims, unique, records, groups)
    manifest = {
        "seed": seed,
        "sif": asdict(sif),
        "knn": asdict(knn),
        "metric": "cosine",
        "comments": len(records),
        "unique_comments": len(unique),
    }
    return graph, manifest
