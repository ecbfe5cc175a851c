import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import brute_knn, rec
from gasspam.knn import (
    KnnConfig,
    KnnConfigError,
    SifConfig,
    build_comment_graph,
    dedup,
    filter_pairs,
    nn_descent,
    sif_embed,
)
from gasspam.text import Vocabulary

# ---------------------------------------------------------------- dedup


def test_dedup_all_distinct():
    recs = [rec("a", "u", "i", ["x"], 0), rec("b", "u", "i", ["y"], 0)]
    unique, groups = dedup(recs)
    assert unique == recs
    assert groups == {"a": ["a"], "b": ["b"]}


def test_dedup_three_copies():
    recs = [rec(c, "u", "i", ["x", "y"], 0) for c in ("c3", "c1", "c2")]
    unique, groups = dedup(recs)
    assert [r.comment_id for r in unique] == ["c1"]
    assert groups == {"c1": ["c1", "c2", "c3"]}


def test_dedup_mixed_corpus():
    toks = [["a"], ["b"], ["a"], ["c"], ["d"]]
    unique, _ = dedup([rec(f"c{k}", "u", "i", t, 0) for k, t in enumerate(toks)])
    assert len(unique) == 4


# ---------------------------------------------------------------- SIF


def test_sif_single_word_no_pc():
    vecs = np.array([[0.0, 0.0], [1.0, 2.0], [3.0, -1.0]])
    probs = np.array([0.0, 0.25, 0.75])
    out = sif_embed([[2]], vecs, probs, SifConfig(a=1e-3, remove_pc=False))
    assert np.allclose(out[0], (1e-3 / (1e-3 + 0.75)) * vecs[2])


def test_sif_identical_sentences_collapse():
    rng = np.random.default_rng(0)
    vecs = rng.normal(size=(5, 4))
    out = sif_embed([[1, 2, 3]] * 4, vecs, np.full(5, 0.2))
    assert np.allclose(out, out[0])
    assert np.abs(out).max() < 1e-10


def _power_iteration(x, iters=500):
    v = np.ones(x.shape[1]) / np.sqrt(x.shape[1])
    for _ in range(iters):
        v = x.T @ (x @ v)
        v /= np.linalg.norm(v)
    return v


def test_sif_pc_matches_power_iteration():
    vecs = np.array([[0, 0, 0], [1.0, 0.2, 0.0], [0.1, 1.0, 0.3], [0.0, 0.3, 1.0], [0.9, 0.9, 0.1]])
    probs = np.array([0.0, 0.1, 0.2, 0.3, 0.4])
    seqs = [[1, 2], [2, 3, 4], [4, 1]]
    raw = sif_embed(seqs, vecs, probs, SifConfig(remove_pc=False))
    u = _power_iteration(raw)
    expect = raw - np.outer(raw @ u, u)
    out = sif_embed(seqs, vecs, probs)
    assert np.allclose(out, expect, atol=1e-10)
    assert np.abs(out @ u).max() < 1e-8


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), n=st.integers(2, 30))
def test_sif_removed_direction_has_no_energy(seed, n):
    rng = np.random.default_rng(seed)
    vecs = rng.normal(size=(12, 5))
    probs = rng.dirichlet(np.ones(12))
    seqs = [rng.integers(0, 12, size=rng.integers(1, 6)).tolist() for _ in range(n)]
    raw = sif_embed(seqs, vecs, probs, SifConfig(remove_pc=False))
    out = sif_embed(seqs, vecs, probs)
    _, _, vt = np.linalg.svd(raw, full_matrices=False)
    assert np.sum((out @ vt[0]) ** 2) <= 1e-8 * max(np.sum(raw**2), 1e-300)


def test_sif_empty_sentence_is_zero_and_empty_corpus_errors():
    vecs = np.eye(3)
    out = sif_embed([[], [1]], vecs, np.array([0, 0.5, 0.5]), SifConfig(remove_pc=False))
    assert np.array_equal(out[0], np.zeros(3))
    with pytest.raises(ValueError):
        sif_embed([], vecs, np.ones(3) / 3)


def test_sif_config_rejects_nonpositive_a():
    with pytest.raises(KnnConfigError):
        SifConfig(a=0.0)


# ---------------------------------------------------------------- NN-Descent


def test_knn_saturated_lists_hold_everyone_else():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(6, 3))
    idx, sims = nn_descent(x, KnnConfig(K=5))
    for i in range(6):
        assert sorted(idx[i].tolist()) == [j for j in range(6) if j != i]
        assert np.all(np.diff(sims[i]) <= 0)


def test_knn_rejects_small_n():
    with pytest.raises(KnnConfigError):
        nn_descent(np.ones((3, 2)), KnnConfig(K=3))


def test_knn_two_clusters():
    rng = np.random.default_rng(2)
    a = np.array([1.0, 0, 0, 0]) + 0.05 * rng.normal(size=(40, 4))
    b = np.array([0, 0, 0, 1.0]) + 0.05 * rng.normal(size=(40, 4))
    x = np.vstack([a, b])
    exact = brute_knn(x, 5)
    side = np.arange(80) >= 40
    assert np.all(side[exact] == side[:, None])
    idx, _ = nn_descent(x, KnnConfig(K=5), seed=3)
    recall = np.mean([len(set(idx[i]) & set(exact[i])) / 5 for i in range(80)])
    assert recall >= 0.9


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 1000), n=st.integers(12, 120), K=st.integers(1, 10))
def test_knn_lists_well_formed(seed, n, K):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, 6))
    idx, sims = nn_descent(x, KnnConfig(K=K, iterations=3), seed=seed)
    assert idx.shape == sims.shape == (n, K)
    xn = x / np.linalg.norm(x, axis=1, keepdims=True)
    for i in range(n):
        assert i not in idx[i] and len(set(idx[i].tolist())) == K
        assert np.allclose(sims[i], xn[idx[i]] @ xn[i])
        assert np.all(np.diff(sims[i]) <= 1e-15)


def test_knn_deterministic_given_seed():
    x = np.random.default_rng(4).normal(size=(150, 8))
    a = nn_descent(x, KnnConfig(K=6), seed=9)
    b = nn_descent(x, KnnConfig(K=6), seed=9)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])


# ---------------------------------------------------------------- filtering


def test_filter_same_user_dropped():
    recs = [rec("a", "u", "i1", ["x"], 0), rec("b", "u", "i2", ["x", "y"], 0)]
    g = filter_pairs(np.array([[1], [0]]), np.array([[0.9], [0.9]]), recs, recs)
    assert g.num_edges == 0


def test_filter_distinct_pair_kept_and_symmetric():
    recs = [rec("a", "u1", "i1", ["x"], 0), rec("b", "u2", "i2", ["x", "y"], 0), rec("c", "u3", "i3", ["z"], 0)]
    g = filter_pairs(np.array([[1], [2], [1]]), np.array([[0.9], [0.5], [0.5]]), recs, recs)
    assert g.edge_list() == [("a", "b", 0.9), ("b", "c", 0.5)]
    assert "a" in g.adj["b"]


def test_filter_figure_style_miniature():
    # six near-duplicate ads from five users under six items; u1 posted twice
    owners = ["u1", "u1", "u2", "u3", "u4", "u5"]
    recs = [rec(f"s{k}", owners[k], f"i{k}", ["wechat", f"#{k}"], k, 1) for k in range(6)]
    K = 5
    idx = np.array([[j for j in range(6) if j != i] for i in range(6)])
    g = filter_pairs(idx, np.full((6, K), 0.8), recs, recs)
    assert "s1" not in g.adj["s0"]
    # every other pair survives: 15 pairs minus the same-user pair
    assert g.num_edges == 14
    for a, b, _ in g.edge_list():
        ra, rb = recs[int(a[1])], recs[int(b[1])]
        assert ra.user_id != rb.user_id and ra.item_id != rb.item_id


def test_duplicates_inherit_neighbours():
    recs = [
        rec("a", "u1", "i1", ["x", "y"], 0),
        rec("a2", "u2", "i2", ["x", "y"], 1),  # duplicate of a
        rec("b", "u3", "i3", ["x", "z"], 2),
        rec("c", "u2", "i4", ["q"], 3),
    ]
    unique, groups = dedup(recs)
    assert [r.comment_id for r in unique] == ["a", "b", "c"]
    g = filter_pairs(np.array([[1], [0], [0]]), np.array([[0.9], [0.9], [0.1]]), unique, recs, groups)
    assert "b" in g.adj["a2"]
    assert "c" not in g.adj["a2"]  # same user u2


def test_build_comment_graph_respects_rules():
    rng = np.random.default_rng(5)
    vocab = Vocabulary()
    for k in range(30):
        vocab.add(f"w{k}")
    vecs = rng.normal(size=(len(vocab), 6))
    recs = [
        rec(f"c{k:03d}", f"u{rng.integers(8)}", f"i{rng.integers(10)}", [f"w{t}" for t in rng.integers(0, 30, 4)], k)
        for k in range(120)
    ]
    g, manifest = build_comment_graph(recs, vocab, vecs, knn=KnnConfig(K=6), seed=1)
    by = {r.comment_id: r for r in recs}
    assert g.num_edges > 0
    for a, b, _ in g.edge_list():
        assert a != b and by[a].user_id != by[b].user_id and by[a].item_id != by[b].item_id
    assert manifest["seed"] == 1 and manifest["metric"] == "cosine"
