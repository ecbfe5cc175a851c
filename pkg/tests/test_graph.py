import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import rec, three_edge_records
from gasspam.graph import (
    ITEM,
    USER,
    CommentGraph,
    GraphLookupError,
    IngestError,
    build_graph,
    ingest,
    load_node_features,
    multi_hop_sample,
    neighbor_spam_stats,
    sample_neighbors_time,
    write_records,
)


def write_lines(path, objs):
    path.write_text("".join(json.dumps(o) + "\n" for o in objs))
    return path


def line(cid, u="u", i="i", t=0, **kw):
    return {"comment_id": cid, "user_id": u, "item_id": i, "tokens": ["a"], "timestamp": t, **kw}


# ---------------------------------------------------------------- ingest


def test_ingest_empty(tmp_path):
    assert ingest(write_lines(tmp_path / "r.jsonl", [])) == []


def test_ingest_keeps_file_order(tmp_path):
    recs = ingest(write_lines(tmp_path / "r.jsonl", [line("c3"), line("c1"), line("c2", label=1)]))
    assert [r.comment_id for r in recs] == ["c3", "c1", "c2"]
    assert recs[2].label == 1 and recs[0].label is None


def test_ingest_missing_item_reports_line(tmp_path):
    bad = line("c2")
    del bad["item_id"]
    with pytest.raises(IngestError, match=r":2:.*item_id"):
        ingest(write_lines(tmp_path / "r.jsonl", [line("c1"), bad]))


def test_ingest_duplicate_names_id(tmp_path):
    with pytest.raises(IngestError, match="'c1'"):
        ingest(write_lines(tmp_path / "r.jsonl", [line("c1"), line("c1")]))


def test_ingest_malformed_json(tmp_path):
    p = tmp_path / "r.jsonl"
    p.write_text(json.dumps(line("c1")) + "\n{not json\n")
    with pytest.raises(IngestError, match=":2:"):
        ingest(p)


def test_ingest_text_field_is_split(tmp_path):
    obj = line("c1")
    del obj["tokens"]
    obj["text"] = "Add my VX"
    (r,) = ingest(write_lines(tmp_path / "r.jsonl", [obj]))
    assert r.tokens == ("add", "my", "vx")


def test_ingest_rejects_bad_label(tmp_path):
    with pytest.raises(IngestError, match="label"):
        ingest(write_lines(tmp_path / "r.jsonl", [line("c1", label=2)]))


def test_feature_sidecar(tmp_path):
    p = tmp_path / "f.jsonl"
    p.write_text('{"user_id": "u1", "features": [1, 2]}\n{"user_id": "u2", "features": [3, 4]}\n')
    f = load_node_features(p, "user_id")
    assert f["u2"].tolist() == [3.0, 4.0]
    p.write_text('{"user_id": "u1", "features": [1, 2]}\n{"user_id": "u2", "features": [3]}\n')
    with pytest.raises(IngestError, match=":2:"):
        load_node_features(p, "user_id")


# ---------------------------------------------------------------- build_graph


def test_single_record():
    g = build_graph([rec("c", "u", "i", ["a"], 1)])
    assert (len(g.users), len(g.items), g.num_edges) == (1, 1, 1)


def test_two_comments_same_pair_time_sorted():
    g = build_graph([rec("c1", "u", "i", ["a"], 50), rec("c2", "u", "i", ["b"], 10)])
    assert (len(g.users), len(g.items), g.num_edges) == (1, 1, 2)
    assert [g.records[e].comment_id for e in g.incident(USER, "u")] == ["c2", "c1"]


def test_miniature_degrees():
    # one spammer advertises under all three items; two buyers comment normally
    recs = [
        rec("e1", "spammer", "i1", ["cheap", "phone", "#1"], 1, 1),
        rec("e2", "spammer", "i2", ["cheap", "phone", "#1"], 2, 1),
        rec("e3", "spammer", "i3", ["cheap", "phone", "#1"], 3, 1),
        rec("e4", "buyer1", "i1", ["still", "available"], 4, 0),
        rec("e5", "buyer1", "i2", ["price", "ok"], 5, 0),
        rec("e6", "buyer2", "i2", ["nice"], 6, 0),
        rec("e7", "buyer2", "i3", ["ship", "today"], 7, 0),
    ]
    g = build_graph(recs)
    assert (len(g.users), len(g.items), g.num_edges) == (3, 3, 7)
    assert [g.degree(USER, u) for u in ("spammer", "buyer1", "buyer2")] == [3, 2, 2]
    assert [g.degree(ITEM, i) for i in ("i1", "i2", "i3")] == [2, 3, 2]


records_strategy = st.lists(
    st.tuples(st.integers(0, 4), st.integers(0, 4), st.integers(0, 20)), min_size=1, max_size=25
)


@settings(max_examples=60, deadline=None)
@given(rows=records_strategy)
def test_round_trip_and_adjacency_invariants(rows, tmp_path_factory):
    recs = [rec(f"c{k:02d}", f"u{u}", f"i{i}", ["w"], t) for k, (u, i, t) in enumerate(rows)]
    g = build_graph(recs)
    assert g.edges() == recs
    path = tmp_path_factory.mktemp("rt") / "r.jsonl"
    write_records(path, recs)
    assert ingest(path) == recs
    for side in (USER, ITEM):
        seen = np.concatenate([g.incident(side, v) for v in range(g.node_count(side))])
        assert sorted(seen.tolist()) == list(range(len(recs)))  # each edge once per side
        for v in range(g.node_count(side)):
            keys = [(g.records[e].timestamp, g.records[e].comment_id) for e in g.incident(side, v)]
            assert keys == sorted(keys)


# ---------------------------------------------------------------- time sampling


def _item_graph(times):
    return build_graph([rec(f"c{k}", f"u{k}", "i", ["w"], t) for k, t in enumerate(times)])


def test_sampling_picks_closest():
    g = _item_graph([1, 5, 9])
    row = sample_neighbors_time(g, ITEM, "i", 4, 2)
    assert [g.records[e].timestamp for e in row.edges[row.mask]] == [5, 1]


def test_sampling_pads_with_placeholder():
    g = _item_graph([7])
    row = sample_neighbors_time(g, ITEM, "i", 0, 2)
    assert row.mask.tolist() == [True, False]


def test_sampling_ties_prefer_earlier_then_smaller_id():
    g = build_graph([rec("b", "u1", "i", ["w"], 6), rec("a", "u2", "i", ["w"], 6), rec("c", "u3", "i", ["w"], 2)])
    row = sample_neighbors_time(g, ITEM, "i", 4, 3)
    assert [g.records[e].comment_id for e in row.edges] == ["c", "a", "b"]


def test_sampling_figure_scenario():
    # batch comment e0 by u0 on i0; i0 also has e3, e4, e5; u0 also wrote e6
    recs = [
        rec("e0", "u0", "i0", ["w"], 100),
        rec("e3", "u1", "i0", ["w"], 90),
        rec("e4", "u2", "i0", ["w"], 105),
        rec("e5", "u3", "i0", ["w"], 300),
        rec("e6", "u0", "i1", ["w"], 40),
    ]
    g = build_graph(recs)
    e0 = g.edge_id("e0")
    item_row = sample_neighbors_time(g, ITEM, "i0", 100, 2, exclude=e0)
    assert {g.records[e].comment_id for e in item_row.edges[item_row.mask]} == {"e3", "e4"}
    assert {g.users[u] for u in item_row.nodes[item_row.mask]} == {"u1", "u2"}
    user_row = sample_neighbors_time(g, USER, "u0", 100, 2, exclude=e0)
    assert user_row.mask.tolist() == [True, False]
    assert g.records[user_row.edges[0]].comment_id == "e6" and g.items[user_row.nodes[0]] == "i1"


def test_sampling_unknown_node():
    with pytest.raises(GraphLookupError):
        sample_neighbors_time(_item_graph([1]), ITEM, "nope", 0, 2)


def test_sampling_is_deterministic():
    g = _item_graph([3, 8, 1, 9, 4])
    a = sample_neighbors_time(g, ITEM, "i", 5, 3)
    g._sample_cache.clear()
    b = sample_neighbors_time(g, ITEM, "i", 5, 3)
    assert np.array_equal(a.edges, b.edges) and np.array_equal(a.mask, b.mask)


# ---------------------------------------------------------------- multi-hop sampling


def test_multi_hop_one_layer_single_edge():
    g = build_graph(three_edge_records())
    b = multi_hop_sample(g, [g.edge_id("e1")], L=1, M=4)
    users, items, edges = b.node_sets(1)
    assert users == {g.user_index["u0"]} and items == {g.item_index["i1"]}
    u0, i0, i1 = g.user_index["u0"], g.item_index["i0"], g.item_index["i1"]
    U, I, E = b.node_sets(0)
    # u0's other comment is e0 (to i0); i1's other comment is e2 (from u1)
    assert U == {u0, g.user_index["u1"]}
    assert I == {i0, i1}
    assert E == {g.edge_id("e0"), g.edge_id("e1"), g.edge_id("e2")}


def test_multi_hop_hand_trace_two_layers():
    g = build_graph(three_edge_records())
    e0, e1, e2 = (g.edge_id(c) for c in ("e0", "e1", "e2"))
    u0, u1 = g.user_index["u0"], g.user_index["u1"]
    i0, i1 = g.item_index["i0"], g.item_index["i1"]
    b = multi_hop_sample(g, [e0], L=2, M=2)
    # layer 2: the batch edge and its endpoints
    assert b.node_sets(2) == ({u0}, {i0}, {e0})
    # layer 1: add sampled neighbours of u0 (e1 -> i1) and i0 (none besides e0)
    assert b.node_sets(1) == ({u0}, {i0, i1}, {e0, e1})
    # layer 0: also endpoints of e1 and neighbours of i1 (e2 -> u1); e0 stays excluded
    # from neighbour lists but remains present as the batch edge itself
    assert b.node_sets(0) == ({u0, u1}, {i0, i1}, {e0, e1, e2})


def test_multi_hop_saturated_m_is_independent_of_m():
    g = build_graph(three_edge_records() + [rec("e3", "u1", "i0", ["w"], 5)])
    batch = list(range(g.num_edges))
    a = multi_hop_sample(g, batch, 2, 4)
    b = multi_hop_sample(g, batch, 2, 9)
    for l in range(3):
        assert a.node_sets(l) == b.node_sets(l)


def test_multi_hop_empty_batch():
    g = build_graph(three_edge_records())
    with pytest.raises(ValueError):
        multi_hop_sample(g, [], 1, 2)


def test_placeholder_slots_masked():
    g = build_graph(three_edge_records())
    b = multi_hop_sample(g, [0, 1, 2], 2, 3)
    for layer in b.layers[1:]:
        for selfs, ne, nn, mk in layer.nbr.values():
            assert mk.shape == ne.shape == nn.shape
            assert mk.sum(axis=1).max() <= 2


# ---------------------------------------------------------------- comment graph / stats


def test_comment_graph_rejects_self_loop():
    with pytest.raises(ValueError):
        CommentGraph(["a"], [("a", "a", 1.0)])


def test_comment_graph_save_load(tmp_path):
    g = CommentGraph(["a", "b", "c"], [("a", "b", 0.5), ("c", "b", 0.25)])
    g.save(tmp_path / "cg.txt", {"seed": 1})
    h = CommentGraph.load(tmp_path / "cg.txt", ["a", "b", "c"])
    assert h.edge_list() == g.edge_list()
    assert json.loads((tmp_path / "cg.txt.manifest.json").read_text())["edges"] == 2


def test_stats_isolated_comment():
    g = CommentGraph(["a", "b"])
    assert neighbor_spam_stats(g, ["a"], {"a": 1, "b": 1}) == 0


def test_stats_user_side_count():
    recs = [
        rec("q", "u", "i0", ["w"], 0),
        rec("s1", "u", "i1", ["w"], 1, 1),
        rec("s2", "u", "i2", ["w"], 2, 1),
        rec("n1", "u", "i3", ["w"], 3, 0),
        rec("x", "v", "i0", ["w"], 4, 1),  # item-side spam
    ]
    labels = {r.comment_id: r.label for r in recs}
    assert neighbor_spam_stats(build_graph(recs), ["q"], labels) == 3


def test_stats_six_comment_hand_count():
    recs = [
        rec("a", "u1", "i1", ["w"], 0, 1),
        rec("b", "u1", "i2", ["w"], 1, 0),
        rec("c", "u2", "i1", ["w"], 2, 1),
        rec("d", "u2", "i3", ["w"], 3, 1),
        rec("e", "u3", "i3", ["w"], 4, 0),
        rec("f", "u3", "i2", ["w"], 5, 1),
    ]
    labels = {r.comment_id: r.label for r in recs}
    # a: {b, c} -> 1; b: {a, f} -> 2; c: {a, d} -> 2; d: {c, e} -> 1; e: {d, f} -> 2; f: {e, b} -> 0
    mean, per = neighbor_spam_stats(build_graph(recs), list("abcdef"), labels, per_comment=True)
    assert per.tolist() == [1, 2, 2, 1, 2, 0]
    assert mean == pytest.approx(8 / 6)
    cg = CommentGraph(list("abcdef"), [("a", "c", 1.0), ("a", "d", 1.0), ("b", "e", 1.0)])
    assert neighbor_spam_stats(cg, ["a", "b"], labels) == pytest.approx((2 + 0) / 2)


def test_stats_unknown_comment():
    with pytest.raises(GraphLookupError):
        neighbor_spam_stats(CommentGraph(["a"]), ["zz"], {})
