"""Comment records, the user-item bipartite graph, the comment graph container,
and the time-related neighbour sampler used to build mini-batch blocks."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

log = logging.getLogger(__name__)

USER, ITEM = "user", "item"


class IngestError(ValueError):
    pass


class GraphLookupError(KeyError):
    pass


@dataclass(frozen=True)
class CommentRecord:
    comment_id: str
    user_id: str
    item_id: str
    tokens: tuple[str, ...]
    timestamp: int
    label: int | None = None  # 1 spam, 0 regular, None unlabeled

    def to_json(self) -> dict:
        out = {
            "comment_id": self.comment_id,
            "user_id": self.user_id,
            "item_id": self.item_id,
            "tokens": list(self.tokens),
            "timestamp": self.timestamp,
        }
        if self.label is not None:
            out["label"] = self.label
        return out


def parse_record(obj: dict) -> CommentRecord:
    if not isinstance(obj, dict):
        raise ValueError("record must be a JSON object")
    for key in ("comment_id", "user_id", "item_id", "timestamp"):
        if key not in obj:
            raise ValueError(f"missing field {key!r}")
    if "tokens" in obj:
        toks = obj["tokens"]
        if not isinstance(toks, list) or not all(isinstance(t, str) for t in toks):
            raise ValueError("'tokens' must be an array of strings")
        tokens = tuple(t.lower() for t in toks)
    elif "text" in obj:
        if not isinstance(obj["text"], str):
            raise ValueError("'text' must be a string")
        tokens = tuple(obj["text"].lower().split())
    else:
        raise ValueError("missing field 'tokens' or 'text'")
    ts = obj["timestamp"]
    if isinstance(ts, bool) or not isinstance(ts, int):
        raise ValueError("'timestamp' must be an integer")
    label = obj.get("label")
    if label is not None and label not in (0, 1):
        raise ValueError("'label' must be 0 or 1")
    return CommentRecord(
        str(obj["comment_id"]), str(obj["user_id"]), str(obj["item_id"]), tokens, int(ts),
        None if label is None else int(label),
    )


def ingest(path) -> list[CommentRecord]:
    """Load and validate a JSON-lines comment file."""
    records: list[CommentRecord] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = parse_record(json.loads(line))
            except (json.JSONDecodeError, ValueError) as err:
                raise IngestError(f"{path}:{lineno}: {err}") from None
            if rec.comment_id in seen:
                raise IngestError(f"{path}:{lineno}: duplicate comment_id {rec.comment_id!r}")
            seen.add(rec.comment_id)
            records.append(rec)
    return records


def write_records(path, records: Iterable[CommentRecord]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(r.to_json(), sort_keys=True) + "\n")


def load_node_features(path, key: str) -> dict[str, np.ndarray]:
    """Sidecar of ``{"user_id"|"item_id": ..., "features": [...]}`` lines."""
    feats: dict[str, np.ndarray] = {}
    dim = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                node, vec = str(obj[key]), np.asarray(obj["features"], dtype=np.float64)
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as err:
                raise IngestError(f"{path}:{lineno}: bad feature line ({err})") from None
            if vec.ndim != 1 or (dim is not None and vec.shape[0] != dim):
                raise IngestError(f"{path}:{lineno}: inconsistent feature dimension")
            dim = vec.shape[0]
            feats[node] = vec
    return feats


def write_node_features(path, key: str, feats: dict[str, np.ndarray]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for node, vec in feats.items():
            fh.write(json.dumps({key: node, "features": [round(float(v), 6) for v in vec]}) + "\n")


class BipartiteGraph:
    """Users and items joined by comment edges; adjacency sorted by (time, comment_id)."""

    def __init__(self, records: Sequence[CommentRecord], user_features=None, item_features=None):
        self.records = list(records)
        self.edge_index = {r.comment_id: k for k, r in enumerate(self.records)}
        if len(self.edge_index) != len(self.records):
            raise IngestError("duplicate comment_id in records")
        self.users = sorted({r.user_id for r in self.records})
        self.items = sorted({r.item_id for r in self.records})
        self.user_index = {u: k for k, u in enumerate(self.users)}
        self.item_index = {i: k for k, i in enumerate(self.items)}
        n = len(self.records)
        self.edge_user = np.array([self.user_index[r.user_id] for r in self.records], dtype=np.int64)
        self.edge_item = np.array([self.item_index[r.item_id] for r in self.records], dtype=np.int64)
        self.edge_time = np.array([r.timestamp for r in self.records], dtype=np.int64)
        order = sorted(range(n), key=lambda k: self.records[k].comment_id)
        self.edge_rank = np.empty(n, dtype=np.int64)
        self.edge_rank[order] = np.arange(n)
        self.adj = {
            USER: self._adjacency(self.edge_user, len(self.users)),
            ITEM: self._adjacency(self.edge_item, len(self.items)),
        }
        self.node_features = {
            USER: self._feature_matrix(user_features, self.users),
            ITEM: self._feature_matrix(item_features, self.items),
        }
        self._sample_cache: dict = {}

    def _adjacency(self, endpoint: np.ndarray, count: int) -> list[np.ndarray]:
        order = np.lexsort((self.edge_rank, self.edge_time, endpoint))
        bounds = np.searchsorted(endpoint[order], np.arange(count + 1))
        return [order[bounds[k] : bounds[k + 1]] for k in range(count)]

    @staticmethod
    def _feature_matrix(feats, ids):
        if not feats:
            return None
        dim = len(next(iter(feats.values())))
        mat = np.zeros((len(ids), dim))
        for k, node in enumerate(ids):
            if node in feats:
                mat[k] = feats[node]
        return mat

    @property
    def num_edges(self) -> int:
        return len(self.records)

    def node_count(self, side: str) -> int:
        return len(self.users) if side == USER else len(self.items)

    def node_id(self, side: str, node) -> int:
        if isinstance(node, (int, np.integer)):
            if not 0 <= node < self.node_count(side):
                raise GraphLookupError(f"no {side} with index {node}")
            return int(node)
        table = self.user_index if side == USER else self.item_index
        if node not in table:
            raise GraphLookupError(f"unknown {side} {node!r}")
        return table[node]

    def edge_id(self, comment_id: str) -> int:
        if comment_id not in self.edge_index:
            raise GraphLookupError(f"unknown comment {comment_id!r}")
        return self.edge_index[comment_id]

    def incident(self, side: str, node) -> np.ndarray:
        """E(v): incident edge indices in time order."""
        return self.adj[side][self.node_id(side, node)]

    def degree(self, side: str, node) -> int:
        return len(self.incident(side, node))

    def opposite(self, side: str, edges: np.ndarray) -> np.ndarray:
        return self.edge_item[edges] if side == USER else self.edge_user[edges]

    def edges(self) -> list[CommentRecord]:
        return list(self.records)


def build_graph(records: Sequence[CommentRecord], user_features=None, item_features=None) -> BipartiteGraph:
    return BipartiteGraph(records, user_features, item_features)


@dataclass(frozen=True)
class SampleRow:
    """Up to M sampled (edge, opposite node) pairs; placeholder slots have mask False."""

    edges: np.ndarray
    nodes: np.ndarray
    mask: np.ndarray


def sample_neighbors_time(
    graph: BipartiteGraph, side: str, node, anchor_time: int, M: int, exclude: int | None = None
) -> SampleRow:
    """Choose the M incident comments closest in time to ``anchor_time``.

    Ties on time distance go to the earlier comment, then the smaller comment_id.
    Missing slots are placeholders (edge/node index 0, mask False).
    """
    if M < 1:
        raise ValueError("M must be >= 1")
    v = graph.node_id(side, node)
    key = (side, v, int(anchor_time), M, exclude)
    hit = graph._sample_cache.get(key)
    if hit is not None:
        return hit
    cand = graph.adj[side][v]
    if exclude is not None:
        cand = cand[cand != exclude]
    times = graph.edge_time[cand]
    order = np.lexsort((graph.edge_rank[cand], times, np.abs(times - anchor_time)))
    chosen = cand[order[:M]]
    k = len(chosen)
    edges = np.zeros(M, dtype=np.int64)
    nodes = np.zeros(M, dtype=np.int64)
    mask = np.zeros(M, dtype=bool)
    edges[:k] = chosen
    nodes[:k] = graph.opposite(side, chosen)
    mask[:k] = True
    row = SampleRow(edges, nodes, mask)
    graph._sample_cache[key] = row
    return row


@dataclass
class BlockLayer:
    """Instances whose hidden state is needed at one layer.

    Layer 0 instances are plain graph indices.  Higher layers refer to
    instance positions in the layer below.
    """

    edge_keys: list
    user_keys: list
    item_keys: list
    edge_self: np.ndarray | None = None
    edge_user: np.ndarray | None = None
    edge_item: np.ndarray | None = None
    nbr: dict = field(default_factory=dict)  # side -> (self_idx, nbr_edge, nbr_node, mask)


@dataclass
class SampledBlock:
    batch_edges: np.ndarray
    L: int
    M: int
    layers: list[BlockLayer]  # index 0 .. L
    out_edge: np.ndarray
    out_user: np.ndarray
    out_item: np.ndarray

    def node_sets(self, l: int) -> tuple[set[int], set[int], set[int]]:
        """(users, items, edges) as graph indices at layer ``l``."""
        layer = self.layers[l]
        if l == 0:
            return set(layer.user_keys), set(layer.item_keys), set(layer.edge_keys)
        return ({k[0] for k in layer.user_keys}, {k[0] for k in layer.item_keys}, {k[0] for k in layer.edge_keys})


class _Registry:
    def __init__(self):
        self.keys: list = []
        self.pos: dict = {}

    def add(self, key) -> int:
        p = self.pos.get(key)
        if p is None:
            p = self.pos[key] = len(self.keys)
            self.keys.append(key)
        return p


@dataclass
class _Tree:
    """Sampled computation tree of one batch edge; indices are local to the tree."""

    keys: list  # per layer: {"edge"|USER|ITEM: graph index array}
    links: list  # per layer >= 1: (e_self, e_user, e_item, nbr)


def _edge_tree(graph: "BipartiteGraph", b: int, L: int, M: int, exclude_self: bool) -> _Tree:
    ck = ("tree", b, L, M, exclude_self)
    hit = graph._sample_cache.get(ck)
    if hit is not None:
        return hit
    regs = [{s: _Registry() for s in ("edge", USER, ITEM)} for _ in range(L + 1)]
    regs[L]["edge"].add(b)
    regs[L][USER].add(int(graph.edge_user[b]))
    regs[L][ITEM].add(int(graph.edge_item[b]))
    links: list = [None] * (L + 1)
    anchor = graph.edge_time[b]
    for l in range(L, 0, -1):
        cur, low = regs[l], regs[l - 1]
        e_self, e_user, e_item = [], [], []
        for e in cur["edge"].keys:
            e_self.append(low["edge"].add(e))
            e_user.append(low[USER].add(int(graph.edge_user[e])))
            e_item.append(low[ITEM].add(int(graph.edge_item[e])))
        nbr = {}
        for side, other in ((USER, ITEM), (ITEM, USER)):
            keys = cur[side].keys
            selfs = np.empty(len(keys), dtype=np.int64)
            ne = np.zeros((len(keys), M), dtype=np.int64)
            nn = np.zeros((len(keys), M), dtype=np.int64)
            mk = np.zeros((len(keys), M), dtype=bool)
            for r, v in enumerate(keys):
                selfs[r] = low[side].add(v)
                row = sample_neighbors_time(graph, side, v, anchor, M, exclude=b if exclude_self and l == L else None)
                for j in np.flatnonzero(row.mask):
                    ne[r, j] = low["edge"].add(int(row.edges[j]))
                    nn[r, j] = low[other].add(int(row.nodes[j]))
                mk[r] = row.mask
            nbr[side] = (selfs, ne, nn, mk)
        links[l] = (
            np.array(e_self, dtype=np.int64), np.array(e_user, dtype=np.int64), np.array(e_item, dtype=np.int64), nbr
        )
    keys = [{s: np.array(r[s].keys, dtype=np.int64) for s in r} for r in regs]
    tree = _Tree(keys, links)
    graph._sample_cache[ck] = tree
    return tree


def multi_hop_sample(
    graph: BipartiteGraph, batch_edges: Sequence[int], L: int, M: int, exclude_self: bool = True
) -> SampledBlock:
    """Unroll the layered sampling for a batch of edges.

    Every sampled node inherits the anchor (timestamp and identity) of the batch
    edge whose expansion reached it; instances above layer 0 are keyed by
    (graph index, batch edge), so each batch edge owns its computation tree and
    only layer-0 states are shared.  With ``exclude_self`` the batch edge is left
    out of the neighbourhoods of its own user and item at the top layer; deeper
    expansions sample it like any other comment.
    """
    batch = np.asarray(batch_edges, dtype=np.int64)
    if batch.size == 0:
        raise ValueError("multi_hop_sample: empty batch")
    if L < 0:
        raise ValueError("L must be >= 0")
    trees = [_edge_tree(graph, int(b), L, M, exclude_self) for b in batch]
    kinds = ("edge", USER, ITEM)
    # per layer and kind: offset of each tree's local block
    offsets = []
    for l in range(L + 1):
        off = {}
        for k in kinds:
            sizes = np.array([len(t.keys[l][k]) for t in trees], dtype=np.int64)
            off[k] = np.concatenate([[0], np.cumsum(sizes)[:-1]])
        offsets.append(off)
    # layer 0 is shared across the batch: dedupe graph indices, first occurrence first
    remap0 = {}
    keys0 = {}
    for k in kinds:
        flat = np.concatenate([t.keys[0][k] for t in trees])
        uniq, first, inv = np.unique(flat, return_index=True, return_inverse=True)
        order = np.argsort(first, kind="stable")
        rank = np.empty(len(uniq), dtype=np.int64)
        rank[order] = np.arange(len(uniq))
        keys0[k] = uniq[order]
        remap0[k] = rank[inv]

    def locate(l, k, t, local):
        idx = offsets[l][k][t] + local
        return remap0[k][idx] if l == 0 else idx

    layers: list[BlockLayer] = [None] * (L + 1)  # type: ignore[list-item]
    layers[0] = BlockLayer(keys0["edge"].tolist(), keys0[USER].tolist(), keys0[ITEM].tolist())
    for l in range(1, L + 1):
        ekeys, ukeys, ikeys = [], [], []
        es, eu, ei = [], [], []
        nbr_parts = {USER: [], ITEM: []}
        for t, (tree, b) in enumerate(zip(trees, batch)):
            bb = int(b)
            ekeys += [(int(x), bb) for x in tree.keys[l]["edge"]]
            ukeys += [(int(x), bb) for x in tree.keys[l][USER]]
            ikeys += [(int(x), bb) for x in tree.keys[l][ITEM]]
            e_self, e_user, e_item, nbr = tree.links[l]
            es.append(locate(l - 1, "edge", t, e_self))
            eu.append(locate(l - 1, USER, t, e_user))
            ei.append(locate(l - 1, ITEM, t, e_item))
            for side, other in ((USER, ITEM), (ITEM, USER)):
                selfs, ne, nn, mk = nbr[side]
                nbr_parts[side].append(
                    (locate(l - 1, side, t, selfs), locate(l - 1, "edge", t, ne), locate(l - 1, other, t, nn), mk)
                )
        nbr_out = {}
        for side in (USER, ITEM):
            parts = nbr_parts[side]
            nbr_out[side] = tuple(np.concatenate([p[i] for p in parts]) for i in range(4))
        layers[l] = BlockLayer(ekeys, ukeys, ikeys, np.concatenate(es), np.concatenate(eu), np.concatenate(ei), nbr_out)
    out = [np.array([locate(L, k, t, 0) for t in range(len(trees))], dtype=np.int64) for k in kinds]
    return SampledBlock(batch, L, M, layers, *out)


class CommentGraph:
    """Undirected similarity graph over comment ids."""

    def __init__(self, nodes: Iterable[str] = (), edges: Iterable[tuple[str, str, float]] = ()):
        self.nodes: list[str] = list(nodes)
        self._nodes = set(self.nodes)
        self.adj: dict[str, dict[str, float]] = {n: {} for n in self.nodes}
        for a, b, s in edges:
            self.add_edge(a, b, s)

    def add_node(self, n: str) -> None:
        if n not in self._nodes:
            self._nodes.add(n)
            self.nodes.append(n)
            self.adj[n] = {}

    def add_edge(self, a: str, b: str, sim: float) -> None:
        if a == b:
            raise ValueError(f"self-loop on {a!r}")
        self.add_node(a)
        self.add_node(b)
        prev = self.adj[a].get(b)
        if prev is None or sim > prev:
            self.adj[a][b] = float(sim)
            self.adj[b][a] = float(sim)

    def __contains__(self, n: str) -> bool:
        return n in self._nodes

    def neighbors(self, n: str, limit: int | None = None) -> list[tuple[str, float]]:
        """Neighbours by descending similarity (ties by id)."""
        nb = sorted(self.adj.get(n, {}).items(), key=lambda kv: (-kv[1], kv[0]))
        return nb if limit is None else nb[:limit]

    def edge_list(self) -> list[tuple[str, str, float]]:
        out = []
        for a, nb in self.adj.items():
            for b, s in nb.items():
                if a < b:
                    out.append((a, b, s))
        return sorted(out)

    @property
    def num_edges(self) -> int:
        return sum(len(nb) for nb in self.adj.values()) // 2

    def save(self, path, manifest: dict | None = None) -> None:
        path = Path(path)
        with open(path, "w", encoding="utf-8") as fh:
            for a, b, s in self.edge_list():
                fh.write(f"{a} {b} {s:.9g}\n")
        meta = dict(manifest or {})
        meta.update(nodes=len(self.nodes), edges=self.num_edges)
        with open(path.with_suffix(path.suffix + ".manifest.json"), "w", encoding="utf-8") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path, nodes: Iterable[str] = ()) -> "CommentGraph":
        g = cls(nodes)
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                parts = line.split()
                if not parts:
                    continue
                if len(parts) != 3:
                    raise IngestError(f"{path}:{lineno}: expected 'id_a id_b similarity'")
                g.add_edge(parts[0], parts[1], float(parts[2]))
        return g


def neighbor_spam_stats(graph, comment_ids: Sequence[str], labels: dict[str, int], per_comment: bool = False):
    """Mean number of labelled-spam comments within one hop of each query comment.

    On a :class:`BipartiteGraph` a neighbour shares the comment's user or item;
    on a :class:`CommentGraph` it is adjacent.  The comment itself never counts.
    """
    counts = []
    for cid in comment_ids:
        if isinstance(graph, BipartiteGraph):
            e = graph.edge_id(cid)
            near = set(graph.adj[USER][graph.edge_user[e]].tolist()) | set(graph.adj[ITEM][graph.edge_item[e]].tolist())
            near.discard(e)
            ids = (graph.records[k].comment_id for k in near)
        else:
            if cid not in graph:
                raise GraphLookupError(f"unknown comment {cid!r}")
            ids = graph.adj[cid].keys()
        counts.append(sum(1 for n in ids if labels.get(n) == 1))
    counts = np.asarray(counts, dtype=np.float64)
    mean = float(counts.mean()) if counts.size else 0.0
    return (mean, counts) if per_comment else mean
