"""The GAS classifier and its two ablations, training, prediction and checkpoints.

Variants
--------
``baseline``   TextCNN(comment) + user features + item features -> 2-layer MLP
``gas_local``  heterogeneous GCN over the user-item graph -> concat(z_i, z_u, z_e) -> MLP
``gas``        gas_local plus the comment-graph embedding p_e
"""

from __future__ import annotations

import copy
import hashlib
import json
import logging
import math
import struct
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from . import metrics
from .autodiff import (
    OptimizerState,
    Tape,
    Tensor,
    TrainingAborted,
    adam_step,
    backward,
    bce_with_logits,
    concat,
    masked_mean,
    matmul,
    relu,
    reshape,
    sigmoid,
    take_rows,
    where_mask,
)
from .graph import ITEM, USER, BipartiteGraph, CommentGraph, CommentRecord, multi_hop_sample
from .hetero import ConfigError, HeteroLayerParams, forward as hetero_forward, init_hetero_params
from .text import EmbeddingTable, TextCnnParams, Vocabulary, textcnn_encode_batch

log = logging.getLogger(__name__)

VARIANTS = ("baseline", "gas_local", "gas")
DTYPES = {"f32": np.float32, "f64": np.float64}


def normalize_variant(name: str) -> str:
    v = name.replace("-", "_").lower()
    if v not in VARIANTS:
        raise ConfigError(f"unknown variant {name!r}; choose from baseline, gas-local, gas")
    return v


@dataclass
class ModelConfig:
    variant: str = "gas"
    layers: int = 2
    d_hidden: int = 64
    d_att: int = 0  # 0 means d_hidden
    classifier_hidden: int = 64
    n_filters: int = 128
    filter_widths: tuple = (3, 4, 5)
    d_node: int = 16  # free node embedding width when no features are supplied
    M_xianyu: int = 16
    M_comment: int = 64
    max_tokens: int = 64
    exclude_self: bool = True
    freeze_word_embeddings: bool = False
    precision: str = "f32"
    vocab_size: int = 0
    word_dim: int = 0
    user_feature_dim: int = 0
    item_feature_dim: int = 0
    n_users: int = 0
    n_items: int = 0

    def __post_init__(self):
        self.variant = normalize_variant(self.variant)
        self.filter_widths = tuple(self.filter_widths)
        if self.precision not in DTYPES:
            raise ConfigError(f"precision must be f32 or f64, got {self.precision!r}")

    @property
    def dtype(self):
        return DTYPES[self.precision]

    @property
    def hetero_layers(self) -> int:
        return 0 if self.variant == "baseline" else self.layers

    def to_json(self) -> dict:
        d = asdict(self)
        d["filter_widths"] = list(self.filter_widths)
        return d

    @classmethod
    def from_json(cls, d: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in known})


@dataclass
class TrainConfig:
    epochs: int = 8
    batch_size: int = 128
    learning_rate: float = 0.005
    split: tuple = (0.6, 0.1, 0.3)
    seed: int = 0
    pos_weight: float = 0.0  # 0 means negatives/positives of the training split
    eval_batch_size: int = 256

    def __post_init__(self):
        self.split = tuple(float(s) for s in self.split)
        if len(self.split) != 3 or min(self.split) <= 0 or not math.isclose(sum(self.split), 1.0, abs_tol=1e-9):
            raise ConfigError(f"split fractions must be three positive numbers summing to 1, got {self.split}")


class ParameterSet:
    """Named trainable tensors plus the configuration and lookup tables they belong to."""

    def __init__(self, config: ModelConfig, tensors: dict[str, Tensor], meta: dict | None = None):
        self.config = config
        self.tensors = dict(tensors)
        self.meta = dict(meta or {})

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self.tensors

    def trainable(self) -> dict[str, Tensor]:
        return {k: t for k, t in self.tensors.items() if t.requires_grad}

    def snapshot(self) -> dict[str, np.ndarray]:
        return {k: t.data.copy() for k, t in self.tensors.items()}

    def restore(self, snap: dict[str, np.ndarray]) -> None:
        for k, arr in snap.items():
            self.tensors[k].data = arr.copy()

    def copy(self) -> "ParameterSet":
        tensors = {k: Tensor(t.data.copy(), requires_grad=t.requires_grad, name=k) for k, t in self.tensors.items()}
        return ParameterSet(copy.deepcopy(self.config), tensors, copy.deepcopy(self.meta))

    def equals(self, other: "ParameterSet") -> bool:
        if self.tensors.keys() != other.tensors.keys():
            return False
        return all(
            self.tensors[k].data.dtype == other.tensors[k].data.dtype
            and np.array_equal(self.tensors[k].data, other.tensors[k].data)
            for k in self.tensors
        )

    # structured views -------------------------------------------------
    def textcnn(self) -> TextCnnParams:
        p = TextCnnParams.__new__(TextCnnParams)
        p.widths = self.config.filter_widths
        p.filters = {w: self.tensors[f"textcnn.W{w}"] for w in p.widths}
        p.biases = {w: self.tensors[f"textcnn.b{w}"] for w in p.widths}
        return p

    def word_table(self) -> EmbeddingTable:
        t = EmbeddingTable.__new__(EmbeddingTable)
        t.weight = self.tensors["word_embeddings"]
        t.pad_id = Vocabulary.pad_id
        return t

    def hetero(self) -> list[HeteroLayerParams]:
        from .hetero import SideParams

        out = []
        for l in range(1, self.config.hetero_layers + 1):
            g = lambda n: self.tensors[f"hetero{l}.{n}"]  # noqa: E731
            out.append(
                HeteroLayerParams(
                    g("W_E"), g("b_E"),
                    SideParams(g("W_U"), g("b_U"), g("Q_U"), g("K_U"), g("V_U")),
                    SideParams(g("W_I"), g("b_I"), g("Q_I"), g("K_I"), g("V_I")),
                )
            )
        return out


def init_params(config: ModelConfig, word_vectors: np.ndarray, seed: int = 0, meta: dict | None = None) -> ParameterSet:
    dtype = config.dtype
    rng = np.random.default_rng(seed)
    config.vocab_size, config.word_dim = word_vectors.shape
    tensors: dict[str, Tensor] = {}
    table = EmbeddingTable(word_vectors.astype(dtype), trainable=not config.freeze_word_embeddings)
    tensors["word_embeddings"] = table.weight
    cnn = TextCnnParams(config.word_dim, config.n_filters, config.filter_widths, seed=int(rng.integers(2**31)), dtype=dtype)
    tensors.update(cnn.named())
    d_e0 = cnn.out_dim

    def node_dim(side):
        fdim = config.user_feature_dim if side == USER else config.item_feature_dim
        if fdim:
            return fdim
        count = config.n_users if side == USER else config.n_items
        tensors[f"{side}_embeddings"] = Tensor(
            rng.normal(0.0, 0.1, (max(count, 1), config.d_node)).astype(dtype), requires_grad=True
        )
        return config.d_node

    d_u0, d_i0 = node_dim(USER), node_dim(ITEM)
    if config.variant == "baseline":
        d_cls = d_e0 + d_u0 + d_i0
    else:
        layers = init_hetero_params(rng, d_e0, d_u0, d_i0, config.layers, config.d_hidden, config.d_att or None, dtype)
        for l, p in enumerate(layers, 1):
            tensors.update(p.named(f"hetero{l}"))
        if layers:
            d_e, d_u, d_i = layers[-1].out_dims
        else:
            d_e, d_u, d_i = d_e0, d_u0, d_i0
        d_cls = d_e + d_u + d_i
        if config.variant == "gas":
            lim = math.sqrt(6.0 / (d_e0 + config.d_hidden))
            tensors["comment.V_C"] = Tensor(rng.uniform(-lim, lim, (d_e0, config.d_hidden)).astype(dtype), requires_grad=True)
            tensors["comment.W_C"] = Tensor(rng.uniform(-lim, lim, (d_e0, config.d_hidden)).astype(dtype), requires_grad=True)
            tensors["comment.b_C"] = Tensor(np.zeros(config.d_hidden, dtype=dtype), requires_grad=True)
            d_cls += 2 * config.d_hidden
    h = config.classifier_hidden
    lim1 = math.sqrt(6.0 / (d_cls + h))
    tensors["cls.W1"] = Tensor(rng.uniform(-lim1, lim1, (d_cls, h)).astype(dtype), requires_grad=True)
    tensors["cls.b1"] = Tensor(np.zeros(h, dtype=dtype), requires_grad=True)
    lim2 = math.sqrt(6.0 / (h + 1))
    tensors["cls.W2"] = Tensor(rng.uniform(-lim2, lim2, (h, 1)).astype(dtype), requires_grad=True)
    tensors["cls.b2"] = Tensor(np.zeros(1, dtype=dtype), requires_grad=True)
    for k, t in tensors.items():
        t.name = k
    return ParameterSet(config, tensors, meta)


# ---------------------------------------------------------------- building blocks


def comment_graph_encode(h_self: Tensor, h_nbrs: Tensor, mask, V_C: Tensor, W_C: Tensor, b_C: Tensor | None = None) -> Tensor:
    """p_e = concat(V_C . h_e, ReLU(W_C . mean of sampled neighbour states)).

    h_self (B, d0); h_nbrs (B, M, d0) with validity mask (B, M).  Isolated
    comments get a zero neighbour term.
    """
    mask = np.asarray(mask, dtype=bool)
    z = matmul(masked_mean(h_nbrs, mask), W_C)
    if b_C is not None:
        z = z + b_C
    return concat([matmul(h_self, V_C), where_mask(mask.any(axis=1), relu(z))], axis=-1)


def classifier_logits(x: Tensor, params: ParameterSet) -> Tensor:
    h = relu(matmul(x, params["cls.W1"]) + params["cls.b1"])
    out = matmul(h, params["cls.W2"]) + params["cls.b2"]
    return reshape(out, (x.shape[0],))


def classify(z_i, z_u, z_e, p_e, params: ParameterSet) -> Tensor:
    """Spam probability from the final embeddings (``p_e`` only for the gas variant)."""
    variant = params.config.variant
    if (variant == "gas") != (p_e is not None):
        raise ConfigError(f"variant {variant!r} {'needs' if variant == 'gas' else 'takes no'} comment-graph embedding")
    parts = [z_i, z_u, z_e] + ([p_e] if p_e is not None else [])
    x = concat([t if t.ndim == 2 else reshape(t, (1, t.shape[0])) for t in parts], axis=-1)
    expected = params["cls.W1"].shape[0]
    if x.shape[1] != expected:
        raise ConfigError(f"classifier expects {expected} inputs, embeddings give {x.shape[1]}")
    return sigmoid(classifier_logits(x, params))


# ---------------------------------------------------------------- model


class GasModel:
    """Binds a ParameterSet to the graphs it scores."""

    def __init__(
        self,
        params: ParameterSet,
        vocab: Vocabulary,
        graph: BipartiteGraph,
        comment_graph: CommentGraph | None = None,
    ):
        self.params = params
        self.config = params.config
        self.vocab = vocab
        self.graph = graph
        self.comment_graph = comment_graph
        if self.config.variant == "gas" and comment_graph is None:
            raise ConfigError("variant 'gas' needs a comment graph")
        self._check_nodes()
        self.token_ids = [[vocab.id(t) for t in r.tokens] for r in graph.records]
        self._cg_cache: dict[int, list[int]] = {}

    def _check_nodes(self):
        cfg = self.config
        for side, fdim in ((USER, cfg.user_feature_dim), (ITEM, cfg.item_feature_dim)):
            feats = self.graph.node_features[side]
            if fdim:
                if feats is None or feats.shape[1] != fdim:
                    have = None if feats is None else feats.shape[1]
                    raise ConfigError(f"model expects {side} features of dim {fdim}, graph has {have}")
            elif f"{side}_embeddings" in self.params:
                known = self.params.meta.get(f"{side}s")
                if known is not None and list(known) != (self.graph.users if side == USER else self.graph.items):
                    raise ConfigError(f"free {side} embeddings were trained on a different {side} set")

    def node_h0(self, side: str, idx) -> Tensor:
        idx = np.asarray(idx, dtype=np.int64)
        feats = self.graph.node_features[side]
        fdim = self.config.user_feature_dim if side == USER else self.config.item_feature_dim
        if fdim:
            return Tensor(feats[idx].astype(self.config.dtype))
        return take_rows(self.params[f"{side}_embeddings"], idx)

    def encode(self, edges: Sequence[int]) -> Tensor:
        seqs = [self.token_ids[e] for e in edges]
        return textcnn_encode_batch(seqs, self.params.word_table(), self.params.textcnn(), self.config.max_tokens)

    def comment_neighbors(self, e: int) -> list[int]:
        hit = self._cg_cache.get(e)
        if hit is None:
            cid = self.graph.records[e].comment_id
            nb = self.comment_graph.neighbors(cid, self.config.M_comment) if cid in self.comment_graph else []
            hit = [self.graph.edge_index[c] for c, _ in nb if c in self.graph.edge_index]
            self._cg_cache[e] = hit
        return hit

    def embeddings(self, batch: Sequence[int]):
        """(x, parts) where x is the classifier input for each batch edge."""
        cfg = self.config
        batch = np.asarray(batch, dtype=np.int64)
        g = self.graph
        if cfg.variant == "baseline":
            h_e = self.encode(batch)
            parts = {"h_e": h_e, "h_u": self.node_h0(USER, g.edge_user[batch]), "h_i": self.node_h0(ITEM, g.edge_item[batch])}
            return concat([parts["h_e"], parts["h_u"], parts["h_i"]], axis=-1), parts
        block = multi_hop_sample(g, batch, cfg.layers, cfg.M_xianyu, cfg.exclude_self)
        base = block.layers[0]
        needed: dict[int, int] = {}
        for e in base.edge_keys:
            needed.setdefault(e, len(needed))
        cg_nbrs = None
        if cfg.variant == "gas":
            for e in batch:
                needed.setdefault(int(e), len(needed))
            cg_nbrs = [self.comment_neighbors(int(e)) for e in batch]
            for nb in cg_nbrs:
                for e in nb:
                    needed.setdefault(e, len(needed))
        enc = self.encode(list(needed))
        h0_e = take_rows(enc, [needed[e] for e in base.edge_keys])
        z_e, z_u, z_i = hetero_forward(
            block, h0_e, self.node_h0(USER, base.user_keys), self.node_h0(ITEM, base.item_keys), self.params.hetero()
        )
        parts = {"z_i": z_i, "z_u": z_u, "z_e": z_e}
        if cfg.variant == "gas":
            Mc = max(1, max((len(nb) for nb in cg_nbrs), default=0))
            slot = np.zeros((len(batch), Mc), dtype=np.int64)
            mask = np.zeros((len(batch), Mc), dtype=bool)
            for r, nb in enumerate(cg_nbrs):
                slot[r, : len(nb)] = [needed[e] for e in nb]
                mask[r, : len(nb)] = True
            h_self = take_rows(enc, [needed[int(e)] for e in batch])
            p = self.params
            parts["p_e"] = comment_graph_encode(h_self, take_rows(enc, slot), mask, p["comment.V_C"], p["comment.W_C"], p["comment.b_C"])
        order = ["z_i", "z_u", "z_e"] + (["p_e"] if "p_e" in parts else [])
        return concat([parts[k] for k in order], axis=-1), parts

    def logits(self, batch: Sequence[int]) -> Tensor:
        x, _ = self.embeddings(batch)
        return classifier_logits(x, self.params)

    def predict(self, edges: Sequence[int], batch_size: int = 256) -> np.ndarray:
        edges = np.asarray(edges, dtype=np.int64)
        out = np.empty(len(edges), dtype=np.float64)
        for s in range(0, len(edges), batch_size):
            chunk = edges[s : s + batch_size]
            out[s : s + len(chunk)] = sigmoid(self.logits(chunk)).data
        return out


# ---------------------------------------------------------------- training


@dataclass
class Split:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray


def split_edges(labeled: Sequence[int], ratios, seed: int) -> Split:
    idx = np.asarray(labeled, dtype=np.int64)
    perm = np.random.default_rng(seed).permutation(len(idx))
    n_tr = int(round(ratios[0] * len(idx)))
    n_va = int(round(ratios[1] * len(idx)))
    return Split(np.sort(idx[perm[:n_tr]]), np.sort(idx[perm[n_tr : n_tr + n_va]]), np.sort(idx[perm[n_tr + n_va :]]))


@dataclass
class TrainResult:
    params: ParameterSet
    history: list[dict] = field(default_factory=list)
    split: Split | None = None
    model: GasModel | None = None
    best_epoch: int = -1


def _labels(graph: BipartiteGraph, edges) -> np.ndarray:
    return np.array([graph.records[e].label for e in edges], dtype=np.float64)


def _safe_auc(scores, labels) -> float | None:
    try:
        return metrics.roc_auc(scores, labels)
    except metrics.UndefinedMetricError:
        return None


def build_model_config(
    graph: BipartiteGraph, word_vectors: np.ndarray, variant="gas", layers=2, precision="f32", **overrides
) -> ModelConfig:
    uf, itf = graph.node_features[USER], graph.node_features[ITEM]
    cfg = ModelConfig(
        variant=variant,
        layers=layers,
        precision=precision,
        vocab_size=word_vectors.shape[0],
        word_dim=word_vectors.shape[1],
        user_feature_dim=0 if uf is None else uf.shape[1],
        item_feature_dim=0 if itf is None else itf.shape[1],
        n_users=len(graph.users),
        n_items=len(graph.items),
        **overrides,
    )
    return cfg


def train(
    graph: BipartiteGraph,
    vocab: Vocabulary,
    word_vectors: np.ndarray,
    model_cfg: ModelConfig,
    cfg: TrainConfig,
    comment_graph: CommentGraph | None = None,
    split: Split | None = None,
) -> TrainResult:
    """Mini-batch training with weighted BCE and Adam; keeps the best-validation-AUC parameters."""
    labeled = [k for k, r in enumerate(graph.records) if r.label is not None]
    if not labeled:
        raise ValueError("train: no labelled records")
    split = split or split_edges(labeled, cfg.split, cfg.seed)
    meta = {"vocab": list(vocab.tokens), "users": list(graph.users), "items": list(graph.items), "seed": cfg.seed}
    params = init_params(model_cfg, word_vectors, seed=cfg.seed, meta=meta)
    model = GasModel(params, vocab, graph, comment_graph)
    y_train = _labels(graph, split.train)
    n_pos = float(y_train.sum())
    pos_weight = cfg.pos_weight or ((len(y_train) - n_pos) / n_pos if n_pos > 0 else 1.0)
    opt = OptimizerState(lr=cfg.learning_rate)
    rng = np.random.default_rng(cfg.seed)
    trainable = params.trainable()
    history: list[dict] = []
    best_auc, best_snap, best_epoch = -math.inf, None, -1
    for epoch in range(cfg.epochs):
        order = split.train[rng.permutation(len(split.train))]
        losses, scores, ys = [], [], []
        for s in range(0, len(order), cfg.batch_size):
            batch = order[s : s + cfg.batch_size]
            y = _labels(graph, batch)
            with Tape() as tape:
                logit = model.logits(batch)
                loss = bce_with_logits(logit, y, pos_weight)
            if not np.isfinite(loss.data):
                raise TrainingAborted(f"non-finite loss at epoch {epoch}, batch starting {s}")
            grads = backward(tape, loss, wrt=list(trainable.values()))
            adam_step(trainable, {k: grads[t] for k, t in trainable.items()}, opt)
            losses.append(float(loss.data) * len(batch))
            scores.append(1.0 / (1.0 + np.exp(-logit.data.astype(np.float64))))
            ys.append(y)
        tr_scores, tr_y = np.concatenate(scores), np.concatenate(ys)
        row = {"epoch": epoch, "train_loss": sum(losses) / len(order), "train_auc": _safe_auc(tr_scores, tr_y)}
        if len(split.val):
            val_scores = model.predict(split.val, cfg.eval_batch_size)
            y_val = _labels(graph, split.val)
            row["val_loss"] = _weighted_bce(val_scores, y_val, pos_weight)
            row["val_auc"] = _safe_auc(val_scores, y_val)
        history.append(row)
        log.info("epoch %d: %s", epoch, {k: v for k, v in row.items() if k != "epoch"})
        score = row.get("val_auc")
        score = -math.inf if score is None else score
        if best_snap is None or score > best_auc:
            best_auc, best_snap, best_epoch = score, params.snapshot(), epoch
    if best_snap is not None:
        params.restore(best_snap)
    return TrainResult(params, history, split, model, best_epoch)


def _weighted_bce(p: np.ndarray, y: np.ndarray, pos_weight: float) -> float:
    p = np.clip(p, 1e-12, 1 - 1e-12)
    w = np.where(y > 0.5, pos_weight, 1.0)
    return float(np.mean(-w * (y * np.log(p) + (1 - y) * np.log(1 - p))))


def predict_batch(
    records: Sequence[CommentRecord],
    graph: BipartiteGraph,
    params: ParameterSet,
    vocab: Vocabulary,
    comment_graph: CommentGraph | None = None,
    variant: str | None = None,
    batch_size: int = 256,
) -> np.ndarray:
    """Spam probabilities for ``records`` (which must be edges of ``graph``), in input order."""
    if variant is not None and normalize_variant(variant) != params.config.variant:
        raise ConfigError(f"parameters were trained as {params.config.variant!r}, not {variant!r}")
    model = GasModel(params, vocab, graph, comment_graph)
    edges = [graph.edge_id(r.comment_id) for r in records]
    return model.predict(edges, batch_size)


# ---------------------------------------------------------------- checkpoints

MAGIC = b"GASCKPT\x00"
FORMAT_VERSION = 1
_DTYPE_CODES = {np.dtype("<f4"): 1, np.dtype("<f8"): 2}
_CODE_DTYPES = {v: k for k, v in _DTYPE_CODES.items()}


class CheckpointError(ValueError):
    pass


class IncompatibleCheckpoint(CheckpointError):
    pass


def _config_blob(params: ParameterSet) -> bytes:
    return json.dumps({"config": params.config.to_json(), "meta": params.meta}, sort_keys=True).encode("utf-8")


def save_checkpoint(params: ParameterSet, path) -> None:
    """Little-endian binary: magic, version, config digest, config JSON, then named arrays."""
    path = Path(path)
    blob = _config_blob(params)
    digest = hashlib.sha256(blob).digest()
    chunks = [MAGIC, struct.pack("<I", FORMAT_VERSION), digest, struct.pack("<Q", len(blob)), blob]
    chunks.append(struct.pack("<I", len(params.tensors)))
    manifest_arrays = []
    for name, t in params.tensors.items():
        arr = np.ascontiguousarray(t.data, dtype=t.data.dtype.newbyteorder("<"))
        code = _DTYPE_CODES[arr.dtype]
        nb = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(nb)) + nb)
        chunks.append(struct.pack("<BBB", code, int(t.requires_grad), arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        chunks.append(arr.tobytes())
        manifest_arrays.append({"name": name, "shape": list(arr.shape), "dtype": str(arr.dtype)})
    data = b"".join(chunks)
    path.write_bytes(data)
    manifest = {
        "format_version": FORMAT_VERSION,
        "config_digest": digest.hex(),
        "config": params.config.to_json(),
        "seed": params.meta.get("seed"),
        "arrays": manifest_arrays,
    }
    with open(path.with_suffix(path.suffix + ".manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


class _Reader:
    def __init__(self, data: bytes):
        self.data, self.pos = data, 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointError("checkpoint is truncated or corrupt")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_checkpoint(path, expect: ModelConfig | None = None) -> ParameterSet:
    try:
        data = Path(path).read_bytes()
    except OSError as err:
        raise CheckpointError(f"cannot read checkpoint {path}: {err.strerror}") from None
    r = _Reader(data)
    if r.take(len(MAGIC)) != MAGIC:
        raise CheckpointError(f"{path} is not a checkpoint (bad magic)")
    (version,) = r.unpack("<I")
    if version != FORMAT_VERSION:
        raise IncompatibleCheckpoint(f"checkpoint format version {version}, this build reads {FORMAT_VERSION}")
    digest = r.take(32)
    (blen,) = r.unpack("<Q")
    blob = r.take(blen)
    if hashlib.sha256(blob).digest() != digest:
        raise CheckpointError("checkpoint config digest mismatch (corrupt file)")
    try:
        head = json.loads(blob)
        config = ModelConfig.from_json(head["config"])
    except (ValueError, KeyError, TypeError) as err:
        raise CheckpointError(f"checkpoint config unreadable: {err}") from None
    if expect is not None:
        for name in ("variant", "layers", "d_hidden", "d_att", "classifier_hidden", "n_filters", "word_dim", "d_node"):
            a, b = getattr(config, name), getattr(expect, name)
            if a != b:
                raise IncompatibleCheckpoint(f"checkpoint has {name}={a} but configuration requests {name}={b}")
    (count,) = r.unpack("<I")
    tensors = {}
    for _ in range(count):
        (nlen,) = r.unpack("<H")
        name = r.take(nlen).decode("utf-8")
        code, trainable, ndim = r.unpack("<BBB")
        if code not in _CODE_DTYPES:
            raise CheckpointError(f"unknown dtype code {code} for {name!r}")
        shape = r.unpack(f"<{ndim}Q") if ndim else ()
        dt = _CODE_DTYPES[code]
        nbytes = int(np.prod(shape, dtype=np.int64)) * dt.itemsize
        arr = np.frombuffer(r.take(nbytes), dtype=dt).reshape(shape).astype(dt.newbyteorder("="))
        tensors[name] = Tensor(arr, requires_grad=bool(trainable), name=name)
    if r.pos != len(data):
        raise CheckpointError("trailing bytes after checkpoint arrays")
    return ParameterSet(config, tensors, head.get("meta", {}))


def vocab_from_params(params: ParameterSet) -> Vocabulary:
    tokens = params.meta.get("vocab")
    if not tokens:
        raise CheckpointError("checkpoint carries no vocabulary")
    return Vocabulary(list(tokens))
