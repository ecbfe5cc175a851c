"""Tokenization, word-embedding tables and the TextCNN comment encoder."""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .autodiff import Tensor, concat, embed_conv_maxpool, reshape, take_rows, where_mask

log = logging.getLogger(__name__)

PAD = "<pad>"
UNK = "<unk>"
FILTER_WIDTHS = (3, 4, 5)
MIN_LENGTH = max(FILTER_WIDTHS)


class EmbeddingFormatError(ValueError):
    pass


@dataclass
class Vocabulary:
    tokens: list[str] = field(default_factory=lambda: [PAD, UNK])
    index: dict[str, int] = field(default_factory=dict)
    counts: Counter = field(default_factory=Counter)

    def __post_init__(self):
        if not self.index:
            self.index = {t: i for i, t in enumerate(self.tokens)}

    pad_id = 0
    unk_id = 1

    def __len__(self):
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self.index

    def add(self, token: str) -> int:
        if token not in self.index:
            self.index[token] = len(self.tokens)
            self.tokens.append(token)
        return self.index[token]

    def id(self, token: str) -> int:
        return self.index.get(token, self.unk_id)

    def count(self, sequences: Iterable[Sequence[int]]) -> None:
        """Accumulate corpus frequencies from id sequences."""
        for seq in sequences:
            self.counts.update(int(t) for t in seq)

    def word_probs(self) -> np.ndarray:
        """Unigram probabilities over ids; PAD never counts."""
        freq = np.zeros(len(self), dtype=np.float64)
        for i, c in self.counts.items():
            if i != self.pad_id:
                freq[i] = c
        total = freq.sum()
        return freq / total if total > 0 else freq


def split_text(text: str) -> list[str]:
    return text.lower().split()


def tokenize(text: str, vocab: Vocabulary) -> list[int]:
    return [vocab.id(t) for t in split_text(text)]


def token_ids(tokens: Sequence[str], vocab: Vocabulary) -> list[int]:
    return [vocab.id(t.lower()) for t in tokens]


class EmbeddingTable:
    """|V| x d0 word vectors; the PAD row is zero and never receives gradient."""

    def __init__(self, matrix: np.ndarray, pad_id: int = Vocabulary.pad_id, trainable: bool = True):
        matrix = np.array(matrix, copy=True)
        matrix[pad_id] = 0.0
        self.weight = Tensor(matrix, requires_grad=trainable, name="word_embeddings")
        self.pad_id = pad_id

    @property
    def dim(self) -> int:
        return self.weight.shape[1]

    def __len__(self):
        return self.weight.shape[0]

    def lookup(self, ids: np.ndarray) -> Tensor:
        ids = np.asarray(ids, dtype=np.int64)
        return where_mask(ids != self.pad_id, take_rows(self.weight, ids))


def load_embeddings(
    path,
    default_dim: int = 64,
    extra_tokens: Iterable[str] = (),
    seed: int = 0,
    dtype=np.float64,
) -> tuple[Vocabulary, EmbeddingTable]:
    """Read ``token v1 ... v_d`` lines.  Later duplicates win (with a warning).

    ``extra_tokens`` absent from the file are appended with small random vectors.
    """
    vocab = Vocabulary()
    vectors: dict[str, np.ndarray] = {}
    dim = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts:
                continue
            tok, vals = parts[0], parts[1:]
            if dim is None:
                dim = len(vals)
                if dim == 0:
                    raise EmbeddingFormatError(f"{path}:{lineno}: token {tok!r} has no vector")
            elif len(vals) != dim:
                raise EmbeddingFormatError(f"{path}:{lineno}: expected {dim} values, found {len(vals)}")
            try:
                vec = np.array([float(v) for v in vals], dtype=np.float64)
            except ValueError as err:
                raise EmbeddingFormatError(f"{path}:{lineno}: {err}") from None
            if tok in vectors:
                log.warning("%s:%d: duplicate token %r, keeping the last vector", path, lineno, tok)
            vectors[tok] = vec
    if dim is None:
        log.warning("%s: no embeddings found; vocabulary holds only reserved tokens", path)
        dim = default_dim
    rows = [np.zeros(dim), np.zeros(dim)]
    for tok, vec in vectors.items():
        if tok in (PAD, UNK):
            if tok == UNK:
                rows[1] = vec
            continue
        vocab.add(tok)
        rows.append(vec)
    rng = np.random.default_rng(seed)
    for tok in extra_tokens:
        if tok not in vocab:
            vocab.add(tok)
            rows.append(rng.normal(0.0, 0.1, dim))
    return vocab, EmbeddingTable(np.vstack(rows).astype(dtype))


def save_embeddings(path, vocab: Vocabulary, matrix: np.ndarray) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for i, tok in enumerate(vocab.tokens):
            if i in (vocab.pad_id, vocab.unk_id):
                continue
            fh.write(tok + " " + " ".join(f"{v:.6f}" for v in matrix[i]) + "\n")


class TextCnnParams:
    def __init__(self, dim: int, n_filters: int = 128, widths=FILTER_WIDTHS, seed: int = 0, dtype=np.float64):
        rng = np.random.default_rng(seed)
        self.widths = tuple(widths)
        self.filters: dict[int, Tensor] = {}
        self.biases: dict[int, Tensor] = {}
        for w in self.widths:
            scale = np.sqrt(2.0 / (w * dim))
            self.filters[w] = Tensor(
                rng.normal(0.0, scale, (w, dim, n_filters)).astype(dtype), requires_grad=True, name=f"textcnn.W{w}"
            )
            self.biases[w] = Tensor(np.zeros(n_filters, dtype=dtype), requires_grad=True, name=f"textcnn.b{w}")

    @property
    def out_dim(self) -> int:
        return sum(f.shape[2] for f in self.filters.values())

    def named(self) -> dict[str, Tensor]:
        out = {}
        for w in self.widths:
            out[f"textcnn.W{w}"] = self.filters[w]
            out[f"textcnn.b{w}"] = self.biases[w]
        return out


def pad_batch(seqs: Sequence[Sequence[int]], pad_id: int = 0, max_tokens: int = 64) -> tuple[np.ndarray, np.ndarray]:
    """Right-pad to a common length (at least the widest filter); returns ids and effective lengths."""
    lens = np.array([min(len(s), max_tokens) for s in seqs], dtype=np.int64)
    eff = np.maximum(lens, MIN_LENGTH)
    T = int(eff.max()) if len(seqs) else MIN_LENGTH
    ids = np.full((len(seqs), T), pad_id, dtype=np.int64)
    for r, s in enumerate(seqs):
        n = lens[r]
        ids[r, :n] = s[:n]
    return ids, eff


def textcnn_encode_batch(
    seqs: Sequence[Sequence[int]], table: EmbeddingTable, params: TextCnnParams, max_tokens: int = 64
) -> Tensor:
    """Encode many comments at once -> (B, out_dim).

    Each sequence is truncated to ``max_tokens`` and PAD-extended to the widest
    filter; windows past a sequence's own effective length are excluded from
    the max-pool, so extra batch padding never changes a row.
    """
    ids, eff = pad_batch(seqs, table.pad_id, max_tokens)
    if len(seqs) == 0:
        raise ValueError("textcnn_encode_batch: empty batch")
    outs = [
        embed_conv_maxpool(table.weight, ids, params.filters[w], params.biases[w], eff - w + 1, table.pad_id)
        for w in params.widths
    ]
    return concat(outs, axis=-1)


def textcnn_encode(tokens: Sequence[int], table: EmbeddingTable, params: TextCnnParams, max_tokens: int = 64) -> Tensor:
    out = textcnn_encode_batch([tokens], table, params, max_tokens)
    return reshape(out, (params.out_dim,))
