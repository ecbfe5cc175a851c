import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gasspam.text import (
    MIN_LENGTH,
    EmbeddingFormatError,
    EmbeddingTable,
    TextCnnParams,
    Vocabulary,
    load_embeddings,
    textcnn_encode,
    textcnn_encode_batch,
    tokenize,
)


def vocab_of(*words):
    v = Vocabulary()
    for w in words:
        v.add(w)
    return v


def test_tokenize_empty():
    assert tokenize("", vocab_of("a")) == []


def test_tokenize_lowercases_and_looks_up():
    v = vocab_of("add", "my", "vx")
    assert tokenize("Add my VX", v) == [v.id("add"), v.id("my"), v.id("vx")]


def test_tokenize_oov_maps_to_unk():
    v = vocab_of("add")
    assert tokenize("add zzz", v) == [v.id("add"), v.unk_id]


def test_reserved_ids_are_distinct_and_dense():
    v = vocab_of("x", "y")
    assert v.pad_id != v.unk_id
    assert sorted(v.index.values()) == list(range(len(v)))


def test_word_probs_skip_pad():
    v = vocab_of("a", "b")
    v.count([[2, 2, 3, 0, 0]])
    p = v.word_probs()
    assert p[0] == 0 and p[2] == pytest.approx(2 / 3) and p.sum() == pytest.approx(1.0)


def test_load_two_lines(tmp_path):
    f = tmp_path / "e.txt"
    f.write_text("alpha 1 2 3\nbeta 4 5 6\n")
    vocab, table = load_embeddings(f)
    assert len(vocab) == 4
    assert table.weight.shape == (4, 3)
    assert np.array_equal(table.weight.data[vocab.id("beta")], [4, 5, 6])
    assert np.array_equal(table.weight.data[vocab.pad_id], [0, 0, 0])


def test_load_duplicate_last_wins(tmp_path, caplog):
    f = tmp_path / "e.txt"
    f.write_text("alpha 1 2\nalpha 7 8\n")
    with caplog.at_level(logging.WARNING):
        vocab, table = load_embeddings(f)
    assert np.array_equal(table.weight.data[vocab.id("alpha")], [7, 8])
    assert "duplicate" in caplog.text


def test_load_empty_file_warns(tmp_path, caplog):
    f = tmp_path / "e.txt"
    f.write_text("")
    with caplog.at_level(logging.WARNING):
        vocab, table = load_embeddings(f, default_dim=5)
    assert len(vocab) == 2 and table.weight.shape == (2, 5)
    assert caplog.text


def test_load_inconsistent_dim_names_line(tmp_path):
    f = tmp_path / "e.txt"
    f.write_text("a 1 2\nb 1 2\nc 1\n")
    with pytest.raises(EmbeddingFormatError, match=":3:"):
        load_embeddings(f)


def test_extra_tokens_get_random_rows(tmp_path):
    f = tmp_path / "e.txt"
    f.write_text("a 1 2\n")
    vocab, table = load_embeddings(f, extra_tokens=["zz"], seed=3)
    assert "zz" in vocab and np.any(table.weight.data[vocab.id("zz")] != 0)


def _setup(dim=4, n_filters=5, seed=0):
    rng = np.random.default_rng(seed)
    v = vocab_of(*[f"t{k}" for k in range(10)])
    table = EmbeddingTable(rng.normal(size=(len(v), dim)))
    return v, table, TextCnnParams(dim, n_filters, seed=seed)


def test_output_dim_is_384_with_default_filters():
    params = TextCnnParams(8)
    assert params.out_dim == 3 * 128
    _, table, _ = _setup(dim=8)
    assert textcnn_encode([2, 3], table, params).shape == (384,)


def test_empty_comment_is_zero_with_zero_bias():
    _, table, params = _setup()
    assert np.array_equal(textcnn_encode([], table, params).data, np.zeros(params.out_dim))


def test_identical_sequences_identical_encodings():
    _, table, params = _setup()
    a = textcnn_encode([2, 5, 7], table, params).data
    b = textcnn_encode([2, 5, 7], table, params).data
    assert np.array_equal(a, b)


def test_one_token_hand_convolution():
    rng = np.random.default_rng(4)
    table = EmbeddingTable(rng.normal(size=(4, 2)))
    params = TextCnnParams(2, n_filters=1, widths=(3,), seed=1)
    W = params.filters[3].data
    w = table.weight.data[2]
    # padded to 5 tokens; every window after [w, PAD, PAD] is all PAD and scores 0
    expect = max(0.0, float(w @ W[0, :, 0]))
    assert textcnn_encode([2], table, params).data.tolist() == pytest.approx([expect], abs=1e-12)


def test_permutation_sensitive():
    rng = np.random.default_rng(2)
    table = EmbeddingTable(rng.normal(size=(6, 3)))
    params = TextCnnParams(3, n_filters=6, seed=2)
    a = textcnn_encode([2, 3, 4, 5, 2], table, params).data
    b = textcnn_encode([3, 2, 4, 5, 2], table, params).data
    assert not np.array_equal(a, b)


@settings(max_examples=40, deadline=None)
@given(
    seq=st.lists(st.integers(1, 11), min_size=0, max_size=12),
    extra=st.integers(1, 6),
    seed=st.integers(0, 1000),
)
def test_appending_pad_never_changes_encoding(seq, extra, seed):
    _, table, params = _setup(seed=seed)
    bias_rng = np.random.default_rng(seed)
    for b in params.biases.values():
        b.data[:] = bias_rng.normal(size=b.shape)  # positive biases too
    base = textcnn_encode(seq, table, params).data
    # a longer batch companion forces extra PAD columns onto this row
    longer = textcnn_encode_batch([seq, [1] * (max(len(seq), MIN_LENGTH) + extra)], table, params).data[0]
    assert np.allclose(base, longer, rtol=1e-12, atol=1e-12)


def test_pad_row_stays_zero_and_untrained():
    from gasspam.autodiff import Tape, backward, sum_all

    _, table, params = _setup()
    with Tape() as tape:
        loss = sum_all(textcnn_encode_batch([[2, 3], [4, 5, 6, 7, 8, 9]], table, params))
    g = backward(tape, loss)
    assert np.array_equal(g[table.weight][0], np.zeros(table.dim))
    assert np.any(g[table.weight][2] != 0) or np.any(g[table.weight][3] != 0)


def test_truncation_to_max_tokens():
    _, table, params = _setup()
    long = [2, 3, 4, 5, 6, 7, 8, 9]
    a = textcnn_encode(long, table, params, max_tokens=6).data
    b = textcnn_encode(long[:6], table, params, max_tokens=6).data
    assert np.array_equal(a, b)
