import math

import numpy as np
import pytest

from getral.rng import RngState
from getral.textgraph import (
    EmbeddingFormatError,
    EmptyTextError,
    TextGraphError,
    Vocab,
    build_graph,
    load_embeddings,
    normalize_adjacency,
    random_embeddings,
    tokenize,
)


def test_tokenize_strips_and_lowercases():
    assert tokenize("The Trump administration,") == ["the", "trump", "administration"]


def test_tokenize_empty():
    assert tokenize("") == []


def test_tokenize_case_folding_and_ellipsis():
    assert tokenize("Taliban... TALIBAN") == ["taliban", "taliban"]


def test_tokenize_keeps_inner_punctuation():
    assert tokenize("don't \"stop\"") == ["don't", "stop"]


def brute_force_edges(ids, window):
    """Independent oracle: enumerate every window's (center, other) pairs."""
    edges = set()
    n = len(ids)
    span = min(window, n)
    for start in range(n - span + 1):
        center = start + (span - 1) // 2
        for pos in range(start, start + span):
            if pos != center and ids[pos] != ids[center]:
                edges.add(frozenset((ids[center], ids[pos])))
    return edges


def graph_edges(graph):
    rows, cols = np.nonzero(graph.adjacency)
    return {
        frozenset((graph.node_words[r], graph.node_words[c]))
        for r, c in zip(rows, cols)
    }


def test_build_graph_merges_duplicate_word():
    g = build_graph([0, 1, 0], window=2, max_len=10)
    np.testing.assert_array_equal(g.node_words, [0, 1])
    np.testing.assert_array_equal(g.adjacency, [[0.0, 1.0], [1.0, 0.0]])


def test_build_graph_single_token():
    g = build_graph([5], window=3, max_len=10)
    np.testing.assert_array_equal(g.adjacency, [[0.0]])
    np.testing.assert_array_equal(g.norm_adjacency, [[1.0]])


def test_build_graph_window3_merge():
    g = build_graph([0, 1, 2, 0], window=3, max_len=10)
    assert g.n_nodes == 3
    assert graph_edges(g) == {frozenset((0, 1)), frozenset((0, 2)), frozenset((1, 2))}


def test_build_graph_truncates():
    g = build_graph([0, 1, 2, 3, 4], window=2, max_len=3)
    assert g.token_length == 3
    assert g.n_nodes == 3


def test_build_graph_rejects_empty():
    with pytest.raises(EmptyTextError):
        build_graph([], window=3, max_len=10)


def test_build_graph_window_validation():
    with pytest.raises(TextGraphError):
        build_graph([0, 1], window=1, max_len=10)


def test_build_graph_matches_brute_force_oracle():
    gen = np.random.default_rng(7)
    for _ in range(200):
        length = int(gen.integers(1, 21))
        window = int(gen.integers(2, 6))
        ids = gen.integers(0, 8, size=length).tolist()
        g = build_graph(ids, window=window, max_len=30)
        assert graph_edges(g) == brute_force_edges(ids, window)
        assert np.array_equal(g.adjacency, g.adjacency.T)
        assert np.all(np.diag(g.adjacency) == 0)


def test_merging_idempotence():
    # duplicates merge: edges equal those of the dedup'd co-occurrence pairs
    gen = np.random.default_rng(9)
    for _ in range(50):
        ids = gen.integers(0, 5, size=int(gen.integers(2, 15))).tolist()
        g = build_graph(ids, window=3, max_len=30)
        assert graph_edges(g) == brute_force_edges(ids, 3)
        assert len(set(g.node_words.tolist())) == g.n_nodes


def test_normalize_isolated_node():
    np.testing.assert_array_equal(normalize_adjacency(np.zeros((1, 1))), [[1.0]])


def test_normalize_two_node_edge():
    out = normalize_adjacency(np.array([[0.0, 1.0], [1.0, 0.0]]))
    np.testing.assert_allclose(out, [[0.5, 0.5], [0.5, 0.5]], atol=1e-15)


def test_normalize_path_graph_hand_value():
    a = np.array([[0.0, 1.0, 0.0], [1.0, 0.0, 1.0], [0.0, 1.0, 0.0]])
    out = normalize_adjacency(a)
    assert out[0, 1] == pytest.approx(1 / math.sqrt(6), abs=1e-12)
    np.testing.assert_allclose(np.diag(out), [0.5, 1 / 3, 0.5], atol=1e-12)


def test_normalize_properties_random():
    gen = np.random.default_rng(13)
    for _ in range(30):
        n = int(gen.integers(1, 9))
        a = np.triu((gen.random((n, n)) < 0.4).astype(float), k=1)
        a = a + a.T
        out = normalize_adjacency(a)
        np.testing.assert_allclose(out, out.T, atol=1e-12)
        degrees = (a + np.eye(n)).sum(axis=1)
        np.testing.assert_allclose(np.diag(out), 1.0 / degrees, atol=1e-12)
        assert np.all(out[a + np.eye(n) > 0] > 0) and np.all(out <= 1.0)


def test_normalize_rejects_asymmetric():
    with pytest.raises(TextGraphError, match="symmetric"):
        normalize_adjacency(np.array([[0.0, 1.0], [0.0, 0.0]]))


def test_vocab_round_trip_and_unknown():
    vocab = Vocab.build([["cat", "dog"], ["dog", "fish"]])
    assert vocab.index("cat") == 1
    assert vocab.index("dog") == 2
    assert vocab.index("martian") == vocab.unknown_index == 0
    assert len(vocab) == 4
    assert vocab.words[vocab.index("fish")] == "fish"


def test_load_embeddings_passthrough(tmp_path):
    path = tmp_path / "emb.txt"
    path.write_text("cat 0.1 0.2\n")
    vocab = Vocab.build([["cat"]])
    table = load_embeddings(path, vocab, RngState(0))
    np.testing.assert_array_equal(table.matrix[vocab.index("cat")], [0.1, 0.2])
    assert table.pretrained[vocab.index("cat")]


def test_load_embeddings_missing_word_randomized(tmp_path):
    path = tmp_path / "emb.txt"
    path.write_text("cat 0.1 0.2\n")
    vocab = Vocab.build([["dog"]])
    table = load_embeddings(path, vocab, RngState(0))
    row = table.matrix[vocab.index("dog")]
    assert np.all(np.abs(row) <= 0.25)
    assert not table.pretrained[vocab.index("dog")]


def test_load_embeddings_dimension_mismatch(tmp_path):
    path = tmp_path / "emb.txt"
    path.write_text("cat 0.1 0.2\ndog 0.1 0.2 0.3\n")
    with pytest.raises(EmbeddingFormatError, match="2"):
        load_embeddings(path, Vocab.build([["cat"]]), RngState(0))


def test_load_embeddings_unreadable():
    with pytest.raises(TextGraphError):
        load_embeddings("/nonexistent/emb.txt", Vocab(), RngState(0))


def test_random_embeddings_bounds_and_determinism():
    vocab = Vocab.build([["a", "b", "c"]])
    t1 = random_embeddings(vocab, 8, RngState(4))
    t2 = random_embeddings(vocab, 8, RngState(4))
    assert np.array_equal(t1.matrix, t2.matrix)
    assert np.all(np.abs(t1.matrix) <= 0.5 / 8)
    assert not t1.pretrained.any()


def test_graph_features_come_from_table():
    vocab = Vocab.build([["a", "b"]])
    table = random_embeddings(vocab, 4, RngState(1))
    ids = vocab.encode(["a", "b", "a"])
    g = build_graph(ids, window=2, max_len=10, table=table)
    np.testing.assert_array_equal(g.features, table.matrix[g.node_words])
