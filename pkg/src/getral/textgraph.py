"""Text to co-occurrence graphs.

Raw text becomes a merged-word graph: tokens slide under a fixed window,
each window's center word is connected to the rest of the window, and all
occurrences of one word collapse into a single node. Adjacency is
renormalized as D^(-1/2) (A+I) D^(-1/2) with degrees taken from A+I (the
self-loop term keeps isolated nodes well-defined). Node features are
embedding rows for the node words.
"""

from __future__ import annotations

import string
from dataclasses import dataclass, field

import numpy as np

from . import backend
from .rng import RngState, stream

UNK_TOKEN = "<unk>"

_STRIP_CHARS = string.punctuation


class TextGraphError(Exception):
    pass


class EmptyTextError(TextGraphError):
    pass


class EmbeddingFormatError(TextGraphError):
    pass


def tokenize(text: str) -> list[str]:
    """Lowercase, split on whitespace, strip edge ASCII punctuation, drop empties."""
    out = []
    for raw in text.lower().split():
        token = raw.strip(_STRIP_CHARS)
        if token:
            out.append(token)
    return out


@dataclass
class Vocab:
    """Dense word index with a shared unknown token at index 0."""

    word_to_index: dict[str, int] = field(default_factory=dict)
    words: list[str] = field(default_factory=list)

    def __post_init__(self):
        if not self.words:
            self.words = [UNK_TOKEN]
            self.word_to_index = {UNK_TOKEN: 0}

    @property
    def unknown_index(self) -> int:
        return 0

    def __len__(self):
        return len(self.words)

    def index(self, word: str) -> int:
        return self.word_to_index.get(word, 0)

    def add(self, word: str) -> int:
        idx = self.word_to_index.get(word)
        if idx is None:
            idx = len(self.words)
            self.word_to_index[word] = idx
            self.words.append(word)
        return idx

    @classmethod
    def build(cls, token_sequences) -> "Vocab":
        """First-occurrence-ordered vocabulary over the training token streams."""
        vocab = cls()
        for tokens in token_sequences:
            for token in tokens:
                vocab.add(token)
        return vocab

    @classmethod
    def from_words(cls, words) -> "Vocab":
        vocab = cls()
        for w in words:
            vocab.add(w)
        return vocab

    def encode(self, tokens) -> list[int]:
        return [self.index(t) for t in tokens]


@dataclass
class EmbeddingTable:
    """vocab x d feature rows; ``pretrained`` flags file-backed rows."""

    matrix: np.ndarray
    pretrained: np.ndarray

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]


def random_embeddings(vocab: Vocab, dim: int, rng_state: RngState) -> EmbeddingTable:
    """All-random table, rows uniform in [-0.5/d, 0.5/d]."""
    gen = stream(rng_state, "embedding-init")
    bound = 0.5 / dim
    matrix = gen.uniform(-bound, bound, size=(len(vocab), dim))
    return EmbeddingTable(matrix, np.zeros(len(vocab), dtype=bool))


def load_embeddings(path, vocab: Vocab, rng_state: RngState) -> EmbeddingTable:
    """Read `word v1 ... vd` lines; vocab words missing from the file get
    seeded uniform rows in [-0.5/d, 0.5/d] and are flagged non-pretrained."""
    rows: dict[int, np.ndarray] = {}
    dim = None
    try:
        handle = open(path, "r", encoding="utf-8")
    except OSError as exc:
        raise TextGraphError(f"cannot read embedding file {path}: {exc}") from exc
    with handle:
        for lineno, line in enumerate(handle, start=1):
            parts = line.rstrip("\n").split(" ")
            if len(parts) < 2 or not parts[0]:
                raise EmbeddingFormatError(f"{path}:{lineno}: expected `word v1 ... vd`")
            word, values = parts[0], parts[1:]
            if dim is None:
                dim = len(values)
            elif len(values) != dim:
                raise EmbeddingFormatError(
                    f"{path}:{lineno}: dimension {len(values)} differs from first line's {dim}"
                )
            idx = vocab.word_to_index.get(word)
            if idx is None:
                continue
            try:
                rows[idx] = np.array([float(v) for v in values], dtype=np.float64)
            except ValueError as exc:
                raise EmbeddingFormatError(f"{path}:{lineno}: bad float: {exc}") from exc
    if dim is None:
        raise EmbeddingFormatError(f"{path}: empty embedding file")
    table = random_embeddings(vocab, dim, rng_state)
    for idx, row in rows.items():
        table.matrix[idx] = row
        table.pretrained[idx] = True
    return table


@dataclass
class TokenGraph:
    """Merged-word co-occurrence graph for one text.

    ``adjacency`` is the raw symmetric 0/1 matrix with zero diagonal;
    ``norm_adjacency`` the renormalized form; ``features`` the initial
    node features (embedding rows); ``active`` the per-node liveness mask
    that structure refinement later shrinks.
    """

    node_words: np.ndarray
    adjacency: np.ndarray
    norm_adjacency: np.ndarray
    features: np.ndarray | None
    active: np.ndarray
    token_length: int

    @property
    def n_nodes(self) -> int:
        return self.node_words.shape[0]


def normalize_adjacency(adjacency: np.ndarray) -> np.ndarray:
    """D^(-1/2) (A+I) D^(-1/2) with D_ii = sum_j (A+I)_ij."""
    a = np.asarray(adjacency, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise TextGraphError(f"adjacency must be square, got {a.shape}")
    if not np.array_equal(a, a.T):
        raise TextGraphError("adjacency must be symmetric")
    if np.any((a != 0.0) & (a != 1.0)) or np.any(np.diag(a) != 0.0):
        raise TextGraphError("adjacency must be 0/1 with zero diagonal")
    with_loops = a + np.eye(a.shape[0])
    inv_sqrt = 1.0 / np.sqrt(with_loops.sum(axis=1))
    return with_loops * inv_sqrt[:, None] * inv_sqrt[None, :]


def build_graph(
    token_ids,
    window: int,
    max_len: int,
    table: EmbeddingTable | None = None,
) -> TokenGraph:
    """Graph over merged word nodes from a vocab-encoded token sequence.

    Tokens are truncated to ``max_len`` first. Identical indices merge into
    one node (accumulating all their window edges); self-loops are dropped
    from A and reappear via the +I term during normalization.
    """
    if window < 2:
        raise TextGraphError(f"window must be >= 2, got {window}")
    if max_len < 1:
        raise TextGraphError(f"max_len must be >= 1, got {max_len}")
    ids = list(token_ids)[:max_len]
    if not ids:
        raise EmptyTextError("empty text")
    order: dict[int, int] = {}
    for tid in ids:
        if tid not in order:
            order[tid] = len(order)
    node_words = np.fromiter(order.keys(), dtype=np.int64, count=len(order))
    positions = np.fromiter((order[t] for t in ids), dtype=np.int64, count=len(ids))
    adjacency = backend.cooccurrence_adjacency(positions, len(order), window)
    features = table.matrix[node_words] if table is not None else None
    return TokenGraph(
        node_words=node_words,
        adjacency=adjacency,
        norm_adjacency=normalize_adjacency(adjacency),
        features=features,
        active=np.ones(len(order), dtype=bool),
        token_length=len(ids),
    )
