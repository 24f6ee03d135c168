"""Tokenization, vocabulary, TF-IDF vectors, and word-embedding ingestion."""

from __future__ import annotations

import hashlib
import re
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import FormatError, StateError, ValidationError

PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"
PAD_INDEX = 0
UNK_INDEX = 1

# maximal runs of alphanumerics; underscores and all punctuation split
_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)


def tokenize(text: str) -> list[str]:
    """Lowercase and split on runs of non-alphanumeric characters.

    "Ban the Tax!" -> ["ban", "the", "tax"]; "10,000" -> ["10", "000"].
    """
    return _TOKEN_RE.findall(text.lower())


class Vocabulary:
    """Token <-> index bijection with fixed pad (0) and unknown (1) slots."""

    def __init__(self, tokens: Sequence[str], min_count: int = 1):
        self.min_count = min_count
        self._index_to_token = [PAD_TOKEN, UNK_TOKEN] + list(tokens)
        self._token_to_index = {t: i for i, t in enumerate(self._index_to_token)}
        if len(self._token_to_index) != len(self._index_to_token):
            raise ValidationError("duplicate tokens in vocabulary")

    @classmethod
    def build(cls, docs: Iterable[Sequence[str]], min_count: int = 2) -> "Vocabulary":
        """Collect tokens appearing at least min_count times across docs.

        Tokens are indexed by descending corpus frequency (ties alphabetical)
        so the layout is deterministic.
        """
        counts = Counter()
        for doc in docs:
            counts.update(doc)
        kept = sorted(
            (t for t, c in counts.items() if c >= min_count and t not in (PAD_TOKEN, UNK_TOKEN)),
            key=lambda t: (-counts[t], t),
        )
        return cls(kept, min_count=min_count)

    def __len__(self) -> int:
        return len(self._index_to_token)

    def __contains__(self, token: str) -> bool:
        return token in self._token_to_index

    def index(self, token: str) -> int:
        return self._token_to_index.get(token, UNK_INDEX)

    def token_at(self, index: int) -> str:
        return self._index_to_token[index]

    @property
    def tokens(self) -> list[str]:
        return list(self._index_to_token)

    def encode(self, tokens: Sequence[str]) -> list[int]:
        return [self.index(t) for t in tokens]

    def content_hash(self) -> str:
        digest = hashlib.sha256("\n".join(self._index_to_token).encode("utf-8"))
        return digest.hexdigest()

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for token in self._index_to_token:
                fh.write(token + "\n")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        with open(path, encoding="utf-8") as fh:
            tokens = [line.rstrip("\n") for line in fh]
        if tokens[:2] != [PAD_TOKEN, UNK_TOKEN]:
            raise FormatError(f"vocabulary file {path} missing pad/unk header rows")
        return cls(tokens[2:])


@dataclass
class EmbeddingTable:
    """Dense |vocab| x d matrix; row 0 (pad) is all zero."""

    matrix: np.ndarray

    def __post_init__(self):
        self.matrix = np.ascontiguousarray(self.matrix, dtype=np.float64)
        if self.matrix.ndim != 2:
            raise ValidationError("embedding matrix must be 2-D")
        if not np.all(np.isfinite(self.matrix)):
            raise ValidationError("embedding matrix contains non-finite entries")
        if np.any(self.matrix[PAD_INDEX] != 0.0):
            raise ValidationError("pad embedding row must be all zero")

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    def __len__(self) -> int:
        return self.matrix.shape[0]


def load_embeddings(path, vocab: Vocabulary, dim: int, seed: int) -> EmbeddingTable:
    """Read whitespace-separated "token v1 .. vd" lines into a table.

    In-vocabulary tokens take their file vectors; everything else (including
    the unknown token) is drawn uniform(-0.05, 0.05) from a generator seeded
    with ``seed``, so a rerun with the same seed is bit-identical.  The pad
    row stays zero.
    """
    vectors: dict[str, np.ndarray] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.rstrip("\n").split()
            if not parts:
                continue
            token, values = parts[0], parts[1:]
            if len(values) != dim:
                raise FormatError(
                    f"expected {dim} values for token {token!r}, got {len(values)}",
                    lineno,
                )
            if token in vocab and token not in vectors:
                try:
                    vectors[token] = np.array([float(v) for v in values])
                except ValueError as exc:
                    raise FormatError(f"non-numeric value: {exc}", lineno) from exc
    return _assemble_table(vocab, dim, seed, vectors)


def random_embeddings(vocab: Vocabulary, dim: int, seed: int) -> EmbeddingTable:
    """All-random table (seeded) for runs without a pretrained vector file."""
    return _assemble_table(vocab, dim, seed, {})


def _assemble_table(vocab, dim, seed, vectors) -> EmbeddingTable:
    rng = np.random.default_rng(seed)
    matrix = np.zeros((len(vocab), dim))
    # rows are drawn in index order so the result is independent of file order
    for i in range(1, len(vocab)):
        token = vocab.token_at(i)
        if token in vectors:
            matrix[i] = vectors[token]
        else:
            matrix[i] = rng.uniform(-0.05, 0.05, size=dim)
    return EmbeddingTable(matrix)


@dataclass
class SparseVector:
    """Sorted (index, weight) pairs over a fixed dimensionality."""

    indices: np.ndarray
    values: np.ndarray
    dim: int

    def __post_init__(self):
        self.indices = np.asarray(self.indices, dtype=np.int64)
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.indices.shape != self.values.shape:
            raise ValidationError("index/value length mismatch")
        if self.indices.size:
            if np.any(np.diff(self.indices) <= 0):
                raise ValidationError("indices must be strictly increasing")
            if self.indices[0] < 0 or self.indices[-1] >= self.dim:
                raise ValidationError("index out of range")
        if not np.all(np.isfinite(self.values)):
            raise ValidationError("weights must be finite")

    @property
    def nnz(self) -> int:
        return int(self.indices.size)

    def norm(self) -> float:
        return float(np.sqrt(np.dot(self.values, self.values)))

    def dot(self, other: "SparseVector") -> float:
        if self.dim != other.dim:
            raise ValidationError(
                f"dimension mismatch: {self.dim} vs {other.dim}"
            )
        _, ia, ib = np.intersect1d(
            self.indices, other.indices, assume_unique=True, return_indices=True
        )
        return float(np.dot(self.values[ia], other.values[ib]))

    def to_dense(self) -> np.ndarray:
        dense = np.zeros(self.dim)
        dense[self.indices] = self.values
        return dense


def cosine(u: SparseVector, v: SparseVector) -> float:
    """Cosine similarity; 0.0 whenever either vector has zero norm."""
    nu, nv = u.norm(), v.norm()
    if nu == 0.0 or nv == 0.0:
        return 0.0
    return u.dot(v) / (nu * nv)


class TfidfVectorizer:
    """TF-IDF with smoothed log idf and L2-normalized output vectors.

    idf(t) = ln((1 + N) / (1 + df(t))) + 1 over the fitting corpus; tokens
    unseen at fit time are ignored at transform time.
    """

    def __init__(self):
        self._columns: dict[str, int] | None = None
        self._idf: np.ndarray | None = None
        self.n_docs_: int = 0

    @property
    def fitted(self) -> bool:
        return self._columns is not None

    @property
    def dim(self) -> int:
        self._require_fitted()
        return len(self._columns)

    def fit(self, docs: Sequence[Sequence[str]]) -> "TfidfVectorizer":
        df = Counter()
        for doc in docs:
            df.update(set(doc))
        tokens = sorted(df)
        self._columns = {t: i for i, t in enumerate(tokens)}
        n = len(docs)
        self._idf = np.array(
            [np.log((1.0 + n) / (1.0 + df[t])) + 1.0 for t in tokens]
        )
        self.n_docs_ = n
        return self

    def idf(self, token: str) -> float:
        self._require_fitted()
        col = self._columns.get(token)
        if col is None:
            raise ValidationError(f"token {token!r} not in fitted vocabulary")
        return float(self._idf[col])

    def transform(self, doc: Sequence[str]) -> SparseVector:
        self._require_fitted()
        tf = Counter(t for t in doc if t in self._columns)
        if not tf:
            return SparseVector(np.empty(0, dtype=np.int64), np.empty(0), self.dim)
        counts_by_col = {self._columns[t]: c for t, c in tf.items()}
        cols = np.array(sorted(counts_by_col), dtype=np.int64)
        weights = np.array([counts_by_col[c] for c in cols], dtype=np.float64)
        weights *= self._idf[cols]
        norm = np.sqrt(np.dot(weights, weights))
        if norm > 0:
            weights /= norm
        return SparseVector(cols, weights, self.dim)

    def transform_many(self, docs: Iterable[Sequence[str]]) -> list[SparseVector]:
        return [self.transform(doc) for doc in docs]

    def _require_fitted(self):
        if not self.fitted:
            raise StateError("TfidfVectorizer.fit must run before transform")
