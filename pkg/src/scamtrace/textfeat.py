"""Page-content features: token cleaning, TF-IDF vectors, cosine distance.

Weights use raw term counts and the smoothed inverse document frequency
``ln((1 + N) / (1 + df)) + 1``; every vector is L2-normalised.
"""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy import sparse

from .addresses import extract_addresses
from .errors import DimensionMismatch, EmptyCorpus

_NON_ALNUM = re.compile(r"[^a-z0-9]")
_DIGIT = re.compile(r"[0-9]")

TokenList = list[str]


def load_stop_words(path: str | Path | None = None) -> frozenset[str]:
    """Read a one-word-per-line list; the bundled English list by default."""
    if path is None:
        text = resources.files("scamtrace").joinpath("data/stopwords.txt").read_text("utf-8")
    else:
        text = Path(path).read_text("utf-8")
    return frozenset(w.strip().lower() for w in text.splitlines() if w.strip())


def preprocess(text: str, stop_words: Iterable[str] = frozenset()) -> TokenList:
    stop = stop_words if isinstance(stop_words, (set, frozenset)) else set(stop_words)
    tokens = []
    for raw in text.split():
        tok = _NON_ALNUM.sub("", raw.lower())
        if not tok or _DIGIT.search(tok) or tok in stop:
            continue
        if extract_addresses(raw):
            continue
        tokens.append(tok)
    return tokens


@dataclass(frozen=True)
class TfidfModel:
    vocabulary: dict[str, int]
    doc_count: int
    doc_freq: dict[str, int]

    @property
    def dimension(self) -> int:
        return len(self.vocabulary)

    @property
    def terms(self) -> list[str]:
        """Terms in column order."""
        out = [""] * len(self.vocabulary)
        for term, idx in self.vocabulary.items():
            out[idx] = term
        return out

    def idf(self, term: str) -> float:
        return math.log((1 + self.doc_count) / (1 + self.doc_freq[term])) + 1.0


@dataclass(frozen=True)
class SparseVector:
    entries: dict[int, float]
    dimension: int

    @property
    def norm(self) -> float:
        return math.sqrt(math.fsum(w * w for w in self.entries.values()))


def fit_tfidf(corpus: Sequence[TokenList]) -> TfidfModel:
    if not corpus or not any(corpus):
        raise EmptyCorpus("need at least one non-empty document")
    df: Counter[str] = Counter()
    for doc in corpus:
        df.update(set(doc))
    vocab = {term: i for i, term in enumerate(sorted(df))}
    return TfidfModel(vocab, len(corpus), dict(df))


def transform(model: TfidfModel, doc: TokenList) -> SparseVector:
    counts = Counter(t for t in doc if t in model.vocabulary)
    raw = {model.vocabulary[t]: c * model.idf(t) for t, c in counts.items()}
    norm = math.sqrt(math.fsum(w * w for w in raw.values()))
    entries = {i: w / norm for i, w in sorted(raw.items())} if norm > 0 else {}
    return SparseVector(entries, model.dimension)


def cosine_distance(u: SparseVector, v: SparseVector) -> float:
    if u.dimension != v.dimension:
        raise DimensionMismatch(f"{u.dimension} != {v.dimension}")
    if not u.entries or not v.entries:
        return 1.0
    small, large = (u, v) if len(u.entries) <= len(v.entries) else (v, u)
    dot = math.fsum(w * large.entries.get(i, 0.0) for i, w in small.entries.items())
    dist = 1.0 - dot
    return 0.0 if dist < 1e-12 else min(1.0, dist)


def to_csr(vectors: Sequence[SparseVector]) -> sparse.csr_matrix:
    if not vectors:
        return sparse.csr_matrix((0, 0))
    dim = vectors[0].dimension
    indptr, indices, data = [0], [], []
    for vec in vectors:
        if vec.dimension != dim:
            raise DimensionMismatch(f"{vec.dimension} != {dim}")
        indices.extend(vec.entries.keys())
        data.extend(vec.entries.values())
        indptr.append(len(indices))
    return sparse.csr_matrix((data, indices, indptr), shape=(len(vectors), dim))


def cosine_distance_matrix(vectors: Sequence[SparseVector]) -> np.ndarray:
    """All-pairs version of :func:`cosine_distance`, as a dense array.

    Round-off below 1e-12 is snapped to zero (as in the pairwise function)
    so duplicate pages compare as exactly coincident.
    """
    x = to_csr(vectors)
    dist = 1.0 - (x @ x.T).toarray()
    np.clip(dist, 0.0, 1.0, out=dist)
    dist[dist < 1e-12] = 0.0
    empty = np.asarray(x.getnnz(axis=1) == 0)
    dist[empty, :] = 1.0
    dist[:, empty] = 1.0
    return dist
