"""Sandbox-report text to Boolean feature vectors.

A report (structured JSON text from an instrumented sandbox run) is reduced
to its set of unigrams; the corpus-wide dictionary keeps the most common
unigrams after dropping those present in every report (zero-variance
features). Each report then becomes a presence/absence bit vector over the
dictionary, with bit i owned by the dictionary's i-th token.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from datetime import date

import numpy as np

from . import fileio
from .errors import DataError, DimensionError

_TOKEN_RE = re.compile(r"[A-Za-z0-9_]+")


def tokenize_report(report_text) -> set[str]:
    """Unigram set of a report: maximal [A-Za-z0-9_] runs, lowercased.

    Accepts str or UTF-8 bytes. The report is treated as plain text; no JSON
    structure is assumed or required.
    """
    if isinstance(report_text, (bytes, bytearray)):
        try:
            report_text = bytes(report_text).decode("utf-8")
        except UnicodeDecodeError as e:
            raise DataError(f"invalid UTF-8 at byte {e.start}") from e
    return {m.lower() for m in _TOKEN_RE.findall(report_text)}


@dataclass(frozen=True)
class TokenDictionary:
    """Ordered (token, document_frequency) entries; index = feature index."""

    entries: tuple[tuple[str, int], ...]

    def __post_init__(self):
        object.__setattr__(
            self, "_index", {token: i for i, (token, _) in enumerate(self.entries)}
        )

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def tokens(self) -> list[str]:
        return [token for token, _ in self.entries]

    def index_of(self, token: str):
        return self._index.get(token)


def build_dictionary(corpus: list[set[str]], cap: int = 20_000) -> TokenDictionary:
    """Rank tokens by document frequency and keep the top `cap`.

    Tokens occurring in every report are removed first (they carry no
    variance). Ranking is by descending document frequency with ascending
    lexicographic tie-break, which makes the result independent of corpus
    order.
    """
    if not corpus:
        raise DataError("empty corpus")
    if cap < 1:
        raise DataError(f"cap must be >= 1, got {cap}")
    df: dict[str, int] = {}
    for tokens in corpus:
        for t in tokens:
            df[t] = df.get(t, 0) + 1
    n = len(corpus)
    informative = [(t, c) for t, c in df.items() if c < n]
    if not informative:
        raise DataError("no informative tokens")
    informative.sort(key=lambda item: (-item[1], item[0]))
    return TokenDictionary(entries=tuple(informative[:cap]))


@dataclass(frozen=True)
class FeatureVector:
    """Sparse Boolean vector: dimension plus the strictly ascending set bits."""

    dimension: int
    set_indices: tuple[int, ...]

    def __post_init__(self):
        prev = -1
        for i in self.set_indices:
            if not 0 <= i < self.dimension:
                raise DimensionError(
                    f"index {i} out of range for dimension {self.dimension}"
                )
            if i <= prev:
                raise DataError("set_indices must be strictly ascending")
            prev = i

    def densify(self) -> np.ndarray:
        dense = np.zeros(self.dimension, dtype=np.float64)
        if self.set_indices:
            dense[list(self.set_indices)] = 1.0
        return dense


def sparsify(dense) -> FeatureVector:
    """Inverse of FeatureVector.densify for a {0,1} vector."""
    a = np.asarray(dense, dtype=np.float64)
    if a.ndim != 1:
        raise DimensionError(f"expected a 1-D vector, got shape {a.shape}")
    if not np.all((a == 0.0) | (a == 1.0)):
        raise DataError("sparsify requires a {0,1} vector")
    return FeatureVector(
        dimension=int(a.shape[0]),
        set_indices=tuple(int(i) for i in np.flatnonzero(a)),
    )


def vectorize(tokens: set[str], dictionary: TokenDictionary) -> FeatureVector:
    """Presence bits over the dictionary; out-of-vocabulary tokens ignored."""
    if len(dictionary) == 0:
        raise DataError("empty dictionary")
    hits = sorted(
        i for i in (dictionary.index_of(t) for t in tokens) if i is not None
    )
    return FeatureVector(dimension=len(dictionary), set_indices=tuple(hits))


def densify_batch(vectors, dimension: int) -> np.ndarray:
    """Stack FeatureVectors into an (n, dimension) {0,1} float64 matrix."""
    out = np.zeros((len(vectors), dimension), dtype=np.float64)
    for row, v in enumerate(vectors):
        if v.dimension != dimension:
            raise DimensionError(
                f"vector dimension {v.dimension} != expected {dimension}"
            )
        if v.set_indices:
            out[row, list(v.set_indices)] = 1.0
    return out


# ---------------------------------------------------------------------------
# File formats
# ---------------------------------------------------------------------------
# Dictionary file: one token per line, LF endings, order = feature index.
# Vector file: per line, tab-separated:
#   sample_id  family_label  first_seen_date(ISO-8601)  comma-joined indices
# The index field may be empty (all-zero vector).

def write_dictionary(dictionary: TokenDictionary, path) -> None:
    fileio.write_text(path, "".join(token + "\n" for token in dictionary.tokens))


def read_dictionary(path) -> TokenDictionary:
    with open(path, "r", encoding="utf-8", newline="\n") as f:
        tokens = [line.rstrip("\n") for line in f]
    tokens = [t for t in tokens if t != ""]
    if not tokens:
        raise DataError(f"dictionary file {path} is empty")
    if len(set(tokens)) != len(tokens):
        raise DataError(f"dictionary file {path} contains duplicate tokens")
    # document frequencies are not part of the file format
    return TokenDictionary(entries=tuple((t, 0) for t in tokens))


@dataclass(frozen=True)
class VectorRecord:
    sample_id: str
    family_label: str
    first_seen: date
    vector: FeatureVector


def format_vector_line(record: VectorRecord) -> str:
    idx = ",".join(str(i) for i in record.vector.set_indices)
    return (
        f"{record.sample_id}\t{record.family_label}\t"
        f"{record.first_seen.isoformat()}\t{idx}"
    )


def write_vector_file(records, path) -> None:
    fileio.write_text(
        path, "".join(format_vector_line(record) + "\n" for record in records)
    )


def parse_vector_line(line: str, dimension: int, lineno: int = 0) -> VectorRecord:
    parts = line.split("\t")
    if len(parts) != 4:
        raise DataError(f"vector file line {lineno}: expected 4 fields, got {len(parts)}")
    sample_id, family, date_text, idx_field = parts
    try:
        first_seen = date.fromisoformat(date_text)
    except ValueError as e:
        raise DataError(f"vector file line {lineno}: bad date {date_text!r}") from e
    if idx_field == "":
        indices: tuple[int, ...] = ()
    else:
        try:
            indices = tuple(int(s) for s in idx_field.split(","))
        except ValueError as e:
            raise DataError(f"vector file line {lineno}: bad index field") from e
    try:
        vector = FeatureVector(dimension=dimension, set_indices=indices)
    except ValueError as e:
        raise DataError(f"vector file line {lineno}: {e}") from e
    return VectorRecord(sample_id, family, first_seen, vector)


def read_vector_file(path, dimension: int) -> list[VectorRecord]:
    records = []
    with open(path, "r", encoding="utf-8", newline="\n") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if line == "":
                continue
            records.append(parse_vector_line(line, dimension, lineno))
    return records
