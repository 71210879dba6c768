"""Frozen feature extraction: signed feature hashing or precomputed embeddings."""

from __future__ import annotations

import unicodedata
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from seedvote.errors import InputError

FNV_OFFSET = 14695981039346656037
FNV_PRIME = 1099511628211
_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class EncoderConfig:
    kind: str = "hashed"
    d: int = 256
    ngram_orders: tuple[int, ...] = (1, 2)
    embeddings_path: Optional[str] = None

    def __post_init__(self):
        if self.kind not in ("hashed", "precomputed"):
            raise InputError(f"encoder kind must be 'hashed' or 'precomputed', got {self.kind!r}")
        if self.d < 2:
            raise InputError("encoder dimension d must be >= 2")
        if not self.ngram_orders or not set(self.ngram_orders) <= {1, 2}:
            raise InputError(f"ngram_orders must be a non-empty subset of {{1, 2}}, got {self.ngram_orders}")
        if self.kind == "precomputed" and not self.embeddings_path:
            raise InputError("precomputed encoder requires embeddings_path")


def fnv1a_64(data: bytes) -> int:
    h = FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * FNV_PRIME) & _MASK64
    return h


def _is_punct(ch: str) -> bool:
    return unicodedata.category(ch).startswith("P")


def token_spans(text: str) -> list[tuple[str, int, int]]:
    """Tokens with their character ranges in ``text``.

    Text is lowercased, split on Unicode whitespace and each chunk has
    leading/trailing punctuation stripped; chunks that end up empty are
    dropped. Ranges refer to the stripped token.
    """
    out = []
    i, n = 0, len(text)
    while i < n:
        if text[i].isspace():
            i += 1
            continue
        j = i
        while j < n and not text[j].isspace():
            j += 1
        a, b = i, j
        while a < b and _is_punct(text[a]):
            a += 1
        while b > a and _is_punct(text[b - 1]):
            b -= 1
        if a < b:
            out.append((text[a:b].lower(), a, b))
        i = j
    return out


def tokenize(text: str) -> list[str]:
    return [t for t, _, _ in token_spans(text)]


def ngrams(tokens: Sequence[str], orders: Sequence[int] = (1, 2)) -> list[str]:
    grams = []
    if 1 in orders:
        grams.extend(tokens)
    if 2 in orders:
        grams.extend(f"{a} {b}" for a, b in zip(tokens, tokens[1:]))
    return grams


def encode_hashed(text: str, config: EncoderConfig = EncoderConfig()) -> np.ndarray:
    """Signed-hash bag of n-grams, L2-normalized (zero vector for empty text)."""
    if config.kind != "hashed":
        raise InputError("encode_hashed requires an encoder config of kind 'hashed'")
    v = np.zeros(config.d, dtype=np.float64)
    for gram in ngrams(tokenize(text), config.ngram_orders):
        h = fnv1a_64(gram.encode("utf-8"))
        v[h % config.d] += -1.0 if h >> 63 else 1.0
    norm = np.linalg.norm(v)
    if norm > 0:
        v /= norm
    return v


def load_embeddings(path) -> dict[str, np.ndarray]:
    """Read an embeddings file: ``dim=<d>`` header, then ``id<TAB>v1 v2 ...`` rows."""
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as e:
        raise InputError(f"cannot read embeddings file {str(path)!r}: {e.strerror}") from None
    if not lines or not lines[0].startswith("dim="):
        raise InputError(f"{path}: first line must be 'dim=<d>'")
    try:
        dim = int(lines[0][4:])
    except ValueError:
        raise InputError(f"{path}: bad dimension header {lines[0]!r}") from None
    out: dict[str, np.ndarray] = {}
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        sid, sep, rest = line.partition("\t")
        if not sep or not sid:
            raise InputError(f"{path} row {lineno}: expected 'sample_id<TAB>values'")
        if sid in out:
            raise InputError(f"{path} row {lineno}: duplicate sample_id {sid!r}")
        try:
            vals = np.array([float(x) for x in rest.split()], dtype=np.float64)
        except ValueError:
            raise InputError(f"{path} row {lineno}: non-numeric value") from None
        if vals.shape[0] != dim:
            raise InputError(f"{path} row {lineno}: expected {dim} values, got {vals.shape[0]}")
        if not np.all(np.isfinite(vals)):
            raise InputError(f"{path} row {lineno}: non-finite value")
        vals.setflags(write=False)
        out[sid] = vals
    return out


def encode_samples(
    sample_ids: Sequence[str],
    transcripts: Mapping[str, str],
    config: EncoderConfig,
    embeddings: Optional[Mapping[str, np.ndarray]] = None,
) -> np.ndarray:
    """Feature matrix (one row per id) for either encoder kind."""
    if config.kind == "hashed":
        return np.stack([encode_hashed(transcripts[s], config) for s in sample_ids]) if sample_ids else np.zeros((0, config.d))
    if embeddings is None:
        embeddings = load_embeddings(config.embeddings_path)
    missing = [s for s in sample_ids if s not in embeddings]
    if missing:
        raise InputError(f"no embedding for sample_id {missing[0]!r}")
    X = np.stack([embeddings[s] for s in sample_ids])
    if X.shape[1] != config.d:
        raise InputError(f"embedding dimension {X.shape[1]} does not match encoder d={config.d}")
    return X
