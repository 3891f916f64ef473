"""Semantic document identifiers and the decimal trie used to constrain decoding.

Docids are built by recursive (hierarchical) k-means over document
embeddings: every level contributes one cluster digit, and documents that
end up in a small enough cluster receive a fixed-width leaf index. The
resulting digit strings are stored in a prefix tree whose leaves are
terminated by a reserved end-of-sequence token.
"""

from __future__ import annotations

import logging
import re
import zlib
from dataclasses import dataclass
from typing import Dict, Iterable, List, Mapping, Optional, Sequence

import numpy as np

logger = logging.getLogger(__name__)

# Docid-side token ids. Digits map to themselves.
EOS = 10
BOS = 11
DOCID_VOCAB_SIZE = 12

_WORD_RE = re.compile(r"[a-z0-9]+")


class DocidError(ValueError):
    """Raised for malformed corpora, docid maps or trie lookups."""


@dataclass
class Document:
    internal_id: str
    text: str = ""
    embedding: Optional[np.ndarray] = None


def tokenize(text: str) -> List[str]:
    """Lowercase and split on anything that is not a letter or digit."""
    return _WORD_RE.findall(text.lower())


def docid_tokens(docid: str) -> List[int]:
    """Model-facing token sequence of a docid, EOS included."""
    if not docid or not docid.isdigit():
        raise DocidError(f"malformed docid {docid!r}")
    return [int(c) for c in docid] + [EOS]


def tokens_to_docid(tokens: Sequence[int]) -> str:
    digits = [t for t in tokens if t != EOS]
    if any(not 0 <= t <= 9 for t in digits):
        raise DocidError(f"non-digit token in {list(tokens)}")
    return "".join(str(t) for t in digits)


# ---------------------------------------------------------------------------
# Embeddings
# ---------------------------------------------------------------------------


def _term_direction(term: str, dim: int, seed: int) -> np.ndarray:
    # One fixed Gaussian row of the projection per hashed term.
    bucket = zlib.crc32(term.encode("utf-8")) & 0xFFFFFFFF
    rng = np.random.default_rng([seed & 0xFFFFFFFF, bucket])
    return rng.standard_normal(dim)


def embed_corpus(documents: Sequence[Document], dim: int = 64, seed: int = 0) -> List[np.ndarray]:
    """Deterministic bag-of-words embeddings.

    Term frequencies over hashed terms are projected with a seeded Gaussian
    matrix and L2-normalized. A document carrying a precomputed embedding is
    passed through unchanged.
    """
    if dim < 2:
        raise DocidError("dim must be >= 2")
    if not documents:
        raise DocidError("empty corpus")

    cache: Dict[str, np.ndarray] = {}
    out = []
    for doc in documents:
        if doc.embedding is not None:
            out.append(np.asarray(doc.embedding, dtype=np.float64))
            continue
        terms = tokenize(doc.text)
        if not terms:
            raise DocidError(f"document {doc.internal_id!r} has empty text and no embedding")
        vec = np.zeros(dim)
        counts: Dict[str, int] = {}
        for t in terms:
            counts[t] = counts.get(t, 0) + 1
        for t in sorted(counts):
            if t not in cache:
                cache[t] = _term_direction(t, dim, seed)
            vec += counts[t] * cache[t]
        norm = np.linalg.norm(vec)
        out.append(vec / norm if norm > 0 else vec)
    return out


# ---------------------------------------------------------------------------
# Hierarchical k-means
# ---------------------------------------------------------------------------


def _kmeans_pp_init(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = len(x)
    centers = [x[rng.integers(n)]]
    d2 = ((x - centers[0]) ** 2).sum(1)
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            # All remaining points coincide with a chosen center.
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=d2 / total))
        centers.append(x[idx])
        d2 = np.minimum(d2, ((x - x[idx]) ** 2).sum(1))
    return np.array(centers)


def kmeans(x: np.ndarray, k: int, seed_key: Sequence[int], max_iters: int = 100) -> np.ndarray:
    """Lloyd's algorithm with k-means++ seeding; returns cluster labels.

    Ties in nearest-centroid assignment go to the lowest centroid index.
    If assignments never settle within ``max_iters`` the lowest-inertia
    assignment seen is returned.
    """
    rng = np.random.default_rng(list(seed_key))
    centers = _kmeans_pp_init(x, k, rng)
    labels = None
    best_labels, best_inertia = None, np.inf
    for _ in range(max_iters):
        dist = ((x[:, None, :] - centers[None, :, :]) ** 2).sum(-1)
        new = dist.argmin(1)
        inertia = dist[np.arange(len(x)), new].sum()
        if inertia < best_inertia:
            best_labels, best_inertia = new, inertia
        if labels is not None and np.array_equal(new, labels):
            return new
        labels = new
        for c in range(k):
            members = x[labels == c]
            if len(members):
                centers[c] = members.mean(0)
    logger.debug("k-means did not converge in %d iterations", max_iters)
    return best_labels


def assign_docids(
    embeddings: Sequence[np.ndarray],
    ids: Optional[Sequence[str]] = None,
    branching: int = 10,
    leaf_max: int = 100,
    seed: int = 0,
) -> Dict[str, str]:
    """Map each document to a digit-string docid by recursive k-means.

    Args:
        embeddings: one vector per document.
        ids: internal ids aligned with ``embeddings``; defaults to the
            string form of each position.
        branching: clusters per level (at most 10, one digit each).
        leaf_max: clusters with at most this many members stop recursing.
        seed: seeds k-means++ at every node.

    Returns:
        internal_id -> docid string.
    """
    if len(embeddings) == 0:
        raise DocidError("cannot assign docids to zero documents")
    if not 1 <= branching <= 10:
        raise DocidError("branching must be between 1 and 10")
    if leaf_max < 1:
        raise DocidError("leaf_max must be positive")
    if ids is None:
        ids = [str(i) for i in range(len(embeddings))]
    if len(ids) != len(embeddings):
        raise DocidError("ids and embeddings differ in length")
    if len(set(ids)) != len(ids):
        raise DocidError("duplicate internal ids")

    x = np.asarray(np.stack([np.asarray(e, dtype=np.float64) for e in embeddings]))
    width = len(str(leaf_max - 1))
    result: Dict[str, str] = {}

    # Explicit stack instead of recursion; output does not depend on visit order.
    stack = [(np.argsort(np.asarray(ids, dtype=object), kind="stable"), "")]
    while stack:
        members, path = stack.pop()
        k = min(branching, len(members))
        labels = kmeans(x[members], k, [seed & 0xFFFFFFFF, len(path)] + [int(c) for c in path])
        groups = [members[labels == c] for c in range(k)]
        groups = [g for g in groups if len(g)]
        if len(groups) == 1 and len(members) > leaf_max:
            # Coincident points: split by id order so recursion terminates.
            groups = [g for g in np.array_split(members, k) if len(g)]
        for digit, group in enumerate(groups):
            child = path + str(digit)
            if len(group) <= leaf_max:
                order = sorted(group, key=lambda i: ids[i])
                for leaf, i in enumerate(order):
                    result[ids[i]] = child + str(leaf).zfill(width)
            else:
                stack.append((group, child))
    return {i: result[i] for i in ids}


# ---------------------------------------------------------------------------
# Decimal trie
# ---------------------------------------------------------------------------


class _Node:
    __slots__ = ("children", "doc")

    def __init__(self):
        self.children: Dict[int, _Node] = {}
        self.doc: Optional[str] = None


class DecimalTrie:
    """Prefix tree over EOS-terminated docids. Immutable once built."""

    def __init__(self, docid_map: Mapping[str, str]):
        self.root = _Node()
        self.size = 0
        self.depth = 0
        owner: Dict[str, str] = {}
        for internal_id, docid in docid_map.items():
            if docid in owner:
                raise DocidError(
                    f"duplicate docid {docid!r} for documents {owner[docid]!r} and {internal_id!r}"
                )
            owner[docid] = internal_id
            node = self.root
            toks = docid_tokens(docid)
            for t in toks:
                node = node.children.setdefault(t, _Node())
            node.doc = internal_id
            self.size += 1
            self.depth = max(self.depth, len(toks))
        self.docid_of = dict(docid_map)

    def _walk(self, prefix: Iterable[int]) -> Optional[_Node]:
        node = self.root
        for t in prefix:
            node = node.children.get(int(t))
            if node is None:
                return None
        return node

    def allowed_tokens(self, prefix: Sequence[int] = ()) -> set:
        node = self._walk(prefix)
        if node is None or not node.children:
            raise DocidError(f"invalid prefix {list(prefix)}")
        return set(node.children)

    def resolve(self, digits) -> str:
        """Internal id at the leaf reached by ``digits`` (a docid string or digit tokens)."""
        toks = docid_tokens(digits) if isinstance(digits, str) else list(digits)
        if not toks or toks[-1] != EOS:
            toks = toks + [EOS]
        node = self._walk(toks)
        if node is None or node.doc is None:
            raise DocidError(f"unknown docid {digits!r}")
        return node.doc

    def __contains__(self, docid: str) -> bool:
        try:
            self.resolve(docid)
        except DocidError:
            return False
        return True

    def __len__(self):
        return self.size

    def leaves(self) -> List[str]:
        """All docids, sorted as strings."""
        out = []
        stack = [(self.root, [])]
        while stack:
            node, path = stack.pop()
            if node.doc is not None:
                out.append(tokens_to_docid(path))
            for t, child in node.children.items():
                stack.append((child, path + [t]))
        return sorted(out)


def build_trie(docid_map: Mapping[str, str]) -> DecimalTrie:
    return DecimalTrie(docid_map)


def allowed_tokens(trie: DecimalTrie, prefix: Sequence[int] = ()) -> set:
    return trie.allowed_tokens(prefix)


def resolve(trie: DecimalTrie, digits) -> str:
    return trie.resolve(digits)


# ---------------------------------------------------------------------------
# File formats
# ---------------------------------------------------------------------------


def write_docid_map(path, docid_map: Mapping[str, str]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for internal_id, docid in docid_map.items():
            f.write(f"{internal_id}\t{docid}\n")


def read_docid_map(path) -> Dict[str, str]:
    out: Dict[str, str] = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2 or not parts[1].isdigit():
                raise DocidError(f"{path}:{lineno}: expected 'internal_id<TAB>digits'")
            if parts[0] in out:
                raise DocidError(f"{path}:{lineno}: duplicate internal id {parts[0]!r}")
            out[parts[0]] = parts[1]
    return out


def read_embeddings(path) -> Dict[str, np.ndarray]:
    out: Dict[str, np.ndarray] = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            try:
                key, values = line.split("\t")
                out[key] = np.array([float(v) for v in values.split(",")])
            except ValueError as exc:
                raise DocidError(f"{path}:{lineno}: bad embedding line ({exc})") from None
    return out
