"""Dataset ingestion and the seeded synthetic topic corpus."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .docids import Document, read_embeddings
from .metrics import read_qrels, write_qrels

logger = logging.getLogger(__name__)


class DataError(ValueError):
    pass


@dataclass
class DatasetBundle:
    documents: List[Document]
    queries: Dict[str, str]
    qrels: Dict[str, Dict[str, int]]
    train_qids: List[str]
    test_qids: List[str]
    pseudo_queries: List[Tuple[str, str]] = field(default_factory=list)

    def validate(self) -> None:
        ids = {d.internal_id for d in self.documents}
        for qid, judg in self.qrels.items():
            if qid not in self.queries:
                raise DataError(f"qrels query {qid!r} missing from queries")
            for docid in judg:
                if docid not in ids:
                    raise DataError(f"qrels document {docid!r} (query {qid!r}) missing from corpus")
        for docid, _ in self.pseudo_queries:
            if docid not in ids:
                raise DataError(f"pseudo-query for unknown document {docid!r}")

    def write(self, directory) -> Dict[str, Path]:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        paths = {name: d / fname for name, fname in [
            ("corpus", "corpus.jsonl"), ("queries", "queries.tsv"), ("qrels", "qrels.txt"),
            ("split", "split.tsv"), ("pseudo_queries", "pseudo_queries.tsv")]}
        with open(paths["corpus"], "w", encoding="utf-8") as f:
            for doc in self.documents:
                f.write(json.dumps({"id": doc.internal_id, "text": doc.text}) + "\n")
        with open(paths["queries"], "w", encoding="utf-8") as f:
            for qid, text in self.queries.items():
                f.write(f"{qid}\t{text}\n")
        write_qrels(paths["qrels"], self.qrels)
        with open(paths["split"], "w", encoding="utf-8") as f:
            for qid in self.train_qids:
                f.write(f"{qid}\ttrain\n")
            for qid in self.test_qids:
                f.write(f"{qid}\ttest\n")
        with open(paths["pseudo_queries"], "w", encoding="utf-8") as f:
            for docid, text in self.pseudo_queries:
                f.write(f"{docid}\t{text}\n")
        return paths


def read_corpus(path) -> List[Document]:
    """Line-delimited JSON records with ``id`` and ``text``."""
    docs, seen = [], set()
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                internal_id, text = str(rec["id"]), str(rec.get("text", ""))
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise DataError(f"{path}:{lineno}: bad corpus record ({exc})") from None
            if not internal_id:
                raise DataError(f"{path}:{lineno}: empty document id")
            if internal_id in seen:
                raise DataError(f"{path}:{lineno}: duplicate document id {internal_id!r}")
            seen.add(internal_id)
            docs.append(Document(internal_id, text))
    return docs


def attach_embeddings(documents: List[Document], path) -> None:
    vectors = read_embeddings(path)
    for doc in documents:
        if doc.internal_id in vectors:
            doc.embedding = vectors[doc.internal_id]


def read_tsv_pairs(path) -> List[Tuple[str, str]]:
    out = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            if "\t" not in line:
                raise DataError(f"{path}:{lineno}: expected two tab-separated fields")
            a, b = line.split("\t", 1)
            out.append((a, b))
    return out


def split_queries(qids: Sequence[str], test_fraction: float, seed: int) -> Tuple[List[str], List[str]]:
    order = sorted(qids)
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(order))
    n_test = int(round(test_fraction * len(order)))
    test = sorted(order[i] for i in perm[:n_test])
    train = sorted(order[i] for i in perm[n_test:])
    return train, test


def load_bundle(corpus, qrels, queries, pseudo_queries=None, embeddings=None, split=None,
                test_fraction: float = 0.25, seed: int = 0) -> DatasetBundle:
    documents = read_corpus(corpus)
    if embeddings:
        attach_embeddings(documents, embeddings)
    query_map = dict(read_tsv_pairs(queries))
    judged = read_qrels(qrels)
    pseudo = read_tsv_pairs(pseudo_queries) if pseudo_queries else []
    if split:
        roles = dict(read_tsv_pairs(split))
        train = sorted(q for q, r in roles.items() if r == "train")
        test = sorted(q for q, r in roles.items() if r == "test")
    else:
        train, test = split_queries(list(judged), test_fraction, seed)
    bundle = DatasetBundle(documents, query_map, judged, train, test, pseudo)
    bundle.validate()
    return bundle


# ---------------------------------------------------------------------------
# Synthetic topic corpus
# ---------------------------------------------------------------------------

_SYLLABLES = ["ba", "ko", "ri", "tu", "me", "sa", "lo", "ni", "pe", "du", "ga", "vi",
              "zo", "he", "ju", "fa", "wy", "xe", "qu", "mo"]


def _make_words(rng: np.random.Generator, n: int, taken: set) -> List[str]:
    words = []
    while len(words) < n:
        w = "".join(rng.choice(_SYLLABLES, size=3))
        if w not in taken:
            taken.add(w)
            words.append(w)
    return words


def make_synthetic_dataset(n_docs: int = 200, n_queries: int = 60, grades: Sequence[int] = (0, 1, 2, 3),
                           seed: int = 7, n_domains: int = 10, pseudo_per_doc: int = 3, mix_prob: float = 0.7,
                           test_fraction: float = 0.25) -> DatasetBundle:
    """Topic corpus where relevance grows with the number of shared query terms.

    Queries are phrases of ``max(grades)`` topic terms drawn from one of
    ``n_domains`` domains. For every query and positive grade g an anchor
    document is written with g of the query's topic terms; with probability
    ``mix_prob`` a document also borrows one topic term of another query in
    its domain, so queries collect extra lower-grade documents. A document's
    grade for a query is the number of that query's terms it contains.
    Grade-0 judgments point at other documents of the same domain.
    Pseudo-queries are short word samples of each document.
    """
    grades = sorted(set(int(g) for g in grades))
    if not grades or not set(grades) <= {0, 1, 2, 3}:
        raise DataError("grades must be a non-empty subset of {0, 1, 2, 3}")
    positive = [g for g in grades if g >= 1]
    if not positive:
        raise DataError("need at least one positive grade")
    if n_queries < 1 or n_domains < 1:
        raise DataError("need at least one query and one domain")
    if n_docs < n_queries * len(positive):
        raise DataError(f"n_docs must be at least {n_queries * len(positive)}")
    n_terms = max(positive)

    rng = np.random.default_rng(seed)
    taken: set = set()
    background = _make_words(rng, 120, taken)
    per_domain = -(-n_queries // n_domains)
    domain_words = [_make_words(rng, 12, taken) for _ in range(n_domains)]
    topic_words = [_make_words(rng, per_domain * n_terms, taken) for _ in range(n_domains)]

    def noise(domain: int, n_domain: int, n_background: int) -> List[str]:
        return list(rng.choice(domain_words[domain], size=n_domain)) + list(rng.choice(background, size=n_background))

    documents: List[Document] = []
    queries: Dict[str, str] = {}
    query_terms: Dict[str, List[str]] = {}
    query_domain: Dict[str, int] = {}
    domain_queries: Dict[int, List[str]] = {d: [] for d in range(n_domains)}
    domain_docs: Dict[int, List[str]] = {d: [] for d in range(n_domains)}
    doc_terms: Dict[str, set] = {}

    for qi in range(n_queries):
        qid = f"q{qi:03d}"
        domain = qi % n_domains
        slot = qi // n_domains
        query_terms[qid] = topic_words[domain][slot * n_terms:(slot + 1) * n_terms]
        queries[qid] = " ".join(query_terms[qid])
        query_domain[qid] = domain
        domain_queries[domain].append(qid)

    def add_doc(domain: int, terms: List[str], n_domain: int) -> None:
        words = list(terms) * 2 + noise(domain, n_domain, 8)
        rng.shuffle(words)
        docid = f"d{len(documents):04d}"
        documents.append(Document(docid, " ".join(words)))
        domain_docs[domain].append(docid)
        doc_terms[docid] = set(terms)

    def borrowed(domain: int, owner: str) -> List[str]:
        # one term of another query in the same domain, with probability mix_prob
        others = [q for q in domain_queries[domain] if q != owner]
        if not others or rng.random() >= mix_prob:
            return []
        other = others[int(rng.integers(len(others)))]
        return [query_terms[other][int(rng.integers(n_terms))]]

    # anchor documents: one per (query, positive grade)
    for qid in queries:
        domain = query_domain[qid]
        for g in positive:
            chosen = list(rng.choice(query_terms[qid], size=g, replace=False))
            add_doc(domain, chosen + borrowed(domain, qid), 5)
    while len(documents) < n_docs:
        domain = int(rng.integers(n_domains))
        add_doc(domain, borrowed(domain, ""), 8)

    # grade = number of the query's topic terms a document contains
    qrels: Dict[str, Dict[str, int]] = {}
    for qid in queries:
        terms = set(query_terms[qid])
        qrels[qid] = {}
        for docid in domain_docs[query_domain[qid]]:
            g = len(terms & doc_terms[docid])
            if g in positive:
                qrels[qid][docid] = g

    if 0 in grades:
        for qid in queries:
            pool = [d for d in domain_docs[query_domain[qid]] if d not in qrels[qid]]
            if not pool:
                pool = [d.internal_id for d in documents if d.internal_id not in qrels[qid]]
            for d in rng.choice(pool, size=min(2, len(pool)), replace=False):
                qrels[qid][str(d)] = 0

    pseudo: List[Tuple[str, str]] = []
    for doc in documents:
        words = doc.text.split()
        for _ in range(pseudo_per_doc):
            pseudo.append((doc.internal_id, " ".join(rng.choice(words, size=min(3, len(words)), replace=False))))

    train, test = split_queries(list(queries), test_fraction, seed)
    bundle = DatasetBundle(documents, queries, qrels, train, test, pseudo)
    bundle.validate()
    return bundle
