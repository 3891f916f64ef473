"""Pointwise and listwise training losses for the docid scorer.

The score-level functions (``positional_conditional``, ``listwise_loss``,
``listmle_loss`` ...) work on plain score vectors. The ``*Objective``
classes wrap them as differentiable :class:`~listgen.model.Objective`
terms whose scores are length-normalized docid log-probabilities.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .docids import DOCID_VOCAB_SIZE, Document, docid_tokens
from .model import ForwardResult, Objective, ScorerModel, SequenceBatch, evaluate

MAX_DOC_TOKENS = 512

QueryLike = Union[str, np.ndarray, Sequence[int]]


class ObjectiveError(ValueError):
    pass


@dataclass(frozen=True)
class RelevanceJudgment:
    query_id: str
    internal_id: str
    grade: int

    def __post_init__(self):
        if self.grade < 0:
            raise ObjectiveError(f"negative grade for ({self.query_id}, {self.internal_id})")


@dataclass
class RankedLabelList:
    """Ground-truth docids of one query in non-increasing grade order."""

    query_id: str
    docids: List[str]
    grades: List[int] = field(default_factory=list)

    def __post_init__(self):
        if not self.docids:
            raise ObjectiveError("ranked list must be non-empty")
        if len(set(self.docids)) != len(self.docids):
            raise ObjectiveError("duplicate docid in ranked list")
        if self.grades and any(a < b for a, b in zip(self.grades, self.grades[1:])):
            raise ObjectiveError("grades must be non-increasing along the list")

    def __len__(self):
        return len(self.docids)


# ---------------------------------------------------------------------------
# Score-level functions
# ---------------------------------------------------------------------------


def _suffix_logsumexp(s: np.ndarray) -> np.ndarray:
    """out[i] = log sum_{k >= i} exp(s[k])."""
    return np.logaddexp.accumulate(s[::-1])[::-1]


def positional_conditional(scores: Sequence[float], i: int) -> float:
    """Probability that item ``i`` (1-based) is picked from the suffix ``i..n``."""
    s = np.asarray(scores, dtype=np.float64)
    if not 1 <= i <= len(s):
        raise ObjectiveError("position out of range")
    tail = s[i - 1 :]
    m = tail.max()
    w = np.exp(tail - m)
    return float(w[0] / w.sum())


def position_weight(i: int, n: int) -> float:
    if not 1 <= i <= n:
        raise ObjectiveError("position out of range")
    return float(2 ** (n - i) - 1)


def position_weights(n: int) -> np.ndarray:
    return np.array([position_weight(i, n) for i in range(1, n + 1)])


def weighted_pl_loss(scores: Sequence[float], weights: Sequence[float]) -> Tuple[float, np.ndarray]:
    """sum_i w_i * (-s_i + logsumexp(s_i..s_n)) and its gradient w.r.t. the scores."""
    s = np.asarray(scores, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    if s.shape != w.shape:
        raise ObjectiveError("scores and weights differ in length")
    lse = _suffix_logsumexp(s)
    value = float(np.sum(w * (lse - s)))
    # d/ds_k: -w_k + sum_{i <= k} w_i * softmax over suffix i evaluated at k
    grad = -w.copy()
    for i in range(len(s)):
        if w[i] != 0.0:
            grad[i:] += w[i] * np.exp(s[i:] - lse[i])
    return value, grad


def listwise_loss(scores: Sequence[float], weights: Optional[Sequence[float]] = None) -> float:
    """Position-weighted Plackett-Luce loss; default weights are 2^(n-i) - 1."""
    s = np.asarray(scores, dtype=np.float64)
    w = position_weights(len(s)) if weights is None else weights
    return weighted_pl_loss(s, w)[0]


def listmle_loss(scores: Sequence[float]) -> float:
    s = np.asarray(scores, dtype=np.float64)
    if len(s) == 0:
        raise ObjectiveError("empty score list")
    return weighted_pl_loss(s, np.ones_like(s))[0]


def pl_permutation_prob(scores: Sequence[float], permutation: Sequence[int]) -> float:
    """Closed-form Plackett-Luce probability of an ordering (0-based indices).

    Computed as a direct product of ratios of exponentials; deliberately
    independent of the log-space code above so it can serve as a check.
    """
    s = [float(x) for x in scores]
    n = len(s)
    if n > 8:
        raise ObjectiveError("oracle limited to small n")
    if sorted(permutation) != list(range(n)):
        raise ObjectiveError("not a permutation")
    e = [math.exp(x) for x in s]
    prob = 1.0
    remaining = sum(e)
    for idx in permutation:
        prob *= e[idx] / remaining
        remaining -= e[idx]
    return prob


# ---------------------------------------------------------------------------
# Ground-truth list construction
# ---------------------------------------------------------------------------


def build_ground_truth_lists(
    judgments: Sequence[RelevanceJudgment],
    samples_per_query: int = 10,
    seed: int = 0,
    docid_map: Optional[Mapping[str, str]] = None,
) -> List[RankedLabelList]:
    """Sample ranked lists for a single query.

    The list length is the highest grade present; position ``i`` draws a
    document of grade ``n - i + 1``. A missing grade level truncates the
    list there. Distinct lists are drawn until ``samples_per_query`` are
    collected or every combination has been used.
    """
    if not judgments:
        raise ObjectiveError("query has no relevant documents")
    qids = {j.query_id for j in judgments}
    if len(qids) != 1:
        raise ObjectiveError("judgments must belong to one query")
    query_id = qids.pop()
    by_grade: Dict[int, List[str]] = {}
    for j in judgments:
        if j.grade >= 1:
            by_grade.setdefault(j.grade, []).append(j.internal_id)
    if not by_grade:
        raise ObjectiveError("query has no relevant documents")
    top = max(by_grade)
    levels = []
    for g in range(top, 0, -1):
        if g not in by_grade:
            break
        levels.append((g, sorted(by_grade[g])))

    rng = np.random.default_rng(seed)
    total = math.prod(len(docs) for _, docs in levels)
    want = min(samples_per_query, total)
    if total <= 4 * samples_per_query:
        combos = list(itertools.product(*[docs for _, docs in levels]))
        picks = [combos[i] for i in sorted(rng.choice(total, size=want, replace=False))]
    else:
        seen, picks = set(), []
        while len(picks) < want:
            combo = tuple(docs[rng.integers(len(docs))] for _, docs in levels)
            if combo not in seen:
                seen.add(combo)
                picks.append(combo)
    grades = [g for g, _ in levels]
    out = []
    for combo in picks:
        ids = list(combo) if docid_map is None else [docid_map[d] for d in combo]
        out.append(RankedLabelList(query_id, ids, grades))
    return out


# ---------------------------------------------------------------------------
# Differentiable objectives
# ---------------------------------------------------------------------------


def as_query_tokens(model: ScorerModel, q: QueryLike, max_tokens: Optional[int] = None) -> np.ndarray:
    if isinstance(q, str):
        return model.encode_text(q, max_tokens)
    return np.asarray(q, dtype=np.int64)


def _scatter_targets(view: ForwardResult, dtok: np.ndarray) -> np.ndarray:
    """Place per-target-token gradients into a full (B, T, V) array."""
    grad = np.zeros_like(view.logp)
    b, t = view.targets.shape
    grad[np.arange(b)[:, None], np.arange(t)[None, :], view.targets] = dtok * view.mask
    return grad


class SequenceNLL(Objective):
    """-sum of weighted teacher-forced token log-probs.

    ``weights`` may be one scalar per sequence or one array per sequence
    with a weight for each of its tokens. ``label_smoothing`` mixes the
    one-hot target with the uniform distribution over docid tokens.
    """

    def __init__(self, queries: Sequence[np.ndarray], docids: Sequence[str],
                 weights=None, label_smoothing: float = 0.0):
        self.queries = list(queries)
        self.targets = [docid_tokens(d) for d in docids]
        self.weights = weights
        self.label_smoothing = label_smoothing

    def sequences(self):
        return self.queries, self.targets

    def _weight_matrix(self, shape) -> np.ndarray:
        w = np.zeros(shape)
        for i, tgt in enumerate(self.targets):
            if self.weights is None:
                w[i, : len(tgt)] = 1.0
            else:
                w[i, : len(tgt)] = self.weights[i]
        return w

    def value_and_grad(self, view):
        if view is None:
            return 0.0, None
        w = self._weight_matrix(view.targets.shape) * view.mask
        eps = self.label_smoothing
        tok = view.token_logps()
        value = -np.sum((1.0 - eps) * w * tok)
        grad = _scatter_targets(view, -(1.0 - eps) * w)
        if eps:
            value += -np.sum(eps / DOCID_VOCAB_SIZE * w[:, :, None] * view.logp)
            grad += -(eps / DOCID_VOCAB_SIZE) * w[:, :, None] * np.ones_like(view.logp)
        return float(value), grad


class ScoredListObjective(Objective):
    """Shared plumbing for losses over per-query lists of docid scores."""

    def __init__(self, lists: Sequence[Tuple[np.ndarray, Sequence[str]]], length_power: float = 1.0):
        self.lists = [(q, list(ids)) for q, ids in lists]
        self.length_power = length_power

    def sequences(self):
        queries, targets = [], []
        for q, ids in self.lists:
            for d in ids:
                queries.append(q)
                targets.append(docid_tokens(d))
        return queries, targets

    def list_value_and_grad(self, scores: np.ndarray) -> Tuple[float, np.ndarray]:
        raise NotImplementedError

    def value_and_grad(self, view):
        if view is None:
            return 0.0, None
        tok = view.token_logps()
        denom = view.lengths() ** self.length_power
        scores = tok.sum(1) / denom
        total = 0.0
        dscores = np.zeros_like(scores)
        start = 0
        for _, ids in self.lists:
            stop = start + len(ids)
            v, g = self.list_value_and_grad(scores[start:stop])
            total += v
            dscores[start:stop] = g
            start = stop
        dtok = (dscores / denom)[:, None] * np.ones_like(tok)
        return float(total), _scatter_targets(view, dtok)


class ListwiseObjective(ScoredListObjective):
    """Weighted Plackett-Luce loss over length-normalized docid log-probs.

    ``weighting`` is ``"position"`` for 2^(n-i) - 1, ``"uniform"`` for
    plain ListMLE, or ``"zero"`` (the lists are still scored so batches stay
    identical, but contribute nothing).
    """

    def __init__(self, lists, weighting: str = "position"):
        super().__init__(lists, length_power=1.0)
        if weighting not in ("position", "uniform", "zero"):
            raise ObjectiveError(f"unknown weighting {weighting!r}")
        self.weighting = weighting

    def list_value_and_grad(self, scores):
        n = len(scores)
        if self.weighting == "position":
            w = position_weights(n)
        elif self.weighting == "uniform":
            w = np.ones(n)
        else:
            w = np.zeros(n)
        return weighted_pl_loss(scores, w)


def indexing_objective(model: ScorerModel, documents: Sequence[Document], docid_map: Mapping[str, str],
                       max_doc_tokens: int = MAX_DOC_TOKENS, label_smoothing: float = 0.0) -> SequenceNLL:
    queries, ids = [], []
    for doc in documents:
        if doc.internal_id not in docid_map:
            raise ObjectiveError(f"missing docid for document {doc.internal_id!r}")
        queries.append(model.encode_text(doc.text, max_doc_tokens))
        ids.append(docid_map[doc.internal_id])
    return SequenceNLL(queries, ids, label_smoothing=label_smoothing)


def retrieval_objective(model: ScorerModel, pairs: Sequence[Tuple[QueryLike, str]],
                        label_smoothing: float = 0.0) -> SequenceNLL:
    queries = [as_query_tokens(model, q, MAX_DOC_TOKENS) for q, _ in pairs]
    return SequenceNLL(queries, [d for _, d in pairs], label_smoothing=label_smoothing)


def listwise_objective(model: ScorerModel, lists: Sequence[Tuple[QueryLike, Sequence[str]]],
                       weighting: str = "position") -> ListwiseObjective:
    return ListwiseObjective([(as_query_tokens(model, q), ids) for q, ids in lists], weighting)


# ---------------------------------------------------------------------------
# Model-level losses
# ---------------------------------------------------------------------------


def length_normalized_logprob(model: ScorerModel, query_tokens: QueryLike, docid: str) -> float:
    toks = docid_tokens(docid)
    fwd = model.forward(SequenceBatch([as_query_tokens(model, query_tokens)], [toks]))
    return float(fwd.token_logps().sum()) / len(toks)


def indexing_loss(model: ScorerModel, documents: Sequence[Document], docid_map: Mapping[str, str],
                  max_doc_tokens: int = MAX_DOC_TOKENS) -> float:
    return evaluate(model, indexing_objective(model, documents, docid_map, max_doc_tokens))


def retrieval_loss(model: ScorerModel, query_docid_pairs: Sequence[Tuple[QueryLike, str]]) -> float:
    return evaluate(model, retrieval_objective(model, query_docid_pairs))


@dataclass
class TrainingBatch:
    """Inputs for one evaluation of the stage-one loss.

    ``lists`` pairs a query with the docids of one sampled ground-truth list.
    """

    documents: List[Document] = field(default_factory=list)
    query_pairs: List[Tuple[QueryLike, str]] = field(default_factory=list)
    lists: List[Tuple[QueryLike, List[str]]] = field(default_factory=list)


def training_objective(model: ScorerModel, batch: TrainingBatch, docid_map: Mapping[str, str],
                       variant: str = "listgr", label_smoothing: float = 0.0,
                       max_doc_tokens: int = MAX_DOC_TOKENS) -> Objective:
    """listwise + indexing + retrieval terms with unit weights.

    ``variant`` picks the listwise term: ``listgr`` (position weights),
    ``listmle`` (uniform weights) or ``pointwise`` (no listwise term).
    """
    weighting = {"listgr": "position", "listmle": "uniform", "pointwise": "zero"}.get(variant)
    if weighting is None:
        raise ObjectiveError(f"unknown variant {variant!r}")
    return (listwise_objective(model, batch.lists, weighting)
            + indexing_objective(model, batch.documents, docid_map, max_doc_tokens, label_smoothing)
            + retrieval_objective(model, batch.query_pairs, label_smoothing))


def training_loss(model: ScorerModel, batch: TrainingBatch, docid_map: Mapping[str, str],
                  variant: str = "listgr") -> float:
    return evaluate(model, training_objective(model, batch, docid_map, variant))
