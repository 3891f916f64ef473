"""Relevance calibration over beam-decoded candidate lists.

Re-training pulls the generation likelihood of decoded candidates toward
their relevance grades in two ways: token-level targets that grow with the
grade (and a small shared budget for candidates outside the ground truth),
and a pairwise hinge on length-penalized sequence scores with margins that
grow with the rank distance.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .docids import docid_tokens
from .model import Objective, ScorerModel, SequenceBatch, evaluate
from .objectives import RankedLabelList, SequenceNLL, ScoredListObjective, as_query_tokens


class CalibrationError(ValueError):
    pass


@dataclass
class CalibrationConfig:
    beta: float = 0.002
    margin: float = 0.001
    length_penalty: float = 0.6
    gamma: float = 100.0

    def __post_init__(self):
        if not 0.0 < self.beta < 1.0:
            raise CalibrationError("beta must lie in (0, 1)")
        if self.margin < 0 or self.length_penalty < 0 or self.gamma < 0:
            raise CalibrationError("margin, length_penalty and gamma must be non-negative")


@dataclass
class GeneratedCandidate:
    docid: str
    seq_logprob: float
    grade: int = 0
    judged: bool = False


@dataclass
class GeneratedCandidateList:
    """Decoded candidates of one query.

    ``candidates`` is in calibration-target order (grade descending, judged
    before unjudged, then beam score descending, then docid);
    ``beam_order`` keeps the docids in the order the decoder produced them.
    """

    query_id: str
    candidates: List[GeneratedCandidate]
    beam_order: List[str] = field(default_factory=list)

    def __post_init__(self):
        ids = [c.docid for c in self.candidates]
        if len(set(ids)) != len(ids):
            raise CalibrationError("duplicate docid among candidates")

    @classmethod
    def from_beam(cls, query_id: str, beam: Sequence[Tuple[str, float]],
                  truth: Union[Mapping[str, int], RankedLabelList]) -> "GeneratedCandidateList":
        grades = _grade_map(truth)
        cands = [GeneratedCandidate(d, float(s), grades.get(d, 0), d in grades) for d, s in beam]
        ordered = sorted(cands, key=lambda c: (-c.grade, not c.judged, -c.seq_logprob, c.docid))
        return cls(query_id, ordered, [d for d, _ in beam])

    def docids(self) -> List[str]:
        return [c.docid for c in self.candidates]


def _grade_map(truth) -> Mapping[str, int]:
    if isinstance(truth, RankedLabelList):
        return dict(zip(truth.docids, truth.grades))
    return dict(truth)


def token_target_weights(candidates: GeneratedCandidateList, truth, beta: float = 0.002) -> List[float]:
    """Weight applied to every token of each candidate, aligned with ``candidates.candidates``.

    A candidate judged with grade M gets 1 - 1/(M+1)^2. Candidates outside
    the judgments share ``beta`` equally.
    """
    if beta <= 0:
        raise CalibrationError("beta must be positive")
    if not candidates.candidates:
        raise CalibrationError("empty candidate list")
    grades = _grade_map(truth)
    absent = sum(1 for c in candidates.candidates if c.docid not in grades)
    out = []
    for c in candidates.candidates:
        if c.docid in grades:
            out.append(1.0 - 1.0 / (grades[c.docid] + 1) ** 2)
        else:
            out.append(beta / absent)
    return out


def sequence_calibration_grad(scores: Sequence[float], margin: float) -> Tuple[float, np.ndarray]:
    """sum_{i<j} max(0, s_j - s_i + (j - i) * margin) and a subgradient."""
    s = np.asarray(scores, dtype=np.float64)
    n = len(s)
    gap = s[None, :] - s[:, None] + (np.arange(n)[None, :] - np.arange(n)[:, None]) * margin
    active = np.triu(gap > 0, k=1)
    value = float(np.sum(np.where(active, gap, 0.0)))
    grad = active.sum(0) - active.sum(1)
    return value, grad.astype(np.float64)


def sequence_calibration_loss(scores: Sequence[float], margin: float = 0.001) -> float:
    if len(scores) == 0:
        raise CalibrationError("empty score list")
    return sequence_calibration_grad(scores, margin)[0]


def length_penalized_score(model: ScorerModel, query_tokens, candidate: Union[GeneratedCandidate, str],
                           length_penalty: float = 0.6) -> float:
    docid = candidate.docid if isinstance(candidate, GeneratedCandidate) else candidate
    toks = docid_tokens(docid)
    fwd = model.forward(SequenceBatch([as_query_tokens(model, query_tokens)], [toks]))
    return float(fwd.token_logps().sum()) / len(toks) ** length_penalty


class SequenceCalibrationObjective(ScoredListObjective):
    def __init__(self, lists, margin: float, length_penalty: float):
        super().__init__(lists, length_power=length_penalty)
        self.margin = margin

    def list_value_and_grad(self, scores):
        return sequence_calibration_grad(scores, self.margin)


@dataclass
class CalibrationItem:
    """One training query with its frozen candidate list and judgments."""

    query: object  # text or token ids
    candidates: GeneratedCandidateList
    truth: Mapping[str, int]


def token_calibration_objective(model: ScorerModel, items: Sequence[CalibrationItem], beta: float) -> SequenceNLL:
    queries, ids, weights = [], [], []
    for item in items:
        q = as_query_tokens(model, item.query)
        for c, w in zip(item.candidates.candidates, token_target_weights(item.candidates, item.truth, beta)):
            queries.append(q)
            ids.append(c.docid)
            weights.append(w)
    return SequenceNLL(queries, ids, weights=weights)


def sequence_calibration_objective(model: ScorerModel, items: Sequence[CalibrationItem],
                                   margin: float, length_penalty: float) -> SequenceCalibrationObjective:
    lists = [(as_query_tokens(model, it.query), it.candidates.docids()) for it in items]
    return SequenceCalibrationObjective(lists, margin, length_penalty)


def retraining_objective(model: ScorerModel, items: Sequence[CalibrationItem],
                         config: Optional[CalibrationConfig] = None) -> Objective:
    config = config or CalibrationConfig()
    return (token_calibration_objective(model, items, config.beta)
            + config.gamma * sequence_calibration_objective(model, items, config.margin, config.length_penalty))


def token_calibration_loss(model: ScorerModel, query_tokens, candidates: GeneratedCandidateList,
                           weights: Sequence[float]) -> float:
    q = as_query_tokens(model, query_tokens)
    obj = SequenceNLL([q] * len(candidates.candidates), candidates.docids(), weights=list(weights))
    return evaluate(model, obj)


def retraining_loss(model: ScorerModel, items: Sequence[CalibrationItem],
                    config: Optional[CalibrationConfig] = None) -> float:
    return evaluate(model, retraining_objective(model, items, config))
