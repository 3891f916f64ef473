"""Ranked retrieval metrics over graded judgments, plus TREC file I/O.

``run`` arguments are ordered sequences of document ids (best first) and
``judgments`` map document id -> grade for a single query. Documents
missing from the judgments count as grade 0.
"""

from __future__ import annotations

import json
import logging
import math
from collections import defaultdict
from typing import Dict, Iterable, List, Mapping, Sequence, Tuple

logger = logging.getLogger(__name__)


class MetricError(ValueError):
    pass


def _grades(run: Sequence[str], judgments: Mapping[str, int], k: int) -> List[int]:
    if k < 1:
        raise MetricError("k must be >= 1")
    return [int(judgments.get(d, 0)) for d in list(run)[:k]]


def dcg(grades: Iterable[int]) -> float:
    return sum((2.0**g - 1.0) / math.log2(r + 1) for r, g in enumerate(grades, 1))


def ndcg_at_k(run: Sequence[str], judgments: Mapping[str, int], k: int) -> float:
    """Exponential gain 2^g - 1, log2(rank + 1) discount."""
    grades = _grades(run, judgments, k)
    ideal = dcg(sorted(judgments.values(), reverse=True)[:k])
    if ideal <= 0:
        return 0.0
    return dcg(grades) / ideal


def err_at_k(run: Sequence[str], judgments: Mapping[str, int], k: int, g_max: int = 3) -> float:
    """Expected reciprocal rank with stopping probability (2^g - 1) / 2^g_max."""
    if judgments and max(judgments.values()) > g_max:
        raise MetricError(f"grade exceeds g_max={g_max}")
    total, not_stopped = 0.0, 1.0
    for r, g in enumerate(_grades(run, judgments, k), 1):
        stop = (2.0**g - 1.0) / 2.0**g_max
        total += not_stopped * stop / r
        not_stopped *= 1.0 - stop
    return total


def precision_at_k(run: Sequence[str], judgments: Mapping[str, int], k: int) -> float:
    return sum(1 for g in _grades(run, judgments, k) if g >= 1) / k


def mrr_at_k(run: Sequence[str], judgments: Mapping[str, int], k: int) -> float:
    for r, g in enumerate(_grades(run, judgments, k), 1):
        if g >= 1:
            return 1.0 / r
    return 0.0


def hits_at_k(run: Sequence[str], judgments: Mapping[str, int], k: int) -> int:
    return int(any(g >= 1 for g in _grades(run, judgments, k)))


def compute(name: str, run: Sequence[str], judgments: Mapping[str, int], g_max: int = 3) -> float:
    """Evaluate a metric given as e.g. ``"ndcg@5"`` or ``"err@20"``."""
    try:
        kind, k = name.lower().split("@")
        k = int(k)
    except ValueError:
        raise MetricError(f"bad metric name {name!r}") from None
    if kind == "ndcg":
        return ndcg_at_k(run, judgments, k)
    if kind == "err":
        return err_at_k(run, judgments, k, g_max)
    if kind == "p":
        return precision_at_k(run, judgments, k)
    if kind == "mrr":
        return mrr_at_k(run, judgments, k)
    if kind == "hits":
        return float(hits_at_k(run, judgments, k))
    raise MetricError(f"unknown metric {kind!r}")


DEFAULT_METRICS = ("ndcg@5", "ndcg@20", "err@20", "p@20", "mrr@20", "hits@1", "hits@10")


def evaluate_run(runs: Mapping[str, Sequence[str]], qrels: Mapping[str, Mapping[str, int]],
                 metrics: Sequence[str] = DEFAULT_METRICS, g_max: int = 3,
                 query_ids: Sequence[str] = None) -> Tuple[Dict[str, float], Dict[str, Dict[str, float]]]:
    """Per-query metric values and their means over ``query_ids`` (default: judged queries).

    Queries absent from the run score 0 on every metric.
    """
    qids = sorted(qrels if query_ids is None else query_ids)
    per_query: Dict[str, Dict[str, float]] = {}
    for qid in qids:
        judg = qrels.get(qid, {})
        ranking = runs.get(qid, [])
        per_query[qid] = {m: compute(m, ranking, judg, g_max) for m in metrics}
    means = {m: (sum(per_query[q][m] for q in qids) / len(qids) if qids else 0.0) for m in metrics}
    return means, per_query


# ---------------------------------------------------------------------------
# TREC formats
# ---------------------------------------------------------------------------


def read_qrels(path) -> Dict[str, Dict[str, int]]:
    """``qid<TAB>0<TAB>docid<TAB>grade`` (any whitespace accepted)."""
    out: Dict[str, Dict[str, int]] = defaultdict(dict)
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 4:
                raise MetricError(f"{path}:{lineno}: expected 4 qrels fields")
            qid, _, docid, grade = parts
            try:
                g = int(grade)
            except ValueError:
                raise MetricError(f"{path}:{lineno}: grade {grade!r} is not an integer") from None
            if g < 0:
                raise MetricError(f"{path}:{lineno}: negative grade")
            if docid in out[qid]:
                raise MetricError(f"{path}:{lineno}: duplicate judgment for ({qid}, {docid})")
            out[qid][docid] = g
    return dict(out)


def write_qrels(path, qrels: Mapping[str, Mapping[str, int]]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for qid in qrels:
            for docid, g in qrels[qid].items():
                f.write(f"{qid}\t0\t{docid}\t{g}\n")


def read_run(path) -> Dict[str, List[str]]:
    """TREC run lines ``qid Q0 docid rank score tag``; ordered by rank."""
    rows: Dict[str, List[Tuple[int, str]]] = defaultdict(list)
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 6:
                raise MetricError(f"{path}:{lineno}: expected 6 run fields")
            qid, _, docid, rank, score, _ = parts
            try:
                rows[qid].append((int(rank), docid))
                float(score)
            except ValueError:
                raise MetricError(f"{path}:{lineno}: bad rank or score") from None
    return {q: [d for _, d in sorted(v)] for q, v in rows.items()}


def format_report(means: Mapping[str, float]) -> str:
    return "".join(f"{m}\t{v:.6f}\n" for m, v in means.items())


def format_per_query(per_query: Mapping[str, Mapping[str, float]]) -> str:
    return "".join(
        json.dumps({"qid": q, **{m: round(v, 6) for m, v in vals.items()}}, sort_keys=True) + "\n"
        for q, vals in per_query.items()
    )
