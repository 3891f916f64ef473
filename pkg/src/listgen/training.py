"""Training, re-training, retrieval and evaluation loops."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .calibration import CalibrationConfig, CalibrationItem, GeneratedCandidateList, retraining_objective
from .config import ExperimentConfig
from .data import DatasetBundle
from .decoding import Ranked, constrained_beam_search
from .docids import DecimalTrie, assign_docids, build_trie, embed_corpus
from .metrics import evaluate_run
from .model import AdamConfig, AdamState, ScorerModel, evaluate, optimizer_step
from .objectives import (RelevanceJudgment, TrainingBatch, build_ground_truth_lists,
                         training_objective)

logger = logging.getLogger(__name__)


def build_docids(bundle: DatasetBundle, config: ExperimentConfig) -> Dict[str, str]:
    vectors = embed_corpus(bundle.documents, config.embed_dim_docs, config.seed)
    return assign_docids(vectors, [d.internal_id for d in bundle.documents],
                         config.branching, config.leaf_max, config.seed)


def new_model(config: ExperimentConfig) -> ScorerModel:
    return ScorerModel(config.embed_dim, config.hidden_dim, config.vocab_size,
                       vocab_seed=config.seed, seed=config.seed)


class _Cycler:
    """Reshuffles a pool every pass and hands out fixed-size chunks.

    With ``refill`` the pool itself is regenerated (from the pass number)
    at the start of every pass.
    """

    def __init__(self, items: Sequence, rng: np.random.Generator, refill=None):
        self.refill = refill
        self.passes = 0
        self.items = list(refill(0)) if refill else list(items)
        self.rng = rng
        self.order: List[int] = []

    def take(self, n: int) -> list:
        out = []
        while len(out) < min(n, len(self.items)):
            if not self.order:
                if self.refill and self.passes > 0:
                    self.items = list(self.refill(self.passes))
                self.passes += 1
                self.order = list(self.rng.permutation(len(self.items)))
            out.append(self.items[self.order.pop()])
        return out


@dataclass
class StageOneData:
    documents: list
    query_pairs: List[Tuple[str, str]]  # (query text, docid)
    judgments: Dict[str, List[RelevanceJudgment]]  # train qid -> positive judgments
    queries: Dict[str, str]


def stage_one_data(bundle: DatasetBundle, docid_map: Mapping[str, str]) -> StageOneData:
    pairs, judgments = [], {}
    for qid in bundle.train_qids:
        positive = [RelevanceJudgment(qid, d, g) for d, g in sorted(bundle.qrels.get(qid, {}).items()) if g >= 1]
        if not positive:
            logger.warning("query %s has no relevant documents; skipped", qid)
            continue
        judgments[qid] = positive
        pairs += [(bundle.queries[qid], docid_map[j.internal_id]) for j in positive]
    pairs += [(text, docid_map[d]) for d, text in bundle.pseudo_queries]
    return StageOneData(bundle.documents, pairs, judgments, bundle.queries)


def sample_lists(data: StageOneData, docid_map, samples_per_query: int, seed: int) -> List[Tuple[str, List[str]]]:
    out = []
    for n, qid in enumerate(sorted(data.judgments)):
        for lst in build_ground_truth_lists(data.judgments[qid], samples_per_query, seed * 100_003 + n, docid_map):
            out.append((data.queries[qid], lst.docids))
    return out


def train_stage_one(bundle: DatasetBundle, docid_map: Mapping[str, str], config: ExperimentConfig,
                    model: Optional[ScorerModel] = None) -> Tuple[ScorerModel, List[float]]:
    """Optimize listwise + indexing + retrieval terms; returns the model and its loss trace.

    Ground-truth lists are sampled for every variant (the pointwise variant
    gives them zero weight) so that all variants consume identical batches.
    """
    model = model or new_model(config)
    data = stage_one_data(bundle, docid_map)
    rng = np.random.default_rng(config.seed + 1)
    docs = _Cycler(data.documents, rng)
    pairs = _Cycler(data.query_pairs, rng)
    lists = _Cycler((), rng, lambda epoch: sample_lists(data, docid_map, config.samples_per_query, epoch))
    adam = AdamConfig(config.base_lr, config.steps, config.warmup_fraction, config.weight_decay)
    state = AdamState(model)
    trace = []
    for step in range(config.steps):
        term = step % 3 if config.batch_mode == "round_robin" else None
        batch = TrainingBatch()
        if term in (None, 0):
            batch.documents = docs.take(config.index_batch)
        if term in (None, 1):
            batch.query_pairs = pairs.take(config.retrieval_batch)
        if term in (None, 2):
            batch.lists = lists.take(config.list_batch)
        count = len(batch.documents) + len(batch.query_pairs) + len(batch.lists)
        if count == 0:
            trace.append(0.0)
            continue
        obj = training_objective(model, batch, docid_map, config.variant, config.label_smoothing,
                                 config.max_doc_tokens)
        value, grads = evaluate(model, (1.0 / count) * obj, with_grad=True)
        optimizer_step(model, grads, step, adam, state)
        trace.append(value)
        if (step + 1) % 500 == 0:
            logger.info("step %d loss %.4f", step + 1, float(np.mean(trace[-500:])))
    return model, trace


def decode_queries(model: ScorerModel, queries: Mapping[str, str], qids: Sequence[str], trie: DecimalTrie,
                   beam_width: int, k: int) -> Dict[str, Ranked]:
    return {qid: constrained_beam_search(model, model.encode_text(queries[qid]), trie, beam_width, k)
            for qid in sorted(qids)}


def calibration_items(model: ScorerModel, bundle: DatasetBundle, docid_map: Mapping[str, str],
                      trie: DecimalTrie, config: ExperimentConfig) -> List[CalibrationItem]:
    """Decode every training query with ``model`` and freeze the candidate lists."""
    items = []
    for qid in sorted(bundle.train_qids):
        judg = bundle.qrels.get(qid, {})
        if not any(g >= 1 for g in judg.values()):
            continue
        truth = {docid_map[d]: g for d, g in judg.items()}
        beam = constrained_beam_search(model, model.encode_text(bundle.queries[qid]), trie,
                                       config.beam_width, config.beam_width)
        items.append(CalibrationItem(bundle.queries[qid], GeneratedCandidateList.from_beam(qid, beam, truth), truth))
    return items


def retrain(model: ScorerModel, bundle: DatasetBundle, docid_map: Mapping[str, str], trie: DecimalTrie,
            config: ExperimentConfig) -> Tuple[ScorerModel, List[float]]:
    """Relevance-calibration re-training on lists decoded by the stage-one model."""
    model = model.copy()
    items = calibration_items(model, bundle, docid_map, trie, config)
    if config.retrain_steps == 0 or not items:
        return model, []
    cal = CalibrationConfig(config.beta, config.margin, config.length_penalty, config.gamma)
    rng = np.random.default_rng(config.seed + 2)
    chunks = _Cycler(items, rng)
    data = stage_one_data(bundle, docid_map) if config.retrain_keep_training_terms else None
    docs = _Cycler(bundle.documents, rng)
    pairs = _Cycler(data.query_pairs, rng) if data else None
    adam = AdamConfig(config.retrain_lr, config.retrain_steps, config.warmup_fraction, config.weight_decay)
    state = AdamState(model)
    trace = []
    for step in range(config.retrain_steps):
        batch_items = chunks.take(config.retrain_batch)
        obj = (1.0 / len(batch_items)) * retraining_objective(model, batch_items, cal)
        if data is not None:
            extra = TrainingBatch(docs.take(config.index_batch), pairs.take(config.retrieval_batch))
            obj = obj + (1.0 / (len(extra.documents) + len(extra.query_pairs))) * training_objective(
                model, extra, docid_map, "pointwise", config.label_smoothing, config.max_doc_tokens)
        value, grads = evaluate(model, obj, with_grad=True)
        optimizer_step(model, grads, step, adam, state)
        trace.append(value)
    return model, trace


def retrieve(model: ScorerModel, bundle: DatasetBundle, qids: Sequence[str], trie: DecimalTrie,
             config: ExperimentConfig) -> Tuple[Dict[str, Ranked], float]:
    """Decode ``qids``; returns the rankings and mean seconds per query."""
    start = time.perf_counter()
    runs = decode_queries(model, bundle.queries, qids, trie, config.beam_width, config.k)
    elapsed = (time.perf_counter() - start) / max(1, len(qids))
    logger.info("decoded %d queries, %.2f ms/query", len(qids), 1000 * elapsed)
    return runs, elapsed


def run_to_internal(runs: Mapping[str, Ranked], trie: DecimalTrie) -> Dict[str, List[str]]:
    return {q: [trie.resolve(d) for d, _ in r] for q, r in runs.items()}


@dataclass
class ExperimentResult:
    docid_map: Dict[str, str]
    runs: Dict[str, Dict[str, Ranked]] = field(default_factory=dict)
    metrics: Dict[str, Dict[str, float]] = field(default_factory=dict)
    traces: Dict[str, List[float]] = field(default_factory=dict)


def run_experiment(bundle: DatasetBundle, config: ExperimentConfig,
                   variants: Sequence[str] = ("pointwise", "listmle", "listgr"),
                   retrain_variant: Optional[str] = "listgr",
                   metrics: Sequence[str] = ("ndcg@5", "ndcg@20", "err@20", "p@20", "mrr@20")) -> ExperimentResult:
    """Train each variant, optionally re-train one, and evaluate on the test queries."""
    docid_map = build_docids(bundle, config)
    trie = build_trie(docid_map)
    result = ExperimentResult(docid_map)
    models = {}
    for variant in variants:
        cfg = config.replace(variant=variant)
        model, trace = train_stage_one(bundle, docid_map, cfg)
        models[variant] = model
        result.traces[variant] = trace
    if retrain_variant is not None:
        model, trace = retrain(models[retrain_variant], bundle, docid_map, trie, config)
        name = f"{retrain_variant}+retrain"
        models[name] = model
        result.traces[name] = trace
    for name, model in models.items():
        runs, _ = retrieve(model, bundle, bundle.test_qids, trie, config)
        result.runs[name] = runs
        means, _ = evaluate_run(run_to_internal(runs, trie), bundle.qrels, metrics, config.g_max, bundle.test_qids)
        result.metrics[name] = means
    return result
