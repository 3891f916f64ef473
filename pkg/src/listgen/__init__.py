"""Listwise generative retrieval: docid assignment, a docid scorer, listwise
training, relevance calibration, constrained decoding and evaluation."""

from .calibration import CalibrationConfig, GeneratedCandidateList, retraining_loss
from .config import ExperimentConfig, load_config
from .data import DatasetBundle, load_bundle, make_synthetic_dataset
from .decoding import constrained_beam_search, exhaustive_rank
from .docids import DecimalTrie, Document, assign_docids, build_trie, embed_corpus
from .metrics import err_at_k, evaluate_run, hits_at_k, mrr_at_k, ndcg_at_k, precision_at_k
from .model import ScorerModel, sequence_logprob, token_logprobs
from .objectives import build_ground_truth_lists, listmle_loss, listwise_loss, training_loss
from .training import retrain, run_experiment, train_stage_one

__version__ = "0.1.0"
