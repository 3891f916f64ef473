"""
Variants on the synthetic topic corpus
======================================

Trains the pointwise, ListMLE and position-aware variants, re-trains the
last one with relevance calibration, and scores the held-out queries.
Pass ``--full`` for the 2,000-step setting (about a minute per seed).
The default 300-step run is a smoke run; the variants are not yet
separated at that budget and their order is noise.
"""

# %%
import sys

from listgen.config import ExperimentConfig
from listgen.data import make_synthetic_dataset
from listgen.training import run_experiment

full = "--full" in sys.argv
bundle = make_synthetic_dataset(200, 60, (0, 1, 2, 3), seed=7)
print(len(bundle.train_qids), "train queries,", len(bundle.test_qids), "test queries")
print("q000:", bundle.queries["q000"], "->", sorted(bundle.qrels["q000"].items(), key=lambda kv: -kv[1])[:4])

# %%
config = ExperimentConfig(seed=0) if full else ExperimentConfig(seed=0, steps=300, retrain_steps=30)
result = run_experiment(bundle, config)
for name, values in result.metrics.items():
    print(f"{name:16s}", "  ".join(f"{m}={v:.3f}" for m, v in values.items()))
