"""
Relevance calibration
=====================

Decoded candidates get token targets that grow with their grade, and a
hinge keeps their length-penalized scores apart in grade order. A few
optimizer steps on a toy query reorder the scores.
"""

# %%
import numpy as np
from scipy.stats import kendalltau

from listgen.calibration import (CalibrationConfig, CalibrationItem, GeneratedCandidateList,
                                 length_penalized_score, retraining_objective, sequence_calibration_loss,
                                 token_target_weights)
from listgen.decoding import constrained_beam_search
from listgen.docids import build_trie
from listgen.model import AdamConfig, AdamState, ScorerModel, evaluate, optimizer_step

beam = [("4", -0.9), ("12", -1.1), ("30", -1.5), ("7", -2.0)]
truth = {"12": 3, "30": 2}
cands = GeneratedCandidateList.from_beam("q", beam, truth)
print("target order:", cands.docids(), "beam order:", cands.beam_order)
print("token weights:", token_target_weights(cands, truth, beta=0.002))
print("hinge on equal scores:", sequence_calibration_loss([-1.0, -1.0, -1.0], 0.001))

# %%
# a toy where the model's favourites are the least relevant
docid_map = {f"d{i}": f"{i // 3}{i % 3}" for i in range(9)}
model = ScorerModel(embed_dim=8, hidden_dim=16, vocab_size=64, seed=11)
q = np.array([4, 17, 33])
decoded = constrained_beam_search(model, q, build_trie(docid_map), beam_width=9, k=9)
truth = {d: g for (d, _), g in zip(decoded, [0, 0, 1, 1, 1, 2, 2, 3, 3])}
item = CalibrationItem(q, GeneratedCandidateList.from_beam("q", decoded, truth), truth)
grades = [truth[d] for d in item.candidates.docids()]


def tau():
    scores = [length_penalized_score(model, q, d) for d in item.candidates.docids()]
    return kendalltau(scores, grades).statistic


print("Kendall tau before:", round(tau(), 3))
adam, state = AdamConfig(base_lr=1e-2, total_steps=60, warmup_fraction=0.0), AdamState(model)
for step in range(60):
    _, grads = evaluate(model, retraining_objective(model, [item], CalibrationConfig()), with_grad=True)
    optimizer_step(model, grads, step, adam, state)
print("Kendall tau after: ", round(tau(), 3))
