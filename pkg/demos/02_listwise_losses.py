"""
Listwise losses on plain score vectors
======================================

The position-aware loss is a Plackett-Luce likelihood where early
positions count more. With all weights equal to one it is ListMLE; with
a single relevant item it vanishes.
"""

# %%
import itertools
import math

import numpy as np

from listgen.objectives import (listmle_loss, listwise_loss, pl_permutation_prob, position_weights,
                                positional_conditional)

scores = np.array([0.0, -1.0, -2.0])
print("weights n=3:", position_weights(3))
print("P(first item picked first):", positional_conditional(scores, 1))

# %%
print("position-aware:", listwise_loss(scores))
print("ListMLE:       ", listmle_loss(scores))
print("uniform weights reproduce ListMLE:", listwise_loss(scores, np.ones(3)))
print("single item:", listwise_loss([1.7]))

# %%
# ListMLE is the negative log of the Plackett-Luce probability of the ground-truth order
total = sum(pl_permutation_prob(scores, p) for p in itertools.permutations(range(3)))
print("sum over permutations:", total)
print("exp(-ListMLE) vs P(identity):", math.exp(-listmle_loss(scores)), pl_permutation_prob(scores, [0, 1, 2]))

# %%
# swapping the top two scores hurts the weighted loss more than plain ListMLE
swapped = scores[[1, 0, 2]]
print("position-aware increase:", listwise_loss(swapped) - listwise_loss(scores))
print("ListMLE increase:       ", listmle_loss(swapped) - listmle_loss(scores))
