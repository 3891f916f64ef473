"""
Constrained beam search
=======================

An untrained scorer can still only produce docids that exist. At full
width the beam result matches ranking every docid by teacher forcing.
"""

# %%
from listgen.decoding import constrained_beam_search, exhaustive_rank
from listgen.docids import build_trie
from listgen.model import ScorerModel, sequence_logprob

docid_map = {f"doc{i}": d for i, d in enumerate(["012", "015", "103", "110", "2", "21", "305", "31"])}
trie = build_trie(docid_map)
model = ScorerModel(embed_dim=8, hidden_dim=16, vocab_size=256, seed=3)
query = model.encode_text("which document is it")

# %%
# a narrow beam is approximate and can miss the best docid
beam = constrained_beam_search(model, query, trie, beam_width=4, k=4)
for docid, score in beam:
    print(f"{docid:>4}  {score:8.4f}  {trie.resolve(docid)}")

# %%
full = constrained_beam_search(model, query, trie, beam_width=len(docid_map), k=len(docid_map))
oracle = exhaustive_rank(model, query, docid_map, len(docid_map))
print("full width equals exhaustive ranking:", [d for d, _ in full] == [d for d, _ in oracle])
print("score check:", full[0][1], sequence_logprob(model, query, full[0][0]))
