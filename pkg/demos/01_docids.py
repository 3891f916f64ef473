"""
Semantic docids from hierarchical k-means
=========================================

Documents are embedded, clustered recursively, and each one ends up with
a digit string. The strings live in a prefix tree that later restricts
what the decoder may generate.
"""

# %%
from listgen.data import make_synthetic_dataset
from listgen.docids import EOS, assign_docids, build_trie, embed_corpus

bundle = make_synthetic_dataset(n_docs=200, n_queries=60, seed=7)
docs = bundle.documents
print(docs[0].internal_id, "->", docs[0].text[:60], "...")

# %%
# bag-of-words vectors, hashed and projected to 64 dims
vectors = embed_corpus(docs, dim=64, seed=0)

# 200 documents with leaf_max=100: one clustering level then a 2-digit leaf index
docid_map = assign_docids(vectors, [d.internal_id for d in docs], branching=10, leaf_max=100, seed=0)
for internal_id in list(docid_map)[:5]:
    print(internal_id, docid_map[internal_id])

# %%
# smaller leaves force a deeper tree
deep = assign_docids(vectors, [d.internal_id for d in docs], branching=4, leaf_max=8, seed=0)
print("depths:", sorted({len(v) for v in deep.values()}))

# %%
trie = build_trie(docid_map)
print("documents:", len(trie), "max tokens incl. EOS:", trie.depth)
print("first digits:", sorted(trie.allowed_tokens([])))
first = sorted(docid_map.values())[0]
prefix = [int(c) for c in first]
print("after", first, "->", trie.allowed_tokens(prefix), "(EOS is", EOS, ")")
print(first, "resolves to", trie.resolve(first))
