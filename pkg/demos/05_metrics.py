"""
Graded retrieval metrics
========================
"""

# %%
from listgen.metrics import err_at_k, evaluate_run, format_report, mrr_at_k, ndcg_at_k, precision_at_k

judgments = {"a": 3, "b": 1, "c": 0}
print("nDCG@2 [b, a]:", ndcg_at_k(["b", "a"], judgments, 2))   # 0.70981
print("nDCG@2 [a, b]:", ndcg_at_k(["a", "b"], judgments, 2))   # ideal
print("ERR@2  [a, b]:", err_at_k(["a", "b"], judgments, 2, g_max=3))
print("P@20:", precision_at_k(["a", "x", "b"], judgments, 20), "MRR@20:", mrr_at_k(["x", "b"], judgments, 20))

# %%
runs = {"q1": ["b", "a"], "q2": ["z"]}
qrels = {"q1": judgments, "q2": {"z": 2}}
means, per_query = evaluate_run(runs, qrels, ["ndcg@5", "err@20", "hits@1"])
print(format_report(means), end="")
