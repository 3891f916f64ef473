"""Trie-constrained beam search and an exhaustive ranking oracle."""

from __future__ import annotations

from typing import List, Mapping, Sequence, Tuple

import numpy as np

from .docids import BOS, EOS, DecimalTrie, DocidError, tokens_to_docid
from .model import ScorerModel, SequenceBatch

Ranked = List[Tuple[str, float]]

EXHAUSTIVE_LIMIT = 10_000


def _rank_key(item):
    docid, score = item
    return (-score, docid)


def constrained_beam_search(model: ScorerModel, query_tokens, trie: DecimalTrie,
                            beam_width: int = 20, k: int = 20) -> Ranked:
    """Decode up to ``k`` distinct docids for one query.

    Finished hypotheses stay in the same pool as open ones and are pruned
    together to ``beam_width``. Scores are raw cumulative log-probs; ties
    go to the lexicographically smaller docid.
    """
    if len(trie) == 0:
        raise DocidError("empty trie")
    if not 1 <= k <= beam_width:
        raise ValueError("need 1 <= k <= beam_width")
    enc, s0 = model.start(np.asarray(query_tokens, dtype=np.int64))

    # open hypothesis: (prefix tokens, score, decoder state, last token)
    open_beams = [((), 0.0, s0, BOS)]
    finished: Ranked = []
    while open_beams:
        states = np.stack([b[2] for b in open_beams])
        prev = np.array([b[3] for b in open_beams])
        logp, new_states = model.next_logprobs(enc, states, prev)
        pool = [(docid, score, None) for docid, score in finished]
        extensions = []
        for row, (prefix, score, _, _) in enumerate(open_beams):
            for tok in sorted(trie.allowed_tokens(prefix)):
                total = score + float(logp[row, tok])
                if tok == EOS:
                    pool.append((tokens_to_docid(prefix), total, None))
                else:
                    ext = prefix + (tok,)
                    extensions.append(ext)
                    pool.append((ext, total, (new_states[row], tok)))

        def key(entry):
            label, score, state = entry
            # score, then digit string, then finished before open
            text = label if state is None else tokens_to_docid(label)
            return (-score, text, state is not None)

        pool.sort(key=key)
        pool = pool[:beam_width]
        finished = [(label, score) for label, score, state in pool if state is None]
        open_beams = [(label, score, state[0], state[1]) for label, score, state in pool if state is not None]
        if len(finished) >= k and open_beams and finished[k - 1][1] > max(b[1] for b in open_beams):
            break
    finished.sort(key=_rank_key)
    return finished[:k]


def exhaustive_rank(model: ScorerModel, query_tokens, docids: Sequence[str], k: int) -> Ranked:
    """Score every docid by teacher forcing and sort like the beam decoder."""
    docids = list(docids.values()) if isinstance(docids, Mapping) else list(docids)
    if len(docids) > EXHAUSTIVE_LIMIT:
        raise ValueError(f"corpus too large for exhaustive ranking ({len(docids)} > {EXHAUSTIVE_LIMIT})")
    q = np.asarray(query_tokens, dtype=np.int64)
    fwd = model.forward(SequenceBatch.from_docids([q] * len(docids), docids))
    scores = fwd.token_logps().sum(1)
    ranked = sorted(zip(docids, (float(s) for s in scores)), key=_rank_key)
    return ranked[:k]


def write_run(path, runs: Mapping[str, Ranked], trie: DecimalTrie, tag: str = "listgen") -> None:
    """TREC run lines ``qid Q0 internal_id rank score tag``; queries sorted by id."""
    with open(path, "w", encoding="utf-8") as f:
        for qid in sorted(runs):
            for rank, (docid, score) in enumerate(runs[qid], 1):
                f.write(f"{qid} Q0 {trie.resolve(docid)} {rank} {score:.6f} {tag}\n")
