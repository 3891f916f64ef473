import numpy as np
import pytest

from conftest import random_query, tiny_model
from listgen.decoding import EXHAUSTIVE_LIMIT, constrained_beam_search, exhaustive_rank, write_run
from listgen.docids import DocidError, build_trie
from listgen.model import sequence_logprob


def _random_map(rng, n):
    out = {}
    while len(out) < n:
        d = "".join(str(x) for x in rng.integers(0, 10, size=int(rng.integers(1, 4))))
        if d not in out.values():
            out[f"doc{len(out)}"] = d
    return out


def test_single_document():
    m = tiny_model(seed=1)
    trie = build_trie({"only": "000"})
    out = constrained_beam_search(m, [3, 4], trie, beam_width=5, k=1)
    assert [d for d, _ in out] == ["000"]
    assert out[0][1] == pytest.approx(sequence_logprob(m, [3, 4], "000"), abs=1e-9)
    assert exhaustive_rank(m, [3, 4], {"only": "000"}, 3)[0][0] == "000"


def test_uniform_model_lexicographic():
    m = tiny_model(zero_output=True)
    ids = {f"d{i}": d for i, d in enumerate(["21", "05", "13", "20", "07"])}
    out = constrained_beam_search(m, [1], build_trie(ids), beam_width=5, k=5)
    assert [d for d, _ in out] == ["05", "07", "13", "20", "21"]
    assert len({s for _, s in out}) == 1


def test_full_width_matches_exhaustive(rng):
    for case in range(50):
        m = tiny_model(seed=case)
        dm = _random_map(rng, int(rng.integers(1, 16)))
        trie = build_trie(dm)
        q = random_query(rng)
        width = len(dm)
        k = int(rng.integers(1, width + 1))
        beam = constrained_beam_search(m, q, trie, beam_width=width, k=k)
        oracle = exhaustive_rank(m, q, dm, k)
        assert [d for d, _ in beam] == [d for d, _ in oracle]
        np.testing.assert_allclose([s for _, s in beam], [s for _, s in oracle], atol=1e-9)


def test_validity_and_no_duplicates(rng):
    dm = _random_map(rng, 60)
    trie = build_trie(dm)
    for seed in range(10):
        out = constrained_beam_search(tiny_model(seed=seed), random_query(rng), trie, beam_width=8, k=8)
        docids = [d for d, _ in out]
        assert len(docids) == len(set(docids))
        assert all(d in trie for d in docids)
        scores = [s for _, s in out]
        assert scores == sorted(scores, reverse=True)


def test_monotone_truncation(rng):
    dm = _random_map(rng, 80)
    trie = build_trie(dm)
    m = tiny_model(seed=3)
    q = random_query(rng)
    full = constrained_beam_search(m, q, trie, beam_width=10, k=10)
    for j in range(1, 11):
        assert constrained_beam_search(m, q, trie, beam_width=10, k=j) == full[:j]


def test_exhaustive_order_invariant(rng):
    m = tiny_model(seed=2)
    dm = _random_map(rng, 12)
    q = random_query(rng)
    ids = list(dm.values())
    assert exhaustive_rank(m, q, ids, 12) == exhaustive_rank(m, q, ids[::-1], 12)


def test_errors():
    m = tiny_model()
    trie = build_trie({"a": "1"})
    with pytest.raises(ValueError):
        constrained_beam_search(m, [1], trie, beam_width=2, k=3)
    with pytest.raises(ValueError):
        constrained_beam_search(m, [1], trie, beam_width=2, k=0)
    with pytest.raises(DocidError):
        constrained_beam_search(m, [1], build_trie({}), beam_width=2, k=1)
    with pytest.raises(ValueError, match="too large"):
        exhaustive_rank(m, [1], [str(i) for i in range(EXHAUSTIVE_LIMIT + 1)], 1)


def test_write_run(tmp_path):
    trie = build_trie({"docA": "12", "docB": "3"})
    runs = {"q2": [("3", -0.5)], "q1": [("12", -1.0), ("3", -2.25)]}
    path = tmp_path / "run.txt"
    write_run(path, runs, trie)
    assert path.read_text().splitlines() == [
        "q1 Q0 docA 1 -1.000000 listgen",
        "q1 Q0 docB 2 -2.250000 listgen",
        "q2 Q0 docB 1 -0.500000 listgen",
    ]
