import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from listgen.docids import (
    EOS,
    DocidError,
    Document,
    allowed_tokens,
    assign_docids,
    build_trie,
    docid_tokens,
    embed_corpus,
    read_docid_map,
    resolve,
    write_docid_map,
)


def _mixture(n=1000, components=10, dim=8, seed=0):
    rng = np.random.default_rng(seed)
    centers = rng.normal(0, 10, (components, dim))
    labels = rng.integers(components, size=n)
    return list(centers[labels] + rng.normal(0, 1, (n, dim)))


@pytest.fixture(scope="module")
def mixture_map():
    x = _mixture()
    return assign_docids(x, [f"doc{i}" for i in range(len(x))], seed=3)


class TestEmbedCorpus:
    def test_precomputed_passthrough(self):
        vec = np.array([0.5, -1.0, 2.0])
        out = embed_corpus([Document("a", "", vec)], dim=3)
        np.testing.assert_array_equal(out[0], vec)

    def test_identical_text_identical_vectors(self):
        out = embed_corpus([Document("a", "alpha beta beta"), Document("b", "alpha beta beta")], dim=16, seed=4)
        np.testing.assert_array_equal(out[0], out[1])

    def test_two_vocabularies_separate(self):
        rng = np.random.default_rng(1)
        vocab_a = [f"apple{i}" for i in range(20)]
        vocab_b = [f"zebra{i}" for i in range(20)]
        docs = [Document(f"a{i}", " ".join(rng.choice(vocab_a, 12))) for i in range(25)]
        docs += [Document(f"b{i}", " ".join(rng.choice(vocab_b, 12))) for i in range(25)]
        x = np.array(embed_corpus(docs, dim=64, seed=0))
        x /= np.linalg.norm(x, axis=1, keepdims=True)
        within, across = [], []
        for i, j in itertools.combinations(range(50), 2):
            (within if (i < 25) == (j < 25) else across).append(x[i] @ x[j])
        assert np.mean(within) > np.mean(across)

    def test_errors(self):
        with pytest.raises(DocidError, match="empty corpus"):
            embed_corpus([], dim=4)
        with pytest.raises(DocidError, match="'blank'"):
            embed_corpus([Document("blank", "  ")], dim=4)
        with pytest.raises(DocidError):
            embed_corpus([Document("a", "x")], dim=1)


class TestAssignDocids:
    def test_single_document(self):
        assert assign_docids([np.zeros(3)], ["only"]) == {"only": "000"}

    def test_identical_embeddings(self):
        m = assign_docids([np.ones(4)] * 200, [f"d{i:03d}" for i in range(200)], seed=0)
        assert len(set(m.values())) == 200
        assert len({len(v) for v in m.values()}) == 1

    def test_mixture_unique_and_branching(self, mixture_map):
        assert len(set(mixture_map.values())) == 1000
        assert len({d[0] for d in mixture_map.values()}) >= 2

    def test_deterministic(self):
        x = _mixture(300, seed=5)
        ids = [str(i) for i in range(300)]
        assert assign_docids(x, ids, leaf_max=20, seed=9) == assign_docids(x, ids, leaf_max=20, seed=9)

    def test_recursion_below_leaf_max(self):
        x = _mixture(400, components=3, seed=2)
        m = assign_docids(x, leaf_max=10, branching=4, seed=0)
        assert len(set(m.values())) == 400
        # every leaf cluster holds at most leaf_max documents
        width = len(str(10 - 1))
        clusters = {}
        for d in m.values():
            clusters.setdefault(d[:-width], []).append(d)
        assert max(len(v) for v in clusters.values()) <= 10

    def test_zero_documents(self):
        with pytest.raises(DocidError):
            assign_docids([])

    @settings(max_examples=25, deadline=None)
    @given(n=st.integers(1, 2000), seed=st.integers(0, 2**16), dup=st.booleans())
    def test_injective_property(self, n, seed, dup):
        rng = np.random.default_rng(seed)
        x = rng.normal(size=(n, 4))
        if dup:
            x[: n // 2] = x[0]
        m = assign_docids(list(x), seed=seed)
        assert len(m) == n and len(set(m.values())) == n
        assert all(v.isdigit() for v in m.values())


class TestTrie:
    def test_single(self):
        t = build_trie({"x": "000"})
        assert t.depth == 4 and len(t) == 1
        assert resolve(t, "000") == "x"

    def test_prefix_docids(self):
        t = build_trie({"a": "01", "b": "0"})
        assert allowed_tokens(t, [0]) == {1, EOS}
        assert resolve(t, "0") == "b" and resolve(t, "01") == "a"

    def test_allowed_root_and_leaf(self):
        t = build_trie({"a": "012", "b": "100"})
        assert allowed_tokens(t, []) == {0, 1}
        assert allowed_tokens(t, [0, 1, 2]) == {EOS}
        with pytest.raises(DocidError, match="invalid prefix"):
            allowed_tokens(t, [2])
        with pytest.raises(DocidError, match="invalid prefix"):
            allowed_tokens(t, docid_tokens("012"))

    def test_duplicate_names_both(self):
        with pytest.raises(DocidError, match="'a'.*'b'"):
            build_trie({"a": "01", "b": "01"})

    def test_unknown(self):
        t = build_trie({"a": "012"})
        with pytest.raises(DocidError, match="unknown docid"):
            resolve(t, "01")
        with pytest.raises(DocidError, match="unknown docid"):
            resolve(t, "999")

    def test_mixture_roundtrip_and_allowed(self, mixture_map):
        t = build_trie(mixture_map)
        assert len(t) == 1000
        for internal_id, docid in mixture_map.items():
            assert resolve(t, docid) == internal_id
        rng = np.random.default_rng(0)
        docids = list(mixture_map.values())
        for _ in range(50):
            d = docids[rng.integers(len(docids))]
            cut = int(rng.integers(0, len(d) + 1))
            prefix = d[:cut]
            brute = set()
            for other in docids:
                if other.startswith(prefix):
                    brute.add(int(other[cut]) if len(other) > cut else EOS)
            assert allowed_tokens(t, [int(c) for c in prefix]) == brute

    def test_random_paths_resolve(self, mixture_map):
        t = build_trie(mixture_map)
        rng = np.random.default_rng(1)
        for _ in range(100):
            prefix = []
            while True:
                options = sorted(allowed_tokens(t, prefix))
                tok = options[rng.integers(len(options))]
                if tok == EOS:
                    break
                prefix.append(tok)
            assert resolve(t, prefix) in mixture_map

    def test_every_leaf_reachable(self, mixture_map):
        t = build_trie(mixture_map)
        reached = set()
        stack = [[]]
        while stack:
            prefix = stack.pop()
            for tok in allowed_tokens(t, prefix):
                if tok == EOS:
                    reached.add(resolve(t, prefix))
                else:
                    stack.append(prefix + [tok])
        assert reached == set(mixture_map)

    def test_leaves_sorted(self):
        t = build_trie({"a": "10", "b": "0", "c": "01"})
        assert t.leaves() == ["0", "01", "10"]


def test_docid_map_file_roundtrip(tmp_path, mixture_map):
    path = tmp_path / "docids.tsv"
    write_docid_map(path, mixture_map)
    assert read_docid_map(path) == mixture_map
    assert path.read_text().splitlines()[0] == f"doc0\t{mixture_map['doc0']}"
