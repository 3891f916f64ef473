import json
from collections import Counter

import numpy as np
import pytest

from listgen.data import DataError, load_bundle, make_synthetic_dataset, read_corpus, split_queries
from listgen.docids import tokenize


@pytest.fixture(scope="module")
def bundle():
    return make_synthetic_dataset(200, 60, (0, 1, 2, 3), seed=7)


def test_regeneration_byte_identical(tmp_path, bundle):
    bundle.write(tmp_path / "a")
    make_synthetic_dataset(200, 60, (0, 1, 2, 3), seed=7).write(tmp_path / "b")
    for f in (tmp_path / "a").iterdir():
        assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes()


def test_every_grade_present(bundle):
    assert len(bundle.documents) == 200 and len(bundle.queries) == 60
    for qid, judg in bundle.qrels.items():
        assert set(judg.values()) >= {0, 1, 2, 3}, qid


def test_term_overlap_grows_with_grade(bundle):
    texts = {d.internal_id: Counter(tokenize(d.text)) for d in bundle.documents}
    overlap = {g: [] for g in (1, 2, 3)}
    for qid, judg in bundle.qrels.items():
        terms = set(tokenize(bundle.queries[qid]))
        for docid, g in judg.items():
            if g >= 1:
                overlap[g].append(sum(texts[docid][t] for t in terms))
    assert np.mean(overlap[3]) > np.mean(overlap[2]) > np.mean(overlap[1])


def test_split_disjoint_and_seeded(bundle):
    assert set(bundle.train_qids).isdisjoint(bundle.test_qids)
    assert len(bundle.test_qids) == 15
    assert split_queries(list(bundle.queries), 0.25, 7) == (bundle.train_qids, bundle.test_qids)


def test_binary_grades(tmp_path):
    b = make_synthetic_dataset(30, 10, (1,), seed=1, n_domains=3)
    assert all(set(j.values()) == {1} for j in b.qrels.values())


def test_parameter_validation():
    with pytest.raises(DataError):
        make_synthetic_dataset(10, 5, (0, 4))
    with pytest.raises(DataError):
        make_synthetic_dataset(10, 5, (0,))
    with pytest.raises(DataError):
        make_synthetic_dataset(10, 5, (1, 2, 3))


def test_load_bundle_roundtrip(tmp_path, bundle):
    paths = bundle.write(tmp_path)
    loaded = load_bundle(paths["corpus"], paths["qrels"], paths["queries"], paths["pseudo_queries"],
                         split=paths["split"])
    assert loaded.qrels == bundle.qrels
    assert loaded.queries == bundle.queries
    assert loaded.train_qids == bundle.train_qids and loaded.test_qids == bundle.test_qids
    assert loaded.pseudo_queries == bundle.pseudo_queries
    assert [d.text for d in loaded.documents] == [d.text for d in bundle.documents]


def test_corpus_errors(tmp_path):
    path = tmp_path / "corpus.jsonl"
    path.write_text(json.dumps({"id": "a", "text": "x"}) + "\n" + json.dumps({"id": "a", "text": "y"}) + "\n")
    with pytest.raises(DataError, match="duplicate document id 'a'"):
        read_corpus(path)
    path.write_text("{not json\n")
    with pytest.raises(DataError, match="corpus.jsonl:1"):
        read_corpus(path)


def test_qrels_must_reference_corpus(tmp_path):
    (tmp_path / "c.jsonl").write_text(json.dumps({"id": "a", "text": "x"}) + "\n")
    (tmp_path / "q.tsv").write_text("q1\thello\n")
    (tmp_path / "r.txt").write_text("q1\t0\tzz\t1\n")
    with pytest.raises(DataError, match="'zz'"):
        load_bundle(tmp_path / "c.jsonl", tmp_path / "r.txt", tmp_path / "q.tsv")
