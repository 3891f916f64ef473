import itertools
import json
import math

import pytest

from listgen.metrics import (
    MetricError,
    compute,
    dcg,
    err_at_k,
    evaluate_run,
    format_per_query,
    format_report,
    hits_at_k,
    mrr_at_k,
    ndcg_at_k,
    precision_at_k,
    read_qrels,
    read_run,
    write_qrels,
)


class TestNdcg:
    def test_perfect_and_zero(self):
        j = {"a": 3, "b": 1, "c": 0}
        assert ndcg_at_k(["a", "b", "c"], j, 3) == 1.0
        assert ndcg_at_k(["c", "x"], j, 2) == 0.0
        assert ndcg_at_k(["a"], {"a": 0}, 5) == 0.0

    def test_hand_example(self):
        j = {"a": 3, "b": 1}
        assert dcg([1, 3]) == pytest.approx(5.41650, abs=1e-5)
        assert dcg([3, 1]) == pytest.approx(7.63093, abs=1e-5)
        assert ndcg_at_k(["b", "a"], j, 2) == pytest.approx(0.70981, abs=1e-5)

    def test_swap_never_hurts(self):
        grades = [0, 1, 2, 3, 1, 0, 2]
        j = {str(i): g for i, g in enumerate(grades)}
        run = [str(i) for i in range(len(grades))]
        for pos in range(len(run) - 1):
            if j[run[pos]] < j[run[pos + 1]]:
                swapped = run[:pos] + [run[pos + 1], run[pos]] + run[pos + 2:]
                for k in range(1, len(run) + 1):
                    assert ndcg_at_k(swapped, j, k) >= ndcg_at_k(run, j, k) - 1e-15
                    assert err_at_k(swapped, j, k) >= err_at_k(run, j, k) - 1e-15


class TestErr:
    def test_values(self):
        assert err_at_k(["a"], {"a": 1}, 1, g_max=1) == 0.5
        assert err_at_k(["x", "y"], {"a": 2}, 2) == 0.0
        assert err_at_k(["a", "b"], {"a": 3, "b": 1}, 2, g_max=3) == pytest.approx(0.8828125, abs=1e-15)

    def test_grade_above_gmax(self):
        with pytest.raises(MetricError):
            err_at_k(["a"], {"a": 4}, 1, g_max=3)

    def test_ideal_is_maximal(self):
        j = {"a": 3, "b": 2, "c": 2, "d": 1, "e": 0}
        ideal = sorted(j, key=lambda d: -j[d])
        assert ndcg_at_k(ideal, j, 5) == pytest.approx(1.0, abs=1e-15)
        best = err_at_k(ideal, j, 5)
        for perm in itertools.permutations(j):
            assert err_at_k(list(perm), j, 5) <= best + 1e-15
            assert 0.0 <= ndcg_at_k(list(perm), j, 5) <= 1.0 + 1e-15


class TestBinaryMetrics:
    def test_precision(self):
        j = {"a": 1, "b": 2, "c": 3}
        assert precision_at_k(["a", "b"], j, 2) == 1.0
        assert precision_at_k([], j, 20) == 0.0
        assert precision_at_k(["a", "x", "b", "c"], j, 20) == pytest.approx(0.15)

    def test_mrr(self):
        j = {"h": 1}
        assert mrr_at_k(["h"], j, 20) == 1.0
        assert mrr_at_k(["x", "y", "z", "h"], j, 3) == 0.0
        assert mrr_at_k(["x", "h"], j, 20) == 0.5

    def test_hits(self):
        j = {"h": 2}
        assert hits_at_k(["x", "x2", "h"], j, 3) == 1
        assert hits_at_k(["x", "x2", "x3", "h"], j, 3) == 0
        assert hits_at_k(["h"], {}, 3) == 0

    def test_monotone_in_k(self):
        j = {"b": 2, "d": 1, "f": 3}
        run = list("abcdefg")
        for k in range(1, 7):
            assert hits_at_k(run, j, k) <= hits_at_k(run, j, k + 1)

    def test_bad_k(self):
        with pytest.raises(MetricError):
            ndcg_at_k(["a"], {"a": 1}, 0)


def test_compute_dispatch():
    j = {"a": 3, "b": 1}
    assert compute("nDCG@2", ["b", "a"], j) == pytest.approx(0.70981, abs=1e-5)
    assert compute("hits@1", ["a"], j) == 1.0
    with pytest.raises(MetricError):
        compute("map@10", ["a"], j)
    with pytest.raises(MetricError):
        compute("ndcg", ["a"], j)


def test_evaluate_run_means_and_missing_queries():
    qrels = {"q1": {"a": 1}, "q2": {"b": 1}}
    means, per_query = evaluate_run({"q1": ["a"]}, qrels, ["mrr@10"])
    assert per_query == {"q1": {"mrr@10": 1.0}, "q2": {"mrr@10": 0.0}}
    assert means["mrr@10"] == 0.5
    means, _ = evaluate_run({"q1": ["a"]}, qrels, ["mrr@10"], query_ids=["q1"])
    assert means["mrr@10"] == 1.0


def test_reports():
    means, per_query = evaluate_run({"q1": ["a", "b"]}, {"q1": {"b": 1}}, ["p@2", "mrr@2"])
    assert format_report(means) == "p@2\t0.500000\nmrr@2\t0.500000\n"
    rec = json.loads(format_per_query(per_query))
    assert rec == {"qid": "q1", "p@2": 0.5, "mrr@2": 0.5}


def test_qrels_roundtrip(tmp_path):
    qrels = {"q1": {"d1": 3, "d2": 0}, "q2": {"d3": 1}}
    path = tmp_path / "qrels.txt"
    write_qrels(path, qrels)
    assert path.read_text().splitlines()[0] == "q1\t0\td1\t3"
    assert read_qrels(path) == qrels


@pytest.mark.parametrize("line", ["q1 0 d1", "q1 0 d1 x", "q1 0 d1 -1"])
def test_qrels_malformed(tmp_path, line):
    path = tmp_path / "qrels.txt"
    path.write_text(line + "\n")
    with pytest.raises(MetricError, match="qrels.txt:1"):
        read_qrels(path)


def test_read_run_orders_by_rank(tmp_path):
    path = tmp_path / "run.txt"
    path.write_text("q1 Q0 b 2 -2.0 t\nq1 Q0 a 1 -1.0 t\n\nq2 Q0 c 1 0.5 t\n")
    assert read_run(path) == {"q1": ["a", "b"], "q2": ["c"]}
    path.write_text("q1 Q0 b two -2.0 t\n")
    with pytest.raises(MetricError):
        read_run(path)
