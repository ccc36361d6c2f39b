import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rotateqvs.data import build_filter_index
from rotateqvs.evaluation import (_ranks_from_scores, candidate_distances, evaluate, metrics, rank,
                                  read_eval_csv, side_ranks)
from rotateqvs.exceptions import EmptyRanksError
from rotateqvs.model import init_params
from rotateqvs.selfcheck import brute_force_rank, random_toy_graph, scalar_score

from conftest import hand_params

IDENTITY_TIME = [[[1, 0, 0, 0]]]


def line_params(positions):
    """k=1 entities on the i axis, zero relation, identity time: score = |x_s + x_o|."""
    return hand_params(entity=[[[0, x, 0, 0]] for x in positions], relation=[[[0, 0, 0, 0]]], time=IDENTITY_TIME)


class TestRank:
    def test_unique_minimum(self):
        # tail query (0, 0, ?, 0): candidates score |-1 + x|, minimum at the true tail 1
        p = line_params([-1.0, 1.0, 3.0])
        assert rank([0, 0, 1, 0], p, build_filter_index([[0, 0, 1, 0]]), "tail") == 1

    def test_two_entities(self):
        p = line_params([0.0, 2.0])
        # true tail 1 scores 2, candidate 0 scores 0 and is not a known fact
        assert rank([0, 0, 1, 0], p, build_filter_index([[0, 0, 1, 0]]), "tail") == 2

    def test_filter_removes_other_true_facts(self):
        p = line_params([0.0, 2.0])
        index = build_filter_index([[0, 0, 1, 0], [0, 0, 0, 0]])
        assert rank([0, 0, 1, 0], p, index, "tail") == 1
        # the same fact at another timestamp does not filter
        index = build_filter_index([[0, 0, 1, 0]], [[0, 0, 0, 1]])
        assert rank([0, 0, 1, 0], p, index, "tail") == 2

    def test_ties_are_optimistic(self):
        p = line_params([10.0, -9.0, -11.0, -9.0])
        # candidates 2 and 3 tie with the true tail (score 1); neither counts
        assert rank([0, 0, 1, 0], p, None, "tail") == 1

    def test_hand_set_toy_graph_matches_oracle(self):
        rng = np.random.default_rng(21)
        p = hand_params(entity=rng.normal(size=(5, 2, 4)).tolist(), relation=rng.normal(size=(2, 2, 4)).tolist(),
                        time=rng.normal(size=(2, 2, 4)).tolist())
        quads = np.array([[0, 0, 1, 0], [1, 1, 2, 0], [2, 0, 3, 1], [3, 1, 4, 1], [4, 0, 0, 0]])
        index = build_filter_index(quads)
        facts = {tuple(q) for q in quads.tolist()}
        got = [rank(q, p, index, side) for q in quads for side in ("head", "tail")]
        want = [brute_force_rank(q, side, p, facts) for q in quads for side in ("head", "tail")]
        assert len(got) == 10 and got == want

    def test_candidate_scores_match_scalar_path(self):
        p = init_params(6, 2, 3, 3, np.random.default_rng(4))
        q = np.array([[2, 1, 4, 2]])
        tails = candidate_distances(p, q, "tail")[0]
        heads = candidate_distances(p, q, "head")[0]
        assert np.allclose(tails, [scalar_score(p, 2, 1, e, 2) for e in range(6)], atol=1e-12)
        assert np.allclose(heads, [scalar_score(p, e, 1, 4, 2) for e in range(6)], atol=1e-12)

    def test_bad_side(self):
        with pytest.raises(ValueError):
            candidate_distances(line_params([0, 1]), [[0, 0, 1, 0]], "middle")


class TestMetrics:
    def test_examples(self):
        m = metrics([1, 1, 1])
        assert (m.mrr, m.hits1, m.hits3, m.hits10) == (1, 1, 1, 1)
        m = metrics([2])
        assert (m.mrr, m.hits1, m.hits3, m.hits10) == (0.5, 0, 1, 1)
        m = metrics([1, 4, 10, 100])
        assert m.mrr == pytest.approx(0.34)
        assert (m.hits1, m.hits3, m.hits10, m.n_queries) == (0.25, 0.25, 0.75, 4)

    def test_empty(self):
        with pytest.raises(EmptyRanksError):
            metrics([])

    @given(st.lists(st.integers(1, 10_000), min_size=1, max_size=200))
    def test_invariants(self, ranks):
        m = metrics(ranks)
        assert 0 < m.mrr <= 1
        assert m.hits1 <= m.hits3 <= m.hits10
        assert m.mrr >= m.hits1


class TestEvaluate:
    def test_single_quadruple(self):
        p = init_params(4, 1, 1, 2, np.random.default_rng(0))
        assert evaluate([[0, 0, 1, 0]], p, build_filter_index([[0, 0, 1, 0]])).n_queries == 2

    def test_pools_both_directions(self):
        rng = np.random.default_rng(3)
        quads, n_e, n_r, n_t = random_toy_graph(rng, n_e=8, n_r=3, n_facts=20)
        p = init_params(n_e, n_r, n_t, 3, rng)
        index = build_filter_index(quads)
        report = evaluate(quads, p, index)
        heads, tails = side_ranks(quads, p, index, "head"), side_ranks(quads, p, index, "tail")
        pooled = metrics(np.concatenate([heads, tails]))
        assert (report.mrr, report.hits1, report.hits3, report.hits10) == pytest.approx(
            (pooled.mrr, pooled.hits1, pooled.hits3, pooled.hits10))
        assert report.per_direction["head"].mrr == pytest.approx(metrics(heads).mrr)
        assert report.n_queries == 2 * len(quads)

    @settings(max_examples=10, deadline=None)
    @given(st.integers(0, 2**31))
    def test_toy_report_equals_oracle(self, seed):
        rng = np.random.default_rng(seed)
        quads, n_e, n_r, n_t = random_toy_graph(rng)
        p = init_params(n_e, n_r, n_t, 2, rng)
        facts = {tuple(q) for q in quads.tolist()}
        want = metrics([brute_force_rank(q, side, p, facts) for side in ("head", "tail") for q in quads])
        got = evaluate(quads, p, build_filter_index(quads))
        assert got.mrr == pytest.approx(want.mrr) and got.hits3 == pytest.approx(want.hits3)

    def test_filtered_never_worse_than_raw(self):
        rng = np.random.default_rng(8)
        quads, n_e, n_r, n_t = random_toy_graph(rng, n_e=10, n_r=2, n_facts=24)
        p = init_params(n_e, n_r, n_t, 3, rng)
        index = build_filter_index(quads)
        for side in ("head", "tail"):
            assert np.all(side_ranks(quads, p, index, side) <= side_ranks(quads, p, None, side))

    def test_monotone_transform_invariance(self):
        rng = np.random.default_rng(9)
        quads, n_e, n_r, n_t = random_toy_graph(rng, n_e=9, n_r=2, n_facts=15)
        p = init_params(n_e, n_r, n_t, 3, rng)
        index = build_filter_index(quads)
        scores = candidate_distances(p, quads, "tail")
        base = _ranks_from_scores(quads, scores, "tail", index)
        assert np.array_equal(base, _ranks_from_scores(quads, np.exp(3 * scores) + 7, "tail", index))

    def test_order_and_threads_independent(self):
        rng = np.random.default_rng(10)
        quads, n_e, n_r, n_t = random_toy_graph(rng, n_e=10, n_r=4, n_facts=24)
        p = init_params(n_e, n_r, n_t, 3, rng)
        index = build_filter_index(quads)
        a = evaluate(quads, p, index)
        b = evaluate(quads[rng.permutation(len(quads))], p, index, threads=3)
        assert a.as_row() == pytest.approx(b.as_row())

    def test_outputs(self, tmp_path):
        report = metrics([1, 2, 3, 20])
        report.per_direction = {"head": metrics([1, 2]), "tail": metrics([3, 20])}
        report.write_csv(tmp_path / "eval.csv")
        row = read_eval_csv(tmp_path / "eval.csv")
        assert float(row["mrr"]) == pytest.approx(report.mrr)
        assert float(row["tail_hits3"]) == 0.5
        text = report.to_text()
        assert "MRR" in text and text.count("\n") == 3
