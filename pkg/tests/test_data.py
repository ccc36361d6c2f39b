import datetime as dt

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rotateqvs.data import (Quadruple, RawFact, Vocabulary, bin_timestamps, build_filter_index, corrupt,
                            load_dataset, negative_samples, parse_quadruple_file, write_quadruple_file)
from rotateqvs.exceptions import MalformedLineError, UnknownLabelError


def write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


class TestParse:
    def test_date_line(self, tmp_path):
        facts = parse_quadruple_file(write(tmp_path / "f", "A\tvisits\tB\t2014-01-13\n"), "date")
        assert facts == [RawFact("A", "visits", "B", "2014-01-13")]

    def test_empty_file(self, tmp_path):
        assert parse_quadruple_file(write(tmp_path / "f", ""), "date") == []

    def test_bad_date_reports_line(self, tmp_path):
        with pytest.raises(MalformedLineError) as info:
            parse_quadruple_file(write(tmp_path / "f", "A\tvisits\tB\tbad-date\n"), "date")
        assert info.value.line_no == 1

    def test_wrong_column_count_reports_line(self, tmp_path):
        path = write(tmp_path / "f", "A\tr\tB\t2014-01-01\nA\tr\tB\n")
        with pytest.raises(MalformedLineError) as info:
            parse_quadruple_file(path, "date")
        assert info.value.line_no == 2

    def test_fields_with_spaces_and_blank_lines(self, tmp_path):
        path = write(tmp_path / "f", "South Korea\tEngage in negotiation\tNorth Korea\t2014-02-12\n\n")
        assert parse_quadruple_file(path, "date")[0].head == "South Korea"

    def test_year_mode(self, tmp_path):
        path = write(tmp_path / "f", "A\tr\tB\t1999\nA\tr\tC\t2001-05-02\n")
        assert [f.time for f in parse_quadruple_file(path, "year")] == ["1999", "2001"]

    def test_interval_mode(self, tmp_path):
        text = "A\tr\tB\t1990-##-##\t2000-##-##\nA\tr\tC\t####-##-##\t1985-##-##\nA\tr\tD\t1970\n"
        facts = parse_quadruple_file(write(tmp_path / "f", text), "interval")
        assert [f.time for f in facts] == ["1990", "1985", "1970"]

    def test_interval_unparsable(self, tmp_path):
        with pytest.raises(MalformedLineError):
            parse_quadruple_file(write(tmp_path / "f", "A\tr\tB\t####\t####\n"), "interval")


class TestBinning:
    def daily(self, n):
        start = dt.date(2014, 1, 1)
        return [(start + dt.timedelta(days=i)).isoformat() for i in range(n)]

    def test_365_days(self):
        labels = self.daily(365)
        assert len(set(bin_timestamps(labels, 1).values())) == 365
        assert len(set(bin_timestamps(labels, 2).values())) == 183

    def test_full_collapse(self):
        labels = self.daily(40)
        assert set(bin_timestamps(labels, 40).values()) == {0}

    def test_chronological_not_lexicographic(self):
        ids = bin_timestamps(["1000", "999", "20"])
        assert ids == {"20": 0, "999": 1, "1000": 2}

    @given(st.sets(st.integers(0, 3000), min_size=1, max_size=60), st.integers(1, 10))
    def test_monotone_and_count(self, days, g):
        labels = [(dt.date(2000, 1, 1) + dt.timedelta(days=d)).isoformat() for d in days]
        ids = bin_timestamps(labels, g)
        ordered = sorted(labels)
        assert [ids[x] for x in ordered] == sorted(ids[x] for x in ordered)
        assert len(set(ids.values())) == -(-len(labels) // g)


class TestVocabulary:
    facts = [RawFact("A", "r1", "B", "2014-01-02"), RawFact("B", "r2", "C", "2014-01-01")]

    def test_round_trip(self):
        vocab = Vocabulary.build(self.facts)
        for fact in self.facts:
            assert vocab.decode(vocab.encode(fact)) == tuple(fact)

    def test_time_order(self):
        vocab = Vocabulary.build(self.facts)
        assert vocab.time_id("2014-01-01") < vocab.time_id("2014-01-02")

    def test_unknown_label(self):
        vocab = Vocabulary.build(self.facts)
        with pytest.raises(UnknownLabelError):
            vocab.entity_id("Z")
        with pytest.raises(UnknownLabelError):
            vocab.encode(RawFact("A", "nope", "B", "2014-01-01"))

    def test_dump(self, tmp_path):
        Vocabulary.build(self.facts).dump(tmp_path)
        assert (tmp_path / "entities.txt").read_text().splitlines() == ["0\tA", "1\tB", "2\tC"]
        assert (tmp_path / "timestamps.txt").read_text().splitlines() == ["0\t2014-01-01", "1\t2014-01-02"]


def test_load_dataset(tmp_path):
    write_quadruple_file(tmp_path / "train.txt", [("A", "r", "B", "2014-01-01"), ("B", "r", "C", "2014-01-02")])
    write_quadruple_file(tmp_path / "valid.txt", [("A", "r", "C", "2014-01-02")])
    write_quadruple_file(tmp_path / "test.txt", [("C", "s", "D", "2014-01-03")])
    data = load_dataset(tmp_path)
    # test-only entities and relations still get ids
    assert data.stats() == {"entities": 4, "relations": 2, "timestamps": 3, "train": 2, "valid": 1, "test": 1}
    assert data.test.tolist() == [[2, 1, 3, 2]]


def test_load_dataset_missing_dir(tmp_path):
    with pytest.raises(FileNotFoundError, match="nowhere"):
        load_dataset(tmp_path / "nowhere")


def test_write_rejects_tabs(tmp_path):
    with pytest.raises(ValueError):
        write_quadruple_file(tmp_path / "x", [("A\tB", "r", "C", "2014-01-01")])


class TestNegatives:
    def test_two_entities(self):
        rng = np.random.default_rng(0)
        seen = {tuple(negative_samples((0, 3, 0, 5), 1, rng, 2)[0]) for _ in range(50)}
        assert seen == {(1, 3, 0, 5), (0, 3, 1, 5)}

    def test_contract(self):
        q = Quadruple(4, 2, 7, 3)
        negs = negative_samples(q, 10, np.random.default_rng(1), 20)
        assert len(negs) == 10
        for n in negs:
            assert (n.r, n.t) == (q.r, q.t)
            assert (n.s != q.s) + (n.o != q.o) == 1

    def test_deterministic(self):
        a = negative_samples((1, 0, 2, 0), 8, np.random.default_rng(9), 30)
        b = negative_samples((1, 0, 2, 0), 8, np.random.default_rng(9), 30)
        assert a == b

    @given(st.integers(2, 50), st.integers(1, 12), st.integers(0, 2**32 - 1))
    def test_never_returns_original(self, n_e, n_neg, seed):
        rng = np.random.default_rng(seed)
        quads = rng.integers(0, n_e, size=(5, 4))
        out = corrupt(quads, n_neg, rng, n_e)
        assert out.shape == (5, n_neg, 4)
        assert not np.any(np.all(out == quads[:, None], axis=2))
        assert out.min() >= 0 and out[..., [0, 2]].max() < n_e

    def test_uniform_sides(self):
        out = corrupt(np.array([[0, 0, 1, 0]]), 4000, np.random.default_rng(3), 10)[0]
        head_share = np.mean(out[:, 0] != 0)
        assert 0.45 < head_share < 0.55


class TestFilterIndex:
    def test_single_fact(self):
        index = build_filter_index([[0, 0, 1, 0]])
        assert index.tail_index == {(0, 0, 0): {1}}
        assert index.head_index == {(0, 1, 0): {0}}

    def test_duplicates_and_time(self):
        index = build_filter_index([[0, 0, 1, 0], [0, 0, 1, 0]], [[0, 0, 1, 1]])
        assert index.true_tails(0, 0, 0) == {1}
        assert index.true_tails(0, 0, 1) == {1}
        assert index.true_tails(0, 0, 2) == frozenset()

    @given(st.lists(st.tuples(*[st.integers(0, 4)] * 4), min_size=1, max_size=30))
    def test_membership(self, quads):
        index = build_filter_index(quads)
        for s, r, o, t in quads:
            assert o in index.true_tails(s, r, t)
            assert s in index.true_heads(r, o, t)
