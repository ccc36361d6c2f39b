import csv

import numpy as np
import pytest

from rotateqvs.data import build_filter_index, corrupt
from rotateqvs.evaluation import evaluate
from rotateqvs.exceptions import UnknownDatasetError
from rotateqvs.model import Gradients, RowGrad, distance, init_params, load_checkpoint
from rotateqvs.synthetic import SyntheticSpec, generate
from rotateqvs.training import AdagradState, TrainConfig, adagrad_step, default_config, train, write_log_csv


@pytest.fixture(scope="module")
def small_graph():
    return generate(SyntheticSpec(n_entities=10, facts_per_relation=5, n_timestamps=8))


def one_row_grad(values, row=0):
    values = np.asarray(values, dtype=float).reshape(4, 1, -1)
    empty = RowGrad(np.array([], dtype=np.int64), np.zeros((4, 0, values.shape[-1])))
    return Gradients(RowGrad(np.array([row]), values), empty, empty)


class TestConfig:
    @pytest.mark.parametrize("bad", [{"dim": 0}, {"lr": 0}, {"neg_ratio": 0}, {"margin": -1}, {"granularity": 0},
                                     {"batch_size": 0}, {"score_agg": "l3"}, {"threads": 0}])
    def test_invalid(self, bad):
        with pytest.raises(ValueError):
            TrainConfig(**bad)

    def test_updated_ignores_none(self):
        c = TrainConfig().updated(dim=100, lr=None)
        assert c.dim == 100 and c.lr == 0.1

    def test_icews14_defaults(self):
        c = default_config("icews14")
        assert (c.margin, c.granularity, c.lr, c.dim, c.neg_ratio) == (110, 1, 0.1, 500, 10)

    @pytest.mark.parametrize("name, margin, g", [("icews05-15", 120, 2), ("yago11k", 50, 100), ("gdelt", 110, 1),
                                                 ("ICEWS14", 110, 1)])
    def test_other_defaults(self, name, margin, g):
        c = default_config(name)
        assert (c.margin, c.granularity) == (margin, g)

    def test_unknown(self):
        with pytest.raises(UnknownDatasetError):
            default_config("wikidata")


class TestAdagrad:
    def test_zero_grad(self):
        p = init_params(3, 1, 1, 2, np.random.default_rng(0))
        before = p.copy()
        adagrad_step(p, one_row_grad(np.zeros(8)), AdagradState.zeros_like(p), 0.1)
        assert p.equals(before)

    def test_first_step_is_sign(self):
        p = init_params(3, 1, 1, 2, np.random.default_rng(0))
        before = p.entity.copy()
        g = np.array([0.5, -2.0, 3e-3, -1e-4, 7.0, -0.25, 1.0, -9.0])
        adagrad_step(p, one_row_grad(g, row=1), AdagradState.zeros_like(p), 0.1)
        delta = (p.entity - before)[:, 1].ravel()
        assert np.allclose(delta, -0.1 * np.sign(g), rtol=1e-6)
        assert np.array_equal(p.entity[:, [0, 2]], before[:, [0, 2]])

    def test_steps_shrink_and_accumulators_grow(self):
        p = init_params(2, 1, 1, 1, np.random.default_rng(0))
        state = AdagradState.zeros_like(p)
        grad = one_row_grad([0.3, -0.2, 0.1, 0.5])
        deltas, accs = [], []
        for _ in range(3):
            before = p.entity.copy()
            adagrad_step(p, grad, state, 0.1)
            deltas.append(np.abs(p.entity - before).max())
            accs.append(state.entity.copy())
        assert deltas[0] > deltas[1] > deltas[2]
        assert np.all(accs[1] >= accs[0]) and np.all(accs[2] >= accs[1])


class TestTrain:
    def test_zero_epochs(self, small_graph):
        config = TrainConfig(dim=4, epochs=0)
        result = train(small_graph, config)
        init_seq = np.random.SeedSequence(0).spawn(3)[0]
        expected = init_params(small_graph.n_entities, small_graph.n_relations, small_graph.n_timestamps, 4,
                               np.random.default_rng(init_seq))
        assert result.log == []
        assert result.params.equals(expected)

    def test_deterministic(self, small_graph):
        config = TrainConfig(dim=6, epochs=4, margin=10, batch_size=16, valid_every=2, seed=5)
        a, b = train(small_graph, config), train(small_graph, config)
        assert a.params.equals(b.params)
        assert [r.mean_loss for r in a.log] == [r.mean_loss for r in b.log]

    def test_seed_changes_result(self, small_graph):
        config = TrainConfig(dim=6, epochs=2, margin=10, batch_size=16)
        assert not train(small_graph, config).params.equals(train(small_graph, config.updated(seed=1)).params)

    def test_threads_agree(self, small_graph):
        config = TrainConfig(dim=6, epochs=3, margin=10, batch_size=32)
        one = train(small_graph, config)
        two = train(small_graph, config.updated(threads=2))
        assert all(np.allclose(a, b, rtol=0, atol=1e-12) for a, b in zip(one.params.tables(), two.params.tables()))
        assert two.params.equals(train(small_graph, config.updated(threads=2)).params)

    def test_loss_decreases_over_first_epochs(self, small_graph):
        # full-batch steps so the epoch loss is not blurred by minibatch order
        config = TrainConfig(dim=10, epochs=10, margin=10, batch_size=len(small_graph.train), valid_every=100)
        losses = [r.mean_loss for r in train(small_graph, config).log]
        assert all(b < a for a, b in zip(losses, losses[1:]))

    def test_keeps_best_validation_params(self, small_graph, tmp_path):
        config = TrainConfig(dim=8, epochs=30, margin=10, batch_size=16, valid_every=5)
        ckpt = tmp_path / "best.bin"
        result = train(small_graph, config, checkpoint_path=ckpt)
        validated = [r for r in result.log if r.valid_mrr is not None]
        assert [r.epoch for r in validated] == [5, 10, 15, 20, 25, 30]
        assert result.best_valid_mrr == max(r.valid_mrr for r in validated)
        index = build_filter_index(small_graph.train, small_graph.valid, small_graph.test)
        assert evaluate(small_graph.valid, result.params, index).mrr == pytest.approx(result.best_valid_mrr)
        saved, header = load_checkpoint(ckpt)
        assert saved.equals(result.params) and header["epoch"] == result.best_epoch

    def test_positive_scores_drop_below_negatives(self, synthetic_dataset):
        config = TrainConfig(dim=25, epochs=50, margin=20, batch_size=64, valid_every=100)
        params = train(synthetic_dataset, config).params
        pos = synthetic_dataset.train
        negs = corrupt(pos, 10, np.random.default_rng(0), synthetic_dataset.n_entities).reshape(-1, 4)
        assert distance(params, pos).mean() < distance(params, negs).mean()

    def test_log_csv(self, small_graph, tmp_path):
        result = train(small_graph, TrainConfig(dim=4, epochs=3, margin=10, valid_every=2))
        write_log_csv(tmp_path / "log.csv", result.log)
        rows = list(csv.DictReader(open(tmp_path / "log.csv")))
        assert list(rows[0]) == ["epoch", "mean_loss", "valid_mrr"]
        assert [r["valid_mrr"] == "" for r in rows] == [True, False, False]
