"""Scikit-learn style estimator around the RotateQVS trainer."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils import check_array
from sklearn.utils.validation import check_is_fitted

from .data import Dataset, Vocabulary, build_filter_index
from .evaluation import EvalReport, candidate_distances, evaluate
from .model import _forward, distance
from .training import TrainConfig, train


def check_quadruples(X, n_entities=None, n_relations=None, n_timestamps=None, allow_empty=False) -> np.ndarray:
    """Validate an ``(n, 4)`` integer array of ``(s, r, o, t)`` rows."""
    if allow_empty and X is not None and np.size(X) == 0:
        return np.empty((0, 4), dtype=np.int64)
    arr = check_array(X, dtype=None, ensure_2d=True)
    if not np.issubdtype(arr.dtype, np.integer):
        if not np.all(np.equal(np.mod(arr, 1), 0)):
            raise ValueError("quadruple ids must be integers")
    arr = arr.astype(np.int64, copy=False)
    if arr.shape[1] != 4:
        raise ValueError(f"expected 4 columns (s, r, o, t), got {arr.shape[1]}")
    if arr.min() < 0:
        raise ValueError("ids must be non-negative")
    for col, bound, name in ((0, n_entities, "head"), (2, n_entities, "tail"),
                             (1, n_relations, "relation"), (3, n_timestamps, "timestamp")):
        if bound is not None and arr[:, col].max() >= bound:
            raise ValueError(f"{name} id {arr[:, col].max()} out of range [0, {bound})")
    return arr


def dataset_from_arrays(train_q, valid_q=None, test_q=None, n_entities=None, n_relations=None,
                        n_timestamps=None) -> Dataset:
    """Wrap integer arrays as a :class:`Dataset` with numeric labels."""
    parts = [check_quadruples(train_q)]
    parts += [check_quadruples(x, allow_empty=True) if x is not None else np.empty((0, 4), np.int64)
              for x in (valid_q, test_q)]
    stacked = np.concatenate(parts)
    n_e = n_entities or int(stacked[:, [0, 2]].max()) + 1
    n_r = n_relations or int(stacked[:, 1].max()) + 1
    n_t = n_timestamps or int(stacked[:, 3].max()) + 1
    for x in parts:
        check_quadruples(x, n_e, n_r, n_t, allow_empty=True)
    vocab = Vocabulary([str(i) for i in range(n_e)], [str(i) for i in range(n_r)],
                       {str(i): i for i in range(n_t)})
    return Dataset(*parts, vocab=vocab)


class RotateQVS(BaseEstimator):
    """Temporal KG embedding with time as per-coordinate quaternion rotations.

    ``X`` is an ``(n, 4)`` integer array of ``(head, relation, tail, time)``
    facts, or a :class:`~rotateqvs.data.Dataset`.  Lower model distance
    means a more plausible fact; :meth:`score_samples` returns its negation
    so that, as usual in scikit-learn, higher is better.

    Examples
    --------
    >>> import numpy as np
    >>> X = np.array([[0, 0, 1, 0], [1, 0, 2, 1], [2, 0, 0, 1]])
    >>> model = RotateQVS(dim=4, epochs=2, batch_size=2, margin=2.0).fit(X)
    >>> model.score_samples(X).shape
    (3,)
    """

    def __init__(self, dim=500, lr=0.1, neg_ratio=10, margin=110.0, epochs=500, batch_size=512,
                 valid_every=25, seed=0, score_agg="l1", threads=1):
        self.dim = dim
        self.lr = lr
        self.neg_ratio = neg_ratio
        self.margin = margin
        self.epochs = epochs
        self.batch_size = batch_size
        self.valid_every = valid_every
        self.seed = seed
        self.score_agg = score_agg
        self.threads = threads

    def _config(self) -> TrainConfig:
        return TrainConfig(dim=self.dim, lr=self.lr, neg_ratio=self.neg_ratio, margin=self.margin,
                           epochs=self.epochs, batch_size=self.batch_size, valid_every=self.valid_every,
                           seed=self.seed, score_agg=self.score_agg, threads=self.threads)

    def fit(self, X, y=None, *, X_valid=None, X_test=None, n_entities=None, n_relations=None,
            n_timestamps=None, checkpoint_path=None):
        """Train on ``X``; ``X_valid`` drives model selection, ``X_test`` only widens the filter."""
        config = self._config()
        if isinstance(X, Dataset):
            dataset = X
        else:
            dataset = dataset_from_arrays(X, X_valid, X_test, n_entities, n_relations, n_timestamps)
        self.filter_index_ = build_filter_index(dataset.train, dataset.valid, dataset.test)
        self._known = dataset.all_quadruples()
        result = train(dataset, config, filter_index=self.filter_index_, checkpoint_path=checkpoint_path)
        self.params_ = result.params
        self.log_ = result.log
        self.best_epoch_ = result.best_epoch
        self.best_valid_mrr_ = result.best_valid_mrr
        self.n_entities_ = dataset.n_entities
        self.n_relations_ = dataset.n_relations
        self.n_timestamps_ = dataset.n_timestamps
        return self

    def _check(self, X) -> np.ndarray:
        check_is_fitted(self, "params_")
        return check_quadruples(X, self.n_entities_, self.n_relations_, self.n_timestamps_)

    def decision_function(self, X) -> np.ndarray:
        """Model distance per fact (lower is more plausible)."""
        X = self._check(X)
        return distance(self.params_, X, self.score_agg)

    def score_samples(self, X) -> np.ndarray:
        return -self.decision_function(X)

    def transform(self, X) -> np.ndarray:
        """Flattened residual ``s_t + r - conj(o_t)`` per fact, shape ``(n, 4k)``."""
        X = self._check(X)
        fw = _forward(self.params_, X[:, 0], X[:, 1], X[:, 2], X[:, 3], self.score_agg)
        return np.moveaxis(fw.residual, 0, 1).reshape(len(X), -1)

    def predict(self, X) -> np.ndarray:
        """Best-scoring tail entity for each ``(s, r, ?, t)`` row (the given tail is ignored)."""
        X = self._check(X)
        return candidate_distances(self.params_, X, "tail", self.score_agg).argmin(axis=1)

    def evaluate(self, X, filtered=True) -> EvalReport:
        X = self._check(X)
        index = build_filter_index(self._known, X) if filtered else None
        return evaluate(X, self.params_, index, self.score_agg, threads=self.threads)

    def score(self, X, y=None) -> float:
        """Time-wise filtered MRR over head and tail queries."""
        return self.evaluate(X).mrr
