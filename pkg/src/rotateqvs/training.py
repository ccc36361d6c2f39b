"""Adagrad training with negative sampling and keep-best-on-validation selection."""
from __future__ import annotations

import csv
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Callable

import numpy as np

from .data import Dataset, FilterIndex, build_filter_index, corrupt
from .evaluation import evaluate
from .exceptions import UnknownDatasetError
from .model import SCORE_AGGS, Gradients, ModelParams, RowGrad, init_params, loss_and_gradients, save_checkpoint

logger = logging.getLogger(__name__)

ADAGRAD_EPS = 1e-10


@dataclass
class TrainConfig:
    dim: int = 500
    lr: float = 0.1
    neg_ratio: int = 10
    margin: float = 110.0
    granularity: int = 1
    epochs: int = 500
    batch_size: int = 512
    valid_every: int = 25
    seed: int = 0
    score_agg: str = "l1"
    threads: int = 1

    def __post_init__(self):
        checks = [
            (self.dim >= 1, "dim must be >= 1"),
            (self.lr > 0, "lr must be > 0"),
            (self.neg_ratio >= 1, "neg_ratio must be >= 1"),
            (self.margin > 0, "margin must be > 0"),
            (self.granularity >= 1, "granularity must be >= 1"),
            (self.epochs >= 0, "epochs must be >= 0"),
            (self.batch_size >= 1, "batch_size must be >= 1"),
            (self.valid_every >= 1, "valid_every must be >= 1"),
            (self.score_agg in SCORE_AGGS, f"score_agg must be one of {SCORE_AGGS}"),
            (self.threads >= 1, "threads must be >= 1"),
        ]
        for ok, message in checks:
            if not ok:
                raise ValueError(message)

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def updated(self, **changes) -> "TrainConfig":
        return replace(self, **{k: v for k, v in changes.items() if v is not None})


# best combination reported for each benchmark; lr, dim and neg_ratio are shared
_DATASET_DEFAULTS = {
    "icews14": {"margin": 110.0, "granularity": 1},
    "icews05-15": {"margin": 120.0, "granularity": 2},
    "yago11k": {"margin": 50.0, "granularity": 100},
    "gdelt": {"margin": 110.0, "granularity": 1},
}
DATASET_TIME_MODES = {"icews14": "date", "icews05-15": "date", "yago11k": "interval", "gdelt": "date"}


def default_config(dataset_name: str) -> TrainConfig:
    key = dataset_name.lower()
    if key not in _DATASET_DEFAULTS:
        raise UnknownDatasetError(f"unknown dataset {dataset_name!r}; expected one of {sorted(_DATASET_DEFAULTS)}")
    return TrainConfig(lr=0.1, dim=500, neg_ratio=10, **_DATASET_DEFAULTS[key])


@dataclass
class AdagradState:
    entity: np.ndarray
    relation: np.ndarray
    time: np.ndarray
    eps: float = ADAGRAD_EPS

    @classmethod
    def zeros_like(cls, params: ModelParams, eps: float = ADAGRAD_EPS) -> "AdagradState":
        return cls(*(np.zeros(t.shape) for t in params.tables()), eps=eps)


def adagrad_step(params: ModelParams, grads: Gradients, state: AdagradState, lr: float):
    """In-place sparse Adagrad update of the touched rows; returns ``(params, state)``."""
    for table, acc, g in zip(params.tables(), (state.entity, state.relation, state.time),
                             (grads.entity, grads.relation, grads.time)):
        if g.rows.size == 0:
            continue
        a = acc[:, g.rows] + g.values * g.values
        acc[:, g.rows] = a
        table[:, g.rows] -= lr * g.values / (np.sqrt(a) + state.eps)
    return params, state


def _merge(parts: list[Gradients]) -> Gradients:
    merged = []
    for name in ("entity", "relation", "time"):
        rows = np.concatenate([getattr(p, name).rows for p in parts])
        values = np.concatenate([getattr(p, name).values for p in parts], axis=1)
        uniq, inverse = np.unique(rows, return_inverse=True)
        out = np.zeros((4, uniq.size, values.shape[-1]))
        for c in range(4):
            np.add.at(out[c], inverse, values[c])
        merged.append(RowGrad(uniq, out))
    return Gradients(*merged)


@dataclass
class EpochRecord:
    epoch: int
    mean_loss: float
    valid_mrr: float | None = None


@dataclass
class TrainResult:
    params: ModelParams
    log: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    best_valid_mrr: float | None = None


def write_log_csv(path, log: list[EpochRecord]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "mean_loss", "valid_mrr"])
        for rec in log:
            writer.writerow([rec.epoch, repr(rec.mean_loss), "" if rec.valid_mrr is None else repr(rec.valid_mrr)])


def _batch_gradients(params, pos, negs, config: TrainConfig, pool):
    if pool is None or len(pos) < 2 * config.threads:
        return loss_and_gradients(params, pos, negs, config.margin, config.score_agg)
    bounds = np.linspace(0, len(pos), config.threads + 1).astype(int)
    pieces = list(pool.map(
        lambda ab: loss_and_gradients(params, pos[ab[0]:ab[1]], negs[ab[0]:ab[1]], config.margin, config.score_agg),
        zip(bounds[:-1], bounds[1:]),
    ))
    # fixed-order reduction keeps the result independent of thread timing
    return sum(p[0] for p in pieces), _merge([p[1] for p in pieces])


def train(dataset: Dataset, config: TrainConfig, *, filter_index: FilterIndex | None = None,
          checkpoint_path=None, on_epoch: Callable[[EpochRecord], None] | None = None) -> TrainResult:
    """Train on ``dataset.train``; keep the parameters with the best validation MRR.

    Validation runs every ``valid_every`` epochs and after the final epoch.
    Without a validation split the final parameters are returned.
    """
    init_seq, shuffle_seq, neg_seq = np.random.SeedSequence(config.seed).spawn(3)
    params = init_params(dataset.n_entities, dataset.n_relations, dataset.n_timestamps, config.dim,
                         np.random.default_rng(init_seq))
    result = TrainResult(params.copy())
    if config.epochs == 0:
        return result
    shuffle_rng = np.random.default_rng(shuffle_seq)
    neg_rng = np.random.default_rng(neg_seq)
    state = AdagradState.zeros_like(params)
    train_quads = np.asarray(dataset.train, dtype=np.int64)
    has_valid = len(dataset.valid) > 0
    if has_valid and filter_index is None:
        filter_index = build_filter_index(dataset.train, dataset.valid, dataset.test)
    pool = ThreadPoolExecutor(config.threads) if config.threads > 1 else None
    try:
        for epoch in range(1, config.epochs + 1):
            started = time.perf_counter()
            order = shuffle_rng.permutation(len(train_quads))
            total = 0.0
            for start in range(0, len(order), config.batch_size):
                pos = train_quads[order[start:start + config.batch_size]]
                negs = corrupt(pos, config.neg_ratio, neg_rng, dataset.n_entities)
                batch_loss, grads = _batch_gradients(params, pos, negs, config, pool)
                total += batch_loss
                adagrad_step(params, grads.scale(1.0 / len(pos)), state, config.lr)
            record = EpochRecord(epoch, total / max(len(train_quads), 1))
            if has_valid and (epoch % config.valid_every == 0 or epoch == config.epochs):
                report = evaluate(dataset.valid, params, filter_index, config.score_agg, threads=config.threads)
                record.valid_mrr = report.mrr
                if result.best_valid_mrr is None or report.mrr > result.best_valid_mrr:
                    result.params = params.copy()
                    result.best_epoch, result.best_valid_mrr = epoch, report.mrr
                    if checkpoint_path is not None:
                        save_checkpoint(checkpoint_path, params, score_agg=config.score_agg, seed=config.seed,
                                        epoch=epoch, granularity=config.granularity)
            result.log.append(record)
            logger.info("epoch %d loss %.4f valid_mrr %s (%.2fs)", epoch, record.mean_loss,
                        record.valid_mrr, time.perf_counter() - started)
            if on_epoch is not None:
                on_epoch(record)
    finally:
        if pool is not None:
            pool.shutdown()
    if not has_valid:
        result.params, result.best_epoch = params.copy(), config.epochs
        if checkpoint_path is not None:
            save_checkpoint(checkpoint_path, params, score_agg=config.score_agg, seed=config.seed,
                            epoch=config.epochs, granularity=config.granularity)
    return result


def config_dict(config: TrainConfig) -> dict:
    return asdict(config)
