"""Time-wise filtered link prediction: ranks, MRR and Hits@k."""
from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .data import FilterIndex
from .exceptions import EmptyRanksError
from .model import ModelParams, _rotate, aggregate, unit_time
from .quaternion import conjugate

SIDES = ("head", "tail")
# caps the (4, chunk, n_entities, k) residual block at roughly 64 MB
_CHUNK_FLOATS = 8_000_000


@dataclass
class Metrics:
    mrr: float
    hits1: float
    hits3: float
    hits10: float
    n_queries: int


@dataclass
class EvalReport(Metrics):
    per_direction: dict = field(default_factory=dict)

    def as_row(self) -> dict:
        row = {k: v for k, v in asdict(self).items() if k != "per_direction"}
        for side, m in self.per_direction.items():
            row.update({f"{side}_{k}": v for k, v in asdict(m).items()})
        return row

    def to_text(self) -> str:
        lines = [f"{'':<8}{'MRR':>8}{'Hits@1':>8}{'Hits@3':>8}{'Hits@10':>9}{'n':>8}"]
        for name, m in [("all", self), *self.per_direction.items()]:
            lines.append(f"{name:<8}{m.mrr:>8.4f}{m.hits1:>8.4f}{m.hits3:>8.4f}{m.hits10:>9.4f}{m.n_queries:>8d}")
        return "\n".join(lines)

    def write_csv(self, path) -> None:
        row = self.as_row()
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(row))
            writer.writeheader()
            writer.writerow(row)


def _metrics(ranks) -> Metrics:
    ranks = np.asarray(ranks, dtype=np.float64)
    if ranks.size == 0:
        raise EmptyRanksError("cannot compute metrics from zero ranks")
    return Metrics(
        mrr=float(np.mean(1.0 / ranks)),
        hits1=float(np.mean(ranks <= 1)),
        hits3=float(np.mean(ranks <= 3)),
        hits10=float(np.mean(ranks <= 10)),
        n_queries=int(ranks.size),
    )


def metrics(ranks: Sequence[int]) -> EvalReport:
    return EvalReport(**asdict(_metrics(ranks)))


def candidate_distances(params: ModelParams, quads: np.ndarray, side: str, score_agg: str = "l1") -> np.ndarray:
    """Scores of every entity substituted on ``side``; returns ``(len(quads), n_entities)``.

    Queries are grouped by timestamp so the entity table is rotated once per
    timestamp.
    """
    if side not in SIDES:
        raise ValueError(f"side must be one of {SIDES}")
    quads = np.asarray(quads, dtype=np.int64).reshape(-1, 4)
    n_e, k = params.n_entities, params.k
    out = np.empty((len(quads), n_e))
    chunk = max(1, _CHUNK_FLOATS // (4 * n_e * k))
    for t in np.unique(quads[:, 3]):
        idx = np.flatnonzero(quads[:, 3] == t)
        q, _ = unit_time(params.time[:, t])  # (4, k)
        table_t = _rotate(params.entity, q[:, None, :])  # (4, n_e, k)
        for start in range(0, idx.size, chunk):
            sel = idx[start:start + chunk]
            rel = params.relation[:, quads[sel, 1]][:, :, None, :]
            if side == "tail":
                s_t = table_t[:, quads[sel, 0]][:, :, None, :]
                residual = s_t + rel - conjugate(table_t)[:, None]
            else:
                o_bar = conjugate(table_t[:, quads[sel, 2]])[:, :, None, :]
                residual = table_t[:, None] + rel - o_bar
            out[sel] = aggregate(residual, score_agg)
    return out


def _ranks_from_scores(quads, scores, side, filter_index: FilterIndex | None) -> np.ndarray:
    ranks = np.empty(len(quads), dtype=np.int64)
    col = 2 if side == "tail" else 0
    for i, (s, r, o, t) in enumerate(quads.tolist()):
        answer = quads[i, col]
        row = scores[i]
        better = row < row[answer]
        if filter_index is not None:
            known = filter_index.true_tails(s, r, t) if side == "tail" else filter_index.true_heads(r, o, t)
            if known:
                better[list(known)] = False
        ranks[i] = 1 + int(better.sum())
    return ranks


def side_ranks(quads, params, filter_index: FilterIndex | None, side: str, score_agg: str = "l1") -> np.ndarray:
    """Optimistic filtered ranks (``filter_index=None`` gives raw ranks)."""
    quads = np.asarray(quads, dtype=np.int64).reshape(-1, 4)
    scores = candidate_distances(params, quads, side, score_agg)
    return _ranks_from_scores(quads, scores, side, filter_index)


def rank(q, params: ModelParams, filter_index: FilterIndex | None, side: str, score_agg: str = "l1") -> int:
    """Rank of the true answer of ``q`` among all entities on ``side``.

    Counts only candidates scoring strictly lower than the true fact; other
    true facts at the same timestamp are skipped.
    """
    return int(side_ranks(np.asarray(q)[None], params, filter_index, side, score_agg)[0])


def evaluate(split, params: ModelParams, filter_index: FilterIndex | None, score_agg: str = "l1",
             threads: int = 1) -> EvalReport:
    """Head and tail ranks for every quadruple in ``split``, pooled plus per direction."""
    quads = np.asarray(split, dtype=np.int64).reshape(-1, 4)
    jobs = [(side, t) for side in SIDES for t in np.unique(quads[:, 3])]

    def run(job):
        side, t = job
        sel = quads[quads[:, 3] == t]
        return side_ranks(sel, params, filter_index, side, score_agg)

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(run, jobs))
    else:
        results = [run(job) for job in jobs]
    by_side = {side: [] for side in SIDES}
    for (side, _), ranks in zip(jobs, results):
        by_side[side].append(ranks)
    by_side = {side: np.concatenate(parts) if parts else np.empty(0, np.int64) for side, parts in by_side.items()}
    report = metrics(np.concatenate([by_side["head"], by_side["tail"]]))
    report.per_direction = {side: _metrics(r) for side, r in by_side.items()}
    return report


def read_eval_csv(path) -> dict:
    with open(Path(path), newline="", encoding="utf-8") as fh:
        return next(csv.DictReader(fh))

