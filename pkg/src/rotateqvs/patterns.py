"""Relation-pattern diagnostics over trained parameters.

All functions return raw numbers; deciding what counts as "close to zero" is
left to the caller.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ZeroNormError
from .model import ModelParams, _rotate, unit_time
from .quaternion import QuaternionVector, _hamilton, conjugate

_TINY = 1e-300


def _relation(params: ModelParams, r_id: int) -> np.ndarray:
    if not 0 <= int(r_id) < params.n_relations:
        raise IndexError(f"relation id {r_id} out of range")
    return params.relation[:, int(r_id)].astype(np.float64)


def real_part_magnitude(r_id: int, params: ModelParams) -> float:
    """``||Re(r)|| / ||r||``: 0 for a purely imaginary relation, 1 for a purely real one."""
    r = _relation(params, r_id)
    total = np.linalg.norm(r)
    if total < _TINY:
        raise ZeroNormError(f"relation {r_id} embedding is identically zero")
    return float(np.linalg.norm(r[0]) / total)


def inversion_residual(r1_id: int, r2_id: int, params: ModelParams) -> tuple[float, float]:
    """``(||Re r1 + Re r2||, ||Im r1 - Im r2||) / (||r1|| + ||r2||)``; both zero for an exact inverse pair."""
    r1, r2 = _relation(params, r1_id), _relation(params, r2_id)
    scale = np.linalg.norm(r1) + np.linalg.norm(r2)
    if scale < _TINY:
        raise ZeroNormError("both relation embeddings are zero")
    return (float(np.linalg.norm(r1[0] + r2[0]) / scale),
            float(np.linalg.norm(r1[1:] - r2[1:]) / scale))


def _transport(r: np.ndarray, tau1_raw: np.ndarray, tau2_raw: np.ndarray) -> np.ndarray:
    q1, _ = unit_time(tau1_raw)
    q2, _ = unit_time(tau2_raw)
    # unit q1: inverse == conjugate
    q = _hamilton(q2, conjugate(q1))
    return _rotate(r, q)


def temporal_transport(r1_id: int, tau1_id: int, tau2_id: int, params: ModelParams) -> QuaternionVector:
    """``(q2 q1^-1) r1 (q2 q1^-1)^-1`` per coordinate: ``r1`` carried from time 1 to time 2."""
    return QuaternionVector(
        _transport(_relation(params, r1_id), params.time[:, tau1_id], params.time[:, tau2_id])
    )


def cosine_similarity(x, y) -> float:
    """Cosine between the flattened ``4k`` real coordinates of two quaternion vectors."""
    x = (x.data if isinstance(x, QuaternionVector) else np.asarray(x, dtype=np.float64)).ravel()
    y = (y.data if isinstance(y, QuaternionVector) else np.asarray(y, dtype=np.float64)).ravel()
    if x.shape != y.shape:
        raise ValueError("quaternion vectors must have equal length")
    nx, ny = np.linalg.norm(x), np.linalg.norm(y)
    if nx < _TINY or ny < _TINY:
        raise ZeroNormError("cosine similarity of a zero vector")
    return float(np.clip(x @ y / (nx * ny), -1.0, 1.0))


def deduction_check(r1_id: int, r2_id: int, tau1_id: int, tau2_id: int, params: ModelParams) -> tuple[float, float]:
    """``(max_m | |r1[m]| - |r2[m]| |, max_m |Re r1[m] - Re r2[m]|)`` for an evolving pair.

    The timestamps are not needed by the two necessary conditions; they are
    accepted so callers can pass a fact pair unchanged.
    """
    del tau1_id, tau2_id
    r1, r2 = _relation(params, r1_id), _relation(params, r2_id)
    norm_gap = np.abs(np.linalg.norm(r1, axis=0) - np.linalg.norm(r2, axis=0)).max()
    real_gap = np.abs(r1[0] - r2[0]).max()
    return float(norm_gap), float(real_gap)


@dataclass
class HistogramTable:
    bin_lo: np.ndarray
    bin_hi: np.ndarray
    positive_density: np.ndarray
    negative_density: np.ndarray
    positive_scores: np.ndarray = field(repr=False)
    negative_scores: np.ndarray = field(repr=False)

    def __len__(self) -> int:
        return len(self.bin_lo)

    def rows(self):
        return zip(self.bin_lo.tolist(), self.bin_hi.tolist(),
                   self.positive_density.tolist(), self.negative_density.tolist())

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["bin_lo", "bin_hi", "positive_density", "negative_density"])
            writer.writerows(self.rows())


def evolution_histogram(fact_pairs, params: ModelParams, rng: np.random.Generator,
                        negatives_per_pair: int = 1, bin_width: float = 0.01) -> HistogramTable:
    """Similarity of transported base relations to target relations vs. random relations.

    ``fact_pairs`` holds ``(base_quad, target_quad)`` pairs sharing head and
    tail.  For each pair the base relation is transported from the base
    timestamp to the target timestamp and compared with the target relation
    (positive) and with ``negatives_per_pair`` uniformly drawn other
    relations (negatives).  Both populations are binned on ``[-1, 1]``.
    """
    pairs = np.asarray(fact_pairs, dtype=np.int64).reshape(-1, 2, 4)
    empty = np.empty(0)
    if len(pairs) == 0:
        return HistogramTable(empty, empty, empty, empty, empty, empty)
    if params.n_relations < 2:
        raise ValueError("negative relations need at least two relations")
    if np.any(pairs[:, 0, [0, 2]] != pairs[:, 1, [0, 2]]):
        raise ValueError("fact pairs must share head and tail entities")
    pos, neg = [], []
    for base, target in pairs:
        moved = _transport(_relation(params, base[1]), params.time[:, base[3]], params.time[:, target[3]])
        pos.append(cosine_similarity(moved, _relation(params, target[1])))
        for _ in range(negatives_per_pair):
            r_neg = int(rng.integers(params.n_relations - 1))
            r_neg += r_neg >= target[1]
            neg.append(cosine_similarity(moved, _relation(params, r_neg)))
    n_bins = int(round(2.0 / bin_width))
    edges = np.linspace(-1.0, 1.0, n_bins + 1)
    pos, neg = np.asarray(pos), np.asarray(neg)
    pos_density, _ = np.histogram(pos, bins=edges, density=True)
    neg_density, _ = np.histogram(neg, bins=edges, density=True)
    return HistogramTable(edges[:-1], edges[1:], pos_density, neg_density, pos, neg)


def write_pattern_rows(path, rows: list[dict]) -> None:
    """One CSV row per diagnostic; columns are the union of row keys, in first-seen order."""
    columns: list[str] = []
    for row in rows:
        columns.extend(k for k in row if k not in columns)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns)
        writer.writeheader()
        writer.writerows(rows)
