"""RotateQVS parameters, forward pass, margin loss and analytic gradients.

A fact ``(s, r, o, t)`` is scored by rotating both entity embeddings with the
timestamp's unit quaternion ``q`` (``e_t = q e conj(q)``) and measuring

    f = agg_m || s_t[m] + r[m] - conj(o_t[m]) ||

where ``agg`` is the sum of per-coordinate quaternion norms (``"l1"``) or
the Euclidean norm over all ``4k`` residual values (``"l2"``).  Lower is more
plausible.  Stored time embeddings are raw quaternions; they are normalized
per coordinate on every forward pass and gradients flow through that
normalization.
"""
from __future__ import annotations

import io
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np
from scipy.special import expit

from .exceptions import ShapeMismatchError, ZeroNormError
from .quaternion import ZERO_NORM_SQ, QuaternionVector, _hamilton, conjugate

SCORE_AGGS = ("l1", "l2")
CHECKPOINT_MAGIC = "ROTATEQVS-CHECKPOINT 1"
_HEADER_END = "END"


@dataclass
class ModelParams:
    """Embedding tables, each shaped ``(4, rows, k)``."""

    entity: np.ndarray
    relation: np.ndarray
    time: np.ndarray

    def __post_init__(self):
        k = {self.entity.shape[2], self.relation.shape[2], self.time.shape[2]}
        if len(k) != 1 or any(t.shape[0] != 4 for t in self.tables()):
            raise ValueError("tables must all be (4, n, k) with a common k")

    @property
    def k(self) -> int:
        return self.entity.shape[2]

    @property
    def n_entities(self) -> int:
        return self.entity.shape[1]

    @property
    def n_relations(self) -> int:
        return self.relation.shape[1]

    @property
    def n_timestamps(self) -> int:
        return self.time.shape[1]

    def tables(self):
        return self.entity, self.relation, self.time

    def copy(self) -> "ModelParams":
        return ModelParams(self.entity.copy(), self.relation.copy(), self.time.copy())

    def entity_vector(self, i: int) -> QuaternionVector:
        return QuaternionVector(self.entity[:, i])

    def relation_vector(self, i: int) -> QuaternionVector:
        return QuaternionVector(self.relation[:, i])

    def time_vector(self, i: int) -> QuaternionVector:
        """Raw (unnormalized) stored time embedding."""
        return QuaternionVector(self.time[:, i])

    def equals(self, other: "ModelParams") -> bool:
        return all(np.array_equal(a, b) for a, b in zip(self.tables(), other.tables()))


def init_params(n_entities, n_relations, n_timestamps, k, rng, dtype=np.float64) -> ModelParams:
    """Uniform init in ``[-6/sqrt(4k), 6/sqrt(4k)]`` for all three tables."""
    if min(n_entities, n_relations, n_timestamps, k) < 1:
        raise ValueError("all counts and k must be >= 1")
    bound = 6.0 / np.sqrt(4 * k)
    tables = [rng.uniform(-bound, bound, size=(4, n, k)).astype(dtype, copy=False)
              for n in (n_entities, n_relations, n_timestamps)]
    return ModelParams(*tables)


def unit_time(raw: np.ndarray):
    """Per-coordinate normalization of raw time quaternions; returns ``(unit, norms)``."""
    raw = np.asarray(raw, dtype=np.float64)
    n2 = (raw * raw).sum(axis=0)
    if np.any(n2 < ZERO_NORM_SQ):
        raise ZeroNormError("degenerate (zero-norm) time embedding coordinate")
    n = np.sqrt(n2)
    return raw / n, n


def _rotate(x, q):
    return _hamilton(_hamilton(q, x), conjugate(q))


def time_specific_entity(e, tau_raw):
    """Rotate every coordinate of ``e`` by the normalized ``tau_raw``."""
    wrap = QuaternionVector if isinstance(e, QuaternionVector) else (lambda a: a)
    e = e.data if isinstance(e, QuaternionVector) else np.asarray(e, dtype=np.float64)
    tau_raw = tau_raw.data if isinstance(tau_raw, QuaternionVector) else np.asarray(tau_raw)
    if e.shape != tau_raw.shape:
        raise ValueError(f"shape mismatch: {e.shape} vs {tau_raw.shape}")
    q, _ = unit_time(tau_raw)
    return wrap(_rotate(e, q))


def aggregate(residual: np.ndarray, score_agg: str = "l1") -> np.ndarray:
    """Reduce a ``(4, ..., k)`` residual to a score per leading index."""
    if score_agg == "l1":
        return np.sqrt((residual * residual).sum(axis=0)).sum(axis=-1)
    if score_agg == "l2":
        return np.sqrt((residual * residual).sum(axis=(0, -1)))
    raise ValueError(f"score_agg must be one of {SCORE_AGGS}, got {score_agg!r}")


class _Forward(NamedTuple):
    q: np.ndarray
    tau_norm: np.ndarray
    s: np.ndarray
    o: np.ndarray
    s_t: np.ndarray
    o_t: np.ndarray
    residual: np.ndarray
    value: np.ndarray


def _forward(params: ModelParams, s, r, o, t, score_agg) -> _Forward:
    q, n = unit_time(params.time[:, t])
    S = params.entity[:, s].astype(np.float64, copy=False)
    O = params.entity[:, o].astype(np.float64, copy=False)
    s_t = _rotate(S, q)
    o_t = _rotate(O, q)
    residual = s_t + params.relation[:, r] - conjugate(o_t)
    return _Forward(q, n, S, O, s_t, o_t, residual, aggregate(residual, score_agg))


def distance(params: ModelParams, quads, score_agg: str = "l1") -> np.ndarray:
    """Scores ``f`` for an ``(n, 4)`` array of quadruples."""
    quads = np.asarray(quads, dtype=np.int64).reshape(-1, 4)
    return _forward(params, quads[:, 0], quads[:, 1], quads[:, 2], quads[:, 3], score_agg).value


class ScoreBreakdown(NamedTuple):
    s_t: QuaternionVector
    o_t: QuaternionVector
    residual: QuaternionVector
    value: float


def score(s: int, r: int, o: int, t: int, params: ModelParams, score_agg: str = "l1") -> ScoreBreakdown:
    _check_ids(params, s, r, o, t)
    fw = _forward(params, s, r, o, t, score_agg)
    return ScoreBreakdown(
        QuaternionVector(fw.s_t), QuaternionVector(fw.o_t), QuaternionVector(fw.residual), float(fw.value)
    )


def _check_ids(params, s, r, o, t):
    for name, i, n in (("s", s, params.n_entities), ("r", r, params.n_relations),
                       ("o", o, params.n_entities), ("t", t, params.n_timestamps)):
        if not 0 <= int(i) < n:
            raise IndexError(f"{name}={i} out of range [0, {n})")


def _softplus(x):
    return np.logaddexp(0.0, x)


def margin_loss(pos_scores: np.ndarray, neg_scores: np.ndarray, margin: float) -> np.ndarray:
    """``-log sig(margin - f_pos) - sum_i log sig(f_neg_i - margin)`` per positive.

    ``pos_scores`` is ``(B,)``, ``neg_scores`` is ``(B, n_neg)``.
    """
    return _softplus(pos_scores - margin) + _softplus(margin - neg_scores).sum(axis=-1)


def loss(pos, negs, margin: float, params: ModelParams, score_agg: str = "l1") -> float:
    pos = np.asarray(pos, dtype=np.int64).reshape(1, 4)
    negs = np.asarray(negs, dtype=np.int64).reshape(1, -1, 4)
    if negs.shape[1] == 0:
        raise ValueError("at least one negative sample is required")
    value, _ = loss_and_gradients(params, pos, negs, margin, score_agg, need_grad=False)
    return value


class RowGrad(NamedTuple):
    rows: np.ndarray
    values: np.ndarray  # (4, len(rows), k)


@dataclass
class Gradients:
    """Sparse gradient: only rows touched by the batch are present."""

    entity: RowGrad
    relation: RowGrad
    time: RowGrad

    def scale(self, factor: float) -> "Gradients":
        return Gradients(*(RowGrad(g.rows, g.values * factor) for g in (self.entity, self.relation, self.time)))

    def dense(self, params: ModelParams) -> ModelParams:
        out = ModelParams(*(np.zeros_like(t, dtype=np.float64) for t in params.tables()))
        for table, g in zip(out.tables(), (self.entity, self.relation, self.time)):
            table[:, g.rows] = g.values
        return out


def _scatter(ids: np.ndarray, grad: np.ndarray) -> RowGrad:
    rows, inverse = np.unique(ids, return_inverse=True)
    out = np.zeros((4, rows.size, grad.shape[-1]))
    for c in range(4):
        np.add.at(out[c], inverse, grad[c])
    return RowGrad(rows, out)


def _backward(fw: _Forward, quads: np.ndarray, dscore: np.ndarray, score_agg: str) -> Gradients:
    res = fw.residual
    if score_agg == "l1":
        norms = np.sqrt((res * res).sum(axis=0))
        scale = np.divide(dscore[:, None], norms, out=np.zeros_like(norms), where=norms > 0)
    else:
        f = fw.value
        scale = np.divide(dscore, f, out=np.zeros_like(f), where=f > 0)[:, None]
    G = res * scale  # d loss / d residual
    G_bar = conjugate(G)
    q, q_bar = fw.q, conjugate(fw.q)

    # residual = s_t + r - conj(o_t):  dL/ds_t = G, dL/do_t = -conj(G)
    # x_t = q x conj(q):  dL/dx = conj(q) g q,  dL/dq = g q conj(x) + conj(g) q x
    grad_s = _hamilton(_hamilton(q_bar, G), q)
    grad_o = -_hamilton(_hamilton(q_bar, G_bar), q)
    qs, qo = _hamilton(q, fw.s), _hamilton(q, fw.o)
    grad_q = (
        _hamilton(G, _hamilton(q, conjugate(fw.s)))
        + _hamilton(G_bar, qs)
        - _hamilton(G_bar, _hamilton(q, conjugate(fw.o)))
        - _hamilton(G, qo)
    )
    # q = w / |w|
    grad_w = (grad_q - q * (q * grad_q).sum(axis=0)) / fw.tau_norm

    entity_ids = np.concatenate([quads[:, 0], quads[:, 2]])
    return Gradients(
        entity=_scatter(entity_ids, np.concatenate([grad_s, grad_o], axis=1)),
        relation=_scatter(quads[:, 1], G),
        time=_scatter(quads[:, 3], grad_w),
    )


def loss_and_gradients(params: ModelParams, pos, negs, margin: float, score_agg: str = "l1",
                       need_grad: bool = True):
    """Summed margin loss over a batch and its sparse gradient.

    ``pos`` is ``(B, 4)``; ``negs`` is ``(B, n_neg, 4)``.
    """
    pos = np.asarray(pos, dtype=np.int64).reshape(-1, 4)
    negs = np.asarray(negs, dtype=np.int64)
    B, n_neg = negs.shape[:2]
    quads = np.concatenate([pos, negs.reshape(-1, 4)], axis=0)
    fw = _forward(params, quads[:, 0], quads[:, 1], quads[:, 2], quads[:, 3], score_agg)
    f_pos, f_neg = fw.value[:B], fw.value[B:].reshape(B, n_neg)
    total = float(margin_loss(f_pos, f_neg, margin).sum())
    if not need_grad:
        return total, None
    dscore = np.concatenate([expit(f_pos - margin), -expit(margin - f_neg).ravel()])
    return total, _backward(fw, quads, dscore, score_agg)


def gradients(pos, negs, margin: float, params: ModelParams, score_agg: str = "l1") -> Gradients:
    pos = np.asarray(pos, dtype=np.int64).reshape(1, 4)
    negs = np.asarray(negs, dtype=np.int64).reshape(1, -1, 4)
    return loss_and_gradients(params, pos, negs, margin, score_agg)[1]


def save_checkpoint(path, params: ModelParams, *, score_agg="l1", seed=0, epoch=0, **extra) -> None:
    """Text header then little-endian float64 tables: entity a,b,c,d; relation a,b,c,d; time a,b,c,d."""
    header = {
        "n_e": params.n_entities,
        "n_r": params.n_relations,
        "n_tau": params.n_timestamps,
        "k": params.k,
        "score_agg": score_agg,
        "seed": seed,
        "epoch": epoch,
        **extra,
    }
    lines = [CHECKPOINT_MAGIC, *(f"{key}={value}" for key, value in header.items()), _HEADER_END]
    with open(path, "wb") as fh:
        fh.write(("\n".join(lines) + "\n").encode("utf-8"))
        for table in params.tables():
            fh.write(np.ascontiguousarray(table, dtype="<f8").tobytes())


def load_checkpoint(path) -> tuple[ModelParams, dict]:
    data = Path(path).read_bytes()
    stream = io.BytesIO(data)
    if stream.readline().decode("utf-8").strip() != CHECKPOINT_MAGIC:
        raise ValueError(f"{path} is not a checkpoint file")
    header: dict = {}
    while True:
        line = stream.readline().decode("utf-8").strip()
        if line == _HEADER_END:
            break
        if not line:
            raise ValueError(f"{path}: truncated checkpoint header")
        key, _, value = line.partition("=")
        header[key] = value
    for key in ("n_e", "n_r", "n_tau", "k", "seed", "epoch"):
        header[key] = int(header[key])
    k = header["k"]
    shapes = [(4, header["n_e"], k), (4, header["n_r"], k), (4, header["n_tau"], k)]
    body = np.frombuffer(stream.read(), dtype="<f8")
    expected = sum(int(np.prod(s)) for s in shapes)
    if body.size != expected:
        raise ShapeMismatchError(f"{path}: expected {expected} floats, found {body.size}")
    tables, offset = [], 0
    for shape in shapes:
        size = int(np.prod(shape))
        tables.append(body[offset:offset + size].reshape(shape).astype(np.float64))
        offset += size
    return ModelParams(*tables), header
