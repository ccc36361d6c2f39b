"""Self-test battery: algebra identities, rotation oracle, gradient and ranking checks."""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import quaternion as qt
from .data import build_filter_index, corrupt
from .evaluation import side_ranks
from .model import ModelParams, distance, gradients, init_params, loss
from .quaternion import Quaternion, UnitQuaternion


@dataclass
class SuiteResult:
    name: str
    passed: bool
    max_residual: float
    tolerance: float
    cases: int
    seconds: float

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"[{status}] {self.name:<11} max_residual={self.max_residual:.3e} "
                f"tol={self.tolerance:.0e} cases={self.cases} ({self.seconds:.2f}s)")


def _timed(name, tol, cases, fn) -> SuiteResult:
    start = time.perf_counter()
    residual = float(fn())
    return SuiteResult(name, residual <= tol, residual, tol, cases, time.perf_counter() - start)


def random_quaternions(rng, n, scale=1.0) -> np.ndarray:
    return rng.normal(scale=scale, size=(4, n))


def algebra_residual(rng, n=10_000) -> float:
    """Worst of: component product vs vector-form product, norm multiplicativity (relative), conjugate reversal."""
    p, q, r = (random_quaternions(rng, n) for _ in range(3))
    prod = qt.hamilton(p, q)
    equiv = np.abs(prod - qt.hamilton_3d(p, q)).max()
    mult = (np.abs(qt.norm(prod) - qt.norm(p) * qt.norm(q)) / (qt.norm(p) * qt.norm(q))).max()
    conj2 = qt.conj_product_identity_check([p, q])
    conj3 = qt.conj_product_identity_check([p, q, r])
    return max(equiv, mult, conj2, conj3)


def rotation_residual(rng, n=10_000) -> float:
    """Worst deviation of the sandwich product from Rodrigues' formula, real part and norm."""
    x = random_quaternions(rng, n)
    axis = rng.normal(size=(3, n))
    axis /= np.linalg.norm(axis, axis=0)
    theta = rng.uniform(-2 * np.pi, 2 * np.pi, size=n)
    q = qt.unit_from_axis_angle(axis, theta)
    y = qt.rotate(x, q)
    expected = qt.rodrigues_oracle(x[1:], axis, theta)
    return max(np.abs(y[1:] - expected).max(), np.abs(y[0] - x[0]).max(),
               np.abs(qt.norm(y) - qt.norm(x)).max())


def finite_difference_gradient(params: ModelParams, pos, negs, margin, score_agg="l1", step=1e-5) -> ModelParams:
    """Central differences of the loss with respect to every stored parameter."""
    out = ModelParams(*(np.zeros_like(t) for t in params.tables()))
    for table, grad in zip(params.tables(), out.tables()):
        for idx in np.ndindex(table.shape):
            old = table[idx]
            table[idx] = old + step
            up = loss(pos, negs, margin, params, score_agg)
            table[idx] = old - step
            down = loss(pos, negs, margin, params, score_agg)
            table[idx] = old
            grad[idx] = (up - down) / (2 * step)
    return out


def gradient_relative_error(rng, score_agg="l1") -> float:
    """One random micro-instance: ``max|analytic - fd| / max|fd|``."""
    k = int(rng.integers(1, 9))
    n_e = int(rng.integers(2, 6))
    n_r = int(rng.integers(1, 4))
    n_t = int(rng.integers(1, 4))
    n_neg = int(rng.integers(1, 4))
    params = init_params(n_e, n_r, n_t, k, rng)
    pos = np.array([rng.integers(n_e), rng.integers(n_r), rng.integers(n_e), rng.integers(n_t)])
    negs = corrupt(pos, n_neg, rng, n_e)[0]
    # keep the loss in its sensitive region
    margin = float(distance(params, pos[None], score_agg)[0]) * rng.uniform(0.8, 1.2)
    analytic = gradients(pos, negs, margin, params, score_agg).dense(params)
    numeric = finite_difference_gradient(params, pos, negs, margin, score_agg)
    a = np.concatenate([t.ravel() for t in analytic.tables()])
    f = np.concatenate([t.ravel() for t in numeric.tables()])
    return float(np.abs(a - f).max() / max(np.abs(f).max(), 1e-12))


def scalar_score(params: ModelParams, s, r, o, t, score_agg="l1") -> float:
    """Score of one fact using scalar quaternion objects only (no array kernels)."""
    parts = []
    for m in range(params.k):
        tau = UnitQuaternion.from_array(params.time[:, t, m])
        tau_inv = tau.conjugate()
        s_t = tau * Quaternion.from_array(params.entity[:, s, m]) * tau_inv
        o_t = tau * Quaternion.from_array(params.entity[:, o, m]) * tau_inv
        res = s_t + Quaternion.from_array(params.relation[:, r, m]) - o_t.conjugate()
        parts.append(res.norm())
    parts = np.asarray(parts)
    return float(parts.sum() if score_agg == "l1" else np.sqrt((parts**2).sum()))


def brute_force_rank(q, side, params: ModelParams, true_facts: set, score_agg="l1") -> int:
    """Materialize every candidate, drop other true facts, sort, and find the answer."""
    s, r, o, t = (int(x) for x in q)
    candidates = []
    for e in range(params.n_entities):
        cand = (s, r, e, t) if side == "tail" else (e, r, o, t)
        is_answer = cand == (s, r, o, t)
        if cand in true_facts and not is_answer:
            continue
        candidates.append((scalar_score(params, *cand, score_agg), not is_answer))
    candidates.sort()
    return 1 + [c[1] for c in candidates].index(False)


def random_toy_graph(rng, n_e=None, n_r=None, n_t=3, n_facts=None):
    n_e = n_e or int(rng.integers(2, 11))
    n_r = n_r or int(rng.integers(1, 6))
    n_facts = n_facts or int(rng.integers(3, 25))
    quads = np.stack([rng.integers(n_e, size=n_facts), rng.integers(n_r, size=n_facts),
                      rng.integers(n_e, size=n_facts), rng.integers(n_t, size=n_facts)], axis=1)
    quads = np.unique(quads, axis=0)
    return quads, n_e, n_r, n_t


def ranking_mismatches(rng, graphs=20, score_agg="l1") -> tuple[int, int]:
    """Returns ``(mismatches, queries)`` between module ranks and the brute-force oracle."""
    mismatches = queries = 0
    for _ in range(graphs):
        quads, n_e, n_r, n_t = random_toy_graph(rng)
        params = init_params(n_e, n_r, n_t, int(rng.integers(1, 5)), rng)
        index = build_filter_index(quads)
        facts = {tuple(int(x) for x in row) for row in quads}
        for side in ("head", "tail"):
            got = side_ranks(quads, params, index, side, score_agg)
            want = [brute_force_rank(row, side, params, facts, score_agg) for row in quads]
            mismatches += int(np.sum(got != np.asarray(want)))
            queries += len(quads)
    return mismatches, queries


def scale_invariance_residual(rng, factor=3.7) -> float:
    params = init_params(8, 3, 4, 6, rng)
    quads = np.stack([rng.integers(8, size=200), rng.integers(3, size=200),
                      rng.integers(8, size=200), rng.integers(4, size=200)], axis=1)
    scaled = ModelParams(params.entity, params.relation, params.time * factor)
    return float(np.abs(distance(params, quads) - distance(scaled, quads)).max())


def run_suites(names=None, seed=0) -> list[SuiteResult]:
    rng = np.random.default_rng(seed)
    suites = {
        "quaternion": lambda: _timed("quaternion", 1e-12, 10_000, lambda: algebra_residual(rng)),
        "rotation": lambda: _timed("rotation", 1e-10, 10_000, lambda: rotation_residual(rng)),
        "gradient": lambda: _timed("gradient", 1e-4, 100,
                                   lambda: max(gradient_relative_error(rng) for _ in range(100))),
        "ranking": lambda: _timed("ranking", 0, 20, lambda: ranking_mismatches(rng)[0]),
        "scale": lambda: _timed("scale", 1e-9, 200, lambda: scale_invariance_residual(rng)),
    }
    selected = names or list(suites)
    unknown = set(selected) - set(suites)
    if unknown:
        raise ValueError(f"unknown suite(s) {sorted(unknown)}; choose from {sorted(suites)}")
    return [suites[name]() for name in selected]


SUITES = ("quaternion", "rotation", "gradient", "ranking", "scale")
