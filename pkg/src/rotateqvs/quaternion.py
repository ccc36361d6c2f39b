"""Hamilton quaternion arithmetic and 3D rotation kernel.

Every function accepts a scalar :class:`Quaternion`, a :class:`QuaternionVector`
or a raw ``ndarray`` whose *first* axis has length 4 (components ``a, b, c, d``)
and returns a value of the same kind.  The array form is what the model uses:
embedding tables are stored as ``(4, n, k)`` so each component channel is
contiguous.

Rotation angles are full angles; :func:`unit_from_axis_angle` halves them.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import BadAxisError, ZeroNormError

__all__ = [
    "Quaternion",
    "UnitQuaternion",
    "QuaternionVector",
    "conjugate",
    "inner",
    "norm",
    "inverse",
    "hamilton",
    "hamilton_3d",
    "conj_product_identity_check",
    "unit_from_axis_angle",
    "rotate",
    "rodrigues_oracle",
    "normalize",
]

# threshold on the squared norm below which inversion/normalization refuses
ZERO_NORM_SQ = 1e-12
AXIS_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class Quaternion:
    a: float
    b: float = 0.0
    c: float = 0.0
    d: float = 0.0

    def __post_init__(self):
        for name in ("a", "b", "c", "d"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise ValueError(f"quaternion component {name} is not finite: {value}")
            object.__setattr__(self, name, value)

    @classmethod
    def from_array(cls, arr) -> "Quaternion":
        a, b, c, d = np.asarray(arr, dtype=np.float64).reshape(4)
        return cls(a, b, c, d)

    def as_array(self) -> np.ndarray:
        return np.array([self.a, self.b, self.c, self.d], dtype=np.float64)

    @property
    def real(self) -> float:
        return self.a

    @property
    def imag(self) -> np.ndarray:
        return np.array([self.b, self.c, self.d], dtype=np.float64)

    def conjugate(self) -> "Quaternion":
        return conjugate(self)

    def norm(self) -> float:
        return norm(self)

    def inverse(self) -> "Quaternion":
        return inverse(self)

    # value equality, so a UnitQuaternion equals the plain Quaternion with the same components
    def __eq__(self, other):
        if not isinstance(other, Quaternion):
            return NotImplemented
        return (self.a, self.b, self.c, self.d) == (other.a, other.b, other.c, other.d)

    def __hash__(self):
        return hash((self.a, self.b, self.c, self.d))

    def __mul__(self, other):
        if isinstance(other, Quaternion):
            return hamilton(self, other)
        return Quaternion(self.a * other, self.b * other, self.c * other, self.d * other)

    def __rmul__(self, other):
        return Quaternion(self.a * other, self.b * other, self.c * other, self.d * other)

    def __add__(self, other: "Quaternion") -> "Quaternion":
        return Quaternion(self.a + other.a, self.b + other.b, self.c + other.c, self.d + other.d)

    def __sub__(self, other: "Quaternion") -> "Quaternion":
        return Quaternion(self.a - other.a, self.b - other.b, self.c - other.c, self.d - other.d)

    def __neg__(self) -> "Quaternion":
        return Quaternion(-self.a, -self.b, -self.c, -self.d)


@dataclass(frozen=True, eq=False)
class UnitQuaternion(Quaternion):
    """A quaternion normalized to unit norm at construction."""

    def __post_init__(self):
        super().__post_init__()
        n2 = self.a**2 + self.b**2 + self.c**2 + self.d**2
        if n2 < ZERO_NORM_SQ:
            raise ZeroNormError("cannot build a unit quaternion from a zero quaternion")
        n = math.sqrt(n2)
        for name in ("a", "b", "c", "d"):
            object.__setattr__(self, name, getattr(self, name) / n)


@dataclass(frozen=True)
class QuaternionVector:
    """``k`` quaternions stored component-major as a ``(4, k)`` array."""

    data: np.ndarray = field(repr=False)

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 2 or data.shape[0] != 4 or data.shape[1] < 1:
            raise ValueError(f"expected a (4, k) array with k >= 1, got shape {data.shape}")
        object.__setattr__(self, "data", data)

    @classmethod
    def from_components(cls, a, b, c, d) -> "QuaternionVector":
        parts = [np.asarray(x, dtype=np.float64).ravel() for x in (a, b, c, d)]
        if len({p.shape[0] for p in parts}) != 1:
            raise ValueError("component sequences must have identical length")
        return cls(np.stack(parts))

    @classmethod
    def from_quaternions(cls, qs) -> "QuaternionVector":
        return cls(np.stack([q.as_array() for q in qs], axis=1))

    @property
    def k(self) -> int:
        return self.data.shape[1]

    a = property(lambda self: self.data[0])
    b = property(lambda self: self.data[1])
    c = property(lambda self: self.data[2])
    d = property(lambda self: self.data[3])

    def __len__(self) -> int:
        return self.k

    def __getitem__(self, m: int) -> Quaternion:
        return Quaternion.from_array(self.data[:, m])

    def __iter__(self):
        return (self[m] for m in range(self.k))

    def __repr__(self) -> str:
        return f"QuaternionVector(k={self.k})"


def _unwrap(q):
    if isinstance(q, Quaternion):
        return q.as_array(), Quaternion.from_array
    if isinstance(q, QuaternionVector):
        return q.data, QuaternionVector
    arr = np.asarray(q, dtype=np.float64)
    if arr.shape[:1] != (4,):
        raise ValueError(f"leading axis must have length 4, got shape {arr.shape}")
    return arr, lambda x: x


def conjugate(q):
    x, wrap = _unwrap(q)
    out = -x
    out[0] = x[0]
    return wrap(out)


def inner(q1, q2):
    x, _ = _unwrap(q1)
    y, _ = _unwrap(q2)
    out = (x * y).sum(axis=0)
    return float(out) if out.ndim == 0 else out


def norm(q):
    x, _ = _unwrap(q)
    out = np.sqrt((x * x).sum(axis=0))
    return float(out) if out.ndim == 0 else out


def inverse(q):
    x, wrap = _unwrap(q)
    n2 = (x * x).sum(axis=0)
    if np.any(n2 < ZERO_NORM_SQ):
        raise ZeroNormError("zero quaternion has no inverse")
    out = -x / n2
    out[0] = x[0] / n2
    return wrap(out)


def normalize(q):
    x, wrap = _unwrap(q)
    n2 = (x * x).sum(axis=0)
    if np.any(n2 < ZERO_NORM_SQ):
        raise ZeroNormError("cannot normalize a zero quaternion")
    out = x / np.sqrt(n2)
    if isinstance(q, Quaternion):
        return UnitQuaternion(*out)
    return wrap(out)


def _hamilton(x, y):
    a1, b1, c1, d1 = x
    a2, b2, c2, d2 = y
    return np.stack(
        [
            a1 * a2 - b1 * b2 - c1 * c2 - d1 * d2,
            a1 * b2 + b1 * a2 + c1 * d2 - d1 * c2,
            a1 * c2 - b1 * d2 + c1 * a2 + d1 * b2,
            a1 * d2 + b1 * c2 - c1 * b2 + d1 * a2,
        ]
    )


def hamilton(q1, q2):
    """Hamilton product ``q1 q2`` from the expanded component formula."""
    x, wrap = _unwrap(q1)
    y, _ = _unwrap(q2)
    return wrap(_hamilton(x, y))


def hamilton_3d(q1, q2):
    """Hamilton product via scalar/vector parts: ``(a1a2 - v1.v2, a1v2 + a2v1 + v1 x v2)``.

    Kept as a second, independently written path to cross-check :func:`hamilton`.
    """
    x, wrap = _unwrap(q1)
    y, _ = _unwrap(q2)
    a1, v1 = x[0], x[1:]
    a2, v2 = y[0], y[1:]
    scalar = a1 * a2 - (v1 * v2).sum(axis=0)
    vector = a1 * v2 + a2 * v1 + np.cross(v1, v2, axisa=0, axisb=0, axisc=0)
    return wrap(np.concatenate([scalar[None], vector], axis=0))


def conj_product_identity_check(qs) -> float:
    """Max abs difference between ``conj(q1 q2 [q3])`` and the reversed product of conjugates."""
    if len(qs) not in (2, 3):
        raise ValueError("expected 2 or 3 quaternions")
    arrs = [_unwrap(q)[0] for q in qs]
    prod = arrs[0]
    for x in arrs[1:]:
        prod = _hamilton(prod, x)
    lhs = conjugate(prod)
    rhs = conjugate(arrs[-1])
    for x in reversed(arrs[:-1]):
        rhs = _hamilton(rhs, conjugate(x))
    return float(np.max(np.abs(lhs - rhs)))


def _check_axis(u):
    u = np.asarray(u, dtype=np.float64)
    if u.shape[:1] != (3,):
        raise BadAxisError(f"axis must have leading length 3, got shape {u.shape}")
    length = np.sqrt((u * u).sum(axis=0))
    if np.any(np.abs(length - 1.0) > AXIS_TOL):
        raise BadAxisError("rotation axis must be a unit vector")
    return u


def unit_from_axis_angle(u, theta):
    """``cos(theta/2) + u sin(theta/2)`` for a unit axis ``u``.

    Scalar inputs give a :class:`UnitQuaternion`; batched ``u`` of shape
    ``(3, ...)`` gives a ``(4, ...)`` array.
    """
    u = _check_axis(u)
    half = np.asarray(theta, dtype=np.float64) / 2.0
    real = np.broadcast_to(np.cos(half), u.shape[1:])[None]
    out = np.concatenate([real, u * np.sin(half)], axis=0)
    if out.ndim == 1:
        # bypass renormalization so the exact half-angle values are kept
        q = UnitQuaternion.__new__(UnitQuaternion)
        for name, value in zip("abcd", out):
            object.__setattr__(q, name, float(value))
        return q
    return out


def rotate(x, q):
    """Sandwich product ``q x conj(q)``; rotates Im(x) and keeps Re(x).

    Scalar ``q`` must be unit (a :class:`UnitQuaternion`, or within 1e-9 of
    norm one).  Arrays are trusted to be unit already.
    """
    if isinstance(q, Quaternion) and not isinstance(q, UnitQuaternion):
        if abs(norm(q) - 1.0) > AXIS_TOL:
            raise ValueError("rotate() needs a unit quaternion; normalize() it first")
    xa, wrap = _unwrap(x)
    qa, _ = _unwrap(q)
    return wrap(_hamilton(_hamilton(qa, xa), conjugate(qa)))


def rodrigues_oracle(v, u, theta):
    """Rotate 3D vector(s) ``v`` by ``theta`` about unit axis ``u`` (Rodrigues' formula)."""
    v = np.asarray(v, dtype=np.float64)
    u = _check_axis(u)
    theta = np.asarray(theta, dtype=np.float64)
    parallel = u * (u * v).sum(axis=0)
    perp = v - parallel
    cross = np.cross(u, v, axisa=0, axisb=0, axisc=0)
    return perp * np.cos(theta) + cross * np.sin(theta) + parallel
