"""Special Q-points with real target and the metrics on them.

A special Q-point is an unordered Q-tuple of reals together with a sign.
Points of the form Q[[p]] carry no sign information: ``(Q[[p]], +1)`` and
``(Q[[p]], -1)`` are the same point, and we store them with sign ``+1``.

Besides the scalar API on :class:`QPoint` there are vectorised helpers
(``*_arrays``) working on ``(n, q)`` blocks of sorted values with an ``(n,)``
sign vector. Fields and the solver use those.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

COLLAPSE_TOL = 1e-12


class MultiplicityError(ValueError):
    """Two Q-points with different multiplicities were combined."""


def _collapsed(values: Sequence[float], tol: float = COLLAPSE_TOL) -> bool:
    return (max(values) - min(values)) <= tol


@dataclass(frozen=True)
class ClassicalQPoint:
    """Unordered Q-tuple of reals, stored sorted."""

    values: tuple[float, ...]

    def __post_init__(self):
        vals = tuple(sorted(float(v) for v in self.values))
        if not vals:
            raise ValueError("a Q-point needs at least one value")
        object.__setattr__(self, "values", vals)

    @property
    def q(self) -> int:
        return len(self.values)

    @property
    def mean(self) -> float:
        return math.fsum(self.values) / self.q


@dataclass(frozen=True)
class QPoint:
    """Special Q-point ``(values, sign)`` in canonical form."""

    values: tuple[float, ...]
    sign: int = 1

    def __post_init__(self):
        vals = tuple(sorted(float(v) for v in self.values))
        if not vals:
            raise ValueError("a Q-point needs at least one value")
        if self.sign not in (1, -1):
            raise ValueError(f"sign must be +1 or -1, got {self.sign!r}")
        object.__setattr__(self, "values", vals)
        if _collapsed(vals):
            object.__setattr__(self, "sign", 1)

    @property
    def q(self) -> int:
        return len(self.values)

    @classmethod
    def zero(cls, q: int, at: float = 0.0) -> "QPoint":
        """The point ``Q[[at]]``."""
        return cls((at,) * q, 1)

    @classmethod
    def parse(cls, text: str) -> "QPoint":
        """Parse the ``s:v1,...,vQ`` encoding (``s`` is ``+`` or ``-``)."""
        head, sep, body = text.strip().partition(":")
        if not sep or not body:
            raise ValueError(f"malformed Q-point {text!r}")
        head = head.replace("−", "-")
        if head not in ("+", "-"):
            raise ValueError(f"malformed Q-point sign in {text!r}")
        vals = [float(v.replace("−", "-")) for v in body.split(",")]
        return cls(tuple(vals), 1 if head == "+" else -1)

    def encode(self) -> str:
        body = ",".join(repr(v) for v in self.values)
        return ("+" if self.sign > 0 else "-") + ":" + body

    def is_collapsed(self, tol: float = COLLAPSE_TOL) -> bool:
        return _collapsed(self.values, tol)

    def flipped(self) -> "QPoint":
        return QPoint(self.values, -self.sign)

    def classical(self) -> ClassicalQPoint:
        return ClassicalQPoint(self.values)


def _check_q(a, b):
    if a.q != b.q:
        raise MultiplicityError(f"multiplicities differ: {a.q} != {b.q}")


def g_metric(t: ClassicalQPoint | QPoint, s: ClassicalQPoint | QPoint) -> float:
    """Wasserstein-type distance between classical Q-points.

    For a one-dimensional target the optimal matching is the sorted one.
    """
    _check_q(t, s)
    return math.sqrt(math.fsum((x - y) ** 2 for x, y in zip(t.values, s.values)))


def g_metric_bruteforce(t: ClassicalQPoint, s: ClassicalQPoint) -> float:
    """Minimum over all Q! matchings. Reference implementation for tests."""
    _check_q(t, s)
    best = math.inf
    for perm in itertools.permutations(s.values):
        best = min(best, math.fsum((x - y) ** 2 for x, y in zip(t.values, perm)))
    return math.sqrt(best)


def eta(a: QPoint | ClassicalQPoint) -> float:
    return math.fsum(a.values) / a.q


def _centred_sq(a) -> float:
    m = eta(a)
    return math.fsum((v - m) ** 2 for v in a.values)


def gs_metric(a: QPoint, b: QPoint) -> float:
    _check_q(a, b)
    if a.sign == b.sign:
        return g_metric(a, b)
    d2 = _centred_sq(a) + _centred_sq(b) + a.q * (eta(a) - eta(b)) ** 2
    return math.sqrt(d2)


def ominus(a: QPoint, c: float) -> QPoint:
    return QPoint(tuple(v - c for v in a.values), a.sign)


def norm(a: QPoint) -> float:
    """``|a| = G(a, Q[[0]])``."""
    return math.sqrt(math.fsum(v * v for v in a.values))


def pos_part(a: QPoint) -> ClassicalQPoint:
    if a.sign == 1:
        return ClassicalQPoint(a.values)
    return ClassicalQPoint((eta(a),) * a.q)


def neg_part(a: QPoint) -> ClassicalQPoint:
    if a.sign == -1:
        return ClassicalQPoint(a.values)
    return ClassicalQPoint((eta(a),) * a.q)


# -- vectorised helpers --------------------------------------------------


def canonical_arrays(values, signs, tol: float = COLLAPSE_TOL):
    """Sort rows and force sign +1 on collapsed rows. Returns new arrays."""
    vals = np.sort(np.asarray(values, dtype=float), axis=-1)
    sg = np.where(np.asarray(signs) < 0, -1, 1).astype(np.int8)
    collapsed = (vals[..., -1] - vals[..., 0]) <= tol
    sg = np.where(collapsed, np.int8(1), sg)
    return vals, sg


def gs_sq_arrays(va, sa, vb, sb):
    """Row-wise squared special metric between two blocks of sorted rows."""
    va = np.asarray(va, dtype=float)
    vb = np.asarray(vb, dtype=float)
    q = va.shape[-1]
    same = np.sum((va - vb) ** 2, axis=-1)
    ea = va.mean(axis=-1)
    eb = vb.mean(axis=-1)
    cross = (
        np.sum((va - ea[..., None]) ** 2, axis=-1)
        + np.sum((vb - eb[..., None]) ** 2, axis=-1)
        + q * (ea - eb) ** 2
    )
    return np.where(np.asarray(sa) == np.asarray(sb), same, cross)


def collapsed_arrays(values, tol: float = COLLAPSE_TOL):
    values = np.asarray(values)
    return (values[..., -1] - values[..., 0]) <= tol


def points_to_arrays(points: Iterable[QPoint]):
    pts = list(points)
    if not pts:
        raise ValueError("no points given")
    q = pts[0].q
    for p in pts:
        if p.q != q:
            raise MultiplicityError(f"multiplicities differ: {p.q} != {q}")
    vals = np.array([p.values for p in pts], dtype=float)
    signs = np.array([p.sign for p in pts], dtype=np.int8)
    return vals, signs
