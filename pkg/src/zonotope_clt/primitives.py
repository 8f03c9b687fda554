"""Enumeration of primitive lattice vectors in a cone cap, and weighted sums over them."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .cones import Cone, _ConeLike, cap_vertices, homogeneous_exp_integral

# each dropped term has weight <= exp(-TAIL_FACTOR)
TAIL_FACTOR = 40.0
DEFAULT_BUDGET = 80_000_000
_SLAB_POINTS = 2_000_000


class EnumerationBudgetError(MemoryError):
    def __init__(self, estimate: int, budget: int):
        super().__init__(f"candidate box holds ~{estimate:,} lattice points, budget is {budget:,}")
        self.estimate = estimate
        self.budget = budget


class CutoffError(ValueError):
    """The enumeration cutoff is too small for the requested weight parameter."""


def gcd_rows(vectors: np.ndarray) -> np.ndarray:
    """gcd of the absolute coordinates of each row (``gcd(x, 0) = |x|``)."""
    return np.gcd.reduce(np.abs(vectors), axis=1)


@dataclass(frozen=True, eq=False)
class PrimitiveSet:
    """Primitive integer vectors of ``cone`` with ``a.x <= cutoff``, lexicographically ordered."""

    cone: _ConeLike
    a: np.ndarray
    cutoff: float
    vectors: np.ndarray
    weights: np.ndarray

    def __len__(self) -> int:
        return len(self.vectors)

    @property
    def d(self) -> int:
        return self.vectors.shape[1]

    @cached_property
    def index(self) -> dict:
        return {tuple(int(c) for c in v): i for i, v in enumerate(self.vectors)}

    def mask(self, sub: _ConeLike | None) -> np.ndarray:
        if sub is None:
            return np.ones(len(self), dtype=bool)
        return sub.contains(self.vectors)

    def restrict(self, sub: _ConeLike | None = None, cutoff: float | None = None) -> "PrimitiveSet":
        """Subset inside ``sub`` (a subcone of ``self.cone``) and/or below a smaller cutoff."""
        keep = self.mask(sub)
        if cutoff is not None:
            if cutoff > self.cutoff:
                raise CutoffError("cannot raise the cutoff of an existing enumeration")
            keep &= self.weights <= cutoff
        return PrimitiveSet(sub if sub is not None else self.cone, self.a,
                            self.cutoff if cutoff is None else cutoff,
                            self.vectors[keep], self.weights[keep])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"x{i + 1}" for i in range(self.d)] + ["weight"])
            for v, wt in zip(self.vectors, self.weights):
                w.writerow([int(c) for c in v] + [repr(float(wt))])


def enumerate_primitives(cone: _ConeLike, a, T: float, budget: int = DEFAULT_BUDGET) -> PrimitiveSet:
    """All primitive vectors ``x`` of ``cone`` with ``a.x <= T``.

    Scans the integer bounding box of the cap polytope slab by slab along the
    first coordinate, so the output is in lexicographic order.
    """
    a = cone.check_dual(a)
    d = cone.d
    if T <= 0:
        raise ValueError("cutoff T must be positive")
    verts = cap_vertices(cone, a, T)
    if len(verts) == 0:
        return PrimitiveSet(cone, a, T, np.zeros((0, d), dtype=np.int64), np.zeros(0))
    lo = np.floor(verts.min(axis=0) - 1e-9 * T).astype(np.int64)
    hi = np.ceil(verts.max(axis=0) + 1e-9 * T).astype(np.int64)
    sizes = hi - lo + 1
    estimate = int(np.prod(sizes.astype(float)))
    if estimate > budget:
        raise EnumerationBudgetError(estimate, budget)

    rest = [np.arange(lo[i], hi[i] + 1) for i in range(1, d)]
    rest_pts = np.stack(np.meshgrid(*rest, indexing="ij"), -1).reshape(-1, d - 1)
    slab = max(1, _SLAB_POINTS // len(rest_pts))
    t_hi = T * (1 + 1e-12)
    chunks = []
    for start in range(lo[0], hi[0] + 1, slab):
        first = np.arange(start, min(start + slab, hi[0] + 1))
        pts = np.empty((len(first) * len(rest_pts), d), dtype=np.int64)
        pts[:, 0] = np.repeat(first, len(rest_pts))
        pts[:, 1:] = np.tile(rest_pts, (len(first), 1))
        keep = (pts @ a <= t_hi) & np.any(pts != 0, axis=1)
        pts = pts[keep]
        pts = pts[cone.contains(pts)]
        pts = pts[gcd_rows(pts) == 1]
        chunks.append(pts)
    vectors = np.concatenate(chunks) if chunks else np.zeros((0, d), dtype=np.int64)
    return PrimitiveSet(cone, a, T, vectors, vectors @ a)


def monomial_values(vectors: np.ndarray, degree: int) -> np.ndarray:
    """``f(x)`` for the monomials of a degree: shape ``(N,)``, ``(N, d)`` or ``(N, d, d)``."""
    x = vectors.astype(float)
    if degree == 0:
        return np.ones(len(x))
    if degree == 1:
        return x
    if degree == 2:
        return x[:, :, None] * x[:, None, :]
    raise ValueError("degree must be 0, 1 or 2")


def weighted_primitive_sum(pset: PrimitiveSet, degree: int, beta: float):
    """``sum_x f(x) exp(-beta a.x)`` over the set, for all monomials f of ``degree``.

    Requires ``cutoff >= 40 / beta``: every omitted term then carries a factor
    below ``e^-40`` and the dropped tail is far below 1e-12 of the total.
    """
    if beta <= 0:
        raise ValueError("beta must be positive")
    if pset.cutoff * beta < TAIL_FACTOR * (1 - 1e-12):
        raise CutoffError(f"cutoff {pset.cutoff:g} < {TAIL_FACTOR:g}/beta = {TAIL_FACTOR / beta:g}")
    w = np.exp(-beta * pset.weights)
    if degree == 0:
        return float(w.sum())
    x = pset.vectors.astype(float)
    if degree == 1:
        return w @ x
    return np.einsum("n,ni,nj->ij", w, x, x)


def density_ratio(cone: _ConeLike, a, beta: float, degree: int = 0, component: int = 0) -> float:
    """``beta^{d+h} sum_x f(x) e^{-beta a.x} / int_C f(y) e^{-a.y} dy`` for ``f = 1`` or ``f = x_i``.

    Tends to ``1/zeta(d)`` as ``beta -> 0``.
    """
    if degree not in (0, 1):
        raise ValueError("degree must be 0 or 1")
    pset = enumerate_primitives(cone, a, TAIL_FACTOR / beta)
    s = weighted_primitive_sum(pset, degree, beta)
    integral = homogeneous_exp_integral(cone, a, degree)
    if degree == 1:
        s, integral = s[component], integral[component]
    return float(beta ** (cone.d + degree) * s / integral)


def density_check(N: int, d: int = 2, cone: _ConeLike | None = None) -> float:
    """Fraction of primitive points among the nonzero lattice points of ``[0, N]^d`` in ``cone``."""
    if cone is None:
        cone = Cone.orthant(d)
    axes = [np.arange(N + 1)] * d
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, d)
    pts = pts[np.any(pts != 0, axis=1)]
    pts = pts[cone.contains(pts)]
    if len(pts) == 0:
        return math.nan
    return float(np.count_nonzero(gcd_rows(pts) == 1) / len(pts))
