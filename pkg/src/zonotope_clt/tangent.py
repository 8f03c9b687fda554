"""Tangent points of the random zonotope, their fluctuations and Gaussian limits."""

from __future__ import annotations

import csv
import functools
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .boltzmann import Multiplicities, ModelParams, rescale_exponent
from .cones import DegenerateConeError, Halfspace, _ConeLike, limit_cov, sense_cells
from .moments import COND_LIMIT


def _side(vectors: np.ndarray, u) -> np.ndarray:
    """``x.u >= 0`` for each row, exactly when ``u`` is integral."""
    return Halfspace(tuple(u)).test(np.asarray(vectors))


def tangent_point(omega: Multiplicities, u) -> np.ndarray:
    """Endpoint of the sub-zonotope of generators with ``x.u >= 0`` (ties included)."""
    u = np.asarray(u)
    if not np.any(u):
        raise ValueError("direction u must be nonzero")
    x, m = omega.arrays(len(u))
    if len(m) == 0:
        return np.zeros(len(u), dtype=np.int64)
    keep = _side(x, u)
    return m[keep] @ x[keep]


def rescale(params: ModelParams, X, centre) -> np.ndarray:
    return (np.asarray(X, dtype=float) - centre) * params.n ** (-rescale_exponent(params.d))


def rescale_tangent(params: ModelParams, sub: _ConeLike | None, X) -> np.ndarray:
    """``n^{-(d+2)/(2(d+1))} (X - mean_exact(sub))``."""
    from .moments import mean_exact

    return rescale(params, X, mean_exact(params, sub))


@dataclass(frozen=True, eq=False)
class DirectionFamily:
    """Directions ``u_1..u_m`` and the ``2^m`` sign cells they cut out of a cone.

    Cells are keyed by the set ``I`` of indices with ``u_i.x >= 0``; as an
    integer label, index ``i`` contributes bit ``2^i``.
    """

    cone: _ConeLike
    directions: tuple

    def __post_init__(self):
        dirs = tuple(tuple(float(c) if not float(c).is_integer() else int(c) for c in u)
                     for u in self.directions)
        if not dirs:
            raise ValueError("direction family is empty")
        if any(len(u) != self.cone.d or not any(u) for u in dirs):
            raise ValueError("directions must be nonzero d-vectors")
        object.__setattr__(self, "directions", dirs)

    @property
    def m(self) -> int:
        return len(self.directions)

    @cached_property
    def cells(self) -> dict:
        return sense_cells(self.cone, self.directions)

    @staticmethod
    def bitmask(I) -> int:
        return sum(1 << i for i in I)

    def subset(self, label: int) -> frozenset:
        return frozenset(i for i in range(self.m) if label >> i & 1)

    def cell_list(self) -> list:
        """Cells ordered by integer label."""
        return [self.cells[self.subset(b)] for b in range(1 << self.m)]

    def labels(self, vectors: np.ndarray) -> np.ndarray:
        lab = np.zeros(len(vectors), dtype=np.int64)
        for i, u in enumerate(self.directions):
            lab |= _side(vectors, u).astype(np.int64) << i
        return lab

    def to_json(self) -> dict:
        return {"directions": [list(u) for u in self.directions]}


def cell_means(params: ModelParams, family: DirectionFamily) -> np.ndarray:
    """``E`` of the endpoint restricted to each cell, shape ``(2^m, d)``."""
    from .moments import mean_exact

    return np.stack([mean_exact(params, c) for c in family.cell_list()])


def decompose_A_I(omega: Multiplicities, family: DirectionFamily, params: ModelParams) -> dict:
    """``A_I = n^{-(d+2)/(2(d+1))} sum_{x in C_I} (omega(x) - E omega(x)) x`` for every cell."""
    x, m = omega.arrays(params.d)
    sums = np.zeros((1 << family.m, params.d), dtype=np.int64)
    if len(m):
        np.add.at(sums, family.labels(x), m[:, None] * x)
    A = rescale(params, sums, cell_means(params, family))
    return {family.subset(b): A[b] for b in range(1 << family.m)}


def tangents_from_cells(cell_sums: np.ndarray, family: DirectionFamily) -> np.ndarray:
    """Tangent points ``(..., m, d)`` from per-cell endpoint sums ``(..., 2^m, d)``."""
    out = []
    for i in range(family.m):
        sel = [b for b in range(1 << family.m) if b >> i & 1]
        out.append(cell_sums[..., sel, :].sum(axis=-2))
    return np.stack(out, axis=-2)


# ---------------------------------------------------------------------------
# Gaussian limits


def _inv(mat: np.ndarray) -> np.ndarray:
    if not np.all(np.isfinite(mat)) or np.linalg.cond(mat) > COND_LIMIT:
        raise DegenerateConeError("matrix is singular: degenerate (sub)cone")
    return np.linalg.inv(mat)


def harmonic_sum(g1: np.ndarray, g2: np.ndarray) -> np.ndarray:
    """``(g1^{-1} + g2^{-1})^{-1}``."""
    h = _inv(_inv(g1) + _inv(g2))
    return 0.5 * (h + h.T)


def q_marginal_cov(cone: _ConeLike, a, u) -> np.ndarray:
    """Limit covariance of a rescaled tangent point under the endpoint-conditioned law."""
    plus = cone.restrict(Halfspace(tuple(u)))
    minus = cone.restrict(Halfspace(tuple(u)).flipped())
    return harmonic_sum(limit_cov(plus, a), limit_cov(minus, a))


def g_cell_cov(cone: _ConeLike, a, family: DirectionFamily, I) -> np.ndarray:
    """``(Gamma(C_I)^{-1} + Gamma(C_Ibar)^{-1})^{-1}`` with ``Ibar`` flipping every sense."""
    I = frozenset(I)
    Ibar = frozenset(range(family.m)) - I
    return harmonic_sum(limit_cov(family.cells[I], a), limit_cov(family.cells[Ibar], a))


def q_tangent_cov(cone: _ConeLike, a, u, v) -> np.ndarray:
    """Limit ``Cov(X_u, X_v)`` given the endpoint, by Gaussian conditioning.

    Unconditioned, ``Cov(X_u, X_v) = Gamma(C(u>=0, v>=0))`` and ``Cov(X_u, X) =
    Gamma(C(u>=0))``; conditioning on the full sum ``X`` subtracts
    ``Gamma_u Gamma^{-1} Gamma_v``. For ``u = v`` this is :func:`q_marginal_cov`.
    """
    gu = limit_cov(cone.restrict(Halfspace(tuple(u))), a)
    gv = limit_cov(cone.restrict(Halfspace(tuple(v))), a)
    guv = limit_cov(cone.restrict(Halfspace(tuple(u)), Halfspace(tuple(v))), a)
    g = limit_cov(cone, a)
    return guv - gu @ _inv(g) @ gv.T


def p_tangent_cov(cone: _ConeLike, a, u, v) -> np.ndarray:
    """Limit ``Cov(X_u, X_v)`` under P_n: the covariance of the shared cell."""
    return limit_cov(cone.restrict(Halfspace(tuple(u)), Halfspace(tuple(v))), a)


# ---------------------------------------------------------------------------
# boundary chains (d = 2)


def _cross(x, y) -> int:
    return int(x[0]) * int(y[1]) - int(x[1]) * int(y[0])


@dataclass(frozen=True)
class BoundaryChain:
    lower: np.ndarray
    upper: np.ndarray

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["chain", "i", "x1", "x2"])
            for name, chain in (("lower", self.lower), ("upper", self.upper)):
                for i, v in enumerate(chain):
                    w.writerow([name, i, int(v[0]), int(v[1])])


def boundary_chain(omega: Multiplicities) -> BoundaryChain:
    """Both monotone boundary chains of the planar zonotope, from 0 to the endpoint.

    Edges are sorted by exact integer cross products; the lower chain turns
    counter-clockwise.
    """
    x, m = omega.arrays(2)
    if x.shape[1] != 2:
        raise ValueError("boundary chains are only defined for d = 2")
    order = sorted(range(len(m)), key=functools.cmp_to_key(lambda i, j: -_cross(x[i], x[j])))
    steps = m[order, None] * x[order]
    zero = np.zeros((1, 2), dtype=np.int64)
    lower = np.concatenate([zero, np.cumsum(steps, axis=0)])
    upper = np.concatenate([zero, np.cumsum(steps[::-1], axis=0)])
    return BoundaryChain(lower, upper)


def chain_is_convex(chain: np.ndarray) -> bool:
    edges = np.diff(chain, axis=0)
    signs = {np.sign(_cross(e, f)) for e, f in zip(edges[:-1], edges[1:])}
    return signs <= {1} or signs <= {-1}
