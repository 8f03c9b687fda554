"""Exact law of the planar endpoint under P_n by layer-wise geometric convolution.

Each primitive vector ``x`` contributes ``omega(x) x`` with ``omega(x)`` geometric.
Convolving the table with that layer obeys ``S[y] = mass[y] + q S[y - x]``,
``new = (1 - q) S``: a running accumulation along each lattice line of step
``x``, done block-wise so each layer costs ``O(B^2)``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .boltzmann import ModelParams
from .cones import _ConeLike
from .moments import cov_exact, mean_exact, sigma_min

DEFAULT_OVERFLOW_TOL = 1e-6
DEFAULT_COST_BUDGET = 2e10
_GROWTH = 1.5


class CostBudgetError(RuntimeError):
    def __init__(self, estimate: float, budget: float):
        super().__init__(f"projected cost {estimate:.3g} cell updates exceeds budget {budget:.3g}")
        self.estimate = estimate
        self.budget = budget


@dataclass
class DistTable:
    """``mass[y1, y2] = P(X = (y1, y2))`` on the box ``[0, B]^2``."""

    mass: np.ndarray
    overflow: float
    params: ModelParams | None = None
    conservation_error: float = 0.0
    layers: int = 0
    history: list = field(default_factory=list, repr=False)

    @property
    def B(self) -> int:
        return self.mass.shape[0] - 1

    def total(self) -> float:
        return float(self.mass.sum()) + self.overflow

    def prob(self, y) -> float:
        y1, y2 = (int(c) for c in y)
        if 0 <= y1 <= self.B and 0 <= y2 <= self.B:
            return float(self.mass[y1, y2])
        return 0.0

    def to_csv(self, path, threshold: float | None = None) -> None:
        """Dense grid, or sparse ``(x1, x2, p)`` rows when ``threshold`` is given."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            if threshold is None:
                w.writerow([f"y2={j}" for j in range(self.B + 1)])
                for row in self.mass:
                    w.writerow([repr(float(v)) for v in row])
            else:
                w.writerow(["x1", "x2", "p"])
                for y1, y2 in zip(*np.nonzero(self.mass > threshold)):
                    w.writerow([int(y1), int(y2), repr(float(self.mass[y1, y2]))])


def _orient(x: np.ndarray):
    """Swap axes so the first coordinate of ``x`` is the larger one."""
    return (x[0], x[1], False) if x[0] >= x[1] else (x[1], x[0], True)


def convolve_layer(mass: np.ndarray, x, q: float) -> float:
    """Convolve ``mass`` in place with the law of ``omega x``; return the mass leaving the box."""
    B1 = mass.shape[0]
    big, small, swap = _orient(np.asarray(x))
    m = mass.T if swap else mass
    # escape: from y the chain y + j x leaves the box after J(y) steps
    J = (B1 - 1 - np.arange(B1)) // big
    J = J[:, None] if small == 0 else np.minimum(J[:, None], ((B1 - 1 - np.arange(B1)) // small)[None, :])
    escaped = float((m * q ** (J + 1.0)).sum())
    for start in range(big, B1, big):
        stop = min(start + big, B1)
        prev = m[start - big:stop - big]
        if small:
            m[start:stop, small:] += q * prev[:, :-small]
        else:
            m[start:stop] += q * prev
    m *= 1.0 - q
    return escaped


def _check_quadrant(vectors: np.ndarray) -> None:
    if vectors.shape[1] != 2:
        raise ValueError("the exact oracle supports d = 2 only")
    if len(vectors) and vectors.min() < 0:
        raise ValueError("the exact oracle needs a cone inside the nonnegative quadrant")


def default_box(params: ModelParams) -> int:
    return int(math.ceil(4 * params.n * max(abs(float(c)) for c in params.k)))


def _layer_order(vectors: np.ndarray, order, q: np.ndarray):
    idx = np.arange(len(vectors))
    if order is None:
        return idx
    if isinstance(order, str):
        if order == "lex":
            return idx
        if order == "reverse":
            return idx[::-1]
        if order == "weight":
            return np.argsort(-q, kind="stable")
        raise ValueError(f"unknown order {order!r}")
    perm = np.asarray(order)
    if sorted(perm.tolist()) != idx.tolist():
        raise ValueError("order must be a permutation of the vectors")
    return perm


def _table(params, vectors, q, B, order, budget):
    inside = np.all(vectors <= B, axis=1)
    cost = float(inside.sum()) * (B + 1) ** 2
    if cost > budget:
        raise CostBudgetError(cost, budget)
    mass = np.zeros((B + 1, B + 1))
    mass[0, 0] = 1.0
    overflow = 0.0
    # vectors that never fit only keep omega = 0 inside the box
    outside_keep = float(np.prod(1.0 - q[~inside]))
    overflow += 1.0 - outside_keep
    mass *= outside_keep
    worst = 0.0
    layers = 0
    for i in _layer_order(vectors, order, q):
        if not inside[i]:
            continue
        before = mass.sum()
        esc = convolve_layer(mass, vectors[i], float(q[i]))
        overflow += esc
        worst = max(worst, abs(mass.sum() + esc - before))
        layers += 1
    return DistTable(mass, overflow, params, worst, layers)


def exact_distribution(params: ModelParams, sub: _ConeLike | None = None, B: int | None = None,
                       order=None, overflow_tol: float = DEFAULT_OVERFLOW_TOL,
                       budget: float = DEFAULT_COST_BUDGET) -> DistTable:
    """Exact ``P_n(X(sub) = y)`` on ``[0, B]^2``.

    With ``B=None`` the box starts at ``4 n max(k)`` and grows by 1.5x until
    the mass escaping it is below ``overflow_tol``. An explicit ``B`` is used
    as is and the overflow is only reported.
    """
    pset = params.primitives_for(sub)
    _check_quadrant(pset.vectors)
    q = np.exp(-params.beta * pset.weights)
    if B is not None:
        return _table(params, pset.vectors, q, int(B), order, budget)
    B = default_box(params)
    while True:
        table = _table(params, pset.vectors, q, B, order, budget)
        if table.overflow < overflow_tol:
            return table
        B = int(math.ceil(B * _GROWTH))


def gaussian_grid(mean: np.ndarray, cov: np.ndarray, B: int) -> np.ndarray:
    """Normal density with the given moments on the integer box."""
    g = np.arange(B + 1, dtype=float)
    dy = np.stack(np.meshgrid(g - mean[0], g - mean[1], indexing="ij"), -1)
    inv = np.linalg.inv(cov)
    quad = np.einsum("...i,ij,...j->...", dy, inv, dy)
    return np.exp(-0.5 * quad) / (2 * np.pi * np.sqrt(np.linalg.det(cov)))


def _sup_gap(params, sub, table):
    cov = cov_exact(params, sub)
    sigma_min(cov=cov)  # raises on singular covariance
    phi = gaussian_grid(mean_exact(params, sub), cov, table.B)
    return float(np.abs(table.mass - phi).max()), float(phi.max()), cov


def llt_discrepancy(params: ModelParams, sub: _ConeLike | None, table: DistTable) -> float:
    """``n^{d/(2(d+1))} max_y |P(X = y) - phi(y)|`` with ``phi`` the matching normal density."""
    gap, _, _ = _sup_gap(params, sub, table)
    d = params.d
    return params.n ** (d / (2.0 * (d + 1))) * gap


def llt_normalised(params: ModelParams, sub: _ConeLike | None, table: DistTable) -> float:
    """``n^{d/(2(d+1))} sqrt(det Gamma) max_y |P(X = y) - phi(y)|``.

    Diagnostic only: the gap measured in units of the local scale of the
    law, which is the normalisation under which a rate-``n^{-d/(2(d+1))}``
    local limit theorem keeps the quantity bounded away from zero.
    """
    gap, _, cov = _sup_gap(params, sub, table)
    d = params.d
    return params.n ** (d / (2.0 * (d + 1))) * math.sqrt(np.linalg.det(cov)) * gap


def gaussian_peak(params: ModelParams, sub: _ConeLike | None = None) -> float:
    return 1.0 / (2 * np.pi * math.sqrt(np.linalg.det(cov_exact(params, sub))))
