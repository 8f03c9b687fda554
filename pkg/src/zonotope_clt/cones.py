"""Polyhedral cones, their caps ``{x in C : a.x <= t}`` and exact cap moments.

Moments are obtained by triangulating the cap polytope and summing closed-form
simplex moments, so the only error is floating-point rounding.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np
from scipy.optimize import linprog
from scipy.spatial import ConvexHull, Delaunay, QhullError

ZETA = {
    2: math.pi ** 2 / 6,
    3: 1.2020569031595943,
    4: math.pi ** 4 / 90,
    5: 1.0369277551433699,
}


def zeta(s: int) -> float:
    if s in ZETA:
        return ZETA[s]
    from scipy.special import zeta as _zeta

    return float(_zeta(s))


class ConeError(ValueError):
    """Invalid cone description or an argument outside the cone's domain."""


class DegenerateConeError(ConeError):
    """A (sub)cone is lower-dimensional where a full-dimensional one is needed."""


class TiltSolveError(RuntimeError):
    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (last residual {residual:.3e})")
        self.residual = residual


# ---------------------------------------------------------------------------
# halfspaces and cones


@dataclass(frozen=True)
class Halfspace:
    """``u.x >= 0`` (``strict=False``) or ``u.x < 0`` (``strict=True``)."""

    u: tuple
    strict: bool = False

    def __post_init__(self):
        object.__setattr__(self, "u", tuple(_plain(c) for c in self.u))
        object.__setattr__(self, "strict", bool(self.strict))

    @property
    def sense(self) -> str:
        return "<0" if self.strict else ">=0"

    @cached_property
    def normal(self) -> np.ndarray:
        return np.asarray(self.u, dtype=float)

    @cached_property
    def integral(self) -> bool:
        return all(float(c).is_integer() for c in self.u)

    def flipped(self) -> "Halfspace":
        return Halfspace(self.u, not self.strict)

    def test(self, pts: np.ndarray) -> np.ndarray:
        """Vectorised membership for an ``(N, d)`` array of points.

        Integer normals against integer points are decided exactly; otherwise a
        relative slack of 1e-12 is used, identically for both senses, so a
        halfspace and its flip always partition the points.
        """
        pts = np.asarray(pts)
        if self.integral and np.issubdtype(pts.dtype, np.integer):
            dots = pts @ np.asarray(self.u, dtype=np.int64)
            return dots < 0 if self.strict else dots >= 0
        dots = pts @ self.normal
        slack = 1e-12 * np.linalg.norm(self.normal) * np.linalg.norm(pts, axis=-1)
        nonneg = dots >= -slack
        return ~nonneg if self.strict else nonneg

    def to_json(self) -> dict:
        return {"u": [_plain(c) for c in self.u], "sense": self.sense}

    @classmethod
    def from_json(cls, obj: dict) -> "Halfspace":
        sense = obj.get("sense", ">=0")
        if sense not in (">=0", "<0"):
            raise ConeError(f"unknown halfspace sense {sense!r}")
        return cls(tuple(_plain(c) for c in obj["u"]), sense == "<0")


def _plain(c):
    c = float(c)
    return int(c) if c.is_integer() else c


def _int_det(m: list[list[int]]) -> int:
    if len(m) == 1:
        return m[0][0]
    if len(m) == 2:
        return m[0][0] * m[1][1] - m[0][1] * m[1][0]
    total = 0
    for j, c in enumerate(m[0]):
        if c:
            minor = [row[:j] + row[j + 1:] for row in m[1:]]
            total += (-1) ** j * c * _int_det(minor)
    return total


def _orthogonal_complement(vectors: np.ndarray, exact: bool) -> np.ndarray | None:
    """Normal of the hyperplane spanned by ``d-1`` vectors (generalised cross product)."""
    k, d = vectors.shape
    if exact:
        rows = [[int(round(v)) for v in r] for r in vectors]
        nrm = [(-1) ** i * _int_det([r[:i] + r[i + 1:] for r in rows]) for i in range(d)]
        g = math.gcd(*nrm)
        if g == 0:
            return None
        return np.array([c // g for c in nrm], dtype=float)
    _, s, vt = np.linalg.svd(vectors)
    if s.size < d - 1 or s[-1] < 1e-12 * max(s[0], 1.0):
        return None
    return vt[-1]


class _ConeLike:
    """Shared behaviour of :class:`Cone` and :class:`SubCone`."""

    d: int

    @property
    def root(self) -> "Cone":
        raise NotImplementedError

    @property
    def halfspaces_all(self) -> tuple[Halfspace, ...]:
        """Facet halfspaces of the ray cone followed by every extra constraint."""
        raise NotImplementedError

    def contains(self, pts) -> np.ndarray | bool:
        arr = np.asarray(pts)
        single = arr.ndim == 1
        arr = np.atleast_2d(arr)
        mask = np.ones(arr.shape[0], dtype=bool)
        for h in self.halfspaces_all:
            mask &= h.test(arr)
        return bool(mask[0]) if single else mask

    def in_interior(self, x, rtol: float = 1e-12) -> bool:
        x = np.asarray(x, dtype=float)
        scale = np.linalg.norm(x)
        for h in self.halfspaces_all:
            v = float(h.normal @ x)
            tol = rtol * np.linalg.norm(h.normal) * scale
            if h.strict:
                if not v < -tol:
                    return False
            elif not v > tol:
                return False
        return True

    def check_dual(self, a) -> np.ndarray:
        a = np.asarray(a, dtype=float)
        if a.shape != (self.d,):
            raise ConeError(f"tilt vector must have shape ({self.d},)")
        rays = self.root.ray_array
        dots = rays @ a
        if np.any(dots <= 1e-12 * np.linalg.norm(rays, axis=1) * np.linalg.norm(a)):
            raise ConeError("a is not in the interior of the dual cone; the cap is unbounded")
        return a

    def to_json(self) -> dict:
        root = self.root
        return {
            "d": self.d,
            "rays": [[_plain(c) for c in r] for r in root.rays],
            "halfspaces": [h.to_json() for h in self._extra_halfspaces()],
        }

    def _extra_halfspaces(self) -> tuple[Halfspace, ...]:
        raise NotImplementedError

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)

    def restrict(self, *constraints: Halfspace) -> "SubCone":
        return SubCone(self, tuple(constraints))


@dataclass(frozen=True, eq=False)
class Cone(_ConeLike):
    """Polyhedral cone spanned by ``rays``, optionally cut by halfspaces.

    The ray cone must be pointed and full-dimensional.
    """

    rays: tuple
    halfspaces: tuple = ()

    def __post_init__(self):
        rays = tuple(tuple(_plain(c) for c in r) for r in self.rays)
        object.__setattr__(self, "rays", rays)
        object.__setattr__(self, "halfspaces", tuple(self.halfspaces))
        if not rays:
            raise ConeError("a cone needs at least one ray")
        d = len(rays[0])
        if d < 2 or any(len(r) != d for r in rays):
            raise ConeError("rays must be d-vectors with d >= 2")
        arr = np.asarray(rays, dtype=float)
        if np.linalg.matrix_rank(arr) < d:
            raise ConeError("rays do not span R^d: the cone has empty interior")
        if self.dual_margin <= 0:
            raise ConeError("cone is not pointed (no strictly positive dual vector)")
        for h in self.halfspaces:
            if len(h.u) != d:
                raise ConeError("halfspace normal has wrong dimension")

    def __eq__(self, other):
        return isinstance(other, _ConeLike) and self.dumps() == other.dumps()

    def __hash__(self):
        return hash(self.dumps())

    @property
    def d(self) -> int:
        return len(self.rays[0])

    @property
    def root(self) -> "Cone":
        if self.halfspaces:
            return Cone(self.rays)
        return self

    @cached_property
    def ray_array(self) -> np.ndarray:
        return np.asarray(self.rays, dtype=float)

    @cached_property
    def _dual_lp(self):
        # max s subject to r_i.c / |r_i| >= s, |c|_inf <= 1
        r = self.ray_array / np.linalg.norm(self.ray_array, axis=1)[:, None]
        d = r.shape[1]
        cost = np.zeros(d + 1)
        cost[-1] = -1.0
        a_ub = np.hstack([-r, np.ones((r.shape[0], 1))])
        res = linprog(cost, A_ub=a_ub, b_ub=np.zeros(r.shape[0]),
                      bounds=[(-1, 1)] * d + [(None, None)], method="highs")
        return res.x[:d], -res.fun

    @property
    def dual_margin(self) -> float:
        return float(self._dual_lp[1])

    @property
    def dual_interior_point(self) -> np.ndarray:
        c = self._dual_lp[0]
        return c / np.linalg.norm(c)

    @cached_property
    def facets(self) -> tuple[Halfspace, ...]:
        rays = self.ray_array
        d = self.d
        exact = all(float(c).is_integer() for r in self.rays for c in r)
        found: list[np.ndarray] = []
        for idx in itertools.combinations(range(len(rays)), d - 1):
            nrm = _orthogonal_complement(rays[list(idx)], exact)
            if nrm is None:
                continue
            dots = rays @ nrm
            tol = 1e-12 * np.linalg.norm(nrm) * np.linalg.norm(rays, axis=1)
            if np.all(dots >= -tol):
                pass
            elif np.all(dots <= tol):
                nrm = -nrm
            else:
                continue
            if not exact:
                nrm = nrm / np.linalg.norm(nrm)
            if not any(np.allclose(nrm / np.linalg.norm(nrm), f / np.linalg.norm(f), atol=1e-12)
                       for f in found):
                found.append(nrm)
        return tuple(Halfspace(tuple(_plain(c) for c in f)) for f in found)

    @property
    def halfspaces_all(self) -> tuple[Halfspace, ...]:
        return self.facets + self.halfspaces

    def _extra_halfspaces(self):
        return self.halfspaces

    @classmethod
    def from_json(cls, obj: dict | str) -> "Cone":
        if isinstance(obj, str):
            obj = json.loads(obj)
        cone = cls(tuple(tuple(r) for r in obj["rays"]),
                   tuple(Halfspace.from_json(h) for h in obj.get("halfspaces", [])))
        if "d" in obj and obj["d"] != cone.d:
            raise ConeError("declared d does not match the rays")
        return cone

    @classmethod
    def orthant(cls, d: int) -> "Cone":
        return cls(tuple(tuple(int(i == j) for j in range(d)) for i in range(d)))


@dataclass(frozen=True, eq=False)
class SubCone(_ConeLike):
    """``parent`` intersected with sign constraints along given directions."""

    parent: _ConeLike
    constraints: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "constraints", tuple(self.constraints))
        for h in self.constraints:
            if len(h.u) != self.parent.d:
                raise ConeError("constraint normal has wrong dimension")

    def __eq__(self, other):
        return isinstance(other, _ConeLike) and self.dumps() == other.dumps()

    def __hash__(self):
        return hash(self.dumps())

    @property
    def d(self) -> int:
        return self.parent.d

    @property
    def root(self) -> Cone:
        return self.parent.root

    @property
    def halfspaces_all(self) -> tuple[Halfspace, ...]:
        return self.parent.halfspaces_all + self.constraints

    def _extra_halfspaces(self):
        return self.parent._extra_halfspaces() + self.constraints

    def flatten(self) -> Cone:
        return Cone(self.root.rays, self._extra_halfspaces())


def sense_cells(parent: _ConeLike, directions: Sequence[Sequence[float]]) -> dict[frozenset, SubCone]:
    """The ``2^m`` cells ``C_I``: ``u_i.x >= 0`` for ``i`` in ``I`` and ``u_j.x < 0`` otherwise."""
    m = len(directions)
    cells = {}
    for bits in itertools.product((False, True), repeat=m):
        members = frozenset(i for i in range(m) if bits[i])
        cons = tuple(Halfspace(tuple(directions[i]), strict=not bits[i]) for i in range(m))
        cells[members] = SubCone(parent, cons)
    return cells


def as_cone(obj) -> _ConeLike:
    if isinstance(obj, _ConeLike):
        return obj
    return Cone.from_json(obj)


# ---------------------------------------------------------------------------
# cap moments


@dataclass(frozen=True)
class CapMoments:
    volume: float
    first: np.ndarray
    second: np.ndarray
    degenerate: bool = False
    vertices: np.ndarray = field(default=None, repr=False)

    def scaled(self, factor: float) -> "CapMoments":
        return CapMoments(self.volume * factor, self.first * factor, self.second * factor,
                          self.degenerate, self.vertices)


def _cap_inequalities(sub: _ConeLike, a: np.ndarray, t: float):
    rows, rhs = [], []
    for h in sub.halfspaces_all:
        rows.append(h.normal if h.strict else -h.normal)
        rhs.append(0.0)
    rows.append(a)
    rhs.append(t)
    return np.asarray(rows), np.asarray(rhs)


def cap_vertices(sub: _ConeLike, a, t: float = 1.0) -> np.ndarray:
    """Vertices of the cap polytope by brute-force enumeration of d-subsets of its facets."""
    a = sub.check_dual(a)
    if t < 0:
        raise ConeError("cap level t must be non-negative")
    g, h = _cap_inequalities(sub, a, t)
    d = sub.d
    scale = max(1.0, t)
    verts: list[np.ndarray] = []
    for idx in itertools.combinations(range(len(g)), d):
        m = g[list(idx)]
        if abs(np.linalg.det(m)) < 1e-14 * np.prod(np.linalg.norm(m, axis=1)):
            continue
        v = np.linalg.solve(m, h[list(idx)])
        if np.all(g @ v <= h + 1e-10 * scale * np.linalg.norm(g, axis=1)):
            if not any(np.allclose(v, w, atol=1e-11 * scale) for w in verts):
                verts.append(v)
    if not verts:
        return np.zeros((0, d))
    return np.asarray(verts)


def simplex_moments(simplex: np.ndarray) -> tuple[float, np.ndarray, np.ndarray]:
    """Volume, first and second moment of a d-simplex given as ``(d+1, d)`` vertices."""
    d = simplex.shape[1]
    vol = abs(np.linalg.det(simplex[1:] - simplex[0])) / math.factorial(d)
    s = simplex.sum(axis=0)
    first = vol * s / (d + 1)
    second = vol / ((d + 1) * (d + 2)) * (simplex.T @ simplex + np.outer(s, s))
    return vol, first, second


def _triangulate(verts: np.ndarray, method: str) -> list[np.ndarray]:
    if method == "fan":
        hull = ConvexHull(verts)
        centre = verts.mean(axis=0)
        return [np.vstack([centre, verts[f]]) for f in hull.simplices]
    if method == "delaunay":
        tri = Delaunay(verts)
        return [verts[s] for s in tri.simplices]
    raise ValueError(f"unknown triangulation method {method!r}")


def cap_moments(sub: _ConeLike, a, t: float = 1.0, method: str = "fan") -> CapMoments:
    """Exact volume, ``int x dx`` and ``int x x^T dx`` over ``{x in sub : a.x <= t}``."""
    d = sub.d
    verts = cap_vertices(sub, a, t)
    zero = CapMoments(0.0, np.zeros(d), np.zeros((d, d)), True, verts)
    if len(verts) < d + 1 or np.linalg.matrix_rank(verts[1:] - verts[0], tol=1e-12 * max(t, 1.0)) < d:
        return zero
    try:
        simplices = _triangulate(verts, method)
    except QhullError:
        return zero
    vol, first, second = 0.0, np.zeros(d), np.zeros((d, d))
    for s in simplices:
        v, f, m2 = simplex_moments(s)
        vol += v
        first += f
        second += m2
    second = 0.5 * (second + second.T)
    return CapMoments(vol, first, second, False, verts)


def homogeneous_exp_integral(sub: _ConeLike, a, degree: int):
    """``int_sub f(x) exp(-a.x) dx`` for every monomial f of the given degree (0, 1 or 2).

    Uses ``int_C f e^{-a.x} = (d+h)! int_{C(a<=1)} f`` for f homogeneous of degree h.
    Degree 1 returns the d-vector of ``x_i`` integrals, degree 2 the matrix of ``x_i x_j``.
    """
    if degree not in (0, 1, 2):
        raise ValueError("degree must be 0, 1 or 2")
    cm = cap_moments(sub, a, 1.0)
    scale = math.factorial(sub.d + degree)
    return scale * (cm.volume, cm.first, cm.second)[degree]


def limit_mean(sub: _ConeLike, a) -> np.ndarray:
    """Rescaled limit of ``mu^n(C_1) / n``: ``(d+1)! int_{C(a<=1) & C_1} x dx``."""
    return math.factorial(sub.d + 1) * cap_moments(sub, a, 1.0).first


def cov_prefactor(d: int) -> float:
    return (zeta(d) / zeta(d + 1)) ** (1.0 / (d + 1))


def limit_cov(sub: _ConeLike, a, with_flag: bool = False):
    """Limit of ``n^{-(d+2)/(d+1)} Gamma^n(C_1)``.

    Equals ``(zeta(d)/zeta(d+1))^{1/(d+1)} (d+2)! int_{C(a<=1) & C_1} x x^T dx``.
    The second moment is homogeneous of degree two, hence the ``(d+2)!``; using
    ``(d+1)!`` here would be off by a factor ``d+2`` from the actual limit of the
    exact covariance sums.
    """
    cm = cap_moments(sub, a, 1.0)
    cov = cov_prefactor(sub.d) * math.factorial(sub.d + 2) * cm.second
    return (cov, cm.degenerate) if with_flag else cov


# ---------------------------------------------------------------------------
# tilt vector


def solve_tilt_vector(cone: _ConeLike, k, tol: float = 1e-10, max_iter: int = 100) -> np.ndarray:
    """Find ``a`` with ``(d+1)! int_{C(a<=1)} x dx = k``.

    The equation is the stationarity condition of the strictly convex function
    ``F(a) = int_C e^{-a.x} dx + k.a``, whose gradient and Hessian are exact cap
    moments; damped Newton on ``F`` converges from any dual-interior start.
    """
    k = np.asarray(k, dtype=float)
    d = cone.d
    if k.shape != (d,):
        raise ConeError(f"k must be a {d}-vector")
    if not cone.in_interior(k):
        raise ConeError("k must lie in the interior of the cone")

    f1, f2 = math.factorial(d), math.factorial(d + 1)
    f3 = math.factorial(d + 2)

    def evaluate(a):
        cm = cap_moments(cone, a, 1.0)
        if cm.degenerate:
            raise DegenerateConeError("cap is lower-dimensional")
        return f1 * cm.volume + k @ a, k - f2 * cm.first, f3 * cm.second

    def residual(grad):
        return float(np.max(np.abs(grad)) / np.max(np.abs(k)))

    def dual_ok(a):
        rays = cone.root.ray_array
        return np.all(rays @ a > 1e-12 * np.linalg.norm(rays, axis=1) * np.linalg.norm(a))

    # start on the dual-interior ray, scaled along lambda to best match k
    a = cone.root.dual_interior_point.copy()
    mean0 = f2 * cap_moments(cone, a, 1.0).first
    s = float(k @ mean0) / float(mean0 @ mean0)
    a *= s ** (-1.0 / (d + 1))

    val, grad, hess = evaluate(a)
    for _ in range(max_iter):
        res = residual(grad)
        if res <= tol:
            return a
        step = -np.linalg.solve(hess, grad)
        decrement = float(-grad @ step)
        lam = 1.0
        while lam > 1e-12:
            trial = a + lam * step
            if dual_ok(trial):
                tval, tgrad, thess = evaluate(trial)
                if tval <= val - 0.25 * lam * decrement or decrement < 1e-14 * abs(val):
                    break
            lam *= 0.5
        else:
            raise TiltSolveError("line search failed", res)
        a, val, grad, hess = trial, tval, tgrad, thess
    res = residual(grad)
    if res <= tol:
        return a
    raise TiltSolveError(f"no convergence after {max_iter} Newton steps", res)
