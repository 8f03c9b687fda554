"""Independent oracle for cone integrals: composite Gauss-Legendre in ray coordinates.

For a simplicial cone ``x = R lam`` with ``lam >= 0``, ``dx = |det R| dlam`` and
``a.x = c.lam`` with ``c = R^T a > 0``. The integrand is truncated where
``exp(-c.lam)`` drops below 1e-18 and panels are doubled until two successive
estimates agree.
"""

import numpy as np


def _rule(L, panels, order=16):
    g, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(0.0, L, panels + 1)
    h = np.diff(edges)
    nodes = (edges[:-1, None] + (g[None, :] + 1) * h[:, None] / 2).ravel()
    weights = (w[None, :] * h[:, None] / 2).ravel()
    return nodes, weights


def _estimate(R, a, panels):
    d = R.shape[0]
    c = R.T @ a
    rules = [_rule(42.0 / ci, panels) for ci in c]
    lam = np.stack(np.meshgrid(*[r[0] for r in rules], indexing="ij"), -1).reshape(-1, d)
    w = np.prod(np.stack(np.meshgrid(*[r[1] for r in rules], indexing="ij"), -1).reshape(-1, d), axis=1)
    x = lam @ R.T
    w = w * np.exp(-lam @ c) * abs(np.linalg.det(R))
    wx = w[:, None] * x
    return [w.sum(), wx.sum(axis=0), wx.T @ x]


def cone_exp_integrals(rays, a, tol=1e-10, max_panels=32):
    """``int_C f(x) exp(-a.x) dx`` for the monomials of degree 0, 1 and 2 over ``cone(rays)``."""
    R = np.asarray(rays, dtype=float).T
    a = np.asarray(a, dtype=float)
    panels = 2
    prev = _estimate(R, a, panels)
    while panels < max_panels:
        panels *= 2
        cur = _estimate(R, a, panels)
        if all(np.max(np.abs(c - p)) <= tol * np.max(np.abs(c)) for c, p in zip(cur, prev)):
            return cur
        prev = cur
    return prev
