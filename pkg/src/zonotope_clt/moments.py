"""Exact finite-n moments of the endpoint under P_n and the quantities built from them."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .boltzmann import ModelParams
from .cones import DegenerateConeError, _ConeLike
from .primitives import TAIL_FACTOR, CutoffError

COND_LIMIT = 1e12


@dataclass(frozen=True)
class MomentPair:
    mean: np.ndarray
    cov: np.ndarray
    n: float
    subcone: _ConeLike | None = None


def _terms(params: ModelParams, sub):
    if params.cutoff * params.beta < TAIL_FACTOR * (1 - 1e-12):
        raise CutoffError(f"cutoff {params.cutoff:g} below {TAIL_FACTOR:g}/beta")
    pset = params.primitives
    mask = pset.mask(sub)
    e = params.beta * pset.weights[mask]
    return pset.vectors[mask].astype(float), np.exp(-e), -np.expm1(-e)


def mean_exact(params: ModelParams, sub: _ConeLike | None = None) -> np.ndarray:
    """``sum_x x q/(1-q)`` with ``q = exp(-beta a.x)``."""
    x, q, p = _terms(params, sub)
    return (q / p) @ x if len(q) else np.zeros(params.d)


def cov_exact(params: ModelParams, sub: _ConeLike | None = None) -> np.ndarray:
    """``sum_x x x^T q/(1-q)^2``: independent geometric coordinates."""
    x, q, p = _terms(params, sub)
    w = q / p ** 2
    return np.einsum("n,ni,nj->ij", w, x, x)


def moments(params: ModelParams, sub: _ConeLike | None = None) -> MomentPair:
    return MomentPair(mean_exact(params, sub), cov_exact(params, sub), params.n, sub)


def _eig_checked(cov: np.ndarray) -> np.ndarray:
    vals = np.linalg.eigvalsh(cov)
    if vals[0] <= 0 or vals[-1] / vals[0] > COND_LIMIT:
        raise DegenerateConeError(f"covariance is singular (eigenvalues {vals})")
    return vals


def sigma_min(params: ModelParams | None = None, sub: _ConeLike | None = None, cov=None) -> float:
    """Smallest eigenvalue of ``cov_exact`` (or of an explicit ``cov``)."""
    if cov is None:
        cov = cov_exact(params, sub)
    return float(_eig_checked(np.asarray(cov, dtype=float))[0])


def lyapunov_ratio(params: ModelParams, sub: _ConeLike | None = None) -> float:
    """Upper bound ``||Gamma^{-1/2}||^3 sum_x |x|^3 3q/(1-q)^3`` on the Lyapunov ratio.

    The third absolute central moment of each geometric term is bounded by
    ``3q/(1-q)^3``; the exact moment is not used.
    """
    x, q, p = _terms(params, sub)
    smin = sigma_min(cov=cov_exact(params, sub))
    third = np.linalg.norm(x, axis=1) ** 3 @ (3 * q / p ** 3)
    return float(third / smin ** 1.5)


def char_magnitude(params: ModelParams, sub: _ConeLike | None, t) -> float:
    """``|E exp(i t.X)|`` for the endpoint restricted to ``sub``."""
    t = np.asarray(t, dtype=float)
    x, q, p = _terms(params, sub)
    half = np.sin(0.5 * (x @ t))
    # |1 - q e^{i s}|^2 = (1-q)^2 + 4 q sin^2(s/2)
    log_terms = np.log(p) - 0.5 * np.log(p ** 2 + 4 * q * half ** 2)
    return float(np.exp(log_terms.sum()))


@dataclass(frozen=True)
class Ellipsoid:
    """``{t : |Gamma^{1/2} t| <= radius}``."""

    cov: np.ndarray
    radius: float

    def norm(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return np.sqrt(np.maximum(np.einsum("...i,ij,...j->...", t, self.cov, t), 0.0))

    def contains(self, t):
        inside = self.norm(t) <= self.radius
        return bool(inside) if np.ndim(inside) == 0 else inside


def lyapunov_ellipsoid(params: ModelParams, sub: _ConeLike | None = None) -> Ellipsoid:
    L = lyapunov_ratio(params, sub)
    if not np.isfinite(L) or L <= 0:
        raise DegenerateConeError("Lyapunov ratio is not finite")
    return Ellipsoid(cov_exact(params, sub), 1.0 / (4.0 * L))


def moment_report(params: ModelParams, sub: _ConeLike | None = None) -> dict:
    m = moments(params, sub)
    return {
        "n": params.n,
        "subcone": (sub if sub is not None else params.cone).to_json(),
        "mean": m.mean.tolist(),
        "cov": m.cov.tolist(),
        "lyapunov": lyapunov_ratio(params, sub),
        "sigma_min": sigma_min(cov=m.cov),
    }


def dump_report(report: dict, path) -> None:
    with open(path, "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
