"""Small statistical helpers: whitening, normality tests and log-log fits."""

from __future__ import annotations

import math

import numpy as np
from scipy import stats as _st


def inv_sqrt(cov: np.ndarray) -> np.ndarray:
    """Symmetric ``cov^{-1/2}``."""
    vals, vecs = np.linalg.eigh(np.asarray(cov, dtype=float))
    if vals[0] <= 0:
        raise np.linalg.LinAlgError("covariance is not positive definite")
    return (vecs / np.sqrt(vals)) @ vecs.T


def whiten(samples: np.ndarray, mean, cov) -> np.ndarray:
    return (np.asarray(samples, dtype=float) - mean) @ inv_sqrt(cov)


def ks_normal(z: np.ndarray) -> list[tuple[float, float]]:
    """Per-column KS statistic and asymptotic p-value against N(0, 1)."""
    out = []
    for col in np.atleast_2d(z.T):
        r = _st.kstest(col, "norm", method="asymp")
        out.append((float(r.statistic), float(r.pvalue)))
    return out


def mardia(z: np.ndarray) -> dict:
    """Mardia's multivariate skewness and kurtosis with their usual asymptotics.

    Skewness ``M b1 / 6`` is referred to chi-square with ``d(d+1)(d+2)/6``
    degrees of freedom, kurtosis ``(b2 - d(d+2)) / sqrt(8 d (d+2) / M)`` to N(0, 1).
    """
    z = np.asarray(z, dtype=float)
    M, d = z.shape
    c = z - z.mean(axis=0)
    y = c @ inv_sqrt(c.T @ c / M)
    # (1/M^2) sum_ab (y_a.y_b)^3 equals the squared norm of the third-moment tensor
    m3 = np.einsum("ai,aj,ak->ijk", y, y, y) / M
    b1 = float((m3 ** 2).sum())
    b2 = float(((y ** 2).sum(axis=1) ** 2).mean())
    skew_stat = M * b1 / 6.0
    dof = d * (d + 1) * (d + 2) / 6.0
    kurt_stat = (b2 - d * (d + 2)) / math.sqrt(8.0 * d * (d + 2) / M)
    return {
        "b1": b1, "b2": b2,
        "skewness_stat": skew_stat, "skewness_p": float(_st.chi2.sf(skew_stat, dof)),
        "kurtosis_stat": kurt_stat, "kurtosis_p": float(2 * _st.norm.sf(abs(kurt_stat))),
    }


def loglog_slope(x, y) -> float:
    """Ordinary least-squares slope of ``log y`` on ``log x``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) < 3:
        raise ValueError("a slope fit needs at least three points")
    if np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("log-log fit needs positive data")
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def max_rel_dev(emp, ref) -> float:
    """Largest entrywise ``|emp - ref| / |ref|``."""
    emp = np.asarray(emp, dtype=float)
    ref = np.asarray(ref, dtype=float)
    return float(np.max(np.abs(emp - ref) / np.abs(ref)))


def cross_cov(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Sample cross-covariance of two ``(M, d)`` arrays (unbiased)."""
    ca = a - a.mean(axis=0)
    cb = b - b.mean(axis=0)
    return ca.T @ cb / (len(a) - 1)


def corr(a: np.ndarray, b: np.ndarray) -> float:
    a = a - a.mean()
    b = b - b.mean()
    den = math.sqrt(float(a @ a) * float(b @ b))
    return float(a @ b) / den if den else 0.0
