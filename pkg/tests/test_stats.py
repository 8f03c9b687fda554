import numpy as np
import pytest

from zonotope_clt import stats as S


def test_whiten_identity():
    rng = np.random.default_rng(0)
    cov = np.array([[4.0, 1.0], [1.0, 2.0]])
    x = rng.multivariate_normal([1, 2], cov, 40_000)
    z = S.whiten(x, [1, 2], cov)
    assert np.allclose(np.cov(z.T), np.eye(2), atol=0.03)


def test_normal_data_passes_and_skewed_fails():
    rng = np.random.default_rng(1)
    z = rng.standard_normal((2000, 2))
    assert min(p for _, p in S.ks_normal(z)) > 0.01
    m = S.mardia(z)
    assert m["skewness_p"] > 0.01 and m["kurtosis_p"] > 0.01
    e = rng.exponential(size=(2000, 2)) - 1
    m = S.mardia(e)
    assert m["skewness_p"] < 1e-6 and m["kurtosis_p"] < 1e-6
    assert max(p for _, p in S.ks_normal(e)) < 1e-6


def test_mardia_matches_pairwise_definition():
    rng = np.random.default_rng(2)
    z = rng.gamma(3.0, size=(300, 3))
    c = z - z.mean(axis=0)
    G = c @ np.linalg.solve(c.T @ c / len(z), c.T)
    m = S.mardia(z)
    assert m["b1"] == pytest.approx((G ** 3).sum() / len(z) ** 2, rel=1e-10)
    assert m["b2"] == pytest.approx((np.diag(G) ** 2).mean(), rel=1e-10)


def test_loglog_slope():
    n = np.array([10.0, 100, 1000])
    assert S.loglog_slope(n, 3 * n ** -0.5) == pytest.approx(-0.5)
    with pytest.raises(ValueError):
        S.loglog_slope(n[:2], n[:2])


def test_rel_dev_and_corr():
    assert S.max_rel_dev([[1.1, 2]], [[1, 2]]) == pytest.approx(0.1)
    assert S.corr(np.arange(5.0), -np.arange(5.0)) == pytest.approx(-1)
