import math

import numpy as np
import pytest

from conftest import custom_params
from zonotope_clt import dp_oracle as D
from zonotope_clt.boltzmann import make_params, sample_conditioned_batch
from zonotope_clt.cones import Cone, DegenerateConeError

C2 = Cone.orthant(2)


@pytest.fixture(scope="module")
def p5():
    return make_params(C2, (1, 1), 5)


@pytest.fixture(scope="module")
def t5(p5):
    return D.exact_distribution(p5, B=68)


def test_single_layer():
    p = custom_params([[1, 0]], [1.0])
    t = D.exact_distribution(p, B=10)
    j = np.arange(11)
    assert np.allclose(t.mass[:, 0], np.exp(-j) * (1 - np.exp(-1)), rtol=1e-14)
    assert t.overflow == pytest.approx(np.exp(-11), rel=1e-12)
    assert t.total() == pytest.approx(1.0, abs=1e-15)


def test_two_layers_factorise():
    p = custom_params([[1, 0], [0, 1]], [0.5, 1.5])
    t = D.exact_distribution(p, B=30)
    g1 = np.exp(-0.5 * np.arange(31)) * (1 - np.exp(-0.5))
    g2 = np.exp(-1.5 * np.arange(31)) * (1 - np.exp(-1.5))
    assert np.allclose(t.mass, np.outer(g1, g2), rtol=1e-12, atol=1e-300)


def test_invariants(t5):
    assert t5.mass.min() >= 0
    assert t5.mass[0, 0] > 0
    assert abs(t5.total() - 1) < 1e-9
    assert t5.conservation_error < 1e-12


def test_order_invariance(p5, t5):
    perm = np.random.default_rng(3).permutation(len(p5.primitives))
    other = D.exact_distribution(p5, B=68, order=perm)
    assert np.abs(other.mass - t5.mass).max() < 1e-12
    assert np.abs(D.exact_distribution(p5, B=68, order="reverse").mass - t5.mass).max() < 1e-12


def _coordinate_law(vectors, q, coord, B):
    """Exact law of sum_x omega(x) x[coord] by direct convolution of truncated pmfs."""
    law = np.zeros(B + 1)
    law[0] = 1.0
    for x, qi in zip(vectors, q):
        s = int(x[coord])
        layer = np.zeros(B + 1)
        if s == 0:
            continue
        j = np.arange(0, B // s + 1)
        layer[j * s] = (1 - qi) * qi ** j
        law = np.convolve(law, layer)[:B + 1]
    return law


def test_marginal_consistency(p5, t5):
    ps = p5.primitives
    q = np.exp(-p5.beta * ps.weights)
    for coord, axis in ((0, 1), (1, 0)):
        law = _coordinate_law(ps.vectors, q, coord, t5.B)
        assert np.abs(t5.mass.sum(axis=axis) - law).max() < 1e-9


def test_target_probability_matches_sampler(p5, t5):
    # equivalent to counting endpoint == (5, 5) among 10^6 full draws
    trials = 1_000_000
    batch = sample_conditioned_batch(p5, 77, trials + 1, trials)
    hits = len(batch.counters)
    pt = t5.prob((5, 5))
    se = math.sqrt(pt * (1 - pt) / trials)
    assert abs(hits / trials - pt) < 3 * se


def test_auto_box_growth():
    p = make_params(C2, (1, 1), 10)
    t = D.exact_distribution(p)
    assert t.overflow < 1e-6 and t.B > D.default_box(p)
    fixed = D.exact_distribution(p, B=D.default_box(p))
    assert fixed.overflow > 1e-6


def test_llt_sanity_n20():
    p = make_params(C2, (1, 1), 20)
    t = D.exact_distribution(p)
    gap = D.llt_discrepancy(p, None, t) / 20 ** (1 / 3)
    assert gap < 10 * D.gaussian_peak(p)


def test_llt_singular():
    p = custom_params([[1, 0]], [1.0])
    t = D.exact_distribution(p, B=10)
    with pytest.raises(DegenerateConeError):
        D.llt_discrepancy(p, None, t)


def test_unsupported_inputs():
    p3 = make_params(Cone.orthant(3), (1, 1, 1), 5)
    with pytest.raises(ValueError):
        D.exact_distribution(p3)
    wide = Cone(((1, 0), (-1, 2)))
    with pytest.raises(ValueError):
        D.exact_distribution(make_params(wide, (0, 1), 5))


def test_budget(p5):
    with pytest.raises(D.CostBudgetError):
        D.exact_distribution(p5, B=68, budget=1e3)


def test_csv(tmp_path, t5):
    t5.to_csv(tmp_path / "dense.csv")
    t5.to_csv(tmp_path / "sparse.csv", threshold=1e-3)
    dense = (tmp_path / "dense.csv").read_text().splitlines()
    sparse = (tmp_path / "sparse.csv").read_text().splitlines()
    assert len(dense) == t5.B + 2
    assert sparse[0] == "x1,x2,p" and len(sparse) - 1 == int((t5.mass > 1e-3).sum())
