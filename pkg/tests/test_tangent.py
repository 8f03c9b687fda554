import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from zonotope_clt import tangent as Tg
from zonotope_clt.boltzmann import Multiplicities, endpoint, make_params, sample_cell_endpoints, sample_omega
from zonotope_clt.cones import Cone, DegenerateConeError, Halfspace, limit_cov, solve_tilt_vector
from zonotope_clt.moments import mean_exact
from zonotope_clt.stats import cross_cov, max_rel_dev

C2 = Cone.orthant(2)
A11 = np.array([1.0, 1.0])
c = 1.1102168711927431

omegas = st.dictionaries(
    st.tuples(st.integers(0, 9), st.integers(0, 9)).filter(lambda v: math.gcd(*v) == 1),
    st.integers(1, 5), max_size=12).map(Multiplicities)


def test_tangent_point_examples():
    w = Multiplicities({(1, 0): 1, (0, 1): 1, (1, 1): 2})
    assert Tg.tangent_point(w, (1, -1)).tolist() == [3, 2]
    assert Tg.tangent_point(w, (1, 1)).tolist() == endpoint(w).tolist()
    assert Tg.tangent_point(w, (-1, -1)).tolist() == [0, 0]
    with pytest.raises(ValueError):
        Tg.tangent_point(w, (0, 0))


@settings(max_examples=50, deadline=None)
@given(omegas, st.tuples(st.integers(-4, 4), st.integers(-4, 4)).filter(any))
def test_complement_identity(w, u):
    x, m = w.arrays(2)
    neg = (m[:, None] * x)[x @ np.array(u) < 0].sum(axis=0) if len(m) else np.zeros(2, int)
    assert (endpoint(w, 2) - Tg.tangent_point(w, u)).tolist() == np.asarray(neg, dtype=int).tolist()


def test_rescale_tangent():
    p = make_params(C2, (1, 1), 1000)
    sub = C2.restrict(Halfspace((1, -1)))
    mu = mean_exact(p, sub)
    assert np.allclose(Tg.rescale_tangent(p, sub, mu), 0)
    assert np.allclose(Tg.rescale_tangent(p, sub, mu + [1000 ** (2 / 3), 0]), [1, 0])
    rng = np.random.default_rng(0)
    X1, X2 = rng.uniform(0, 500, (2, 2))
    lhs = Tg.rescale_tangent(p, sub, X1 + X2 - mu)
    rhs = Tg.rescale_tangent(p, sub, X1) + Tg.rescale_tangent(p, sub, X2) - Tg.rescale_tangent(p, sub, mu)
    assert np.allclose(lhs, rhs)


def test_direction_family_partition():
    fam = Tg.DirectionFamily(C2, ((1, -1), (1, -2)))
    pts = np.array([[i, j] for i in range(20) for j in range(20) if i or j])
    inside = np.stack([cell.contains(pts) for cell in fam.cell_list()])
    assert np.all(inside.sum(axis=0) == 1)
    assert np.array_equal(np.argmax(inside, axis=0), fam.labels(pts))
    assert fam.cells[frozenset()].contains(np.array([[1, 5]]))[0]
    with pytest.raises(ValueError):
        Tg.DirectionFamily(C2, ())


def test_decompose_sums_to_tangent():
    p = make_params(C2, (1, 1), 200)
    fam = Tg.DirectionFamily(C2, ((1, -1), (1, -2)))
    w = sample_omega(p, seed=1, counter=0)
    A = Tg.decompose_A_I(w, fam, p)
    for i, u in enumerate(fam.directions):
        side = C2.restrict(Halfspace(u))
        total = sum(v for I, v in A.items() if i in I)
        assert np.allclose(total, Tg.rescale_tangent(p, side, Tg.tangent_point(w, u)), atol=1e-9)
    one = Tg.DirectionFamily(C2, ((1, -1),))
    A1 = Tg.decompose_A_I(w, one, p)
    full = Tg.rescale_tangent(p, None, endpoint(w))
    assert np.allclose(A1[frozenset()] + A1[frozenset({0})], full, atol=1e-9)


def test_q_marginal_cov_orthant():
    got = Tg.q_marginal_cov(C2, A11, (1, -1))
    assert np.allclose(got, c / 8 * np.array([[1, 0.5], [0.5, 1]]))
    assert np.allclose(Tg.q_marginal_cov(C2, A11, (-1, 1)), got)
    gu = limit_cov(C2.restrict(Halfspace((1, -1))), A11)
    assert np.linalg.eigvalsh(gu - got).min() >= -1e-12
    with pytest.raises(DegenerateConeError):
        Tg.q_marginal_cov(C2, A11, (1, 1))


def test_q_tangent_cov_reduces_to_marginal():
    assert np.allclose(Tg.q_tangent_cov(C2, A11, (1, -1), (1, -1)), Tg.q_marginal_cov(C2, A11, (1, -1)))


def test_g_cell_cov():
    fam1 = Tg.DirectionFamily(C2, ((1, -1),))
    assert np.allclose(Tg.g_cell_cov(C2, A11, fam1, {0}), Tg.q_marginal_cov(C2, A11, (1, -1)))
    # a wide cone meeting three sign cells of the coordinate axes
    wide = Cone(((2, -1), (-1, 2)))
    a = solve_tilt_vector(wide, (1, 1))
    fam = Tg.DirectionFamily(wide, ((1, 0), (0, 1)))
    pos = wide.restrict(Halfspace((1, 0)), Halfspace((0, 1), True))
    neg = wide.restrict(Halfspace((1, 0), True), Halfspace((0, 1)))
    g1, g2 = limit_cov(pos, a), limit_cov(neg, a)
    expected = np.linalg.inv(np.linalg.inv(g1) + np.linalg.inv(g2))
    assert np.allclose(Tg.g_cell_cov(wide, a, fam, {0}), expected)
    assert np.allclose(Tg.g_cell_cov(wide, a, fam, {1}), expected)
    with pytest.raises(DegenerateConeError):
        Tg.g_cell_cov(wide, a, fam, {0, 1})


def test_boundary_chain_examples():
    ch = Tg.boundary_chain(Multiplicities({(1, 0): 1, (0, 1): 1}))
    assert ch.lower.tolist() == [[0, 0], [1, 0], [1, 1]]
    assert ch.upper.tolist() == [[0, 0], [0, 1], [1, 1]]
    with pytest.raises(ValueError):
        Tg.boundary_chain(Multiplicities({(1, 0, 0): 1}))


@settings(max_examples=50, deadline=None)
@given(omegas)
def test_boundary_chain_properties(w):
    ch = Tg.boundary_chain(w)
    assert ch.lower[0].tolist() == [0, 0]
    assert ch.lower[-1].tolist() == endpoint(w, 2).tolist() == ch.upper[-1].tolist()
    assert len(ch.lower) == 1 + len(w)
    assert Tg.chain_is_convex(ch.lower) and Tg.chain_is_convex(ch.upper)


def test_chain_csv(tmp_path):
    ch = Tg.boundary_chain(Multiplicities({(1, 0): 2, (1, 1): 1}))
    ch.to_csv(tmp_path / "c.csv")
    assert (tmp_path / "c.csv").read_text().splitlines()[0] == "chain,i,x1,x2"


@pytest.fixture(scope="module")
def p_mode_sample():
    p = make_params(C2, (1, 1), 1e4)
    fam = Tg.DirectionFamily(C2, ((1, -1), (1, -2)))
    cs = sample_cell_endpoints(p, 7, np.arange(5000), fam.cell_list())
    return p, fam, cs


@pytest.mark.slow
def test_p_mode_tangent_covariances(p_mode_sample):
    p, fam, cs = p_mode_sample
    tang = Tg.tangents_from_cells(cs, fam)
    centres = Tg.tangents_from_cells(Tg.cell_means(p, fam), fam)
    X = [Tg.rescale(p, tang[:, i], centres[i]) for i in range(2)]
    for i, u in enumerate(fam.directions):
        for j, v in enumerate(fam.directions):
            ref = Tg.p_tangent_cov(C2, p.a, u, v)
            assert max_rel_dev(cross_cov(X[i], X[j]), ref) < 0.10


@pytest.mark.slow
def test_p_mode_cells_independent_and_gaussian_limit(p_mode_sample):
    p, fam, cs = p_mode_sample
    A = Tg.rescale(p, cs, Tg.cell_means(p, fam))
    M = len(A)
    live = [b for b, cell in enumerate(fam.cell_list()) if not limit_cov(cell, p.a, with_flag=True)[1]]
    assert len(live) == 3
    for b in live:
        assert max_rel_dev(np.cov(A[:, b].T), limit_cov(fam.cell_list()[b], p.a)) < 0.10
        for b2 in live:
            if b2 != b:
                r = np.corrcoef(A[:, b, 0], A[:, b2, 1])[0, 1]
                assert abs(r) < 4 / np.sqrt(M)
