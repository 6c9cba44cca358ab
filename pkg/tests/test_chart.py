import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ricci_forge import expr as ex
from ricci_forge.chart import (Chart, MetricField, SplitDistribution, _frame_from_gram, adapted_frame,
                               frame_and_derivative, hessian, partial_laplacians)
from ricci_forge.errors import ConfigurationError, DefinitenessError, DomainError, RankError
from ricci_forge.fd import fd_derivatives

from helpers import hyperbolic_metric, random_points, sphere_metric, warped_torus


def general_metric(n=4, p1=2):
    x = ex.coords(n)
    m = [[ex.Const(0.0)] * n for _ in range(n)]
    for a in range(n):
        m[a][a] = ex.add(2.0, ex.sin(x[(a + 1) % n]))
    m[0][1] = m[1][0] = ex.mul(0.3, ex.cos(x[2]))
    m[2][3] = m[3][2] = ex.mul(0.2, ex.sin(x[0] + x[1]))
    return MetricField.general(Chart.box(n, p1), m)


def test_chart_validation():
    with pytest.raises(ConfigurationError):
        Chart.box(3, 3)
    with pytest.raises(ConfigurationError):
        Chart.box(2, 1, [0, 0], [0, 1])
    with pytest.raises(ConfigurationError):
        Chart.torus(2, 1, [1.0, -1.0])
    with pytest.raises(DomainError):
        hyperbolic_metric(3, 1)(np.array([0.0, 0.0, -1.0]))


def test_split_graph_shape():
    c = Chart.box(5, 2)
    with pytest.raises(ConfigurationError):
        SplitDistribution(c, np.zeros((2, 3)))
    V = SplitDistribution(c, np.ones((3, 2))).spanning_matrix()
    assert np.allclose(V[2:, :2], 1.0)


def test_non_positive_metric_rejected():
    x = ex.coords(2)
    m = MetricField.diagonal(Chart.box(2, 1), [ex.Const(1.0), x[0]])
    with pytest.raises(DefinitenessError) as info:
        m(np.array([[1.0, 0.0], [-0.5, 0.0]]))
    assert info.value.point == [-0.5, 0.0]


def test_conformal_scale_zero_rejected():
    m = MetricField.conformal(Chart.box(2, 1), ex.Coord(0))
    with pytest.raises(DomainError):
        m(np.array([0.0, 1.0]))


def test_degenerate_gram_raises_rank_error():
    # graph spanners are always independent, so feed a degenerate metric directly
    g = np.zeros((1, 2, 2))
    g[0, 0, 0] = 1.0
    with pytest.raises(RankError):
        _frame_from_gram(g, np.eye(2), np.zeros((1, 2)))


@pytest.mark.parametrize("make", [sphere_metric, hyperbolic_metric, lambda n, p: general_metric(n, p)])
def test_analytic_derivatives_match_fd(make, rng):
    m = make(4, 2)
    x = random_points(rng, m.chart, 10)
    g, dg, d2g = m.derivatives(x)
    g2, dg2, d2g2 = m.derivatives(x, "fd")
    assert np.allclose(g, g2)
    assert np.allclose(dg, dg2, atol=1e-7)
    assert np.allclose(d2g, d2g2, atol=1e-5)


def test_conformal_path_matches_coordinate_path(rng):
    m = sphere_metric(5, 2)
    x = random_points(rng, m.chart, 10)
    a = m.connection(x, "analytic", "coordinate")
    b = m.connection(x, "analytic", "conformal")
    assert np.allclose(a.gamma, b.gamma, atol=1e-13)
    assert np.allclose(a.dgamma, b.dgamma, atol=1e-12)


def test_adapted_frame_orthonormal_and_adapted(rng):
    m = general_metric()
    d = SplitDistribution(m.chart, rng.uniform(-0.5, 0.5, (2, 2)))
    x = random_points(rng, m.chart, 8)
    E = adapted_frame(m, d, x)
    g = m(x)
    assert np.allclose(np.einsum("nai,nab,nbj->nij", E, g, E), np.eye(4), atol=1e-12)
    V = d.spanning_matrix()
    # e_1, e_2 lie in span of the tilted D1 spanners: components along ξ vanish
    coeff = np.linalg.solve(np.broadcast_to(V, E.shape), E)
    assert np.allclose(coeff[:, 2:, :2], 0.0, atol=1e-12)


def test_frame_derivative_matches_fd(rng):
    m = general_metric()
    d = SplitDistribution(m.chart, rng.uniform(-0.5, 0.5, (2, 2)))
    x = random_points(rng, m.chart, 6)
    g, dg, _ = m.derivatives(x)
    E, dE = frame_and_derivative(g, dg, d, x)
    _, dE_fd = fd_derivatives(lambda y: adapted_frame(m, d, y), x, second=False)
    assert np.allclose(dE, dE_fd, atol=1e-8)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_partial_laplacians_add_up(seed):
    r = np.random.default_rng(seed)
    m = general_metric()
    d = SplitDistribution(m.chart, r.uniform(-0.4, 0.4, (2, 2)))
    f = ex.random_expression(r, range(4))
    x = r.uniform(-1, 1, (5, 4))
    L = partial_laplacians(f, m, d, x)
    assert np.allclose(L.lap1 + L.lap2, L.lap, atol=1e-10)
    assert np.allclose(L.grad1_sq + L.grad2_sq, L.grad_sq, atol=1e-10)


def test_partial_traces_do_not_depend_on_adapted_frame(rng):
    m = general_metric()
    d = SplitDistribution(m.chart)
    f = ex.random_expression(rng, range(4))
    x = random_points(rng, m.chart, 4)
    E = adapted_frame(m, d, x)
    th = 0.8
    R = np.eye(4)
    R[:2, :2] = [[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]]
    a = partial_laplacians(f, m, d, x)
    b = partial_laplacians(f, m, d, x, frame=E @ R)
    assert np.allclose(a.lap1, b.lap1) and np.allclose(a.lap2, b.lap2)


def test_hessian_of_coordinate_on_hyperbolic_space():
    # Hess(x_n)_ab = -Γ^n_ab, with Γ^n_aa = 1/x_n for a < n and Γ^n_nn = -1/x_n
    m = hyperbolic_metric(3, 1)
    p = np.array([0.1, -0.2, 0.7])
    h = hessian(ex.Coord(2), m, p)
    expected = np.diag([-1 / 0.7, -1 / 0.7, 1 / 0.7])
    assert np.allclose(h, expected)


def test_warped_torus_is_periodic():
    m = warped_torus()
    p = np.array([0.3, 1.1, 2.0, 4.0])
    assert np.allclose(m(p), m(p + 2 * np.pi))
