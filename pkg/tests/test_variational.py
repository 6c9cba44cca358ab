import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from ricci_forge import expr as ex
from ricci_forge.chart import Chart, MetricField, SplitDistribution
from ricci_forge.curvature import curvature_pack, sigma2, to_frame
from ricci_forge.errors import CompactnessError, ConfigurationError, StepSizeError
from ricci_forge.variational import (TorusQuadrature, VariationScenario, bend_identity_sides,
                                     bending_and_energy, criticality, integral_identity_check,
                                     k_of_s_second_coefficient, phi_form, phi_matrix,
                                     quasi_positive, raised_cosine_bump, sigma2_sphere_average,
                                     total_k12, variation_derivatives)

from helpers import product_torus, random_points, warped_torus

TILT = np.array([[0.3, 0.0], [0.0, -0.2]])


def _flat(n=4, p1=2):
    return MetricField.euclidean(Chart.torus(n, p1))


def test_flat_torus_everything_vanishes(rng):
    m = _flat()
    d = SplitDistribution(m.chart, TILT)
    v = variation_derivatives(VariationScenario(m, d, (1.0, 0.5), resolution=8))
    assert max(abs(v.i1_analytic), abs(v.i1_fd), abs(v.i2_analytic), abs(v.i2_fd)) <= 1e-8
    P = np.array([f.matrix for f in phi_form(m, d, random_points(rng, m.chart, 10, 3.0))])
    assert np.abs(P).max() <= 1e-8
    assert abs(integral_identity_check(m, d, 8).residual) <= 1e-8


def test_product_torus_is_critical():
    m = product_torus()
    d = SplitDistribution(m.chart)
    q = TorusQuadrature(m.chart, 8)
    assert criticality(m, d, q.points()).critical
    v = variation_derivatives(VariationScenario(m, d, (1.0, 0.4), resolution=8,
                                                bump_center=(1.0, 2.0, 3.0, 4.0)))
    assert abs(v.i1_fd) <= 1e-6 and abs(v.i1_analytic) <= 1e-8


def test_sphere_times_hyperbolic_plane_is_critical(rng):
    x = ex.coords(4)
    f1 = ex.power(ex.mul(0.5, ex.add(1.0, ex.sumsq([0, 1]))), -2)
    f2 = ex.power(x[3], -2)
    m = MetricField.diagonal(Chart.box(4, 2, [-1, -1, -1, 0.5], [1, 1, 1, 2]), [f1, f1, f2, f2])
    d = SplitDistribution(m.chart)
    pts = random_points(rng, m.chart, 20)
    assert criticality(m, d, pts).critical
    pack = curvature_pack(m, d, pts)
    assert np.allclose(pack.ric[:, 0, 0], 1.0) and np.allclose(pack.ric[:, 2, 2], -1.0)
    # mixed planes are flat, so each partial Ricci vanishes on its own block
    assert np.allclose(pack.k12, 0.0, atol=1e-10)


def test_tilted_split_is_not_critical():
    m = warped_torus()
    d = SplitDistribution(m.chart, TILT)
    crit = criticality(m, d, TorusQuadrature(m.chart, 8).points())
    assert not crit.critical and crit.witness is not None
    v = variation_derivatives(VariationScenario(m, d, (1.0, 0.3), resolution=10))
    assert abs(v.i1_analytic) > 1e-3
    assert v.i1_fd == pytest.approx(v.i1_analytic, rel=1e-4)
    assert v.i2_fd == pytest.approx(v.i2_analytic, rel=1e-4)


@pytest.mark.parametrize("dims, graph", [((2, 2), TILT), ((2, 2), None), ((1, 3), [[0.2], [0.1], [-0.3]]),
                                         ((2, 3), [[0.1, 0.2], [0.0, -0.1], [0.3, 0.1]])])
def test_phi_matches_rotation_family(dims, graph, rng):
    p1, p2 = dims
    m = warped_torus(p1 + p2, p1)
    d = SplitDistribution(m.chart, None if graph is None else np.asarray(graph))
    pts = random_points(rng, m.chart, 6, 3.0)
    for _ in range(3):
        om = rng.uniform(-1, 1, p1)
        P = np.array([f.matrix for f in phi_form(m, d, pts)])
        quadform = np.einsum("i,nij,j->n", om, P, om)
        assert np.allclose(quadform, k_of_s_second_coefficient(m, d, pts, om), atol=1e-7)


def test_phi_signed_permutation_covariance(rng):
    m = warped_torus(5, 2)
    d = SplitDistribution(m.chart, rng.uniform(-0.3, 0.3, (3, 2)))
    pts = random_points(rng, m.chart, 4, 3.0)
    pack = curvature_pack(m, d, pts)
    base = np.linalg.eigvalsh(phi_matrix(pack.riemann, 2))
    # swap the pairs (e1, ξ1) <-> (e2, ξ2) and flip the sign of the second pair
    Q = np.zeros((5, 5))
    Q[1, 0], Q[0, 1], Q[3, 2], Q[2, 3], Q[4, 4] = 1, -1, 1, -1, 1
    Rq = to_frame(pack.riemann, np.broadcast_to(Q, (4, 5, 5)))
    assert np.allclose(np.linalg.eigvalsh(phi_matrix(Rq, 2)), base, atol=1e-12)


def test_quasi_positive_implies_positive_second_variation(rng):
    m = warped_torus()
    d = SplitDistribution(m.chart, TILT)
    center = (np.pi, np.pi / 2, np.pi, np.pi / 2)
    sc = VariationScenario(m, d, (1.0, 1.0), bump_center=center, bump_width=0.25, resolution=12)
    # Φ only matters on the bump support
    support = np.asarray(center) + rng.uniform(-np.pi / 4, np.pi / 4, (400, 4))
    qp = quasi_positive(m, d, support, n_rot=0)
    assert qp.quasi_positive and qp.min_eigenvalue > 0
    v = variation_derivatives(sc)
    assert v.i2_analytic > 0
    assert v.i2_fd == pytest.approx(v.i2_analytic, rel=1e-4)


def test_quasi_positive_reports_failures(rng):
    m = warped_torus()
    d = SplitDistribution(m.chart, TILT)
    q = TorusQuadrature(m.chart, 8)
    qp = quasi_positive(m, d, q.points(), n_rot=2, rng=rng, volume=q.volume)
    assert not qp.quasi_positive
    assert 0 < qp.failing_fraction <= 1
    assert qp.failing_measure == pytest.approx(qp.failing_fraction * q.volume)


def test_bump():
    b = raised_cosine_bump((np.pi,) * 2, (2 * np.pi,) * 2, 0.25)
    x = np.array([[np.pi, np.pi], [np.pi + 0.5, np.pi], [np.pi + np.pi / 4 + 1e-9, np.pi], [0.0, 0.0]])
    v = b(x)
    assert v[0] == 1.0 and 0 < v[1] < 1 and v[2] == 0.0 and v[3] == 0.0
    # periodic
    assert b(x[1] + 2 * np.pi) == pytest.approx(v[1])


@pytest.mark.parametrize("make, graph", [(warped_torus, None), (warped_torus, TILT),
                                         (product_torus, None)])
def test_integral_identity(make, graph):
    m = make()
    d = SplitDistribution(m.chart, graph)
    chk = integral_identity_check(m, d, 14)
    assert abs(chk.residual) <= 1e-5 * max(1.0, chk.scale)
    assert chk.ik == pytest.approx(chk.sigma2_integral, abs=1e-5)


def test_quadrature_converges_to_closed_form():
    # g = δ/φ² on the flat 3-torus with φ = exp(sin x0): K̃ = e^{2s}[p2(cos² − sin) − p1 p2 cos²]
    p1, p2, n = 1, 2, 3
    m = MetricField.conformal(Chart.torus(n, p1), ex.exp(ex.sin(ex.Coord(0))))
    d = SplitDistribution(m.chart)

    def integrand(t):
        s, c = np.sin(t), np.cos(t)
        return np.exp((2 - n) * s) * (p2 * (c * c - s) - p1 * p2 * c * c)

    exact = (2 * np.pi) ** (n - 1) * quad(integrand, 0, 2 * np.pi, epsabs=1e-13, epsrel=1e-13)[0]
    a, b = total_k12(m, d, 16), total_k12(m, d, 32)
    assert abs(a - b) <= 1e-8
    assert b == pytest.approx(exact, abs=1e-6)


@pytest.mark.parametrize("make, graph", [(warped_torus, None), (warped_torus, TILT),
                                         (product_torus, None)])
def test_bending_bound(make, graph):
    m = make()
    rep = bending_and_energy(m, SplitDistribution(m.chart, graph), 12)
    assert rep.slack >= -1e-8
    assert rep.equal_dim_bound is not None
    assert rep.bending - rep.equal_dim_bound >= -1e-5
    assert set(rep.to_json()) >= {"bending", "bending_bound", "corrected_energy"}


def test_integrability_flag():
    m = product_torus()
    assert bending_and_energy(m, SplitDistribution(m.chart), 8).d2_integrable
    w = warped_torus()
    assert not bending_and_energy(w, SplitDistribution(w.chart, TILT), 8).d2_integrable


def test_bend_identity_on_random_matrices(rng):
    for _ in range(1000):
        p = int(rng.integers(2, 7))
        lhs, rhs = bend_identity_sides(rng.normal(size=(p, p)))
        assert abs(lhs - rhs) <= 1e-10 * max(1.0, abs(lhs))


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 6), st.integers(0, 2 ** 32 - 1))
def test_bend_identity_property(p, seed):
    C = np.random.default_rng(seed).normal(scale=3.0, size=(p, p))
    lhs, rhs = bend_identity_sides(C)
    assert abs(lhs - rhs) <= 1e-10 * max(1.0, abs(lhs))
    assert 2 * sigma2(C) == pytest.approx(np.trace(C) ** 2 - np.trace(C @ C), abs=1e-9)


def test_sigma2_direction_average(rng):
    C = rng.normal(size=(3, 4, 4))
    mc = sigma2_sphere_average(C, rng, 200_000)
    exact = float(sum(sigma2(c) for c in C))
    assert mc == pytest.approx(exact, abs=1e-2 * max(1.0, np.abs(sigma2(C)).sum()))


def test_errors():
    box = MetricField.euclidean(Chart.box(4, 2))
    d = SplitDistribution(box.chart)
    with pytest.raises(CompactnessError):
        VariationScenario(box, d, (1.0, 1.0))
    with pytest.raises(CompactnessError):
        total_k12(box, d)
    t = _flat(4, 1)
    with pytest.raises(ConfigurationError):
        bending_and_energy(t, SplitDistribution(t.chart), 8)
    t = _flat(5, 3)
    with pytest.raises(ConfigurationError):
        VariationScenario(t, SplitDistribution(t.chart), (1.0, 1.0, 1.0), resolution=8)
    m = _flat()
    with pytest.raises(StepSizeError):
        variation_derivatives(VariationScenario(m, SplitDistribution(m.chart), (100.0, 0.0),
                                                resolution=8, h=0.1))
    with pytest.raises(ConfigurationError):
        TorusQuadrature(m.chart, 4)
