"""Total mixed scalar curvature on flat-torus charts and its variations.

Integrals are tensor-product trapezoidal sums over a periodic grid, which
converge spectrally for smooth periodic integrands.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .chart import (Chart, MetricField, SplitDistribution, _frame_from_gram, batch,
                    frame_and_derivative)
from .curvature import extrinsic_from, pack_from_connection, sigma2, to_frame
from .errors import CompactnessError, ConfigurationError, StepSizeError

CHUNK = 4096


# ---------------------------------------------------------------------------
# quadrature


@dataclass(frozen=True)
class TorusQuadrature:
    chart: Chart
    resolution: int = 16

    def __post_init__(self):
        if self.chart.topology != "torus":
            raise CompactnessError("integrals over M need a compact (torus) chart")
        if self.resolution < 8:
            raise ConfigurationError("quadrature needs at least 8 points per axis")

    @property
    def volume(self) -> float:
        return float(np.prod(self.chart.periods))

    def points(self) -> np.ndarray:
        axes = [np.arange(self.resolution) * (P / self.resolution) for P in self.chart.periods]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def integrate(self, values: np.ndarray) -> float:
        """∫ f dx over the fundamental domain (values already include √det g)."""
        v = np.asarray(values, dtype=float)
        return float(np.sum(v, axis=0) * (self.volume / v.shape[0]))


def _chunks(x: np.ndarray):
    for s in range(0, x.shape[0], CHUNK):
        yield x[s:s + CHUNK]


def _volume_density(g: np.ndarray) -> np.ndarray:
    return np.sqrt(np.linalg.det(g))


def _geometry(metric: MetricField, dist: SplitDistribution, x: np.ndarray, extrinsic: bool):
    conn = metric.connection(x)
    if extrinsic:
        E, dE = frame_and_derivative(conn.g, conn.dg, dist, x)
    else:
        E, _, _ = _frame_from_gram(conn.g, dist.spanning_matrix(), x)
    pack = pack_from_connection(conn, dist, E)
    ext = extrinsic_from(conn, E, dE, dist.p1, x) if extrinsic else None
    return pack, ext, _volume_density(conn.g)


def _check_torus(metric: MetricField):
    if metric.chart.topology != "torus":
        raise CompactnessError("total curvature integrals need a torus chart")


def total_k12(metric: MetricField, dist: SplitDistribution, quadrature: TorusQuadrature | int = 16) -> float:
    """I_K = ∫ K12 dvol."""
    _check_torus(metric)
    q = quadrature if isinstance(quadrature, TorusQuadrature) else TorusQuadrature(metric.chart, quadrature)
    vals = []
    for xc in _chunks(q.points()):
        pack, _, vol = _geometry(metric, dist, xc, False)
        vals.append(pack.k12 * vol)
    return q.integrate(np.concatenate(vals))


# ---------------------------------------------------------------------------
# criticality and the second-variation form


@dataclass(frozen=True)
class Criticality:
    critical: bool
    max_violation: float
    witness: np.ndarray | None


def mixed_defect(pack) -> np.ndarray:
    """(Ric1 − Ric2)(e_i, ξ_j) for all i, j, shape (N, p1, p2)."""
    p1 = pack.p1
    return (pack.ric1 - pack.ric2)[:, :p1, p1:]


def criticality(metric: MetricField, dist: SplitDistribution, grid, tol: float = 1e-8) -> Criticality:
    """Max over the grid of |(Ric1 − Ric2)(e_i, ξ_j)|; critical iff ≤ tol."""
    xb, _ = batch(grid)
    worst, witness = 0.0, None
    for xc in _chunks(xb):
        pack, _, _ = _geometry(metric, dist, xc, False)
        d = np.abs(mixed_defect(pack)).max(axis=(1, 2))
        i = int(np.argmax(d))
        if d[i] > worst:
            worst, witness = float(d[i]), xc[i]
    return Criticality(worst <= tol, worst, witness)


@dataclass(frozen=True)
class PhiForm:
    x: np.ndarray
    matrix: np.ndarray

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.matrix)


def phi_matrix(Rf: np.ndarray, p1: int) -> np.ndarray:
    """Φ_ij from frame components of Rm, using e_i and the first p1 normals ξ_i."""
    n = Rf.shape[-1]
    idx = np.arange(n)
    # Ric1 − Ric2 in the frame
    ric1 = np.einsum("...ABCA->...BC", Rf[..., p1:, :, :, p1:])
    ric2 = np.einsum("...ABCA->...BC", Rf[..., :p1, :, :, :p1])
    D = ric1 - ric2
    e = idx[:p1]
    xi = p1 + idx[:p1]
    diag = D[..., xi, xi] - D[..., e, e]
    A = Rf[..., e[:, None], e[None, :], xi[:, None], xi[None, :]]          # Rm(e_i, e_j, ξ_i, ξ_j)
    B = Rf[..., e[:, None], xi[None, :], xi[:, None], e[None, :]]          # Rm(e_i, ξ_j, ξ_i, e_j)
    Phi = 2.0 * (A + B)
    Phi[..., e, e] += diag
    return Phi


def _check_p(dist: SplitDistribution):
    if dist.p1 > dist.p2:
        raise ConfigurationError("the rotation family needs p1 <= p2")


def phi_form(metric: MetricField, dist: SplitDistribution, x) -> PhiForm | list:
    _check_p(dist)
    xb, single = batch(x)
    pack, _, _ = _geometry(metric, dist, xb, False)
    M = phi_matrix(pack.riemann, dist.p1)
    return PhiForm(xb[0], M[0]) if single else [PhiForm(xb[i], M[i]) for i in range(len(xb))]


def random_adapted_rotation(rng: np.random.Generator, p1: int, p2: int) -> np.ndarray:
    from scipy.stats import ortho_group

    Q = np.zeros((p1 + p2, p1 + p2))
    Q[:p1, :p1] = ortho_group.rvs(p1, random_state=rng) if p1 > 1 else rng.choice([-1.0, 1.0], (1, 1))
    Q[p1:, p1:] = ortho_group.rvs(p2, random_state=rng) if p2 > 1 else rng.choice([-1.0, 1.0], (1, 1))
    return Q


@dataclass(frozen=True)
class QuasiPositivity:
    quasi_positive: bool
    failing_fraction: float
    failing_measure: float | None
    min_eigenvalue: float
    witness: np.ndarray | None


def quasi_positive(metric: MetricField, dist: SplitDistribution, grid, n_rot: int = 16,
                   rng: np.random.Generator | None = None, tol: float = 0.0,
                   volume: float | None = None) -> QuasiPositivity:
    """Positivity of Φ for the adapted frame and ``n_rot`` random re-choices of it.

    The failing set is reported as a fraction of grid points (and as a
    measure when the total ``volume`` is supplied) rather than decided exactly.
    """
    _check_p(dist)
    rng = rng or np.random.default_rng(0)
    xb, _ = batch(grid)
    p1, p2 = dist.p1, dist.p2
    rots = [np.eye(dist.n)] + [random_adapted_rotation(rng, p1, p2) for _ in range(n_rot)]
    fail = np.zeros(len(xb), dtype=bool)
    lam_min = np.inf
    off = 0
    for xc in _chunks(xb):
        pack, _, _ = _geometry(metric, dist, xc, False)
        worst = np.full(len(xc), np.inf)
        for Q in rots:
            Rq = to_frame(pack.riemann, np.broadcast_to(Q, (len(xc),) + Q.shape))
            w = np.linalg.eigvalsh(phi_matrix(Rq, p1))[:, 0]
            worst = np.minimum(worst, w)
        fail[off:off + len(xc)] = ~(worst > tol)
        lam_min = min(lam_min, float(worst.min()))
        off += len(xc)
    frac = float(fail.mean())
    witness = xb[int(np.argmax(fail))] if fail.any() else None
    return QuasiPositivity(not fail.any(), frac, None if volume is None else frac * volume,
                           lam_min, witness)


# ---------------------------------------------------------------------------
# rotation family and its derivatives


def raised_cosine_bump(center, periods, width: float = 0.5) -> Callable[[np.ndarray], np.ndarray]:
    """Π_a cos(π u_a/(width·P_a))⁴ on |u_a| < width·P_a/2, zero elsewhere.

    u_a is the periodic offset from the centre; width 1/2 on a 2π torus gives
    Π_a max(0, cos(x_a − x_a⁰))⁴.
    """
    c = np.asarray(center, dtype=float)
    P = np.asarray(periods, dtype=float)

    def bump(x):
        u = (np.asarray(x) - c + P / 2) % P - P / 2
        lobe = np.abs(u) < width * P / 2
        return np.prod(np.where(lobe, np.cos(np.pi * u / (width * P)), 0.0) ** 4, axis=-1)

    return bump


@dataclass(frozen=True)
class VariationScenario:
    metric: MetricField
    dist: SplitDistribution
    omega: tuple
    bump_center: tuple | None = None
    bump_width: float = 0.5
    resolution: int = 16
    h: float = 1e-2

    def __post_init__(self):
        _check_torus(self.metric)
        _check_p(self.dist)
        om = tuple(float(w) for w in self.omega)
        if len(om) != self.dist.p1 or any(w < 0 for w in om):
            raise ConfigurationError("omega needs p1 non-negative weights")
        object.__setattr__(self, "omega", om)
        if self.bump_center is None:
            object.__setattr__(self, "bump_center", tuple(P / 2 for P in self.metric.chart.periods))
        if not 0 < self.bump_width <= 1:
            raise ConfigurationError("bump width must be in (0, 1]")
        TorusQuadrature(self.metric.chart, self.resolution)

    @property
    def quadrature(self) -> TorusQuadrature:
        return TorusQuadrature(self.metric.chart, self.resolution)

    def bump(self):
        return raised_cosine_bump(self.bump_center, self.metric.chart.periods, self.bump_width)


def rotated_k12(Rf: np.ndarray, p1: int, theta: np.ndarray) -> np.ndarray:
    """K12 of the rotated pair e_i(s) = e_i cos θ_i + ξ_i sin θ_i, ξ_i(s) = ξ_i cos θ_i − e_i sin θ_i."""
    N, n = Rf.shape[0], Rf.shape[-1]
    Q = np.broadcast_to(np.eye(n), (N, n, n)).copy()
    c, s = np.cos(theta), np.sin(theta)
    for i in range(p1):
        Q[:, i, i] = c[:, i]
        Q[:, p1 + i, i] = s[:, i]
        Q[:, p1 + i, p1 + i] = c[:, i]
        Q[:, i, p1 + i] = -s[:, i]
    Rq = to_frame(Rf, Q)
    return np.einsum("niaai->n", Rq[:, :p1, p1:, p1:, :p1])


@dataclass(frozen=True)
class VariationDerivatives:
    i1_analytic: float
    i1_fd: float
    i2_analytic: float
    i2_fd: float
    samples: dict = field(default_factory=dict)


_D1 = {-2: 1 / 12, -1: -8 / 12, 1: 8 / 12, 2: -1 / 12}
_D2 = {-2: -1 / 12, -1: 16 / 12, 0: -30 / 12, 1: 16 / 12, 2: -1 / 12}


def variation_derivatives(sc: VariationScenario) -> VariationDerivatives:
    """I'(0), I''(0) from the closed forms and from finite differences of I(s)."""
    q = sc.quadrature
    pts = q.points()
    bump = sc.bump()
    om = np.asarray(sc.omega)
    p1 = sc.dist.p1
    bmax = float(np.max(bump(pts)))
    if 2 * sc.h * om.max(initial=0.0) * bmax >= np.pi / 2:
        raise StepSizeError("rotation angle reaches pi/2 on the s-grid; reduce h or omega")
    steps = (-2, -1, 0, 1, 2)
    I_s = {k: [] for k in steps}
    i1, i2 = [], []
    for xc in _chunks(pts):
        pack, _, vol = _geometry(sc.metric, sc.dist, xc, False)
        b = bump(xc)
        for k in steps:
            theta = (k * sc.h) * b[:, None] * om[None, :]
            I_s[k].append(rotated_k12(pack.riemann, p1, theta) * vol)
        D = mixed_defect(pack)
        first = np.einsum("i,nii->n", om, D[:, :, :p1])
        i1.append(2 * b * first * vol)
        Phi = phi_matrix(pack.riemann, p1)
        i2.append(2 * b ** 2 * np.einsum("i,nij,j->n", om, Phi, om, optimize=True) * vol)
    I = {k: q.integrate(np.concatenate(v)) for k, v in I_s.items()}
    fd1 = sum(_D1[k] * I[k] for k in _D1) / sc.h
    fd2 = sum(_D2[k] * I[k] for k in _D2) / sc.h ** 2
    return VariationDerivatives(q.integrate(np.concatenate(i1)), fd1,
                                q.integrate(np.concatenate(i2)), fd2,
                                {str(k * sc.h): I[k] for k in steps})


def k_of_s_second_coefficient(metric: MetricField, dist: SplitDistribution, x, omega,
                              h: float = 1e-2) -> np.ndarray:
    """½ d²K/ds² at s = 0 for θ_i = s ω_i, by a 5-point stencil (pointwise oracle for Φ)."""
    xb, _ = batch(x)
    pack, _, _ = _geometry(metric, dist, xb, False)
    om = np.asarray(omega, dtype=float)
    vals = {k: rotated_k12(pack.riemann, dist.p1, np.tile(k * h * om, (len(xb), 1))) for k in _D2}
    return 0.5 * sum(_D2[k] * vals[k] for k in _D2) / h ** 2


# ---------------------------------------------------------------------------
# integral identities, bending and energy


@dataclass(frozen=True)
class IdentityCheck:
    residual: float
    scale: float
    ik: float
    sigma2_integral: float   # 2∫(σ2(D1) + σ2(D2))
    t2_max: float


def _extrinsic_integrals(metric, dist, q: TorusQuadrature):
    acc = {k: [] for k in ("k12", "wal", "wal_abs", "s2", "bend", "bound1", "bound2",
                           "h1", "h2", "t2", "b1", "b2", "t1")}
    for xc in _chunks(q.points()):
        pack, ext, vol = _geometry(metric, dist, xc, True)
        p1, p2 = dist.p1, dist.p2
        terms = [pack.k12, ext.b1_sq, -p1 ** 2 * ext.h1_sq, -ext.t1_sq,
                 ext.b2_sq, -p2 ** 2 * ext.h2_sq, -ext.t2_sq]
        acc["k12"].append(pack.k12 * vol)
        acc["wal"].append(sum(terms) * vol)
        acc["wal_abs"].append(sum(np.abs(t) for t in terms) * vol)
        acc["s2"].append(2 * ext.sigma2_sum * vol)
        acc["bend"].append(ext.c_norm_sq * vol)
        acc["bound1"].append(ext.sigma2_1.sum(-1) * vol)
        acc["bound2"].append(ext.sigma2_2.sum(-1) * vol)
        acc["h1"].append(ext.h1_sq * vol)
        acc["h2"].append(ext.h2_sq * vol)
        acc["b1"].append(ext.b1_sq * vol)
        acc["b2"].append(ext.b2_sq * vol)
        acc["t1"].append(ext.t1_sq * vol)
        acc["t2"].append(ext.t2_sq)
    out = {k: q.integrate(np.concatenate(v)) for k, v in acc.items() if k != "t2"}
    out["t2_max"] = float(np.concatenate(acc["t2"]).max())
    return out


def integral_identity_check(metric: MetricField, dist: SplitDistribution,
                            quadrature: TorusQuadrature | int = 16) -> IdentityCheck:
    """∫[K12 + |B1|² − p1²|H1|² − |T1|² + |B2|² − p2²|H2|² − |T2|²] dvol (should vanish)."""
    _check_torus(metric)
    q = quadrature if isinstance(quadrature, TorusQuadrature) else TorusQuadrature(metric.chart, quadrature)
    I = _extrinsic_integrals(metric, dist, q)
    return IdentityCheck(I["wal"], I["wal_abs"], I["k12"], I["s2"], I["t2_max"])


@dataclass(frozen=True)
class BendingReport:
    bending: float
    bending_bound: float
    corrected_energy: float
    ik: float
    equal_dim_bound: float | None
    d2_integrable: bool
    c_n: float

    @property
    def slack(self) -> float:
        return self.bending - self.bending_bound

    def to_json(self) -> dict:
        return {"bending": self.bending, "bending_bound": self.bending_bound,
                "corrected_energy": self.corrected_energy, "ik": self.ik,
                "equal_dim_bound": self.equal_dim_bound, "d2_integrable": self.d2_integrable,
                "c_n": self.c_n}


def bending_and_energy(metric: MetricField, dist: SplitDistribution,
                       quadrature: TorusQuadrature | int = 16, c_n: float = 1.0,
                       integrable_tol: float = 1e-12) -> BendingReport:
    """Total bending 𝓑(D1) = c_n∫|∇D̃1|², its lower bound and the corrected energy 𝓓(D2)."""
    _check_torus(metric)
    p1, p2 = dist.p1, dist.p2
    if p1 == 1 or p2 == 1:
        raise ConfigurationError("the bending bound has denominators p_i - 1; needs p1, p2 >= 2")
    q = quadrature if isinstance(quadrature, TorusQuadrature) else TorusQuadrature(metric.chart, quadrature)
    I = _extrinsic_integrals(metric, dist, q)
    bending = c_n * I["bend"]
    bound = c_n * (2 / (p1 - 1) * I["bound1"] + 2 / (p2 - 1) * I["bound2"])
    energy = I["bend"] + p1 * (p1 - 2) * I["h1"] + p2 ** 2 * I["h2"]
    eq = c_n / (p1 - 1) * I["k12"] if p1 == p2 else None
    return BendingReport(bending, bound, energy, I["k12"], eq, I["t2_max"] <= integrable_tol, c_n)


def bend_identity_sides(C: np.ndarray) -> tuple[float, float]:
    """Both sides of the elementary identity for a p×p matrix (p ≥ 2)."""
    C = np.asarray(C, dtype=float)
    p = C.shape[0]
    iu = np.triu_indices(p, 1)
    off = ~np.eye(p, dtype=bool)
    d = np.diag(C)
    lhs = (p - 1) * np.sum(C ** 2)
    rhs = (np.sum((d[iu[0]] - d[iu[1]]) ** 2) + np.sum((C[iu] + C.T[iu]) ** 2)
           + (p - 2) * np.sum(C[off] ** 2)
           + 2 * np.sum(d[iu[0]] * d[iu[1]] - C[iu] * C.T[iu]))
    return float(lhs), float(rhs)


def sigma2_sphere_average(C: np.ndarray, rng: np.random.Generator, samples: int = 10_000) -> float:
    """p · mean over unit η of σ2(Σ η_a C^a); C has shape (p, m, m)."""
    p = C.shape[0]
    eta = rng.normal(size=(samples, p))
    eta /= np.linalg.norm(eta, axis=1, keepdims=True)
    M = np.einsum("sa,aij->sij", eta, C)
    return float(p * np.mean(sigma2(M)))
