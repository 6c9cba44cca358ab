"""Partial Ricci and mixed scalar curvature under a conformal change g̃ = g/φ².

Also evaluates residuals of the Yamabe-type equations obtained by the
substitution u = φ^{1-p1p2/n}.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from . import expr as ex
from .chart import (MetricField, SplitDistribution, _frame_from_gram, _scalar_derivatives, batch,
                    partial_laplacians_from, unbatch)
from .curvature import pack_from_connection
from .errors import ConfigurationError, DomainError, SingularFactorError


@dataclass(frozen=True)
class ConformalChange:
    """The conformal metric g̃ = g/φ² over a base metric."""

    metric: MetricField
    phi: ex.Expr

    def __post_init__(self):
        object.__setattr__(self, "phi", ex.as_expr(self.phi))

    @property
    def n(self) -> int:
        return self.metric.chart.n

    @property
    def q(self) -> float:
        c = self.metric.chart
        return c.p1 * c.p2 / c.n

    @property
    def psi(self) -> ex.Expr:
        return -2.0 * ex.log(self.phi)

    @property
    def gamma(self) -> float:
        return yamabe_gamma(self.metric.chart.p1, self.metric.chart.p2)

    @property
    def u(self) -> ex.Expr:
        self.gamma  # rejects p1 p2 = n
        return ex.power(self.phi, 1.0 - self.q)

    @property
    def target(self) -> MetricField:
        return self.metric.conformal_change(self.phi)


def yamabe_gamma(p1: int, p2: int) -> float:
    n = p1 + p2
    if p1 * p2 == n:
        raise ConfigurationError(
            "gamma = (p1 p2/n - 1)^-1 is undefined for p1 = p2 = 2, n = 4; "
            "use the direct phi path instead")
    return 1.0 / (p1 * p2 / n - 1.0)


def _positive_phi(val: np.ndarray, x: np.ndarray) -> None:
    bad = ~(val > 0)
    if bad.any():
        raise SingularFactorError("conformal factor phi must be positive", x[int(np.argmax(bad))])


@dataclass(frozen=True)
class _Terms:
    pack: object
    lap: dict
    phi: np.ndarray


def _terms(change: ConformalChange, dist: SplitDistribution, xb, derivatives, path):
    # evaluate phi first so a bad factor is reported as such
    _positive_phi(change.phi._value(xb), xb)
    conn = change.metric.connection(xb, derivatives, path)
    E, _, _ = _frame_from_gram(conn.g, dist.spanning_matrix(), xb)
    pack = pack_from_connection(conn, dist, E)
    val, df, d2f = _scalar_derivatives(change.phi, xb, derivatives)
    lap = partial_laplacians_from(conn, E, dist.p1, val, df, d2f)
    return _Terms(pack, lap, val)


@dataclass(frozen=True)
class TransformedRicci:
    """Ric̃1, Ric̃2 in coordinate components.

    Only the D1×D1 block of ``ric1`` and the D2×D2 block of ``ric2`` carry the
    curvature of g̃; outside those blocks the closed form is not the curvature.
    """

    ric1: np.ndarray
    ric2: np.ndarray
    frame: np.ndarray  # g̃-orthonormal adapted frame, φ·E

    def blocks(self, p1: int):
        """(D1 block of Ric̃1, D2 block of Ric̃2) in the g̃-orthonormal frame."""
        E = self.frame
        r1 = np.einsum("...ai,...ab,...bj->...ij", E[..., :p1], self.ric1, E[..., :p1], optimize=True)
        r2 = np.einsum("...ai,...ab,...bj->...ij", E[..., p1:], self.ric2, E[..., p1:], optimize=True)
        return r1, r2


def transformed_partial_ricci(change: ConformalChange, dist: SplitDistribution, x,
                              derivatives: str = "analytic",
                              path: str = "coordinate") -> TransformedRicci:
    xb, single = batch(x)
    t = _terms(change, dist, xb, derivatives, path)
    p1, p2 = dist.p1, dist.p2
    phi = t.phi[:, None, None]
    g = t.pack.g
    h = t.lap["hess"]
    gs = t.lap["grad_sq"][:, None, None]
    r1 = t.pack.ric1_coord + (p2 * phi * h + (phi * t.lap["lap2"][:, None, None] - p2 * gs) * g) / phi ** 2
    r2 = t.pack.ric2_coord + (p1 * phi * h + (phi * t.lap["lap1"][:, None, None] - p1 * gs) * g) / phi ** 2
    frame = t.pack.frame * phi
    return TransformedRicci(unbatch(r1, single), unbatch(r2, single), unbatch(frame, single))


def transformed_k12(change: ConformalChange, dist: SplitDistribution, x,
                    derivatives: str = "analytic", path: str = "coordinate"):
    xb, single = batch(x)
    t = _terms(change, dist, xb, derivatives, path)
    p1, p2 = dist.p1, dist.p2
    k = (t.phi ** 2 * t.pack.k12 + t.phi * (p1 * t.lap["lap2"] + p2 * t.lap["lap1"])
         - p1 * p2 * t.lap["grad_sq"])
    return unbatch(k, single)


# ---------------------------------------------------------------------------
# PDE residuals


def _field_values(f, xb):
    if isinstance(f, (int, float)):
        return np.full(xb.shape[0], float(f))
    if isinstance(f, ex.Expr):
        return f._value(xb)
    return np.asarray(f(xb), dtype=float)


def _pow_pos(u: np.ndarray, e: float, xb) -> np.ndarray:
    bad = ~(u > 0)
    if bad.any():
        raise DomainError("u must be positive", xb[int(np.argmax(bad))])
    return np.exp(e * np.log(u))


def _u_terms(metric, dist, u, xb, derivatives):
    conn = metric.connection(xb, derivatives, "coordinate")
    E, _, _ = _frame_from_gram(conn.g, dist.spanning_matrix(), xb)
    val, df, d2f = _scalar_derivatives(ex.as_expr(u), xb, derivatives)
    _pow_pos(val, 1.0, xb)
    return conn, E, partial_laplacians_from(conn, E, dist.p1, val, df, d2f)


def yamabe_residual(metric: MetricField, dist: SplitDistribution, u, Kbar, x,
                    derivatives: str = "analytic"):
    """−γ(p1Δ⁽²⁾u + p2Δ⁽¹⁾u) + K·u − K̄·u^{2γ−1}."""
    gamma = yamabe_gamma(dist.p1, dist.p2)
    xb, single = batch(x)
    conn, E, L = _u_terms(metric, dist, u, xb, derivatives)
    K = pack_from_connection(conn, dist, E).k12
    uv = L["value"]
    r = (-gamma * (dist.p1 * L["lap2"] + dist.p2 * L["lap1"]) + K * uv
         - _field_values(Kbar, xb) * _pow_pos(uv, 2 * gamma - 1, xb))
    return unbatch(r, single)


def flat_pde_residual(dist: SplitDistribution, u, Ktilde, x, derivatives: str = "analytic"):
    """(p1Δ⁽²⁾ + p2Δ⁽¹⁾)u + (1 − q)K̃ u^{−(1+q)/(1−q)} on the flat chart, q = p1p2/n."""
    yamabe_gamma(dist.p1, dist.p2)
    q = dist.p1 * dist.p2 / dist.n
    xb, single = batch(x)
    _, _, L = _u_terms(MetricField.euclidean(dist.chart), dist, u, xb, derivatives)
    r = (dist.p1 * L["lap2"] + dist.p2 * L["lap1"]
         + (1 - q) * _field_values(Ktilde, xb) * _pow_pos(L["value"], -(1 + q) / (1 - q), xb))
    return unbatch(r, single)


def exact_substitution_residual(change: ConformalChange, dist: SplitDistribution, x,
                                derivatives: str = "analytic"):
    """K̃ minus its expansion in u = φ^{1−q}, including the gradient terms.

    With φ = u^m, m = 1/(1−q):
    K̃ = u^{2m}K + m u^{2m−1}(p1Δ⁽²⁾+p2Δ⁽¹⁾)u
        + m u^{2m−2}[((m−1) − p2 m) p1 |∇⁽²⁾u|² + ((m−1) − p1 m) p2 |∇⁽¹⁾u|²].
    The gradient terms do not cancel for any (p1, p2), so the bare Yamabe form
    holds only where ∇u = 0.
    """
    xb, single = batch(x)
    m = -change.gamma
    conn, E, L = _u_terms(change.metric, dist, change.u, xb, derivatives)
    K = pack_from_connection(conn, dist, E).k12
    p1, p2 = dist.p1, dist.p2
    u = L["value"]
    expansion = (u ** (2 * m) * K + m * u ** (2 * m - 1) * (p1 * L["lap2"] + p2 * L["lap1"])
                 + m * u ** (2 * m - 2) * (((m - 1) - p2 * m) * p1 * L["grad2_sq"]
                                           + ((m - 1) - p1 * m) * p2 * L["grad1_sq"]))
    kt = transformed_k12(change, dist, xb, derivatives)
    return unbatch(kt - expansion, single)


# ---------------------------------------------------------------------------
# summaries


def residual_summary(values) -> dict:
    a = np.abs(np.asarray(values, dtype=float).ravel())
    if a.size == 0:
        return {"max": 0.0, "mean": 0.0, "rms": 0.0, "count": 0}
    return {"max": float(a.max()), "mean": float(a.mean()),
            "rms": float(np.sqrt(np.mean(a ** 2))), "count": int(a.size)}


def residual_csv(x, values, name: str = "residual") -> str:
    xb, _ = batch(x)
    vals = np.asarray(values, dtype=float).reshape(xb.shape[0], -1)
    cols = [f"x_{i}" for i in range(xb.shape[1])]
    cols += [name] if vals.shape[1] == 1 else [f"{name}_{k}" for k in range(vals.shape[1])]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for row_x, row_v in zip(xb, vals):
        w.writerow([repr(float(v)) for v in row_x] + [repr(float(v)) for v in row_v])
    return buf.getvalue()
