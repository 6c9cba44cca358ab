"""Charts, metric fields, adapted frames and the basic differential operators.

All point-wise operations accept a single point of shape ``(n,)`` or a batch
of shape ``(N, n)`` and return arrays with a matching leading axis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import expr as ex
from .errors import ConfigurationError, DefinitenessError, DomainError, RankError
from .fd import fd_derivatives

DERIVATIVE_MODES = ("analytic", "fd")
PATHS = ("coordinate", "conformal")


def batch(x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        return x[None, :], True
    if x.ndim != 2:
        raise ValueError(f"points must have shape (n,) or (N, n), got {x.shape}")
    return x, False


def unbatch(a, single: bool):
    return a[0] if single else a


# ---------------------------------------------------------------------------
# chart and split


@dataclass(frozen=True)
class Chart:
    """Coordinate chart: an open box (bounds may be infinite) or a flat torus."""

    n: int
    p1: int
    lo: tuple = ()
    hi: tuple = ()
    periods: tuple | None = None

    def __post_init__(self):
        if self.n < 2 or not 1 <= self.p1 < self.n:
            raise ConfigurationError(f"need 1 <= p1 < n, got n={self.n}, p1={self.p1}")
        if self.periods is not None:
            per = tuple(float(p) for p in self.periods)
            if len(per) != self.n or not all(p > 0 and np.isfinite(p) for p in per):
                raise ConfigurationError("torus periods must be n positive numbers")
            object.__setattr__(self, "periods", per)
            object.__setattr__(self, "lo", (0.0,) * self.n)
            object.__setattr__(self, "hi", per)
        else:
            lo = tuple(float(v) for v in (self.lo or (-np.inf,) * self.n))
            hi = tuple(float(v) for v in (self.hi or (np.inf,) * self.n))
            if len(lo) != self.n or len(hi) != self.n or any(a >= b for a, b in zip(lo, hi)):
                raise ConfigurationError("box bounds must satisfy lo < hi on every axis")
            object.__setattr__(self, "lo", lo)
            object.__setattr__(self, "hi", hi)

    @property
    def p2(self) -> int:
        return self.n - self.p1

    @property
    def topology(self) -> str:
        return "torus" if self.periods is not None else "box"

    @classmethod
    def box(cls, n: int, p1: int, lo=None, hi=None) -> "Chart":
        return cls(n, p1, tuple(lo) if lo is not None else (), tuple(hi) if hi is not None else ())

    @classmethod
    def torus(cls, n: int, p1: int, periods=None) -> "Chart":
        return cls(n, p1, periods=tuple(periods) if periods is not None else (2 * np.pi,) * n)

    @classmethod
    def half_space(cls, n: int, p1: int) -> "Chart":
        lo = (-np.inf,) * (n - 1) + (0.0,)
        return cls(n, p1, lo, (np.inf,) * n)

    def check(self, x: np.ndarray) -> None:
        if self.periods is not None:
            bad = ~np.all(np.isfinite(x), axis=1)
        else:
            bad = ~np.all((x > np.asarray(self.lo)) & (x < np.asarray(self.hi)), axis=1)
        if bad.any():
            raise DomainError("point outside chart domain", x[int(np.argmax(bad))])


@dataclass(frozen=True)
class SplitDistribution:
    """D1 = graph of ``graph`` (p2 x p1) over the first p1 coordinates; D2 = D1^⊥."""

    chart: Chart
    graph: np.ndarray | None = None

    def __post_init__(self):
        if self.graph is not None:
            A = np.array(self.graph, dtype=float)
            if A.shape != (self.chart.p2, self.chart.p1) or not np.all(np.isfinite(A)):
                raise ConfigurationError(
                    f"graph matrix must be finite with shape ({self.chart.p2}, {self.chart.p1})")
            A.setflags(write=False)
            object.__setattr__(self, "graph", A)

    @property
    def p1(self) -> int:
        return self.chart.p1

    @property
    def p2(self) -> int:
        return self.chart.p2

    @property
    def n(self) -> int:
        return self.chart.n

    def spanning_matrix(self) -> np.ndarray:
        """Columns: tilted D1 spanners ∂_i + Σ_j a_ji ∂_j, then coordinate ∂_α."""
        V = np.eye(self.n)
        if self.graph is not None:
            V[self.p1:, :self.p1] = self.graph
        return V

    def tilted(self, graph) -> "SplitDistribution":
        return SplitDistribution(self.chart, graph)


# ---------------------------------------------------------------------------
# metric


@dataclass(frozen=True)
class Connection:
    """Coordinate data of the Levi-Civita connection on a batch of points."""

    x: np.ndarray
    g: np.ndarray       # (N, n, n)
    ginv: np.ndarray    # (N, n, n)
    dg: np.ndarray      # (N, n, n, n)   dg[:, k, a, b] = ∂_k g_ab
    gamma: np.ndarray   # (N, n, n, n)   gamma[:, c, a, b] = Γ^c_ab
    dgamma: np.ndarray  # (N, n, n, n, n) dgamma[:, e, c, a, b] = ∂_e Γ^c_ab


@dataclass(frozen=True)
class MetricField:
    """A Riemannian metric on a chart.

    Either conformally flat, ``g = δ / scale²``, or a general symmetric
    matrix of expressions.
    """

    chart: Chart
    scale: ex.Expr | None = None
    matrix: tuple | None = None
    label: str = ""

    def __post_init__(self):
        if (self.scale is None) == (self.matrix is None):
            raise ConfigurationError("give exactly one of scale= or matrix=")
        if self.matrix is not None:
            n = self.chart.n
            rows = tuple(tuple(ex.as_expr(e) for e in row) for row in self.matrix)
            if len(rows) != n or any(len(r) != n for r in rows):
                raise ConfigurationError(f"metric matrix must be {n}x{n}")
            for a in range(n):
                for b in range(a):
                    if rows[a][b] != rows[b][a]:
                        raise ConfigurationError(f"metric matrix not symmetric at ({a},{b})")
            object.__setattr__(self, "matrix", rows)

    # constructors -----------------------------------------------------------

    @classmethod
    def conformal(cls, chart: Chart, scale, label: str = "") -> "MetricField":
        return cls(chart, scale=ex.as_expr(scale), label=label)

    @classmethod
    def euclidean(cls, chart: Chart) -> "MetricField":
        return cls(chart, scale=ex.Const(1.0), label="euclidean")

    @classmethod
    def general(cls, chart: Chart, matrix, label: str = "") -> "MetricField":
        return cls(chart, matrix=matrix, label=label)

    @classmethod
    def diagonal(cls, chart: Chart, entries, label: str = "") -> "MetricField":
        n = chart.n
        zero = ex.Const(0.0)
        m = [[ex.as_expr(entries[a]) if a == b else zero for b in range(n)] for a in range(n)]
        return cls(chart, matrix=m, label=label)

    @property
    def is_conformal(self) -> bool:
        return self.scale is not None

    def conformal_change(self, phi) -> "MetricField":
        """The metric g / phi²."""
        phi = ex.as_expr(phi)
        if self.is_conformal:
            return MetricField(self.chart, scale=self.scale * phi, label=f"{self.label}/phi^2")
        w = ex.power(ex.recip(phi), 2)
        m = [[ex.mul(e, w) for e in row] for row in self.matrix]
        return MetricField(self.chart, matrix=m, label=f"{self.label}/phi^2")

    def as_general(self) -> "MetricField":
        if not self.is_conformal:
            return self
        w = ex.power(ex.recip(self.scale), 2)
        return MetricField.diagonal(self.chart, [w] * self.chart.n, self.label)

    # evaluation ---------------------------------------------------------------

    def _values(self, x: np.ndarray) -> np.ndarray:
        n = self.chart.n
        if self.is_conformal:
            F = self.scale._value(x)
            if np.any(F == 0.0) or not np.all(np.isfinite(F)):
                i = int(np.argmax((F == 0.0) | ~np.isfinite(F)))
                raise DomainError("conformal scale vanishes", x[i])
            return (F ** -2)[:, None, None] * np.eye(n)
        g = np.empty((x.shape[0], n, n))
        for a in range(n):
            for b in range(a, n):
                v = self.matrix[a][b]._value(x)
                g[:, a, b] = v
                g[:, b, a] = v
        return g

    def __call__(self, x) -> np.ndarray:
        xb, single = batch(x)
        self.chart.check(xb)
        g = self._values(xb)
        check_positive(g, xb)
        return unbatch(g, single)

    def derivatives(self, x, mode: str = "analytic"):
        """``(g, dg, d2g)`` with dg[:, k] = ∂_k g and d2g[:, k, l] = ∂_k ∂_l g."""
        if mode not in DERIVATIVE_MODES:
            raise ConfigurationError(f"derivative mode must be one of {DERIVATIVE_MODES}")
        xb, _ = batch(x)
        self.chart.check(xb)
        if mode == "fd":
            g, dg, d2g = fd_derivatives(self._values, xb)
        elif self.is_conformal:
            j = self.scale.jet(xb)
            F, dF, hF = j.val, j.grad, j.hess
            if np.any(F == 0.0):
                raise DomainError("conformal scale vanishes", xb[int(np.argmax(F == 0.0))])
            eye = np.eye(self.chart.n)
            g = (F ** -2)[:, None, None] * eye
            dg = (-2 * F ** -3)[:, None, None, None] * dF[:, :, None, None] * eye
            coef = (6 * F ** -4)[:, None, None] * dF[:, :, None] * dF[:, None, :] \
                - (2 * F ** -3)[:, None, None] * hF
            d2g = coef[:, :, :, None, None] * eye
        else:
            n = self.chart.n
            N = xb.shape[0]
            g = np.empty((N, n, n))
            dg = np.empty((N, n, n, n))
            d2g = np.empty((N, n, n, n, n))
            for a in range(n):
                for b in range(a, n):
                    j = self.matrix[a][b].jet(xb)
                    for (r, s) in {(a, b), (b, a)}:
                        g[:, r, s] = j.val
                        dg[:, :, r, s] = j.grad
                        d2g[:, :, :, r, s] = j.hess
        check_positive(g, xb)
        return g, dg, d2g

    def connection(self, x, derivatives: str = "analytic", path: str = "coordinate") -> Connection:
        """Christoffel symbols and their first partials.

        ``path="coordinate"`` works from g and its partials for any metric;
        ``path="conformal"`` uses the closed form Γ^c_ab = -(δ_cb F_a + δ_ca F_b
        - δ_ab F_c)/F of a conformally flat metric (an independent route).
        """
        xb, _ = batch(x)
        if path not in PATHS:
            raise ConfigurationError(f"path must be one of {PATHS}")
        if path == "conformal":
            if not self.is_conformal:
                raise ConfigurationError("conformal path needs a conformally flat metric")
            return self._conformal_connection(xb, derivatives)
        g, dg, d2g = self.derivatives(xb, derivatives)
        ginv = np.linalg.inv(g)
        # first-kind symbols Γ_{d,ab} = ½(∂_a g_db + ∂_b g_da - ∂_d g_ab)
        low = 0.5 * (np.einsum("nadb->ndab", dg) + np.einsum("nbda->ndab", dg) - dg)
        gamma = np.einsum("ncd,ndab->ncab", ginv, low)
        dlow = 0.5 * (np.einsum("neadb->nedab", d2g) + np.einsum("nebda->nedab", d2g) - d2g)
        dginv = -np.einsum("ncf,nefh,nhd->necd", ginv, dg, ginv, optimize=True)
        dgamma = np.einsum("necd,ndab->necab", dginv, low) + np.einsum("ncd,nedab->necab", ginv, dlow)
        return Connection(xb, g, ginv, dg, gamma, dgamma)

    def _conformal_connection(self, xb, derivatives):
        n = self.chart.n
        self.chart.check(xb)
        if derivatives == "fd":
            F, dF, hF = fd_derivatives(self.scale._value, xb)
        else:
            j = self.scale.jet(xb)
            F, dF, hF = j.val, j.grad, j.hess
        if np.any(F == 0.0):
            raise DomainError("conformal scale vanishes", xb[int(np.argmax(F == 0.0))])
        eye = np.eye(n)
        # S[c,a,b] = δ_cb F_a + δ_ca F_b - δ_ab F_c
        S = (np.einsum("cb,na->ncab", eye, dF) + np.einsum("ca,nb->ncab", eye, dF)
             - np.einsum("ab,nc->ncab", eye, dF))
        gamma = -S / F[:, None, None, None]
        dS = (np.einsum("cb,nae->necab", eye, hF) + np.einsum("ca,nbe->necab", eye, hF)
              - np.einsum("ab,nce->necab", eye, hF))
        dgamma = (-dS / F[:, None, None, None, None]
                  + S[:, None] * (dF / F[:, None] ** 2)[:, :, None, None, None])
        g = (F ** -2)[:, None, None] * eye
        check_positive(g, xb)
        dg = (-2 * F ** -3)[:, None, None, None] * dF[:, :, None, None] * eye
        ginv = (F ** 2)[:, None, None] * eye
        return Connection(xb, g, ginv, dg, gamma, dgamma)


def check_positive(g: np.ndarray, x: np.ndarray) -> None:
    if not np.all(np.isfinite(g)):
        i = int(np.argmax(~np.all(np.isfinite(g), axis=(1, 2))))
        raise DefinitenessError("metric is not finite", x[i])
    asym = np.max(np.abs(g - np.swapaxes(g, 1, 2)), axis=(1, 2))
    if np.any(asym > 1e-12 * np.maximum(1.0, np.max(np.abs(g), axis=(1, 2)))):
        raise DefinitenessError("metric is not symmetric", x[int(np.argmax(asym))])
    w = np.linalg.eigvalsh(g)[:, 0]
    if np.any(w <= 0.0):
        raise DefinitenessError("metric is not positive definite", x[int(np.argmax(w <= 0.0))])


# ---------------------------------------------------------------------------
# adapted frames


def _frame_from_gram(g: np.ndarray, V: np.ndarray, x: np.ndarray):
    G = np.einsum("ai,nab,bj->nij", V, g, V, optimize=True)
    try:
        L = np.linalg.cholesky(G)
    except np.linalg.LinAlgError:
        w = np.linalg.eigvalsh(G)[:, 0]
        raise RankError("spanning vectors of the split are dependent", x[int(np.argmin(w))]) from None
    Linv = np.linalg.inv(L)
    E = np.einsum("ai,nji->naj", V, Linv)  # V L^{-T}
    return E, L, Linv


def frame_and_derivative(g: np.ndarray, dg: np.ndarray, dist: SplitDistribution, x: np.ndarray):
    """Adapted frame E (columns) and its coordinate partials dE[:, k] = ∂_k E.

    Block Gram–Schmidt in fixed order equals E = V L^{-T} with L the Cholesky
    factor of the Gram matrix V^T g V; the derivative follows from
    dL = L Φ(L^{-1} dG L^{-T}), Φ = lower triangle with halved diagonal.
    """
    V = dist.spanning_matrix()
    E, L, Linv = _frame_from_gram(g, V, x)
    dG = np.einsum("ai,nkab,bj->nkij", V, dg, V, optimize=True)
    X = np.einsum("nij,nkjl,nml->nkim", Linv, dG, Linv, optimize=True)
    Phi = np.tril(X)
    idx = np.arange(g.shape[1])
    Phi[..., idx, idx] *= 0.5
    dL = np.einsum("nij,nkjl->nkil", L, Phi)
    # dE = -E dL^T L^{-T}
    dE = -np.einsum("naj,nkij,nli->nkal", E, dL, Linv, optimize=True)
    return E, dE


def adapted_frame(metric: MetricField, dist: SplitDistribution, x) -> np.ndarray:
    """Orthonormal frame adapted to (D1, D2); columns e_1..e_p1, ξ_1..ξ_p2."""
    xb, single = batch(x)
    g = metric(xb)
    E, _, _ = _frame_from_gram(g, dist.spanning_matrix(), xb)
    return unbatch(E, single)


# ---------------------------------------------------------------------------
# Hessian and partial Laplacians


def _scalar_derivatives(f: ex.Expr, x: np.ndarray, mode: str):
    if mode == "fd":
        return fd_derivatives(f._value, x)
    j = f.jet(x)
    return j.val, j.grad, j.hess


def hessian_from(conn: Connection, df: np.ndarray, d2f: np.ndarray) -> np.ndarray:
    return d2f - np.einsum("ncab,nc->nab", conn.gamma, df)


def hessian(f, metric: MetricField, x, derivatives: str = "analytic",
            path: str = "coordinate") -> np.ndarray:
    """Coordinate components h_ab = ∂_a∂_b f - Γ^c_ab ∂_c f of the Hessian."""
    xb, single = batch(x)
    f = ex.as_expr(f)
    conn = metric.connection(xb, derivatives, path)
    _, df, d2f = _scalar_derivatives(f, xb, derivatives)
    return unbatch(hessian_from(conn, df, d2f), single)


def partial_laplacians_from(conn: Connection, E: np.ndarray, p1: int, val, df, d2f) -> dict:
    h = hessian_from(conn, df, d2f)
    hf = np.einsum("nai,nab,nbj->nij", E, h, E, optimize=True)
    diag = np.einsum("nii->ni", hf)
    comp = np.einsum("nai,na->ni", E, df)       # df(e_i) = g(∇f, e_i)
    grad = np.einsum("nab,nb->na", conn.ginv, df)
    grad1 = np.einsum("nai,ni->na", E[:, :, :p1], comp[:, :p1])
    grad2 = np.einsum("nai,ni->na", E[:, :, p1:], comp[:, p1:])
    return dict(
        value=val, hess=h, hess_frame=hf,
        lap1=diag[:, :p1].sum(1), lap2=diag[:, p1:].sum(1), lap=np.einsum("nab,nab->n", conn.ginv, h),
        grad=grad, grad_sq=np.einsum("na,na->n", grad, df),
        grad1=grad1, grad2=grad2,
        grad1_sq=np.sum(comp[:, :p1] ** 2, 1), grad2_sq=np.sum(comp[:, p1:] ** 2, 1),
    )


@dataclass(frozen=True)
class Laplacians:
    """Partial Laplacians and gradients of a scalar field; see ``partial_laplacians``."""

    lap1: np.ndarray
    lap2: np.ndarray
    lap: np.ndarray
    grad: np.ndarray
    grad_sq: np.ndarray
    grad1: np.ndarray
    grad2: np.ndarray
    grad1_sq: np.ndarray
    grad2_sq: np.ndarray
    hess: np.ndarray
    hess_frame: np.ndarray
    value: np.ndarray


def partial_laplacians(f, metric: MetricField, dist: SplitDistribution, x,
                       derivatives: str = "analytic", path: str = "coordinate",
                       frame: np.ndarray | None = None) -> Laplacians:
    """Δ⁽¹⁾f, Δ⁽²⁾f, Δf and the gradient split along the adapted frame.

    ``frame`` may override the adapted frame with any other adapted
    orthonormal frame (the partial traces do not depend on the choice).
    """
    xb, single = batch(x)
    f = ex.as_expr(f)
    conn = metric.connection(xb, derivatives, path)
    if frame is None:
        E, _, _ = _frame_from_gram(conn.g, dist.spanning_matrix(), xb)
    else:
        E = np.asarray(frame, dtype=float).reshape(xb.shape[0], dist.n, dist.n)
    val, df, d2f = _scalar_derivatives(f, xb, derivatives)
    out = partial_laplacians_from(conn, E, dist.p1, val, df, d2f)
    return Laplacians(**{k: unbatch(v, single) for k, v in out.items()})
