"""Riemann tensor, partial Ricci curvatures and extrinsic invariants of a split.

Convention: R(X,Y)Z = ∇_X∇_Y Z − ∇_Y∇_X Z − ∇_[X,Y]Z and
Rm(X,Y,Z,W) = g(R(X,Y)Z, W), so the unit sphere has g(R(X,Y)Y,X) = +1.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace

import numpy as np

from .chart import (Connection, MetricField, SplitDistribution, batch, frame_and_derivative,
                    _frame_from_gram, unbatch)
from .errors import DegeneracyError
from .fd import fd_derivatives


def riemann_coordinates(conn: Connection) -> np.ndarray:
    """Rm[:, a, b, c, d] = g(R(∂_a, ∂_b)∂_c, ∂_d)."""
    G, dG = conn.gamma, conn.dgamma
    R = (np.einsum("naebc->necab", dG) - np.einsum("nbeac->necab", dG)
         + np.einsum("neaf,nfbc->necab", G, G) - np.einsum("nebf,nfac->necab", G, G))
    return np.einsum("nde,necab->nabcd", conn.g, R)


def to_frame(T: np.ndarray, E: np.ndarray) -> np.ndarray:
    """Components of a covariant tensor (any rank) in the frame given by E's columns."""
    rank = T.ndim - 1
    if rank == 1:
        return np.einsum("na,naA->nA", T, E)
    out = T
    Eb = E.reshape(E.shape[:1] + (1,) * (rank - 2) + E.shape[1:])
    # contract the leading slot and cycle it to the back; rank steps restore the order
    for _ in range(rank):
        out = np.moveaxis(out, 1, -1) @ Eb
    return out


def form_to_coordinates(form: np.ndarray, E: np.ndarray) -> np.ndarray:
    Einv = np.linalg.inv(E)
    return np.einsum("nAa,nAB,nBb->nab", Einv, form, Einv, optimize=True)


@dataclass(frozen=True)
class CurvaturePack:
    """Curvature at one point (or a batch) in the adapted orthonormal frame.

    ``ric1``/``ric2``/``ric`` are full forms on TM in frame components; the
    ``*_coord`` variants are the same forms in coordinate components.
    """

    x: np.ndarray
    p1: int
    frame: np.ndarray
    g: np.ndarray
    gamma: np.ndarray
    riemann: np.ndarray
    ric1: np.ndarray
    ric2: np.ndarray
    k12: np.ndarray
    ric1_coord: np.ndarray
    ric2_coord: np.ndarray

    @property
    def ric(self) -> np.ndarray:
        return self.ric1 + self.ric2

    def to_json(self) -> dict:
        return {
            "x": np.asarray(self.x).tolist(),
            "ric1": np.asarray(self.ric1).tolist(),
            "ric2": np.asarray(self.ric2).tolist(),
            "k12": np.asarray(self.k12).tolist(),
        }


def _unbatch_pack(pack, single: bool):
    if not single:
        return pack
    kw = {f.name: (getattr(pack, f.name)[0] if isinstance(getattr(pack, f.name), np.ndarray)
                   else getattr(pack, f.name)) for f in fields(pack)}
    return replace(pack, **kw)


def pack_from_connection(conn: Connection, dist: SplitDistribution,
                         E: np.ndarray | None = None) -> CurvaturePack:
    p1 = dist.p1
    if E is None:
        E, _, _ = _frame_from_gram(conn.g, dist.spanning_matrix(), conn.x)
    Rm = riemann_coordinates(conn)
    Rf = to_frame(Rm, E)
    ric1 = np.einsum("nABCA->nBC", Rf[:, p1:, :, :, p1:])
    ric2 = np.einsum("nABCA->nBC", Rf[:, :p1, :, :, :p1])
    k12 = np.einsum("niaai->n", Rf[:, :p1, p1:, p1:, :p1])
    ric1 = 0.5 * (ric1 + np.swapaxes(ric1, 1, 2))
    ric2 = 0.5 * (ric2 + np.swapaxes(ric2, 1, 2))
    return CurvaturePack(conn.x, p1, E, conn.g, conn.gamma, Rf, ric1, ric2, k12,
                         form_to_coordinates(ric1, E), form_to_coordinates(ric2, E))


def curvature_pack(metric: MetricField, dist: SplitDistribution, x,
                   derivatives: str = "analytic", path: str = "coordinate") -> CurvaturePack:
    xb, single = batch(x)
    conn = metric.connection(xb, derivatives, path)
    return _unbatch_pack(pack_from_connection(conn, dist), single)


def sectional(metric: MetricField, x, X, Y, derivatives: str = "analytic",
              path: str = "coordinate") -> float:
    """Sectional curvature of the plane spanned by coordinate vectors X, Y at x."""
    xb, _ = batch(x)
    if xb.shape[0] != 1:
        raise ValueError("sectional() takes a single point")
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    conn = metric.connection(xb, derivatives, path)
    g = conn.g[0]
    gxx, gyy, gxy = X @ g @ X, Y @ g @ Y, X @ g @ Y
    area = gxx * gyy - gxy ** 2
    if area <= 1e-14 * max(gxx * gyy, 1e-300):
        raise DegeneracyError("plane vectors are linearly dependent", xb[0])
    Rm = riemann_coordinates(conn)[0]
    return float(np.einsum("abcd,a,b,c,d->", Rm, X, Y, Y, X, optimize=True) / area)


# ---------------------------------------------------------------------------
# extrinsic geometry


def sigma2(C: np.ndarray) -> np.ndarray:
    """Second elementary symmetric function of the eigenvalues of C (..., p, p)."""
    tr = np.trace(C, axis1=-2, axis2=-1)
    tr2 = np.einsum("...ij,...ji->...", C, C)
    return 0.5 * (tr ** 2 - tr2)


@dataclass(frozen=True)
class ExtrinsicPack:
    """Co-nullity operators and derived invariants of D1 and D2.

    ``c1[..., α, i, j] = g(∇_{e_i} ξ_α, e_j)`` and
    ``c2[..., i, α, β] = g(∇_{ξ_α} e_i, ξ_β)``.
    """

    x: np.ndarray
    p1: int
    frame: np.ndarray
    connection_form: np.ndarray  # ω[..., a, b, c] = g(∇_{E_a} E_b, E_c)
    c1: np.ndarray
    c2: np.ndarray
    h1: np.ndarray               # coordinate components of the mean curvature vector
    h2: np.ndarray
    h1_sq: np.ndarray
    h2_sq: np.ndarray
    b1_sq: np.ndarray
    b2_sq: np.ndarray
    t1_sq: np.ndarray
    t2_sq: np.ndarray
    sigma1_1: np.ndarray         # σ1(C1^α), one per α
    sigma2_1: np.ndarray
    sigma1_2: np.ndarray         # σ1(C2^i), one per i
    sigma2_2: np.ndarray
    bend1: np.ndarray            # Σ_a Σ_{i,α} g(∇_{E_a} e_i, ξ_α)²
    bend2: np.ndarray            # Σ_a Σ_{α,i} g(∇_{E_a} ξ_α, e_i)²

    @property
    def p2(self) -> int:
        return self.frame.shape[-1] - self.p1

    @property
    def sigma2_sum(self) -> np.ndarray:
        return self.sigma2_1.sum(-1) + self.sigma2_2.sum(-1)

    @property
    def c_norm_sq(self) -> np.ndarray:
        return (np.sum(self.c1 ** 2, axis=(-3, -2, -1)) + np.sum(self.c2 ** 2, axis=(-3, -2, -1)))

    def to_json(self) -> dict:
        return {
            "x": np.asarray(self.x).tolist(),
            "h1": np.asarray(self.h1).tolist(),
            "h2": np.asarray(self.h2).tolist(),
            "sigma2_sum": np.asarray(self.sigma2_sum).tolist(),
        }


def extrinsic_from(conn: Connection, E: np.ndarray, dE: np.ndarray, p1: int,
                   x: np.ndarray) -> ExtrinsicPack:
    # (∇_{E_a} E_b)^d = E_a^k ∂_k E_b^d + Γ^d_{ke} E_a^k E_b^e
    nab = (np.einsum("nka,nkdb->nabd", E, dE)
           + np.einsum("ndke,nka,neb->nabd", conn.gamma, E, E, optimize=True))
    omega = np.einsum("nabd,ndf,nfc->nabc", nab, conn.g, E, optimize=True)
    c1 = np.einsum("niaj->naij", omega[:, :p1, p1:, :p1])
    c2 = np.einsum("naib->niab", omega[:, p1:, :p1, p1:])
    s1_1 = np.trace(c1, axis1=-2, axis2=-1)
    s1_2 = np.trace(c2, axis1=-2, axis2=-1)
    p2 = E.shape[-1] - p1
    h1 = -np.einsum("na,nda->nd", s1_1, E[:, :, p1:]) / p1
    h2 = -np.einsum("ni,ndi->nd", s1_2, E[:, :, :p1]) / p2

    def split(C):
        sym = 0.5 * (C + np.swapaxes(C, -1, -2))
        return np.sum(sym ** 2, axis=(-3, -2, -1)), np.sum((C - sym) ** 2, axis=(-3, -2, -1))

    b1, t1 = split(c1)
    b2, t2 = split(c2)
    return ExtrinsicPack(
        x, p1, E, omega, c1, c2, h1, h2,
        np.sum(s1_1 ** 2, -1) / p1 ** 2, np.sum(s1_2 ** 2, -1) / p2 ** 2,
        b1, b2, t1, t2, s1_1, sigma2(c1), s1_2, sigma2(c2),
        np.sum(omega[:, :, :p1, p1:] ** 2, axis=(1, 2, 3)),
        np.sum(omega[:, :, p1:, :p1] ** 2, axis=(1, 2, 3)),
    )


def frame_derivative_fd(metric: MetricField, dist: SplitDistribution, xb: np.ndarray):
    V = dist.spanning_matrix()
    E, dE = fd_derivatives(lambda y: _frame_from_gram(metric._values(y), V, y)[0], xb,
                           second=False)
    return E, dE


def extrinsic_pack(metric: MetricField, dist: SplitDistribution, x,
                   derivatives: str = "analytic", path: str = "coordinate") -> ExtrinsicPack:
    """Co-nullity operators, mean curvatures, |B|², |T|² and σ-invariants.

    With ``derivatives="fd"`` both the Christoffels and the frame derivative
    come from finite differences (an independent oracle route).
    """
    xb, single = batch(x)
    conn = metric.connection(xb, derivatives, path)
    if derivatives == "fd":
        E, dE = frame_derivative_fd(metric, dist, xb)
    else:
        E, dE = frame_and_derivative(conn.g, conn.dg, dist, xb)
    return _unbatch_pack(extrinsic_from(conn, E, dE, dist.p1, xb), single)


def sigma2_sum(metric: MetricField, dist: SplitDistribution, x, **kw) -> np.ndarray | float:
    """Σ_i σ2(C2^i) + Σ_α σ2(C1^α)."""
    pack = extrinsic_pack(metric, dist, x, **kw)
    s = pack.sigma2_sum
    return float(s) if np.ndim(s) == 0 else s


def sigma2_split_identity(pack: ExtrinsicPack) -> np.ndarray:
    """½(p1²|H1|²+|T1|²−|B1|²+p2²|H2|²+|T2|²−|B2|²); equals ``sigma2_sum``."""
    p1, p2 = pack.p1, pack.p2
    return 0.5 * (p1 ** 2 * pack.h1_sq + pack.t1_sq - pack.b1_sq
                  + p2 ** 2 * pack.h2_sq + pack.t2_sq - pack.b2_sq)
