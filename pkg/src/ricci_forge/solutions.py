"""Explicit conformal solutions with prescribed partial Ricci curvature.

Every family lives on a conformally flat base δ/F² and produces a factor
ϕ = φF such that g̃ = δ/ϕ².  Prescribed tensors are stored in coordinate
components of that chart, the convention under which the families'
closed forms read ``T_ij = f δ_ij``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np
from scipy.optimize import brentq

from . import expr as ex
from .chart import Chart, MetricField, SplitDistribution, batch, unbatch
from .curvature import curvature_pack
from .errors import (CompatibilityError, ConfigurationError, DefinitenessError, NotFoundError)

MODES = ("partial-ricci", "einstein-type")
CASE_MODE = {"a": "partial-ricci", "b": "einstein-type"}
AMBIENTS = ("euclidean", "hyperbolic")


class DegenerateFamilyWarning(UserWarning):
    """All prescribed functions are constant, or all are equal."""


# ---------------------------------------------------------------------------
# prescribed tensors


@dataclass(frozen=True)
class PrescribedTensor:
    """Symmetric T with T(D1, D2) = 0; blocks hold expressions per entry."""

    mode: str
    block1: tuple
    block2: tuple

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigurationError(f"mode must be one of {MODES}")
        b1 = tuple(tuple(ex.as_expr(e) for e in row) for row in self.block1)
        b2 = tuple(tuple(ex.as_expr(e) for e in row) for row in self.block2)
        for b in (b1, b2):
            m = len(b)
            if any(len(r) != m for r in b):
                raise ConfigurationError("tensor blocks must be square")
            for i in range(m):
                for j in range(i):
                    if b[i][j] != b[j][i]:
                        raise ConfigurationError(f"tensor block not symmetric at ({i},{j})")
        object.__setattr__(self, "block1", b1)
        object.__setattr__(self, "block2", b2)

    @classmethod
    def diagonal(cls, mode: str, d1: Sequence, d2: Sequence) -> "PrescribedTensor":
        zero = ex.Const(0.0)
        b1 = [[ex.as_expr(d1[i]) if i == j else zero for j in range(len(d1))] for i in range(len(d1))]
        b2 = [[ex.as_expr(d2[i]) if i == j else zero for j in range(len(d2))] for i in range(len(d2))]
        return cls(mode, b1, b2)

    @property
    def p1(self) -> int:
        return len(self.block1)

    @property
    def p2(self) -> int:
        return len(self.block2)

    def matrix(self, x) -> np.ndarray:
        xb, single = batch(x)
        p1, n = self.p1, self.p1 + self.p2
        out = np.zeros((xb.shape[0], n, n))
        for off, blk in ((0, self.block1), (p1, self.block2)):
            m = len(blk)
            for i in range(m):
                for j in range(i, m):
                    v = blk[i][j]._value(xb)
                    out[:, off + i, off + j] = v
                    out[:, off + j, off + i] = v
        return unbatch(out, single)

    def entries(self) -> list[ex.Expr]:
        return [e for blk in (self.block1, self.block2) for row in blk for e in row]


@dataclass(frozen=True)
class CompatibilityResult:
    compatible: bool
    max_violation: float
    witnesses: np.ndarray
    diagnostic: str


def compatibility_check(T: PrescribedTensor, x, mode: str | None = None,
                        metric: MetricField | None = None, tol: float = 1e-9) -> CompatibilityResult:
    """Trace condition of the prescribed system at the given points.

    partial-ricci: Tr_g T|D1 = Tr_g T|D2;
    einstein-type: (1 − p2/2) Tr_g T|D1 = (1 − p1/2) Tr_g T|D2.
    The violation is measured relative to max(1, |traces|).
    """
    mode = mode or T.mode
    if mode not in MODES:
        raise ConfigurationError(f"mode must be one of {MODES}")
    xb, _ = batch(x)
    p1, p2 = T.p1, T.p2
    M = T.matrix(xb)
    if metric is None:
        E = np.broadcast_to(np.eye(p1 + p2), M.shape)
    else:
        from .chart import adapted_frame
        E = adapted_frame(metric, SplitDistribution(metric.chart), xb)
    Tf = np.einsum("nai,nab,nbj->nij", E, M, E, optimize=True)
    tr1 = np.einsum("nii->n", Tf[:, :p1, :p1])
    tr2 = np.einsum("nii->n", Tf[:, p1:, p1:])
    if mode == "partial-ricci":
        lhs, rhs = tr1, tr2
    else:
        lhs, rhs = (1 - p2 / 2) * tr1, (1 - p1 / 2) * tr2
    scale = np.maximum(1.0, np.maximum(np.abs(lhs), np.abs(rhs)))
    viol = np.abs(lhs - rhs) / scale
    bad = viol > tol
    ok = not bad.any()
    diag = "compatible" if ok else f"trace condition violated at {int(bad.sum())} of {len(viol)} points"
    return CompatibilityResult(ok, float(viol.max(initial=0.0)), xb[bad], diag)


# ---------------------------------------------------------------------------
# pointwise solution at the origin


def pointwise_coefficients(T, p1: int) -> np.ndarray:
    T = np.asarray(T, dtype=float)
    d = np.diag(T) if T.ndim == 2 else T
    n = d.size
    p2 = n - p1
    K1, K2 = d[:p1].sum(), d[p1:].sum()
    if not math.isclose(K1, K2, rel_tol=1e-12, abs_tol=1e-12):
        raise CompatibilityError(f"traces differ: sum over D1 = {K1}, sum over D2 = {K2}")
    c = np.empty(n)
    c[:p1] = d[:p1] / p2
    c[p1:] = (d[p1:] - K1 / p2) / p1
    return c


def pointwise_metric(T, C: float, p1: int, box: float | None = None) -> MetricField:
    """Polynomial metric g = C(1 − Σ c_bb x_b²)δ with Ric_i|D_i = T|D_i at the origin.

    The coefficients solve the linear system at the origin; the factor C
    multiplies the whole bracket so that the origin curvature does not
    depend on C.  ``box`` is the half-width of a cube on which positivity
    is checked.
    """
    if not C > 0:
        raise DefinitenessError(f"C must be positive, got {C}", np.zeros(np.asarray(T).shape[0]))
    c = pointwise_coefficients(T, p1)
    n = c.size
    if box is not None:
        worst = box ** 2 * np.sum(np.maximum(c, 0.0))
        if worst >= 1.0:
            corner = np.where(c > 0, box, 0.0)
            raise DefinitenessError("metric degenerates inside the verification box", corner)
    x = ex.coords(n)
    terms = [ex.mul(-float(C * cb), ex.power(x[b], 2)) for b, cb in enumerate(c) if cb != 0.0]
    w = ex.add(float(C), *terms)
    chart = Chart.box(n, p1, [-box] * n if box else None, [box] * n if box else None)
    return MetricField.diagonal(chart, [w] * n, label="pointwise")


# ---------------------------------------------------------------------------
# parameter records


def _one_variable(e, name: str) -> ex.Expr:
    e = ex.as_expr(e)
    if not ex.variables(e) <= {0}:
        raise ConfigurationError(f"{name} must be a function of a single variable (coord 0)")
    return e


@dataclass(frozen=True)
class Theorem1Params:
    p1: int
    p2: int
    a1: float
    a2: float
    b: tuple
    c: float

    def __post_init__(self):
        if self.p1 < 2 or self.p2 < 2:
            raise ConfigurationError("theorem1 needs p1, p2 >= 2")
        b = tuple(float(v) for v in self.b)
        if len(b) != self.p1 + self.p2:
            raise ConfigurationError("theorem1 needs n linear coefficients b")
        object.__setattr__(self, "b", b)

    @property
    def n(self) -> int:
        return self.p1 + self.p2

    @property
    def lam(self) -> float:
        return float(sum(v * v for v in self.b) - 2 * (self.a1 + self.a2) * self.c)

    def coefficients(self) -> tuple[list, list]:
        a = [self.a1] * self.p1 + [self.a2] * self.p2
        return a, list(self.b)

    def quadratic(self) -> ex.Expr:
        x = ex.coords(self.n)
        a, b = self.coefficients()
        terms = [ex.add(ex.mul(a[k], ex.power(x[k], 2)), ex.mul(b[k], x[k])) for k in range(self.n)]
        return ex.add(*terms, self.c)

    def mu(self) -> ex.Expr:
        x = ex.coords(self.n)
        a, b = self.coefficients()
        sgn = [1.0] * self.p1 + [-1.0] * self.p2
        return ex.add(*(ex.mul(sgn[k], ex.add(ex.mul(a[k], ex.power(x[k], 2)), ex.mul(b[k], x[k])))
                        for k in range(self.n)))

    def big_lambda(self) -> ex.Expr:
        """λ − 2(a2 − a1)μ(x)."""
        return ex.add(self.lam, ex.mul(-2.0 * (self.a2 - self.a1), self.mu()))


@dataclass(frozen=True)
class Theorem2Params:
    p1: int
    p2: int
    k: int
    U: ex.Expr

    def __post_init__(self):
        if self.p1 < 3 or self.p2 < 3:
            raise ConfigurationError("theorem2 needs p1, p2 >= 3")
        if not 0 <= self.k < self.p1:
            raise ConfigurationError("theorem2 needs 0 <= k < p1 (0-based D1 index)")
        object.__setattr__(self, "U", _one_variable(self.U, "U"))


@dataclass(frozen=True)
class Theorem3Params:
    p1: int
    p2: int
    k: int
    delta: int
    v: ex.Expr
    w: ex.Expr

    def __post_init__(self):
        if self.p1 < 3 or self.p2 < 3:
            raise ConfigurationError("theorem3 needs p1, p2 >= 3")
        if not 0 <= self.k < self.p1 or not self.p1 <= self.delta < self.p1 + self.p2:
            raise ConfigurationError("theorem3 needs k in D1 and delta in D2 (0-based)")
        object.__setattr__(self, "v", _one_variable(self.v, "v"))
        object.__setattr__(self, "w", _one_variable(self.w, "w"))


@dataclass(frozen=True)
class Theorem4Params:
    p1: int
    p2: int
    U: tuple
    a: float
    b: float
    eps: int = 1

    def __post_init__(self):
        if self.p1 < 3 or self.p2 < 3:
            raise ConfigurationError("theorem4 needs p1, p2 >= 3")
        U = tuple(_one_variable(u, "U_j") for u in self.U)
        if not 3 <= len(U) <= self.p1:
            raise ConfigurationError("theorem4-ii needs 3 <= p <= p1 functions U_j")
        if self.a == 0 and self.b == 0:
            raise ConfigurationError("theorem4-ii needs a^2 + b^2 > 0")
        if self.eps not in (1, -1):
            raise ConfigurationError("eps must be +1 or -1")
        for j, u in enumerate(U):
            if not ex.variables(u):
                raise ConfigurationError(f"U_{j + 1} is constant; the family degenerates")
        object.__setattr__(self, "U", U)

    @property
    def p(self) -> int:
        return len(self.U)


@dataclass(frozen=True)
class Theorem4iParams:
    p1: int
    p2: int
    varphi: ex.Expr

    def __post_init__(self):
        if self.p1 < 3 or self.p2 < 3:
            raise ConfigurationError("theorem4 needs p1, p2 >= 3")
        v = ex.as_expr(self.varphi)
        if not ex.variables(v) <= {0, 1}:
            raise ConfigurationError("theorem4-i needs varphi depending on x_0, x_1 only")
        if not ex.variables(v.diff(0).diff(1)) and isinstance(v.diff(0).diff(1), ex.Const) \
                and v.diff(0).diff(1).value == 0.0:
            raise ConfigurationError("theorem4-i needs a nonzero f_12 (varphi_{,12} != 0)")
        object.__setattr__(self, "varphi", v)


# ---------------------------------------------------------------------------
# families


@dataclass(frozen=True)
class Solution:
    """A constructed member: ϕ = φF, φ, T and the metrics involved."""

    family: "SolutionFamily"
    varphi: ex.Expr
    phi: ex.Expr
    tensor: PrescribedTensor
    chart: Chart
    base: MetricField
    target: MetricField
    k_tilde: ex.Expr | None = None

    def __iter__(self):
        return iter((self.phi, self.tensor))


@dataclass(frozen=True)
class SolutionFamily:
    tag: str
    case: str
    params: object
    ambient: str = "euclidean"
    scale: ex.Expr | None = None

    def __post_init__(self):
        if self.tag not in FAMILY_CATALOG:
            raise NotFoundError(f"unknown family tag {self.tag!r}")
        if self.case not in ("a", "b"):
            raise ConfigurationError("case must be 'a' or 'b'")
        if self.tag.startswith("theorem4") and self.case != "a":
            raise ConfigurationError("theorem4 families are built for case a only")
        if self.scale is None and self.ambient not in AMBIENTS:
            raise ConfigurationError(f"ambient must be one of {AMBIENTS} or give a scale F")

    @property
    def p1(self) -> int:
        return self.params.p1

    @property
    def p2(self) -> int:
        return self.params.p2

    @property
    def n(self) -> int:
        return self.p1 + self.p2

    def base_scale(self) -> ex.Expr:
        if self.scale is not None:
            return self.scale
        if self.ambient == "hyperbolic":
            return ex.Coord(self.n - 1)
        return ex.Const(1.0)

    def chart(self) -> Chart:
        if self.ambient == "hyperbolic" and self.scale is None:
            return Chart.half_space(self.n, self.p1)
        return Chart.box(self.n, self.p1)

    def build(self) -> Solution:
        return BUILDERS[self.tag](self)


def _finish(fam: SolutionFamily, varphi: ex.Expr, d1, d2, k_tilde=None, full_blocks=None) -> Solution:
    mode = CASE_MODE[fam.case]
    if full_blocks is not None:
        T = PrescribedTensor(mode, *full_blocks)
    else:
        T = PrescribedTensor.diagonal(mode, d1, d2)
    F = fam.base_scale()
    chart = fam.chart()
    phi = varphi if isinstance(F, ex.Const) and F.value == 1.0 else ex.mul(varphi, ex.recip(F))
    return Solution(fam, varphi, phi, T, chart, MetricField.conformal(chart, F, "base"),
                    MetricField.conformal(chart, varphi, "target"), k_tilde)


def _sq(e):
    return ex.power(e, 2)


def build_theorem1(fam: SolutionFamily) -> Solution:
    P: Theorem1Params = fam.params
    p1, p2 = P.p1, P.p2
    varphi = P.quadratic()
    L = P.big_lambda()
    inv2 = ex.power(varphi, -2)
    if fam.case == "a":
        f1 = ex.mul(-p2, L, inv2)
        f2 = ex.mul(-p1, L, inv2)
    else:
        f1 = ex.mul(p2 * (p1 - 2) / 2, L, inv2)
        f2 = ex.mul(p1 * (p2 - 2) / 2, L, inv2)
    return _finish(fam, varphi, [f1] * p1, [f2] * p2, ex.mul(-p1 * p2, L))


def build_theorem2(fam: SolutionFamily) -> Solution:
    P: Theorem2Params = fam.params
    p1, p2, k = P.p1, P.p2, P.k
    U = ex.remap(P.U, {0: k})
    U1, U2 = U.diff(k), U.diff(k).diff(k)
    varphi = ex.exp(U)
    if fam.case == "a":
        fk = ex.mul(p2, U2)
        fi = ex.mul(-p2, _sq(U1))
        fa = ex.add(U2, ex.mul(-(p1 - 1), _sq(U1)))
    else:
        fk = ex.mul(p2 / 2, ex.add(U2, ex.mul(p1 - 1, _sq(U1))))
        fi = ex.mul(-p2 / 2, ex.add(U2, ex.mul(-(p1 - 3), _sq(U1))))
        fa = ex.mul((p2 - 2) / 2, ex.add(ex.mul(p1 - 1, _sq(U1)), ex.neg(U2)))
    d1 = [fk if i == k else fi for i in range(p1)]
    kt = ex.mul(p2, ex.exp(ex.mul(2.0, U)), ex.add(U2, ex.mul(-(p1 - 1), _sq(U1))))
    return _finish(fam, varphi, d1, [fa] * p2, kt)


def build_theorem3(fam: SolutionFamily) -> Solution:
    P: Theorem3Params = fam.params
    p1, p2, k, d = P.p1, P.p2, P.k, P.delta
    v = ex.remap(P.v, {0: k})
    w = ex.remap(P.w, {0: d})
    v1, v2 = v.diff(k), v.diff(k).diff(k)
    w1, w2 = w.diff(d), w.diff(d).diff(d)
    varphi = ex.add(v, w)
    S = ex.add(_sq(v1), _sq(w1))
    inv = ex.recip(varphi)
    inv2 = ex.power(varphi, -2)
    if fam.case == "a":
        fk = ex.mul(ex.add(ex.mul(ex.add(ex.mul(p2, v2), w2), varphi), ex.mul(-p2, S)), inv2)
        fd = ex.mul(ex.add(ex.mul(ex.add(v2, ex.mul(p1, w2)), varphi), ex.mul(-p1, S)), inv2)
    else:
        fk = ex.mul(ex.add(ex.mul(0.5, ex.add(ex.mul(p2, v2), ex.mul(2 - p1, w2)), varphi),
                           ex.mul(0.5 * p2 * (p1 - 2), S)), inv2)
        fd = ex.mul(ex.add(ex.mul(0.5, ex.add(ex.mul(2 - p2, v2), ex.mul(p1, w2)), varphi),
                           ex.mul(0.5 * p1 * (p2 - 2), S)), inv2)
    fa = ex.add(fd, ex.mul(-p1, w2, inv))
    fi = ex.add(fk, ex.mul(-p2, v2, inv))
    d1 = [fk if i == k else fi for i in range(p1)]
    d2 = [fd if p1 + j == d else fa for j in range(p2)]
    kt = ex.add(ex.mul(varphi, ex.add(ex.mul(p2, v2), ex.mul(p1, w2))), ex.mul(-p1 * p2, S))
    return _finish(fam, varphi, d1, d2, kt)


def _theorem4_blocks(varphi: ex.Expr, p1: int, p2: int, offdiag) -> tuple:
    """Blocks of T from the Euclidean conformal law for g̃ = δ/ϕ².

    ``offdiag(i, j)`` gives the closed-form f_ij for i ≠ j in D1; the diagonal
    follows from the first two rows of the system p2 ϕ_{,ii} = ϕ f_ii − Δ⁽²⁾ϕ
    + p2|∇ϕ|²/ϕ (and its D2 analogue).
    """
    n = p1 + p2
    grads = [varphi.diff(a) for a in range(n)]
    hdiag = [grads[a].diff(a) for a in range(n)]
    gsq = ex.add(*(_sq(g) for g in grads if not (isinstance(g, ex.Const) and g.value == 0.0)))
    lap1 = ex.add(*hdiag[:p1])
    lap2 = ex.add(*hdiag[p1:])
    inv = ex.recip(varphi)
    inv2 = ex.power(varphi, -2)
    zero = ex.Const(0.0)
    b1 = [[zero] * p1 for _ in range(p1)]
    for i in range(p1):
        b1[i][i] = ex.add(ex.mul(p2, hdiag[i], inv), ex.mul(lap2, inv), ex.mul(-p2, gsq, inv2))
        for j in range(i + 1, p1):
            b1[i][j] = b1[j][i] = offdiag(i, j)
    b2 = [[zero] * p2 for _ in range(p2)]
    for a in range(p2):
        b2[a][a] = ex.add(ex.mul(p1, hdiag[p1 + a], inv), ex.mul(lap1, inv), ex.mul(-p1, gsq, inv2))
    return b1, b2


def build_theorem4_ii(fam: SolutionFamily) -> Solution:
    P: Theorem4Params = fam.params
    U = [ex.remap(u, {0: j}) for j, u in enumerate(P.U)]
    dU = [u.diff(j) for j, u in enumerate(U)]
    s = ex.add(*U)
    if P.eps == 1:
        varphi = ex.add(ex.mul(P.a, ex.exp(s)), ex.mul(P.b, ex.exp(ex.neg(s))))
    else:
        varphi = ex.add(ex.mul(P.a, ex.cos(s)), ex.mul(P.b, ex.sin(s)))

    def off(i, j):
        if i < P.p and j < P.p:
            return ex.mul(P.eps * P.p2, dU[i], dU[j])
        return ex.Const(0.0)

    blocks = _theorem4_blocks(varphi, P.p1, P.p2, off)
    return _finish(fam, varphi, None, None, full_blocks=blocks)


def build_theorem4_i(fam: SolutionFamily) -> Solution:
    P: Theorem4iParams = fam.params
    varphi = P.varphi
    f12 = ex.mul(P.p2, varphi.diff(0).diff(1), ex.recip(varphi))

    def off(i, j):
        return f12 if (i, j) == (0, 1) else ex.Const(0.0)

    blocks = _theorem4_blocks(varphi, P.p1, P.p2, off)
    return _finish(fam, varphi, None, None, full_blocks=blocks)


def build_theorem4(fam: SolutionFamily) -> Solution:
    return build_theorem4_i(fam) if fam.tag == "theorem4-i" else build_theorem4_ii(fam)


BUILDERS = {
    "theorem1": build_theorem1,
    "theorem2": build_theorem2,
    "theorem3": build_theorem3,
    "theorem4-i": build_theorem4_i,
    "theorem4-ii": build_theorem4_ii,
}

FAMILY_CATALOG = {
    "theorem1": {
        "cases": ["a", "b"],
        "citation": "Theorem 1: quadratic phi*F with constant-coefficient diagonal T",
        "parameters": {"a1": "number", "a2": "number", "b": "array of n numbers", "c": "number"},
        "dimensions": "p1, p2 >= 2",
    },
    "theorem2": {
        "cases": ["a", "b"],
        "citation": "Theorem 2: phi*F = exp(U(x_k)), T depending on one D1 coordinate",
        "parameters": {"k": "0-based D1 index", "U": "expression in coord 0"},
        "dimensions": "p1, p2 >= 3",
    },
    "theorem3": {
        "cases": ["a", "b"],
        "citation": "Theorem 3: phi*F = v(x_k) + w(x_delta)",
        "parameters": {"k": "0-based D1 index", "delta": "0-based D2 index",
                       "v": "expression in coord 0", "w": "expression in coord 0"},
        "dimensions": "p1, p2 >= 3",
    },
    "theorem4-i": {
        "cases": ["a"],
        "citation": "Theorem 4 (i): non-diagonal T with a single f_12, varphi(x_1, x_2)",
        "parameters": {"varphi": "expression in coords 0 and 1"},
        "dimensions": "p1, p2 >= 3",
    },
    "theorem4-ii": {
        "cases": ["a"],
        "citation": "Theorem 4 (ii): f_ij = eps p2 U_i' U_j', exponential (eps=+1) or trigonometric (eps=-1)",
        "parameters": {"U": "array of 3..p1 expressions in coord 0", "a": "number", "b": "number",
                       "eps": "+1 or -1"},
        "dimensions": "p1, p2 >= 3",
    },
}


def list_families() -> list[dict]:
    out = []
    for tag, info in FAMILY_CATALOG.items():
        for case in info["cases"]:
            entry = {"tag": tag, "case": case, **{k: v for k, v in info.items() if k != "cases"}}
            if tag == "theorem4-ii":
                for eps in (1, -1):
                    out.append({**entry, "eps": eps})
            else:
                out.append(entry)
    return out


def family_info(tag: str) -> dict:
    if tag not in FAMILY_CATALOG:
        raise NotFoundError(f"unknown family tag {tag!r}; known: {sorted(FAMILY_CATALOG)}")
    return {"tag": tag, **FAMILY_CATALOG[tag]}


# ---------------------------------------------------------------------------
# verification


@dataclass(frozen=True)
class VerificationResult:
    points: np.ndarray
    residual: np.ndarray       # per point, max over block entries
    k_residual: np.ndarray     # per point, |K̃ − closed form| (zeros if none)
    compatibility: CompatibilityResult
    warnings: tuple = ()

    @property
    def max_residual(self) -> float:
        return float(self.residual.max(initial=0.0))

    def passed(self, tol: float) -> bool:
        return self.max_residual <= tol and self.compatibility.compatible


def prescribed_residual(sol: Solution, x, derivatives: str = "analytic"):
    """Per-point max |LHS − T| over the D1 and D2 blocks, plus the K̃ residual."""
    xb, _ = batch(x)
    p1 = sol.family.p1
    dist = SplitDistribution(sol.chart)
    pack = curvature_pack(sol.target, dist, xb, derivatives)
    r1 = pack.ric1_coord[:, :p1, :p1]
    r2 = pack.ric2_coord[:, p1:, p1:]
    if sol.tensor.mode == "einstein-type":
        gt = pack.g
        r1 = r1 - 0.5 * pack.k12[:, None, None] * gt[:, :p1, :p1]
        r2 = r2 - 0.5 * pack.k12[:, None, None] * gt[:, p1:, p1:]
    T = sol.tensor.matrix(xb)
    res = np.maximum(np.abs(r1 - T[:, :p1, :p1]).max(axis=(1, 2)),
                     np.abs(r2 - T[:, p1:, p1:]).max(axis=(1, 2)))
    if sol.k_tilde is not None:
        kres = np.abs(pack.k12 - sol.k_tilde._value(xb))
    else:
        kres = np.zeros(xb.shape[0])
    return res, kres


def distance_estimate(varphi: ex.Expr, x: np.ndarray) -> np.ndarray:
    """First-order distance |ϕ|/|∇ϕ| to the zero set of ϕ."""
    j = varphi.jet(x)
    g = np.linalg.norm(j.grad, axis=1)
    with np.errstate(divide="ignore"):
        return np.where(g > 0, np.abs(j.val) / np.where(g > 0, g, 1.0), np.inf)


def sample_points(sol: Solution, rng: np.random.Generator, count: int, half_width: float = 1.5,
                  margin: float = 0.05, max_tries: int = 200) -> np.ndarray:
    """Random points in a box, at least ``margin`` from {ϕ = 0} and the chart boundary."""
    n = sol.family.n
    clo, chi = np.asarray(sol.chart.lo), np.asarray(sol.chart.hi)
    lo = np.where(np.isfinite(clo), clo + margin, -half_width)
    hi = np.where(np.isfinite(chi), chi - margin, half_width)
    hi = np.where(np.isfinite(clo) & ~np.isfinite(chi), np.maximum(lo, 0) + 2 * half_width, hi)
    out, need = [], count
    for _ in range(max_tries):
        cand = rng.uniform(lo, hi, size=(4 * need + 8, n))
        with np.errstate(all="ignore"):
            val = sol.varphi._value(cand)
        cand = cand[np.isfinite(val) & (val != 0)]
        if len(cand):
            cand = cand[distance_estimate(sol.varphi, cand) >= margin]
        out.append(cand[:need])
        need -= len(out[-1])
        if need <= 0:
            break
    pts = np.concatenate(out) if out else np.empty((0, n))
    if len(pts) < count:
        raise ConfigurationError("could not find enough sample points away from the singular set")
    return pts[:count]


def degeneracy_check(T: PrescribedTensor, x, threshold: float = 1e-10) -> str | None:
    """Warning text if all prescribed functions are constant or all equal."""
    xb, _ = batch(x)
    M = T.matrix(xb)
    n = M.shape[1]
    diag = M[:, np.arange(n), np.arange(n)]
    off = M[:, ~np.eye(n, dtype=bool)]
    vals = np.concatenate([diag, off], axis=1)
    all_const = bool(np.all(np.var(vals, axis=0) < threshold))
    all_equal = bool(np.all(np.var(diag, axis=1) < threshold)) and not np.any(np.abs(off) > threshold)
    if all_const:
        return "all prescribed functions are constant on the grid"
    if all_equal:
        return "all prescribed diagonal functions are equal on the grid"
    return None


def verify_family(sol: Solution, x, derivatives: str = "analytic", warn: bool = True) -> VerificationResult:
    xb, _ = batch(x)
    res, kres = prescribed_residual(sol, xb, derivatives)
    g_target = MetricField.conformal(sol.chart, sol.varphi)
    comp = compatibility_check(sol.tensor, xb, metric=g_target, tol=1e-8)
    msgs = []
    if sol.family.tag in ("theorem2", "theorem3", "theorem4-i", "theorem4-ii"):
        msg = degeneracy_check(sol.tensor, xb)
        if msg:
            msgs.append(msg)
            if warn:
                warnings.warn(msg, DegenerateFamilyWarning, stacklevel=2)
    return VerificationResult(xb, res, kres, comp, tuple(msgs))


def theorem4_system_residual(sol: Solution, x) -> np.ndarray:
    """Off-diagonal Hessian equations of the theorem4 system: p2ϕ_ij − f_ijϕ, p1ϕ_αβ − f_αβϕ, ϕ_iα."""
    xb, single = batch(x)
    p1, p2 = sol.family.p1, sol.family.p2
    j = sol.varphi.jet(xb)
    T = sol.tensor.matrix(xb)
    H, v = j.hess, j.val[:, None, None]
    off1 = ~np.eye(p1, dtype=bool)
    off2 = ~np.eye(p2, dtype=bool)
    r3 = np.abs(p2 * H[:, :p1, :p1] - T[:, :p1, :p1] * v)[:, off1]
    r4 = np.abs(p1 * H[:, p1:, p1:] - T[:, p1:, p1:] * v)[:, off2]
    r5 = np.abs(H[:, :p1, p1:]).reshape(xb.shape[0], -1)
    out = np.concatenate([r3, r4, r5], axis=1).max(axis=1)
    return unbatch(out, single)


# ---------------------------------------------------------------------------
# singularity sets of the quadratic family


def _frac(v) -> Fraction:
    return Fraction(float(v))


def _term_range(a: Fraction, b: Fraction, positive: bool):
    """Range of a t² + b t over t ∈ ℝ (or t > 0): (lo, lo_closed, hi, hi_closed); None = ∞."""
    if not positive:
        if a > 0:
            return (-b * b / (4 * a), True, None, False)
        if a < 0:
            return (None, False, -b * b / (4 * a), True)
        if b != 0:
            return (None, False, None, False)
        return (Fraction(0), True, Fraction(0), True)
    if a != 0:
        v = -b / (2 * a)
        if a > 0:
            return (-b * b / (4 * a), True, None, False) if v > 0 else (Fraction(0), False, None, False)
        return (None, False, -b * b / (4 * a), True) if v > 0 else (None, False, Fraction(0), False)
    if b > 0:
        return (Fraction(0), False, None, False)
    if b < 0:
        return (None, False, Fraction(0), False)
    return (Fraction(0), True, Fraction(0), True)


def quadratic_range(params: Theorem1Params, ambient: str = "euclidean"):
    """Exact range of ϕ over ℝⁿ (or the half-space x_n > 0)."""
    a, b = params.coefficients()
    lo, lo_c, hi, hi_c = _frac(params.c), True, _frac(params.c), True
    for k in range(params.n):
        positive = ambient == "hyperbolic" and k == params.n - 1
        l, lc, h, hc = _term_range(_frac(a[k]), _frac(b[k]), positive)
        lo = None if (lo is None or l is None) else lo + l
        hi = None if (hi is None or h is None) else hi + h
        lo_c, hi_c = lo_c and lc, hi_c and hc
    return lo, lo_c, hi, hi_c


def _has_zero(rng) -> bool:
    lo, lo_c, hi, hi_c = rng
    below = lo is None or lo < 0 or (lo == 0 and lo_c)
    above = hi is None or hi > 0 or (hi == 0 and hi_c)
    return below and above


@dataclass(frozen=True)
class SingularityReport:
    kind: str
    ambient: str
    lam: float
    center: tuple | None = None
    radius: float | None = None
    normal: tuple | None = None
    offset: float | None = None
    witness: tuple | None = None
    completeness: str = ""
    notes: tuple = ()

    def to_json(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in {
            "kind": self.kind, "ambient": self.ambient, "lambda": self.lam,
            "center": self.center, "radius": self.radius, "normal": self.normal,
            "offset": self.offset, "witness": self.witness,
            "completeness": self.completeness, "notes": self.notes}.items()}


def _find_witness(params: Theorem1Params, ambient: str, rng_info) -> np.ndarray:
    """A point of {ϕ = 0} in the domain; assumes one exists."""
    a, b = (np.asarray(v, dtype=float) for v in params.coefficients())
    n = params.n
    c = params.c
    phi = lambda y: float(np.dot(a, y * y) + np.dot(b, y) + c)  # noqa: E731
    lo, lo_c, hi, hi_c = rng_info
    pos = np.zeros(n, dtype=bool)
    if ambient == "hyperbolic":
        pos[-1] = True

    def extreme(sign: float) -> np.ndarray:
        # point where sign·ϕ is as small as the per-axis structure allows
        y = np.zeros(n)
        for k in range(n):
            ak, bk = sign * a[k], sign * b[k]
            if ak > 0:
                y[k] = -bk / (2 * ak)
            elif ak < 0 or bk != 0:
                y[k] = -np.sign(bk) if bk != 0 else 1.0
            if pos[k] and y[k] <= 0:
                y[k] = 1e-6
        return y

    def push(y: np.ndarray, sign: float) -> np.ndarray:
        # move along unbounded directions until sign·ϕ < 0
        for _ in range(200):
            if sign * phi(y) < 0:
                return y
            for k in range(n):
                ak, bk = sign * a[k], sign * b[k]
                if ak < 0:
                    y[k] = 2 * y[k] if y[k] != 0 else (1.0 if not pos[k] else 1.0)
                elif ak == 0 and bk != 0:
                    step = -np.sign(bk) * max(1.0, abs(y[k]))
                    if pos[k] and y[k] + step <= 0:
                        y[k] = y[k] / 2
                    else:
                        y[k] = y[k] + step
                elif ak > 0 and pos[k] and -bk / (2 * ak) <= 0:
                    y[k] = y[k] / 2
        return y

    if lo is not None and lo == 0 and lo_c:
        return extreme(1.0)
    if hi is not None and hi == 0 and hi_c:
        return extreme(-1.0)
    y0 = push(extreme(1.0), 1.0)    # ϕ(y0) < 0
    y1 = push(extreme(-1.0), -1.0)  # ϕ(y1) > 0
    f = lambda t: phi(y0 + t * (y1 - y0))  # noqa: E731
    t = brentq(f, 0.0, 1.0, xtol=1e-15, rtol=4 * np.finfo(float).eps)
    return y0 + t * (y1 - y0)


def classify_singularity(family: SolutionFamily | Theorem1Params,
                         ambient: str | None = None) -> SingularityReport:
    """Zero set of ϕ for the quadratic family, over ℝⁿ or the half-space x_n > 0.

    Existence of zeros comes from exact interval arithmetic on the separable
    quadratic; for a1 = a2 the zero set is described geometrically.
    """
    if isinstance(family, SolutionFamily):
        if family.tag != "theorem1":
            raise NotImplementedError("singularity classification covers the theorem1 family only")
        params, ambient = family.params, ambient or family.ambient
    else:
        params, ambient = family, ambient or "euclidean"
    if ambient not in AMBIENTS:
        raise ConfigurationError(f"ambient must be one of {AMBIENTS}")
    n = params.n
    lam = params.lam
    a_all, b_all = params.coefficients()
    if all(v == 0 for v in a_all + b_all):
        if params.c == 0:
            raise ConfigurationError("phi vanishes identically")
        return SingularityReport("homothety", ambient, lam, completeness="complete (homothety)")
    rng = quadratic_range(params, ambient)
    if not _has_zero(rng):
        return SingularityReport("nowhere-zero", ambient, lam,
                                 completeness="non-complete (|phi F| unbounded)")
    w = tuple(float(v) for v in _find_witness(params, ambient, rng))
    note = "singular set non-empty"
    if params.a1 != params.a2:
        return SingularityReport("quadric", ambient, lam, witness=w, completeness=note,
                                 notes=("a1 != a2: zero set is a quadric hypersurface or a degenerate piece of one",))
    a = params.a1
    b = np.asarray(params.b)
    if a != 0:
        center = tuple(float(v) for v in (-b / (2 * a)))
        lam_f = _frac_lambda(params)
        if lam_f == 0:
            return SingularityReport("single-point", ambient, lam, center=center, witness=center,
                                     completeness=note)
        r = math.sqrt(lam) / (2 * abs(a))
        kind = "sphere"
        if ambient == "hyperbolic" and not center[-1] - r > 0:
            kind = "sphere-cap"
        return SingularityReport(kind, ambient, lam, center=center, radius=r, witness=w,
                                 completeness=note)
    normal = tuple(float(v) for v in b)
    kind = "hyperplane"
    if ambient == "hyperbolic" and np.any(b[:-1] != 0):
        kind = "hyperplane-cap"
    return SingularityReport(kind, ambient, lam, normal=normal, offset=float(params.c), witness=w,
                             completeness=note)


def _frac_lambda(params: Theorem1Params) -> Fraction:
    return (sum(_frac(v) ** 2 for v in params.b)
            - 2 * (_frac(params.a1) + _frac(params.a2)) * _frac(params.c))


def hyperbolic_defined_everywhere(params: Theorem1Params) -> bool:
    """The listed conditions (i)–(v) under which g̃ has no singular point on the
    half-space, for a1 = a2 = a (ϕ = φ x_n)."""
    if params.a1 != params.a2:
        raise ConfigurationError("conditions (i)-(v) assume a1 = a2")
    a, lam, b = params.a1, _frac_lambda(params), params.b
    if lam < 0:
        return True
    if lam == 0:
        if a == 0:
            return True
        return b[-1] / a >= 0
    if a == 0:
        return all(v == 0 for v in b[:-1]) and params.c / b[-1] >= 0
    return b[-1] / a >= math.sqrt(lam) / abs(a)


def euclidean_nowhere_zero_condition(params: Theorem1Params) -> bool:
    """Sign condition for ϕ ≠ 0 on ℝⁿ when a1 a2 ≠ 0."""
    a1, a2 = params.a1, params.a2
    if a1 == 0 or a2 == 0:
        raise ConfigurationError("condition stated for a1 a2 != 0")
    p1 = params.p1
    s = sum(v * v for v in params.b[:p1]) / a1 + sum(v * v for v in params.b[p1:]) / a2
    if a1 > 0 and a2 > 0:
        return s < 4 * params.c
    if a1 < 0 and a2 < 0:
        return s > 4 * params.c
    return False


# grid oracle ------------------------------------------------------------------


@dataclass(frozen=True)
class GridSearch:
    zero_found: bool
    zero_cells: int
    cell_diameter: float
    max_distance: float | None   # max distance of a zero cell centre to the predicted set


def _axis_ranges(a: float, b: float, edges: np.ndarray):
    t0, t1 = edges[:-1], edges[1:]
    f0, f1 = a * t0 * t0 + b * t0, a * t1 * t1 + b * t1
    lo, hi = np.minimum(f0, f1), np.maximum(f0, f1)
    if a != 0:
        v = -b / (2 * a)
        inside = (t0 <= v) & (v <= t1)
        fv = -b * b / (4 * a)
        lo = np.where(inside, np.minimum(lo, fv), lo)
        hi = np.where(inside, np.maximum(hi, fv), hi)
    return lo, hi


def grid_zero_search(params: Theorem1Params, lo, hi, cells: int = 64,
                     report: SingularityReport | None = None, chunk: int = 1 << 20) -> GridSearch:
    """Cells of a uniform grid on [lo, hi] where ϕ can vanish (exact per-cell ranges)."""
    n = params.n
    a, b = params.coefficients()
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    edges = [np.linspace(lo[k], hi[k], cells + 1) for k in range(n)]
    ranges = [_axis_ranges(a[k], b[k], edges[k]) for k in range(n)]
    width = (hi - lo) / cells
    diam = float(np.linalg.norm(width))
    scale = abs(params.c) + sum(abs(a[k]) * max(lo[k] ** 2, hi[k] ** 2) + abs(b[k]) * max(abs(lo[k]), abs(hi[k]))
                                for k in range(n))
    tol = 1e-12 * max(scale, 1.0)
    # fold axes in groups so memory stays bounded
    head = max(1, min(n, int(np.floor(np.log(chunk) / np.log(cells)))))
    mins_tail = np.asarray(params.c)
    maxs_tail = np.asarray(params.c)
    for k in range(head, n):
        mins_tail = np.add.outer(mins_tail, ranges[k][0])
        maxs_tail = np.add.outer(maxs_tail, ranges[k][1])
    mins_head = np.zeros(())
    maxs_head = np.zeros(())
    for k in range(head):
        mins_head = np.add.outer(mins_head, ranges[k][0])
        maxs_head = np.add.outer(maxs_head, ranges[k][1])
    mins_head = mins_head.reshape(-1)
    maxs_head = maxs_head.reshape(-1)
    mins_tail = np.asarray(mins_tail).reshape(-1)
    maxs_tail = np.asarray(maxs_tail).reshape(-1)
    centers = [0.5 * (e[:-1] + e[1:]) for e in edges]
    count = 0
    worst = 0.0 if report is not None else None
    for t in range(mins_tail.size):
        zero = (mins_head + mins_tail[t] <= tol) & (maxs_head + maxs_tail[t] >= -tol)
        cnt = int(zero.sum())
        if not cnt:
            continue
        count += cnt
        if report is not None:
            idx_head = np.array(np.unravel_index(np.flatnonzero(zero), (cells,) * head)).T
            idx_tail = np.unravel_index(t, (cells,) * (n - head)) if n > head else ()
            pts = np.empty((cnt, n))
            for k in range(head):
                pts[:, k] = centers[k][idx_head[:, k]]
            for k, it in enumerate(idx_tail):
                pts[:, head + k] = centers[head + k][it]
            worst = max(worst, float(_distance_to_set(report, pts).max()))
    return GridSearch(count > 0, count, diam, worst if count else None)


def _distance_to_set(rep: SingularityReport, pts: np.ndarray) -> np.ndarray:
    if rep.kind == "single-point":
        return np.linalg.norm(pts - np.asarray(rep.center), axis=1)
    if rep.kind in ("sphere", "sphere-cap"):
        return np.abs(np.linalg.norm(pts - np.asarray(rep.center), axis=1) - rep.radius)
    if rep.kind in ("hyperplane", "hyperplane-cap"):
        nrm = np.asarray(rep.normal)
        return np.abs(pts @ nrm + rep.offset) / np.linalg.norm(nrm)
    return np.zeros(len(pts))


def verification_box(params: Theorem1Params, report: SingularityReport, ambient: str):
    """A dyadic box containing the witness (and the whole sphere when present)."""
    n = params.n
    extent = 2.0
    if report.witness is not None:
        extent = max(extent, 1.25 * float(np.max(np.abs(report.witness))))
    if report.center is not None:
        extent = max(extent, 1.25 * (float(np.max(np.abs(report.center))) + (report.radius or 0.0)))
    L = 2.0 ** math.ceil(math.log2(extent))
    lo = np.full(n, -L)
    hi = np.full(n, L)
    if ambient == "hyperbolic":
        lo[-1] = 1e-4 * (2 * L / 64)
    return lo, hi


def radius_by_root(report: SingularityReport, params: Theorem1Params, direction) -> float:
    """Distance from the sphere centre to {ϕ = 0} along a direction (bracketing root)."""
    u = np.asarray(direction, dtype=float)
    u = u / np.linalg.norm(u)
    c0 = np.asarray(report.center)
    phi = params.quadratic()
    f = lambda t: float(phi(c0 + t * u))  # noqa: E731
    hi = 1.0
    while np.sign(f(hi)) == np.sign(f(0.0)):
        hi *= 2.0
    return brentq(f, 0.0, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps)


def completeness_note(sol: Solution, x) -> str:
    """'complete (sufficient condition)' when |ϕ| stays bounded above on the grid."""
    xb, _ = batch(x)
    v = np.abs(sol.varphi._value(xb))
    if np.all(np.isfinite(v)) and v.max() <= 1e6 and v.min() > 0:
        return "complete (sufficient condition: |phi F| bounded above on the grid)"
    return "undetermined"
