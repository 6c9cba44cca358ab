"""Task runners: one function per scenario task, each filling a Report."""

from __future__ import annotations

import warnings

import numpy as np

from .chart import MetricField, SplitDistribution
from .conformal import (ConformalChange, exact_substitution_residual, flat_pde_residual,
                        residual_summary, transformed_k12, transformed_partial_ricci,
                        yamabe_residual)
from .curvature import curvature_pack, extrinsic_pack, sigma2_split_identity
from .errors import ConfigurationError
from .report import Report, Table
from .scenario import Scenario, ScenarioError, family_to_json, parse_expr
from .solutions import (classify_singularity, grid_zero_search, radius_by_root, sample_points,
                        theorem4_system_residual, verification_box, verify_family)
from .variational import (TorusQuadrature, VariationScenario, bending_and_energy, criticality,
                          integral_identity_check, quasi_positive, variation_derivatives)

TOL_ANALYTIC = 1e-8
TOL_FD = 1e-5


def default_tolerance(derivatives: str) -> float:
    return TOL_FD if derivatives == "fd" else TOL_ANALYTIC


def _points(sc: Scenario, rng: np.random.Generator, n: int) -> np.ndarray:
    p = sc.params
    if "points" in p:
        x = np.asarray(p["points"], dtype=float)
        if x.ndim != 2 or x.shape[1] != n:
            raise ScenarioError(f"points must be a list of {n}-vectors", "/params/points")
        return x
    count = int(p.get("samples", 20))
    chart = sc.build_chart()
    lo = np.asarray(p.get("box_lo", [-1.0] * n), dtype=float)
    hi = np.asarray(p.get("box_hi", [1.0] * n), dtype=float)
    if chart.topology == "torus":
        lo, hi = np.zeros(n), np.asarray(chart.periods)
    else:
        clo, chi = np.asarray(chart.lo), np.asarray(chart.hi)
        lo = np.where(np.isfinite(clo), np.maximum(lo, clo + 0.1), lo)
        hi = np.where(np.isfinite(chi), np.minimum(hi, chi - 0.1), hi)
        hi = np.where(hi <= lo, lo + 2.0, hi)
    return rng.uniform(lo, hi, size=(count, n))


def _derivs(sc: Scenario, oracle: bool) -> str:
    return "fd" if oracle else sc.params.get("derivatives", "analytic")


# ---------------------------------------------------------------------------


def run_curvature(sc, rep: Report, rng, tol, oracle):
    metric, dist = sc.build_metric(), sc.build_split()
    d = _derivs(sc, oracle)
    path = sc.params.get("path", "coordinate")
    x = _points(sc, rng, metric.chart.n)
    pack = curvature_pack(metric, dist, x, d, path)
    ext = extrinsic_pack(metric, dist, x, d, path)
    split = sigma2_split_identity(ext)
    cols = {"k12": pack.k12, "sigma2_sum": ext.sigma2_sum,
            "split_identity_residual": ext.sigma2_sum - split}
    rep.check("sigma2 split identity", np.abs(ext.sigma2_sum - split).max(), tol)
    if "expect_k12" in sc.params:
        expect = parse_expr(sc.params["expect_k12"], "/params/expect_k12")._value(x)
        cols["k12_residual"] = pack.k12 - expect
        rep.check("k12 matches expected", np.abs(pack.k12 - expect).max(), tol)
    rep.summary = {"k12": residual_summary(pack.k12), "points": [
        {**pack_i, **ext_i} for pack_i, ext_i in zip(_split_json(pack), _split_json(ext))]}
    rep.tables["curvature"] = Table(x, cols)


def _split_json(pack):
    doc = pack.to_json()
    keys = list(doc)
    return [{k: doc[k][i] for k in keys} for i in range(len(doc["x"]))]


def run_conformal_check(sc, rep: Report, rng, tol, oracle):
    metric, dist = sc.build_metric(), sc.build_split()
    if "phi" not in sc.params:
        raise ScenarioError("conformal-check needs params.phi", "/params")
    phi = parse_expr(sc.params["phi"], "/params/phi")
    d = _derivs(sc, oracle)
    path = sc.params.get("path", "coordinate")
    x = _points(sc, rng, metric.chart.n)
    change = ConformalChange(metric, phi)
    p1 = dist.p1
    r1, r2 = transformed_partial_ricci(change, dist, x, d, path).blocks(p1)
    kt = transformed_k12(change, dist, x, d, path)
    direct = curvature_pack(change.target, dist, x, d, path)
    e1 = np.abs(r1 - direct.ric1[:, :p1, :p1]).max(axis=(1, 2))
    e2 = np.abs(r2 - direct.ric2[:, p1:, p1:]).max(axis=(1, 2))
    ek = np.abs(kt - direct.k12)
    rep.check("ric1 block vs direct", e1.max(), tol)
    rep.check("ric2 block vs direct", e2.max(), tol)
    rep.check("k12 vs direct", ek.max(), tol)
    rep.summary = {"ric1": residual_summary(e1), "ric2": residual_summary(e2),
                   "k12": residual_summary(ek)}
    rep.tables["conformal"] = Table(x, {"ric1_residual": e1, "ric2_residual": e2, "k12_residual": ek})


def _family_points(sc, sol, rng):
    return sample_points(sol, rng, int(sc.params.get("samples", 50)),
                         half_width=float(sc.params.get("half_width", 1.5)),
                         margin=float(sc.params.get("margin", 0.05)))


def run_verify_solution(sc, rep: Report, rng, tol, oracle):
    fam = sc.build_family()
    sol = fam.build()
    x = _family_points(sc, sol, rng)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        res = verify_family(sol, x, _derivs(sc, oracle), warn=False)
    rep.warnings.extend(res.warnings)
    rep.check("prescribed tensor residual", res.max_residual, tol)
    rep.check("trace compatibility", res.compatibility.max_violation, tol)
    cols = {"residual": res.residual}
    if sol.k_tilde is not None:
        rep.check("mixed scalar curvature closed form", res.k_residual.max(), tol)
        cols["k_residual"] = res.k_residual
    if fam.tag.startswith("theorem4"):
        sysr = theorem4_system_residual(sol, x)
        rep.check("theorem4 system residual", sysr.max(), tol)
        cols["system_residual"] = sysr
    rep.summary = {"family": family_to_json(fam), "residual": residual_summary(res.residual),
                   "k_residual": residual_summary(res.k_residual)}
    rep.tables["verify"] = Table(x, cols)


def run_classify_singularity(sc, rep: Report, rng, tol, oracle):
    fam = sc.build_family()
    if fam.tag != "theorem1":
        raise ScenarioError("classify-singularity covers the theorem1 family only", "/family/tag")
    report = classify_singularity(fam)
    rep.summary = {"singularity": report.to_json()}
    cells = int(sc.params.get("cells", 32))
    if fam.n <= 4 and cells > 0:
        lo, hi = verification_box(fam.params, report, fam.ambient)
        grid = grid_zero_search(fam.params, lo, hi, cells, report)
        predicted = report.kind not in ("nowhere-zero", "homothety")
        rep.summary["grid"] = {"cells": cells, "zero_cells": grid.zero_cells,
                               "cell_diameter": grid.cell_diameter, "lo": lo, "hi": hi}
        rep.check("grid search agrees", 0.0 if grid.zero_found == predicted else 1.0, 0.0)
        if grid.max_distance is not None and report.kind != "quadric":
            rep.check("zero cells near predicted set", grid.max_distance, grid.cell_diameter)
    if report.radius is not None:
        u = rng.normal(size=fam.n)
        r = radius_by_root(report, fam.params, u)
        rep.summary["radius_by_root"] = r
        rep.check("sphere radius", abs(r - report.radius), max(tol, 1e-10))


def run_pde_residual(sc, rep: Report, rng, tol, oracle):
    fam = sc.build_family()
    if fam.ambient != "euclidean":
        raise ScenarioError("pde-residual uses the flat base (ambient euclidean)", "/family/ambient")
    if fam.case != "a":
        raise ScenarioError("pde-residual uses case a of the families", "/family/case")
    sol = fam.build()
    dist = SplitDistribution(sol.chart)
    base = MetricField.euclidean(sol.chart)
    change = ConformalChange(base, sol.varphi)
    u = change.u          # rejects p1 p2 = n
    d = _derivs(sc, oracle)
    x = _family_points(sc, sol, rng)
    if sol.k_tilde is not None:
        kt = sol.k_tilde
    else:
        kt = lambda y: transformed_k12(change, dist, y, d)  # noqa: E731
    forms = sc.params.get("forms", ["exact", "flat", "yamabe"])
    cols = {}
    for form in forms:
        if form == "flat":
            r = flat_pde_residual(dist, u, kt, x, d)
        elif form == "yamabe":
            r = yamabe_residual(base, dist, u, kt, x, d)
        elif form == "exact":
            r = exact_substitution_residual(change, dist, x, d)
        else:
            raise ScenarioError(f"unknown residual form {form!r}", "/params/forms")
        cols[form] = r
        rep.check(f"{form} residual", np.abs(r).max(), tol)
    rep.summary = {"family": family_to_json(fam), "exponent": 1 - change.q,
                   "residuals": {k: residual_summary(v) for k, v in cols.items()}}
    rep.tables["pde"] = Table(x, cols)


def _variation_scenario(sc) -> VariationScenario:
    p = sc.params
    metric, dist = sc.build_metric(), sc.build_split()
    omega = p.get("omega", [1.0] + [0.0] * (dist.p1 - 1))
    return VariationScenario(metric, dist, tuple(omega), p.get("bump_center"),
                             float(p.get("bump_width", 0.5)), int(p.get("resolution", 16)),
                             float(p.get("h", 1e-2)))


def run_variation(sc, rep: Report, rng, tol, oracle):
    p = sc.params
    vs = _variation_scenario(sc)
    rel = float(p.get("variation_tol", 1e-4))
    qtol = float(p.get("quadrature_tol", 1e-5))
    v = variation_derivatives(vs)
    grid = TorusQuadrature(vs.metric.chart, max(8, int(p.get("check_resolution", 8)))).points()
    stride = max(1, len(grid) // int(p.get("check_points", 256)))
    grid = grid[::stride]
    crit = criticality(vs.metric, vs.dist, grid, float(p.get("critical_tol", 1e-8)))
    qp = quasi_positive(vs.metric, vs.dist, grid, int(p.get("n_rot", 16)), rng,
                        volume=vs.quadrature.volume)
    ident = integral_identity_check(vs.metric, vs.dist, vs.quadrature)
    summary = {"ik": ident.ik, "i1_analytic": v.i1_analytic, "i1_fd": v.i1_fd,
               "i2_analytic": v.i2_analytic, "i2_fd": v.i2_fd, "critical": crit.critical,
               "critical_violation": crit.max_violation, "quasi_positive": qp.quasi_positive,
               "quasi_positive_failing_fraction": qp.failing_fraction,
               "wal2_residual": ident.residual, "samples": v.samples}
    if vs.dist.p1 >= 2 and vs.dist.p2 >= 2:
        b = bending_and_energy(vs.metric, vs.dist, vs.quadrature, float(p.get("c_n", 1.0)))
        summary.update(bending=b.bending, bending_bound=b.bending_bound,
                       corrected_energy=b.corrected_energy)
        rep.check("bending bound slack", b.slack, -1e-8, ">=")
    else:
        summary.update(bending=None, bending_bound=None, corrected_energy=None)
    rep.check("first variation analytic vs FD",
              abs(v.i1_analytic - v.i1_fd) / max(1.0, abs(v.i1_analytic)), rel)
    rep.check("second variation analytic vs FD",
              abs(v.i2_analytic - v.i2_fd) / max(1.0, abs(v.i2_analytic)), rel)
    rep.check("integral identity residual", abs(ident.residual), qtol)
    if crit.critical:
        rep.check("critical implies vanishing first variation", abs(v.i1_fd), 1e-6)
    rep.summary = summary


def run_identity_check(sc, rep: Report, rng, tol, oracle):
    metric, dist = sc.build_metric(), sc.build_split()
    q = TorusQuadrature(metric.chart, int(sc.params.get("resolution", 16)))
    qtol = float(sc.params.get("quadrature_tol", 1e-5))
    ident = integral_identity_check(metric, dist, q)
    rep.check("integral identity residual", abs(ident.residual), qtol)
    rep.check("total mixed curvature equals 2 int sigma2", abs(ident.ik - ident.sigma2_integral), qtol)
    x = _points(sc, rng, metric.chart.n)
    ext = extrinsic_pack(metric, dist, x)
    diff = ext.sigma2_sum - sigma2_split_identity(ext)
    rep.check("sigma2 split identity (pointwise)", np.abs(diff).max(), max(tol, 1e-9))
    rep.summary = {"wal2_residual": ident.residual, "scale": ident.scale, "ik": ident.ik,
                   "sigma2_integral": ident.sigma2_integral, "t2_max": ident.t2_max}
    rep.tables["identity"] = Table(x, {"sigma2_sum": ext.sigma2_sum, "split_residual": diff})


def run_bending(sc, rep: Report, rng, tol, oracle):
    metric, dist = sc.build_metric(), sc.build_split()
    q = TorusQuadrature(metric.chart, int(sc.params.get("resolution", 16)))
    qtol = float(sc.params.get("quadrature_tol", 1e-5))
    b = bending_and_energy(metric, dist, q, float(sc.params.get("c_n", 1.0)))
    # the bound integrand is pointwise below |∇D̃|²; the other two compare
    # different integrands that agree only after integration
    rep.check("bending bound slack", b.slack, -1e-8, ">=")
    if b.equal_dim_bound is not None:
        rep.check("equal-dimension bound slack", b.bending - b.equal_dim_bound, -qtol, ">=")
    if b.d2_integrable:
        rep.check("corrected energy bound slack", b.corrected_energy - b.ik, -qtol, ">=")
    rep.summary = b.to_json()


RUNNERS = {
    "curvature": run_curvature,
    "conformal-check": run_conformal_check,
    "verify-solution": run_verify_solution,
    "classify-singularity": run_classify_singularity,
    "pde-residual": run_pde_residual,
    "variation": run_variation,
    "identity-check": run_identity_check,
    "bending": run_bending,
}


def run(sc: Scenario, seed: int, tol: float | None = None, oracle: bool = False) -> Report:
    """Run one scenario; math errors propagate to the caller."""
    d = _derivs(sc, oracle)
    tol = tol if tol is not None else (sc.tolerance if sc.tolerance is not None else default_tolerance(d))
    rng = np.random.default_rng(seed)
    rep = Report(sc.task, sc.to_json(), seed, "oracle" if oracle else "analytic")
    try:
        RUNNERS[sc.task](sc, rep, rng, tol, oracle)
    except ConfigurationError as err:
        raise ScenarioError(str(err), "/") from err
    return rep
