import numpy as np

from ricci_forge import expr as ex
from ricci_forge.chart import Chart, MetricField, SplitDistribution


def sphere_metric(n, p1):
    """Stereographic unit sphere, g = 4δ/(1+|x|²)², i.e. scale F = (1+|x|²)/2."""
    chart = Chart.box(n, p1, [-1.0] * n, [1.0] * n)
    return MetricField.conformal(chart, ex.mul(0.5, ex.add(1.0, ex.sumsq(range(n)))))


def hyperbolic_metric(n, p1):
    return MetricField.conformal(Chart.half_space(n, p1), ex.Coord(n - 1))


def warped_torus(n=4, p1=2):
    """A periodic diagonal metric that is not conformally flat."""
    x = ex.coords(n)
    ent = [ex.exp(0.4 * ex.sin(x[1])), ex.exp(0.3 * ex.cos(x[0] + x[2])),
           1 + 0.3 * ex.sin(x[3]), ex.exp(0.5 * ex.sin(x[0] + x[1]))]
    for k in range(4, n):
        ent.append(ex.exp(0.2 * ex.cos(x[k] + x[0])))
    return MetricField.diagonal(Chart.torus(n, p1), ent[:n])


def product_torus():
    """T²×T² with each factor conformal in its own coordinates."""
    x = ex.coords(4)
    f1 = ex.exp(0.5 * ex.sin(x[0]) + 0.2 * ex.cos(x[1]))
    f2 = ex.exp(0.4 * ex.cos(x[3]))
    return MetricField.diagonal(Chart.torus(4, 2), [f1, f1, f2, f2])


def tilt(chart, rng, size=0.3):
    return SplitDistribution(chart, rng.uniform(-size, size, (chart.p2, chart.p1)))


def random_points(rng, chart, count, half=1.0):
    """Uniform points inside the chart, kept 0.2 away from finite bounds."""
    lo = np.array([max(a + 0.2, -half) if np.isfinite(a) else -half for a in chart.lo])
    hi = np.array([min(b - 0.2, half) if np.isfinite(b) else half for b in chart.hi])
    hi = np.where(hi <= lo, lo + 2.0, hi)
    return rng.uniform(lo, hi, size=(count, chart.n))


# acceptance results, printed once per criterion at the end of the session
ACCEPTANCE = {}


def record(criterion, part, ok, detail=""):
    ACCEPTANCE.setdefault(criterion, []).append((part, bool(ok), detail))
    print(f"{'PASS' if ok else 'FAIL'} criterion {criterion} [{part}] {detail}")
    return ok
