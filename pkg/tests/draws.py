"""Random parameter draws for the solution families."""

import numpy as np

from ricci_forge import expr as ex
from ricci_forge.solutions import (SolutionFamily, Theorem1Params, Theorem2Params, Theorem3Params,
                                   Theorem4iParams, Theorem4Params)

FAMILY_CASES = [("theorem1", "a"), ("theorem1", "b"), ("theorem2", "a"), ("theorem2", "b"),
                ("theorem3", "a"), ("theorem3", "b"), ("theorem4-i", "a"), ("theorem4-ii", "a")]


def _one_var(rng):
    return ex.random_expression(rng, [0], depth=2)


def draw_params(rng, tag, p1=None, p2=None, equal_a=None):
    if tag == "theorem1":
        p1 = p1 or int(rng.integers(2, 4))
        p2 = p2 or int(rng.integers(2, 4))
        a1 = float(rng.uniform(-1, 1))
        a2 = a1 if (equal_a if equal_a is not None else rng.random() < 0.5) else float(rng.uniform(-1, 1))
        b = tuple(float(v) for v in rng.uniform(-1, 1, p1 + p2))
        return Theorem1Params(p1, p2, a1, a2, b, float(rng.uniform(-1, 1)))
    p1 = p1 or int(rng.integers(3, 5))
    p2 = p2 or 3
    if tag == "theorem2":
        return Theorem2Params(p1, p2, int(rng.integers(0, p1)), _one_var(rng))
    if tag == "theorem3":
        # keep v + w away from zero so samples are plentiful
        v = ex.add(2.0, _one_var(rng))
        w = _one_var(rng)
        return Theorem3Params(p1, p2, int(rng.integers(0, p1)), p1 + int(rng.integers(0, p2)), v, w)
    if tag == "theorem4-i":
        x0, x1 = ex.Coord(0), ex.Coord(1)
        inner = ex.add(ex.random_expression(rng, [0, 1], depth=2),
                       ex.mul(float(rng.uniform(0.2, 0.5)), x0, x1))
        return Theorem4iParams(p1, p2, ex.exp(inner))
    if tag == "theorem4-ii":
        p = int(rng.integers(3, p1 + 1))
        U = tuple(ex.add(ex.mul(float(rng.uniform(0.3, 1.0)), ex.Coord(0)), _one_var(rng))
                  for _ in range(p))
        return Theorem4Params(p1, p2, U, float(rng.uniform(0.5, 1.5)), float(rng.uniform(-0.5, 0.5)),
                              int(rng.choice([1, -1])))
    raise KeyError(tag)


def draw_family(rng, tag, case, ambient="euclidean", **kw):
    return SolutionFamily(tag, case, draw_params(rng, tag, **kw), ambient)
