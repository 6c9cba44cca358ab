import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ricci_forge import expr as ex
from ricci_forge.errors import DomainError, ExpressionError
from ricci_forge.fd import fd_derivatives


def test_jet_matches_finite_differences(rng):
    x = rng.uniform(-1, 1, (20, 3))
    for _ in range(10):
        e = ex.random_expression(rng, range(3))
        j = e.jet(x)
        val, d, d2 = fd_derivatives(e._value, x)
        assert np.allclose(j.val, val)
        assert np.allclose(j.grad, d, atol=1e-8)
        assert np.allclose(j.hess, d2, atol=1e-6)


def test_symbolic_diff_matches_jet(rng):
    x = rng.uniform(-1, 1, (15, 3))
    for _ in range(10):
        e = ex.random_expression(rng, range(3))
        j = e.jet(x)
        for k in range(3):
            assert np.allclose(e.diff(k)._value(x), j.grad[:, k], atol=1e-12)
            assert np.allclose(e.diff(k).diff(k)._value(x), j.hess[:, k, k], atol=1e-10)


def test_known_values():
    x = ex.coords(2)
    e = ex.sin(x[0]) * ex.exp(x[1]) + ex.power(x[0], 2)
    p = np.array([0.3, -0.2])
    assert e(p) == pytest.approx(np.sin(0.3) * np.exp(-0.2) + 0.09)
    s = ex.sumsq([0, 1])
    j = s.jet(p)
    assert np.allclose(j.grad, [[0.6, -0.4]])
    assert np.allclose(j.hess, [2 * np.eye(2)])


def test_domain_guards():
    x = ex.coords(1)
    with pytest.raises(DomainError):
        ex.log(x[0])(np.array([-1.0]))
    with pytest.raises(DomainError):
        ex.recip(x[0])(np.array([0.0]))
    with pytest.raises(DomainError):
        ex.power(x[0], 0.5)(np.array([-2.0]))


def test_json_round_trip_preserves_values(rng):
    x = rng.uniform(-1, 1, (10, 4))
    for _ in range(20):
        e = ex.random_expression(rng, range(4))
        back = ex.from_json(json.loads(json.dumps(e.to_json())))
        assert np.allclose(back._value(x), e._value(x), rtol=0, atol=0)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_json_round_trip_is_fixed_point(seed):
    e = ex.random_expression(np.random.default_rng(seed), range(3))
    once = e.to_json()
    assert ex.from_json(once).to_json() == once


@pytest.mark.parametrize("node, pointer", [
    ({"op": "sin"}, "/"),
    ({"op": "add", "args": [{"op": "coord", "index": 0}, {"op": "bogus"}]}, "/args/1"),
    ({"op": "mul", "args": [1, {"op": "exp", "arg": {"op": "coord", "index": -1}}]}, "/args/1/arg"),
    ({"op": "pow", "arg": 1.0}, "/"),
    ("x", "/"),
])
def test_malformed_json_points_at_node(node, pointer):
    with pytest.raises(ExpressionError) as info:
        ex.from_json(node)
    assert info.value.pointer == pointer


def test_remap_and_variables():
    x = ex.coords(3)
    e = ex.sin(x[0]) + ex.sumsq([0, 1])
    r = ex.remap(e, {0: 2})
    assert ex.variables(r) == {1, 2}
    p = np.array([0.1, 0.2, 0.3])
    q = np.array([0.3, 0.2, 0.1])
    assert r(p) == pytest.approx(e(q))
