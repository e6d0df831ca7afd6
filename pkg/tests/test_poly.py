import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sparseinv.poly import (Polynomial, PolynomialError, PolyVector, count_monomials,
                            grlex_key, lie_derivative, monomials_up_to, parse_polynomial)

N = 3
NAMES = ("x", "y", "z")


@st.composite
def polys(draw, n=N, max_deg=3, max_terms=5):
    terms = {}
    for _ in range(draw(st.integers(0, max_terms))):
        alpha = tuple(draw(st.lists(st.integers(0, max_deg), min_size=n, max_size=n)))
        terms[alpha] = draw(st.floats(-5, 5, allow_nan=False).filter(lambda c: abs(c) > 1e-3))
    return Polynomial(n, terms)


points = st.lists(st.floats(-1.5, 1.5, allow_nan=False), min_size=N, max_size=N)


@given(polys(), polys())
def test_addition_and_product_commute(p, q):
    assert (p + q).almost_equal(q + p)
    assert (p * q).almost_equal(q * p, 1e-9)


@given(polys(), polys(), polys())
def test_distributive(p, q, r):
    assert (p * (q + r)).almost_equal(p * q + p * r, 1e-8)


@given(polys(), polys(), points)
def test_evaluation_is_a_ring_homomorphism(p, q, x):
    x = np.array(x)
    assert math.isclose((p * q).eval(x), p.eval(x) * q.eval(x), rel_tol=1e-9, abs_tol=1e-9)
    assert math.isclose((p - q).eval(x), p.eval(x) - q.eval(x), rel_tol=1e-9, abs_tol=1e-9)


@given(polys())
def test_string_roundtrip(p):
    q = parse_polynomial(p.to_string(NAMES), NAMES)
    assert q.almost_equal(p, 1e-12)


@given(polys(), points, st.integers(0, N - 1))
def test_partial_matches_finite_difference(p, x, i):
    x = np.array(x)
    h = 1e-6
    e = np.zeros(N)
    e[i] = h
    fd = (p.eval(x + e) - p.eval(x - e)) / (2 * h)
    assert math.isclose(p.partial(i).eval(x), fd, rel_tol=1e-5, abs_tol=1e-5)


@given(st.integers(0, 6), st.integers(0, 8))
def test_monomial_count_is_binomial(n, d):
    monos = monomials_up_to(n, d)
    assert len(monos) == count_monomials(n, d) == math.comb(n + d, d)
    assert len(set(monos)) == len(monos)
    assert monos == sorted(monos, key=grlex_key)


def test_parse_forms():
    p = parse_polynomial("2*x^2 - 3*x*y + 0.5 + y**3 - (x - 1)*(x + 1)", NAMES)
    expect = {(2, 0, 0): 1.0, (1, 1, 0): -3.0, (0, 0, 0): 1.5, (0, 3, 0): 1.0}
    assert p == Polynomial(3, expect)
    assert parse_polynomial("0", NAMES).is_zero()


@pytest.mark.parametrize("bad", ["x +* 2", "x^y", "sin(x)", "w + 1", "x / y", "x^-1", ""])
def test_parse_rejects(bad):
    with pytest.raises(PolynomialError):
        parse_polynomial(bad, NAMES)


def test_pruning_and_mismatch():
    x = Polynomial.variable(2, 0)
    assert (x - x).is_zero()
    assert Polynomial(2, {(1, 0): 1e-16}).is_zero()
    with pytest.raises(PolynomialError):
        x + Polynomial.variable(3, 0)


def test_restrict_embed_substitute():
    p = parse_polynomial("x*z + y", NAMES)
    q = p.substitute(1, 2.0)
    assert q == parse_polynomial("x*z + 2", NAMES)
    r = parse_polynomial("x*z", NAMES).restrict([0, 2])
    assert r.num_vars == 2 and r.eval(np.array([2.0, 3.0])) == 6.0
    assert r.embed([0, 2], 3) == parse_polynomial("x*z", NAMES)
    with pytest.raises(PolynomialError):
        p.restrict([0, 2])


@given(st.lists(polys(), min_size=1, max_size=3),
       st.lists(points, min_size=1, max_size=7))
def test_polyvector_matches_componentwise(comps, xs):
    f = PolyVector(comps, N)
    X = np.array(xs)
    out = f(X)
    assert out.shape == (len(xs), len(comps))
    for j, p in enumerate(comps):
        assert np.allclose(out[:, j], p.eval(X), rtol=1e-10, atol=1e-10)


def test_polyvector_dimension_check():
    f = PolyVector([Polynomial.variable(2, 0), Polynomial.variable(2, 1)])
    with pytest.raises(PolynomialError):
        f(np.zeros(3))


def test_lie_derivative():
    names = ("x", "y")
    f = PolyVector([parse_polynomial(s, names) for s in ("y", "-x - y")])
    v = parse_polynomial("x^2 + y^2", names)
    assert lie_derivative(v, f) == parse_polynomial("-2*y^2", names)
    vt = parse_polynomial("t*x", ("t", "x", "y"))
    assert lie_derivative(vt, f, time_augmented=True) == parse_polynomial("x + t*y", ("t", "x", "y"))
    with pytest.raises(PolynomialError):
        lie_derivative(v, f, time_augmented=True)
