import json
import random
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pncp.errors import DimensionMismatch, NonSymmetricBlock
from pncp.polyalg import (
    FLOAT,
    RATIONAL,
    Biform,
    BilinearForm,
    PncpMap,
    Polynomial,
    biform_from_dict,
    biform_keys,
    biform_to_dict,
    biform_to_map,
    dumps,
    gradient,
    loads,
    map_from_dict,
    map_to_biform,
    map_to_dict,
    multiply,
    sum_of_coordinate_squares,
    sum_of_squares_of,
)

from reference_data import EXAMPLE1_E11, EXAMPLE1_E12, F1_TERMS


def biforms(n=3, m=3, lo=-9, hi=9):
    keys = biform_keys(n, m)
    return st.lists(st.integers(lo, hi), min_size=len(keys), max_size=len(keys)).map(
        lambda vals: Biform.from_vector(n, m, vals, RATIONAL)
    )


def brute_force_product(p: Polynomial, q: Polynomial) -> dict:
    out = {}
    for ea, ca in p.terms.items():
        for eb, cb in q.terms.items():
            e = tuple(a + b for a, b in zip(ea, eb))
            out[e] = out.get(e, 0) + ca * cb
    return {e: c for e, c in out.items() if c != 0}


# -- evaluation --------------------------------------------------------------


def test_coordinate_squares_at_unit_vectors():
    F = sum_of_coordinate_squares(3, 3, RATIONAL)
    assert F.evaluate([1, 0, 0], [1, 0, 0]) == 1


def test_f1_leading_coefficient(f1):
    assert f1.evaluate([1, 0, 0], [1, 0, 0]) == 5


def test_f1_matches_reference_terms(f1):
    P = f1.to_polynomial()
    expected = {tuple(ex) + tuple(ey): Fraction(c) for c, ex, ey in F1_TERMS}
    assert P.terms == expected


@settings(max_examples=30, deadline=None)
@given(biforms(), st.lists(st.integers(-5, 5), min_size=6, max_size=6))
def test_bidegree_scaling(F, pt):
    x, y = [Fraction(v) for v in pt[:3]], [Fraction(v) for v in pt[3:]]
    assert F.evaluate([2 * v for v in x], [3 * v for v in y]) == 36 * F.evaluate(x, y)


def test_evaluate_rejects_wrong_lengths():
    F = sum_of_coordinate_squares(3, 3)
    with pytest.raises(DimensionMismatch):
        F.evaluate([1, 0], [1, 0, 0])


# -- gradients ---------------------------------------------------------------


def test_gradient_of_square():
    p = Polynomial(1, {(2,): 1}, RATIONAL)
    assert gradient(p, [3]) == [6]


def test_gradient_of_sum_of_squares_vanishes_at_zero(rational_cnr_result):
    r = rational_cnr_result
    H = sum_of_squares_of(r.hs)
    for x, y in r.zeros:
        assert all(g == 0 for g in gradient(H, list(x) + list(y)))


def test_gradient_finite_differences():
    # central differences with step 1e-5 against the exact derivative
    rng = np.random.default_rng(11)
    for _ in range(10):
        vals = rng.normal(size=len(biform_keys(3, 3)))
        F = Biform.from_vector(3, 3, vals, FLOAT)
        pt = rng.normal(size=6)
        exact = np.array(gradient(F, list(pt)), dtype=float)
        P = F.to_polynomial()
        h = 1e-5
        fd = []
        for i in range(6):
            e = np.zeros(6)
            e[i] = h
            fd.append((P.evaluate(pt + e) - P.evaluate(pt - e)) / (2 * h))
        assert np.allclose(fd, exact, rtol=1e-6, atol=1e-6 * np.abs(exact).max())


# -- multiplication ----------------------------------------------------------


def test_bilinear_square_single_monomial():
    h = BilinearForm(((1, 0), (0, 0)), RATIONAL)
    sq = h.square()
    assert sq.coeffs == {(0, 0, 0, 0): 1}


def test_multiply_by_one_is_identity(f1):
    P = f1.to_polynomial()
    one = Polynomial.constant(P.nvars, 1, RATIONAL)
    assert multiply(P, one) == P


def test_product_with_coordinate_squares_matches_expansion():
    rng = random.Random(5)
    F = Biform.from_vector(2, 2, [rng.randint(-9, 9) for _ in biform_keys(2, 2)], RATIONAL)
    S = sum_of_coordinate_squares(2, 2, RATIONAL).to_polynomial()
    P = F.to_polynomial()
    assert multiply(S, P).terms == brute_force_product(S, P)


@settings(max_examples=25, deadline=None)
@given(biforms(2, 3), biforms(2, 3))
def test_multiplication_commutes(F, G):
    P, Q = F.to_polynomial(), G.to_polynomial()
    assert multiply(P, Q) == multiply(Q, P)


# -- maps --------------------------------------------------------------------


def test_f1_to_map_blocks(f1):
    phi = biform_to_map(f1)
    assert np.array_equal(phi.diag[0], np.array(EXAMPLE1_E11, dtype=object))
    assert np.array_equal(phi.offdiag[(0, 1)], np.array(EXAMPLE1_E12, dtype=object))


def test_zero_biform_gives_zero_map():
    phi = biform_to_map(Biform(3, 3, {}, RATIONAL))
    assert all(not c.any() for c in phi.diag)
    assert all(not c.any() for c in phi.offdiag.values())


def test_example1_map_back_to_f1(f1, phi1):
    assert map_to_biform(phi1) == f1


def test_identity_like_map():
    eye = [[1 if i == j else 0 for j in range(3)] for i in range(3)]
    phi = PncpMap(3, 3, (eye, eye, eye), {}, RATIONAL)
    F = map_to_biform(phi)
    assert F == sum_of_coordinate_squares(3, 3, RATIONAL)


@settings(max_examples=100, deadline=None)
@given(biforms(3, 4))
def test_map_roundtrip(F):
    assert map_to_biform(biform_to_map(F)) == F


def test_map_rejects_nonsymmetric():
    with pytest.raises(NonSymmetricBlock):
        PncpMap(2, 2, ([[1, 2], [0, 1]], [[1, 0], [0, 1]]), {}, RATIONAL)


def test_canonical_extension_halves_cross_images(phi1):
    assert np.array_equal(phi1.image_of_unit(0, 1) * 2, phi1.offdiag[(0, 1)])
    assert np.array_equal(phi1.image_of_unit(1, 0), phi1.image_of_unit(0, 1))


# -- serialisation ------------------------------------------------------------


@settings(max_examples=30, deadline=None)
@given(biforms())
def test_biform_json_roundtrip(F):
    assert biform_from_dict(json.loads(json.dumps(biform_to_dict(F)))) == F
    assert loads(dumps(F)) == F


def test_map_json_roundtrip(phi2):
    assert map_from_dict(json.loads(json.dumps(map_to_dict(phi2)))) == phi2


def test_rational_scalars_serialise_as_fractions():
    F = Biform(3, 3, {(0, 0, 0, 0): Fraction(1, 3)}, RATIONAL)
    assert biform_to_dict(F)["entries"] == [[0, 0, 0, 0, "1/3"]]


def test_duplicate_entry_rejected():
    d = {"n": 3, "m": 3, "mode": RATIONAL, "entries": [[0, 1, 0, 0, "1"], [1, 0, 0, 0, "2"]]}
    with pytest.raises(ValueError):
        biform_from_dict(d)
