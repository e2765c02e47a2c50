import json
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pncp.errors import ModeMismatch, RationalizationError
from pncp.polyalg import bihomogeneous_monomials
from pncp.rationalize import (
    UNSUPPORTED,
    ExactCertificate,
    RoundingParams,
    certify_rational,
    exact_residual,
    facial_reduce,
    ldl_pivots,
    monomial_vector,
    project_affine,
    round_gram,
    verify_exact,
)
from pncp.relax import GramCertificate


ZERO = ((Fraction(1), Fraction(-2), Fraction(3)), (Fraction(2), Fraction(1), Fraction(-1)))


def test_one_zero_bilinear_face():
    face = facial_reduce(bihomogeneous_monomials(3, 3, 1, 1), [ZERO])
    assert face.dim == 8
    assert all(v.denominator == 1 for row in face.W for v in row)


@settings(max_examples=20, deadline=None)
@given(st.lists(st.integers(-20, 20), min_size=64, max_size=64))
def test_face_gram_annihilates_zero(vals):
    basis = bihomogeneous_monomials(3, 3, 1, 1)
    face = facial_reduce(basis, [ZERO])
    M = np.array([Fraction(v) for v in vals], dtype=object).reshape(8, 8)
    Ghat = M + M.T
    v = np.array(monomial_vector(basis, list(ZERO[0]) + list(ZERO[1])), dtype=object)
    assert v.dot(face.lift(Ghat)).dot(v) == 0


def test_zero_splits_by_bidegree():
    # a zero (x, y) kills every bidegree block of the monomial vector separately
    basis = bihomogeneous_monomials(3, 3, 2, 1) + bihomogeneous_monomials(3, 3, 1, 2)
    face = facial_reduce(basis, [ZERO])
    assert face.dim == len(basis) - 2


# -- rounding -------------------------------------------------------------------


def test_round_half():
    G, tau = round_gram(np.array([[0.5]]), 16)
    assert G[0, 0] == Fraction(1, 2) and tau == 0.0


def test_round_third():
    G, tau = round_gram(np.array([[1 / 3]]), 16)
    assert G[0, 0] == Fraction(21845, 65536)
    assert abs(float(G[0, 0]) - 1 / 3) < 2 ** -17


def test_round_dyadic_identity():
    D = np.array([[0.25, -0.125], [-0.125, 3.0]])
    G, tau = round_gram(D, 16)
    assert tau == 0.0
    assert np.array_equal(G.astype(float), D)


# -- projection -------------------------------------------------------------------


def simple_system():
    # unknowns z0, z1, z2 with z0 + z1 = 1, z1 - z2 = 0
    rows = [{0: Fraction(1), 1: Fraction(1)}, {1: Fraction(1), 2: Fraction(-1)}]
    return rows, [Fraction(1), Fraction(0)]


def test_projection_fixes_feasible_points():
    rows, b = simple_system()
    z = [Fraction(1, 3), Fraction(2, 3), Fraction(2, 3)]
    assert project_affine(z, rows, b) == z


def test_projection_restores_constraints():
    rows, b = simple_system()
    z0 = [Fraction(1, 3), Fraction(2, 3), Fraction(2, 3)]
    z = list(z0)
    z[0] += Fraction(1, 1000)
    zp = project_affine(z, rows, b)
    for row, bb in zip(rows, b):
        assert sum(v * zp[c] for c, v in row.items()) == bb
    moved = np.sqrt(sum(float(a - c) ** 2 for a, c in zip(zp, z)))
    # orthogonal projection moves no further than the perturbation
    assert moved <= 1e-3


def test_projection_handles_redundant_rows():
    rows, b = simple_system()
    rows = rows + [{0: Fraction(2), 1: Fraction(2)}]
    b = b + [Fraction(2)]
    zp = project_affine([Fraction(0)] * 3, rows, b)
    assert zp[0] + zp[1] == 1 and zp[1] == zp[2]


# -- LDL ------------------------------------------------------------------------


def test_ldl_psd_and_not():
    assert ldl_pivots(np.array([[2, 1], [1, 2]], dtype=object)) is not None
    assert ldl_pivots(np.array([[1, 2], [2, 1]], dtype=object)) is None
    assert ldl_pivots(np.array([[1, 1], [1, 1]], dtype=object)) == [1, 0]
    assert ldl_pivots(np.array([[0, 1], [1, 0]], dtype=object)) is None


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(-4, 4), min_size=12, max_size=12), st.integers(-3, 3))
def test_ldl_agrees_with_eigenvalues(vals, shift):
    B = np.array(vals, dtype=object).reshape(4, 3)
    M = B.dot(B.T) + shift * np.eye(4, dtype=int).astype(object)
    ev = np.linalg.eigvalsh(M.astype(float))[0]
    piv = ldl_pivots(M)
    if ev > 1e-9:
        assert piv is not None and all(p > 0 for p in piv)
    elif ev < -1e-9:
        assert piv is None


# -- end to end -----------------------------------------------------------------


@pytest.fixture(scope="module")
def exact_cert(rational_cnr_result):
    r = rational_cnr_result
    return certify_rational(r.F, r.certificate, r.zeros)


def test_exact_certificate_reconstructs(rational_cnr_result, exact_cert):
    F = rational_cnr_result.F
    assert exact_residual(F, exact_cert) == 0
    assert ldl_pivots(exact_cert.gram_face) is not None
    assert verify_exact(F, exact_cert)


def test_perturbation_bound_reported(exact_cert):
    c = exact_cert
    assert c.mu > 0
    assert c.bound_holds == (c.tau ** 2 + c.eps ** 2 <= c.mu ** 2)
    assert c.bound_holds


def test_exact_certificate_json_roundtrip(rational_cnr_result, exact_cert):
    d = json.loads(json.dumps(exact_cert.to_dict()))
    back = ExactCertificate.from_dict(d)
    assert verify_exact(rational_cnr_result.F, back)
    d["gram_face"][0][0] = str(Fraction(d["gram_face"][0][0]) + 1)
    assert not verify_exact(rational_cnr_result.F, ExactCertificate.from_dict(d))


def test_float_form_rejected(cnr_result):
    with pytest.raises(ModeMismatch):
        certify_rational(cnr_result.F, cnr_result.certificate, cnr_result.zeros)


def test_unsupported_method(rational_cnr_result):
    r = rational_cnr_result
    cert = GramCertificate.from_dict(dict(r.certificate.to_dict(), method="kkt"))
    with pytest.raises(RationalizationError) as info:
        certify_rational(r.F, cert, r.zeros)
    assert info.value.reason == UNSUPPORTED


def test_rounding_params_validated():
    with pytest.raises(ValueError):
        RoundingParams(bits=0)
