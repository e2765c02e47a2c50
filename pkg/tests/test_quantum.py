from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pncp.construct import ConstructionConfig
from pncp.errors import DimensionMismatch
from pncp.polyalg import RATIONAL, PncpMap
from pncp.quantum import (
    ENTANGLED,
    INCONCLUSIVE,
    UNKNOWN,
    DensityMatrix,
    ampliate,
    detect_entanglement,
    min_eigenvalue_verdict,
    partial_transpose,
    ppt_check,
    product_state,
    purity,
)

from conftest import frac_matrix
from reference_data import (
    EXAMPLE1_AMPLIATION_X6,
    EXAMPLE1_EIGENVALUES,
    EXAMPLE2_AMPLIATION_X120,
    EXAMPLE2_EIGENVALUES,
)


def rational_eye(k):
    return np.array([[Fraction(int(i == j)) for j in range(k)] for i in range(k)], dtype=object)


# -- states -------------------------------------------------------------------


def test_purities(bell, sigma_state):
    assert purity(bell) == 1
    assert purity(sigma_state) == Fraction(1, 5)
    mixed = DensityMatrix((2, 2), rational_eye(4) / 4, RATIONAL)
    assert purity(mixed) == Fraction(1, 4)


def test_state_validation():
    with pytest.raises(DimensionMismatch):
        DensityMatrix((2, 2), np.eye(3) / 3)
    with pytest.raises(ValueError, match="trace"):
        DensityMatrix((2, 2), np.eye(4) / 2)
    with pytest.raises(ValueError, match="symmetric"):
        DensityMatrix((1, 2), np.array([[0.5, 0.1], [0.0, 0.5]]))
    with pytest.raises(ValueError, match="semidefinite"):
        DensityMatrix((1, 2), frac_matrix([[2, 0], [0, -1]]), RATIONAL)


def test_state_json_roundtrip(sigma_state):
    back = DensityMatrix.from_dict(sigma_state.to_dict())
    assert back.dims == (4, 3)
    assert np.array_equal(back.matrix, sigma_state.matrix)


# -- ampliation ------------------------------------------------------------------


def test_example1_ampliation_exact(phi1, delta_state):
    out = ampliate(phi1, delta_state)
    assert np.array_equal(out, frac_matrix(EXAMPLE1_AMPLIATION_X6, Fraction(1, 6)))
    ev = np.linalg.eigvalsh(out.astype(float))
    assert np.allclose(ev, EXAMPLE1_EIGENVALUES, atol=0.01)


def test_example2_ampliation_exact(phi2, sigma_state):
    out = ampliate(phi2, sigma_state)
    assert out.shape == (12, 12)
    assert np.array_equal(out, frac_matrix(EXAMPLE2_AMPLIATION_X120, Fraction(1, 120)))
    ev = np.linalg.eigvalsh(out.astype(float))
    assert ev[0] == pytest.approx(-0.14, abs=0.01)
    # the listed 0.00 hides a small eigenvalue, not necessarily an exact zero
    assert abs(ev[1]) <= 0.005
    assert np.allclose(ev, EXAMPLE2_EIGENVALUES, atol=0.01)


def test_identity_map_fixes_state(sigma_state):
    diag = []
    for i in range(3):
        D = np.zeros((3, 3), dtype=object)
        D[i, i] = Fraction(1)
        diag.append(D)
    off = {}
    for i in range(3):
        for j in range(i + 1, 3):
            D = np.zeros((3, 3), dtype=object)
            D[i, j] = D[j, i] = Fraction(1)
            off[(i, j)] = D
    identity = PncpMap(3, 3, tuple(diag), off, RATIONAL)
    assert np.array_equal(ampliate(identity, sigma_state), sigma_state.matrix)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 3), st.fractions(min_value=0, max_value=1))
def test_ampliation_is_linear(phi_seed, t):
    rng = np.random.default_rng(phi_seed)
    a = [DensityMatrix((2, 3), m, RATIONAL) for m in (_rational_state(rng), _rational_state(rng))]
    mix = DensityMatrix((2, 3), t * a[0].matrix + (1 - t) * a[1].matrix, RATIONAL)
    phi = _integer_map(rng)
    lhs = ampliate(phi, mix)
    rhs = t * ampliate(phi, a[0]) + (1 - t) * ampliate(phi, a[1])
    assert np.array_equal(lhs, rhs)


def _rational_state(rng):
    B = rng.integers(-3, 4, size=(6, 6))
    M = B @ B.T + np.eye(6, dtype=int)
    M = np.array([[Fraction(int(v)) for v in row] for row in M], dtype=object)
    return M / sum(M[i, i] for i in range(6))


def _integer_map(rng):
    def sym():
        B = rng.integers(-3, 4, size=(3, 3))
        return np.array([[Fraction(int(v)) for v in row] for row in B + B.T], dtype=object)

    return PncpMap(3, 3, (sym(), sym(), sym()), {(0, 1): sym(), (0, 2): sym(), (1, 2): sym()}, RATIONAL)


def test_first_factor_matches_swapped_second(phi1, sigma_state):
    # sigma lives on R^4 (x) R^3; swap to R^3 (x) R^4 and act on the first factor
    n, m = sigma_state.dims
    swapped = sigma_state.matrix.reshape(n, m, n, m).transpose(1, 0, 3, 2).reshape(n * m, n * m)
    rho = DensityMatrix((m, n), swapped, RATIONAL)
    first = ampliate(phi1, rho, factor="first")
    second = ampliate(phi1, sigma_state)
    back = second.reshape(n, 3, n, 3).transpose(1, 0, 3, 2).reshape(n * 3, n * 3)
    assert np.array_equal(first, back)


def test_ampliation_dimension_mismatch(phi1, bell):
    with pytest.raises(DimensionMismatch):
        ampliate(phi1, bell)
    with pytest.raises(ValueError):
        ampliate(phi1, bell, factor="middle")


# -- PPT ---------------------------------------------------------------------------


def test_bell_ppt(bell):
    res = ppt_check(bell)
    assert res.status == ENTANGLED
    assert res.min_eigenvalue == Fraction(-1, 2)


def test_product_state_is_ppt():
    a = frac_matrix([[1, 0], [0, 0]])
    b = frac_matrix([[1, 1], [1, 1]], Fraction(1, 2))
    res = ppt_check(product_state(a, b, RATIONAL))
    assert res.status == INCONCLUSIVE


def test_sigma_is_ppt(sigma_state):
    # the point of the second example: PPT cannot see this entanglement
    assert ppt_check(sigma_state).status == INCONCLUSIVE


def test_partial_transpose_involution(sigma_state):
    PT = partial_transpose(sigma_state)
    again = partial_transpose(DensityMatrix(sigma_state.dims, PT, RATIONAL))
    assert np.array_equal(again, sigma_state.matrix)


def test_exact_verdict_on_singular_matrix():
    # eigenvalue exactly zero is not negative
    neg, lam = min_eigenvalue_verdict(frac_matrix([[1, 1], [1, 1]]))
    assert not neg and lam == 0


# -- detection ---------------------------------------------------------------------


def test_examples_detected(phi1, phi2, delta_state, sigma_state):
    r1 = detect_entanglement(delta_state, maps=[phi1])
    assert r1.status == ENTANGLED and float(r1.min_eigenvalue) < -8
    r2 = detect_entanglement(sigma_state, maps=[phi2])
    assert r2.status == ENTANGLED and float(r2.min_eigenvalue) == pytest.approx(-0.14, abs=0.01)


def test_separable_state_unknown():
    rng = np.random.default_rng(2)
    a, b = rng.normal(size=3), rng.normal(size=3)
    a, b = np.outer(a, a) / a.dot(a), np.outer(b, b) / b.dot(b)
    rep = detect_entanglement(product_state(a, b), attempts=2, cfg=ConstructionConfig(seed=0))
    assert rep.status == UNKNOWN
    assert rep.attempts_used == 2


def test_detect_dimension_mismatch(bell):
    with pytest.raises(DimensionMismatch):
        detect_entanglement(bell, attempts=1, cfg=ConstructionConfig(seed=0))


def test_detect_needs_an_attempt(bell):
    with pytest.raises(ValueError):
        detect_entanglement(bell, attempts=0)
