import json
from fractions import Fraction

import numpy as np
import pytest

from pncp import exact
from pncp.construct import (
    ConstructionConfig,
    _hessian,
    assemble_F,
    build_bilinear_forms,
    build_residual_f,
    ideal_slice_rows,
    in_ideal_slice,
    local_threshold,
    sample_zero_points,
    second_order_conditions,
    slice_distance,
    zero_count,
)
from pncp.errors import DimensionMismatch, ModeMismatch
from pncp.polyalg import RATIONAL, BilinearForm, biform_keys, gradient, sum_of_squares_of
from pncp.relax import INFEASIBLE, is_sos
from pncp.sdpcore import FEASIBLE


def steps_1_to_3(cfg):
    rng = cfg.rng()
    pts = sample_zero_points(cfg, rng)
    hs = build_bilinear_forms(cfg, pts, rng)
    f = build_residual_f(cfg, pts, hs, rng)
    return pts, hs, f


@pytest.fixture(scope="module")
def rational_parts():
    return steps_1_to_3(ConstructionConfig(seed=3, mode=RATIONAL))


@pytest.fixture(scope="module")
def float_parts():
    return steps_1_to_3(ConstructionConfig(seed=3))


# -- config ---------------------------------------------------------------------


@pytest.mark.parametrize("n,m", [(2, 3), (3, 2), (1, 5)])
def test_small_dimensions_rejected(n, m):
    with pytest.raises(DimensionMismatch):
        ConstructionConfig(n=n, m=m)


def test_derived_sizes():
    cfg = ConstructionConfig(n=3, m=4)
    assert (cfg.d, cfg.N) == (5, 7)
    assert zero_count(3, 4) == 6


# -- step 1 -----------------------------------------------------------------------


def test_zero_points_deterministic():
    cfg = ConstructionConfig(seed=42)
    assert sample_zero_points(cfg) == sample_zero_points(cfg)


def test_rational_points_are_small_nonzero_integers():
    for seed in range(10):
        for x, y in sample_zero_points(ConstructionConfig(seed=seed, mode=RATIONAL)):
            for v in x + y:
                assert isinstance(v, Fraction) and v.denominator == 1
                assert 1 <= abs(v) <= 5


def test_float_points_are_unit_vectors():
    for x, y in sample_zero_points(ConstructionConfig(seed=1)):
        assert np.linalg.norm(x) == pytest.approx(1.0)
        assert np.linalg.norm(y) == pytest.approx(1.0)


# -- step 2 -----------------------------------------------------------------------


def test_forms_vanish_at_every_zero(rational_parts):
    pts, hs, _ = rational_parts
    for h in hs:
        for x, y in pts:
            assert h.evaluate(x, y) == 0


def test_form_count_and_rank(rational_parts):
    pts, hs, _ = rational_parts
    cfg = ConstructionConfig()
    assert len(hs) == cfg.n + cfg.m - 1
    assert exact.rank([h.flat() for h in hs]) == cfg.d + 1


def test_forms_span_all_vanishing_forms(rational_parts):
    # the vanishing space has dimension nm - (n-1)(m-1) = d + 1
    pts, hs, _ = rational_parts
    rows = [[x[i] * y[j] for i in range(3) for j in range(3)] for x, y in pts]
    assert len(exact.nullspace(rows)) == len(hs)


# -- step 3 -----------------------------------------------------------------------


def test_f_vanishes_to_second_order(rational_parts):
    pts, _, f = rational_parts
    for x, y in pts:
        assert f.evaluate(x, y) == 0
        assert all(g == 0 for g in gradient(f, list(x) + list(y)))


def test_f_is_not_sos(float_parts):
    assert is_sos(float_parts[2]).status == INFEASIBLE


def test_f_outside_ideal_slice(rational_parts, float_parts):
    for pts, hs, f in (rational_parts, float_parts):
        assert not in_ideal_slice(f, hs)
        assert slice_distance(f, hs) > 0.1


def test_slice_lives_in_36_dims(rational_parts):
    _, hs, _ = rational_parts
    rows = ideal_slice_rows(hs)
    assert all(len(r) == 36 for r in rows)
    assert len(biform_keys(3, 3)) == 36


def test_squares_lie_in_slice(rational_parts):
    _, hs, _ = rational_parts
    assert in_ideal_slice(sum_of_squares_of(hs), hs)


def test_monomial_multiples_contain_every_second_order_form():
    # span{h_i * x_a y_b} already contains every form vanishing to second
    # order at one point, so that test could never reject an f
    x, y = (Fraction(1), Fraction(2), Fraction(-1)), (Fraction(3), Fraction(1), Fraction(1))
    rows = [[x[i] * y[j] for i in range(3) for j in range(3)]]
    hs = [BilinearForm(tuple(tuple(v.reshape(3, 3)[i]) for i in range(3)), RATIONAL)
          for v in (np.array(b, dtype=object) for b in exact.nullspace(rows))]
    span = []
    for h in hs:
        for a in range(3):
            for b in range(3):
                mono = [[Fraction(int(i == a and j == b)) for j in range(3)] for i in range(3)]
                span.append(h.product(BilinearForm(tuple(map(tuple, mono)), RATIONAL)).vector())
    second_order = exact.nullspace(second_order_conditions([(x, y)]))
    assert exact.rank(span) == exact.rank(span + second_order)


# -- step 4 -----------------------------------------------------------------------


def test_delta_zero_gives_sum_of_squares(float_parts):
    _, hs, f = float_parts
    F = assemble_F(f, hs, 0.0)
    assert F == sum_of_squares_of(hs)
    assert is_sos(F).status == FEASIBLE


def test_assembled_form_vanishes_for_any_delta(rational_parts):
    pts, hs, f = rational_parts
    for t in range(7):
        F = assemble_F(f, hs, Fraction(1, 2 ** t))
        for x, y in pts:
            assert F.evaluate(x, y) == 0
            assert all(g == 0 for g in gradient(F, list(x) + list(y)))


def test_assembled_form_is_biquadratic(float_parts):
    _, hs, f = float_parts
    P = assemble_F(f, hs, 0.5).to_polynomial()
    assert all(sum(e[:3]) == 2 and sum(e[3:]) == 2 for e in P.terms)


def test_assemble_mode_mismatch(rational_parts, float_parts):
    with pytest.raises(ModeMismatch):
        assemble_F(float_parts[2], rational_parts[1], 1.0)


def test_later_forms_vanish_on_seeded_runs():
    for seed in range(50):
        cfg = ConstructionConfig(seed=seed)
        rng = cfg.rng()
        pts = sample_zero_points(cfg, rng)
        hs = build_bilinear_forms(cfg, pts, rng)
        H = sum_of_squares_of(hs)
        for x, y in pts:
            assert abs(H.evaluate(x, y)) < 1e-12


# -- local threshold ---------------------------------------------------------------


def test_local_threshold_is_sharp(float_parts):
    # just above the bound the Hessian of F at some zero has a negative
    # tangent direction, just below it does not
    pts, hs, f = float_parts
    H = sum_of_squares_of(hs)
    lam = local_threshold(f, H, pts)
    assert np.isfinite(lam) and lam > 0

    def worst_tangent_eig(delta):
        F = assemble_F(f, hs, delta)
        worst = np.inf
        for x, y in pts:
            K = np.zeros((6, 2))
            K[:3, 0], K[3:, 1] = x, y
            Q = np.linalg.svd(K.T)[2][2:].T
            worst = min(worst, np.linalg.eigvalsh(Q.T @ _hessian(F, list(x) + list(y)) @ Q)[0])
        return worst

    assert worst_tangent_eig(1.01 * lam) < 0
    assert worst_tangent_eig(0.99 * lam) > -1e-9


def test_f_rescaled_to_target_threshold(float_parts):
    pts, hs, f = float_parts
    lam = local_threshold(f, sum_of_squares_of(hs), pts)
    assert 4 / np.sqrt(2) <= lam <= 4 * np.sqrt(2)


# -- results -------------------------------------------------------------------------


def test_result_serialises(cnr_result):
    d = json.loads(json.dumps(cnr_result.to_dict()))
    assert d["type"] == "construction"
    assert len(d["zeros"]) == zero_count(3, 3)
    assert len(d["forms"]) == 5


def test_result_identity(cnr_result):
    r = cnr_result
    assert r.F == assemble_F(r.f, r.hs, r.delta)
    for x, y in r.zeros:
        assert abs(r.F.evaluate(x, y)) < 1e-10
    assert r.final_sos_status == INFEASIBLE
