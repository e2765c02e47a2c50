"""Random construction of nonnegative, non-SOS biforms ``F = delta f + sum h_i^2``
with a designed zero, and the positive maps they define."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import List, Optional

import numpy as np
import scipy.linalg as sla

from . import exact
from .errors import DimensionMismatch, ExhaustedAttempts, FinalFormIsSos, IndependenceFailure, ModeMismatch
from .polyalg import (
    FLOAT,
    RATIONAL,
    Biform,
    BilinearForm,
    PncpMap,
    biform_keys,
    biform_to_dict,
    biform_to_map,
    format_scalar,
    map_to_dict,
    sum_of_squares_of,
)
from .relax import INFEASIBLE, METHODS, CertifyOutcome, MethodParams, find_delta, is_sos

log = logging.getLogger(__name__)

# f is rescaled (by a power of two) so that its local nonnegativity threshold
# at the designed zeros is about LOCAL_TARGET
LOCAL_TARGET = 4
# integer mixing weights above this condition number are redrawn (rational mode)
MAX_WEIGHT_COND = 8.0
# minimal relative distance of f from the ideal slice
SLICE_MARGIN = 0.1


@dataclass(frozen=True)
class ConstructionConfig:
    n: int = 3
    m: int = 3
    seed: int = 0
    mode: str = FLOAT
    attempts: int = 10
    delta_floor_exp: int = 6
    local_target: float = LOCAL_TARGET

    def __post_init__(self):
        if self.n < 3 or self.m < 3:
            raise DimensionMismatch(f"need n, m >= 3, got ({self.n}, {self.m})")
        if self.mode not in (FLOAT, RATIONAL):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.attempts < 1:
            raise ValueError("attempts must be positive")

    @property
    def d(self) -> int:
        return self.n + self.m - 2

    @property
    def N(self) -> int:
        return self.n + self.m

    def rng(self) -> np.random.Generator:
        return np.random.default_rng(self.seed & 0xFFFFFFFFFFFFFFFF)


@dataclass
class ConstructionResult:
    cfg: ConstructionConfig
    method: str
    zeros: tuple  # ((x, y), ...)
    hs: List[BilinearForm]
    f: Biform
    delta: object
    F: Biform
    outcome: CertifyOutcome
    final_sos_status: str = INFEASIBLE
    attempts_used: int = 1

    @property
    def certificate(self):
        return self.outcome.certificate

    @property
    def x0(self):
        return self.zeros[0][0]

    @property
    def y0(self):
        return self.zeros[0][1]

    @property
    def map(self) -> PncpMap:
        return biform_to_map(self.F)

    def to_dict(self) -> dict:
        cert = self.outcome.certificate
        return {
            "type": "construction",
            "n": self.cfg.n,
            "m": self.cfg.m,
            "seed": self.cfg.seed,
            "mode": self.cfg.mode,
            "method": self.method,
            "order": self.outcome.order,
            "delta": format_scalar(self.delta),
            "zeros": [{"x": [format_scalar(v) for v in x], "y": [format_scalar(v) for v in y]} for x, y in self.zeros],
            "forms": [[[format_scalar(v) for v in row] for row in h.H] for h in self.hs],
            "f": biform_to_dict(self.f),
            "form": biform_to_dict(self.F),
            "map": map_to_dict(self.map),
            "attempts_used": self.attempts_used,
            "certificate": None if cert is None else cert.to_dict(),
        }


# ---------------------------------------------------------------------------
# step 1


def zero_count(n: int, m: int) -> int:
    """Number of designed zeros: the bilinear forms through them span d+1 dimensions."""
    return (n - 1) * (m - 1)


def sample_zero_points(cfg: ConstructionConfig, rng: Optional[np.random.Generator] = None):
    """``(n-1)(m-1)`` points ``(x, y)`` in general position."""
    rng = cfg.rng() if rng is None else rng
    count = zero_count(cfg.n, cfg.m)
    choices = np.array([-5, -4, -3, -2, -1, 1, 2, 3, 4, 5])
    while True:
        pts = []
        for _ in range(count):
            if cfg.mode == FLOAT:
                x = rng.standard_normal(cfg.n)
                y = rng.standard_normal(cfg.m)
                nx, ny = np.linalg.norm(x), np.linalg.norm(y)
                if nx == 0 or ny == 0:
                    break
                pts.append((tuple(float(v) for v in x / nx), tuple(float(v) for v in y / ny)))
            else:
                x = tuple(Fraction(int(v)) for v in rng.choice(choices, cfg.n))
                y = tuple(Fraction(int(v)) for v in rng.choice(choices, cfg.m))
                pts.append((x, y))
        if len(pts) == count and _independent(_point_rows(pts), cfg.mode):
            return tuple(pts)


def _point_rows(points) -> List[list]:
    return [[x[i] * y[j] for i in range(len(x)) for j in range(len(y))] for x, y in points]


def _independent(rows, mode) -> bool:
    if mode == FLOAT:
        return _float_rank(rows) == len(rows)
    return exact.rank(rows) == len(rows)


# ---------------------------------------------------------------------------
# step 2


def vanishing_bilinear_basis(points, mode: str) -> List[np.ndarray]:
    """Basis of ``{H : x^T H y = 0 for every zero (x, y)}`` as n x m matrices
    (orthonormal in float mode, LLL-reduced integer in rational mode)."""
    n, m = len(points[0][0]), len(points[0][1])
    rows = _point_rows(points)
    if mode == FLOAT:
        Nsp = sla.null_space(np.array(rows, dtype=float))
        return [Nsp[:, t].reshape(n, m) for t in range(Nsp.shape[1])]
    basis = exact.lll_reduce(exact.nullspace(rows))
    return [np.array(v, dtype=object).reshape(n, m) for v in basis]


def _weights(cfg: ConstructionConfig, rng, count: int, size: int):
    if cfg.mode == FLOAT:
        # a random orthogonal mixing keeps sum h_i^2 as well conditioned as the span allows
        Q, R = np.linalg.qr(rng.standard_normal((count, size)).T)
        return (Q * np.sign(np.diag(R))).T
    return rng.integers(-3, 4, size=(count, size))


def build_bilinear_forms(cfg: ConstructionConfig, points, rng: Optional[np.random.Generator] = None) -> List[BilinearForm]:
    rng = cfg.rng() if rng is None else rng
    basis = vanishing_bilinear_basis(points, cfg.mode)
    count = cfg.d + 1
    best = None
    for _ in range(10):
        W = _weights(cfg, rng, count, len(basis))
        if cfg.mode == FLOAT:
            mats = [sum(W[t, s] * basis[s] for s in range(len(basis))) for t in range(count)]
            flat = np.array([M.ravel() for M in mats])
            ok = np.linalg.matrix_rank(flat, tol=1e-9 * max(1.0, np.abs(flat).max())) == count
        else:
            mats = [sum(int(W[t, s]) * basis[s] for s in range(len(basis))) for t in range(count)]
            ok = exact.rank([list(M.ravel()) for M in mats]) == count
        if not ok:
            continue
        cond = np.linalg.cond(np.asarray(W, dtype=float))
        if best is None or cond < best[0]:
            best = (cond, mats)
        if cond <= MAX_WEIGHT_COND:
            break
    if best is None:
        raise IndependenceFailure("could not draw linearly independent bilinear forms in 10 tries")
    return [BilinearForm(tuple(tuple(row) for row in M.tolist()), cfg.mode) for M in best[1]]


# ---------------------------------------------------------------------------
# step 3


def _biform_from_vector(n, m, vec, mode) -> Biform:
    return Biform.from_vector(n, m, list(vec), mode)


def second_order_conditions(points) -> List[list]:
    """Rows of ``f(p) = 0, grad f(p) = 0`` on biform coefficients, for every zero ``p``."""
    out = []
    for x, y in points:
        n, m = len(x), len(y)
        value = []
        grads = [[] for _ in range(n + m)]
        for i, j, k, l in biform_keys(n, m):
            value.append(x[i] * x[j] * y[k] * y[l])
            for a in range(n):
                da = (i == a) * x[j] + (j == a) * x[i]
                grads[a].append(da * y[k] * y[l])
            for b in range(m):
                db = (k == b) * y[l] + (l == b) * y[k]
                grads[n + b].append(x[i] * x[j] * db)
        out.extend([value] + grads)
    return out


def ideal_slice_rows(hs: List[BilinearForm]) -> List[list]:
    """Coefficient vectors of the products ``h_i h_j``.

    Every bilinear form vanishing at the designed zeros is a combination of the
    h_i, so these span all of ``<h> * (forms through the zeros)`` in bidegree (2,2).
    """
    rows = []
    for a in range(len(hs)):
        for b in range(a, len(hs)):
            rows.append(hs[a].product(hs[b]).vector())
    return rows


def _float_rank(rows) -> int:
    A = np.array(rows, dtype=float)
    s = np.linalg.svd(A, compute_uv=False)
    return int(np.sum(s > 1e-9 * s[0]))


def in_ideal_slice(f: Biform, hs) -> bool:
    rows = ideal_slice_rows(hs)
    if f.mode == FLOAT:
        return _float_rank(rows + [f.vector()]) == _float_rank(rows)
    return exact.rank(rows + [f.vector()]) == exact.rank(rows)


def slice_distance(f: Biform, hs) -> float:
    """Relative distance of f from the ideal slice (0 when inside)."""
    R = np.array(ideal_slice_rows(hs), dtype=float).T
    v = np.array(f.to_float().vector())
    c, *_ = np.linalg.lstsq(R, v, rcond=None)
    return float(np.linalg.norm(R @ c - v) / np.linalg.norm(v))


def build_residual_f(cfg: ConstructionConfig, points, hs, rng: Optional[np.random.Generator] = None) -> Biform:
    rng = cfg.rng() if rng is None else rng
    cond = second_order_conditions(points)
    if cfg.mode == FLOAT:
        Nsp = sla.null_space(np.array(cond, dtype=float))
        basis = [Nsp[:, t] for t in range(Nsp.shape[1])]
    else:
        basis = [np.array(v, dtype=object) for v in exact.nullspace(cond)]
    H = sum_of_squares_of(hs)
    for attempt in range(cfg.attempts):
        if cfg.mode == FLOAT:
            w = rng.standard_normal(len(basis))
            vec = sum(w[t] * basis[t] for t in range(len(basis)))
        else:
            w = rng.integers(-3, 4, size=len(basis))
            vec = sum(int(w[t]) * basis[t] for t in range(len(basis)))
        f = _biform_from_vector(cfg.n, cfg.m, vec, cfg.mode)
        if f.is_zero():
            continue
        f = _rescale(f, H, points, cfg)
        if in_ideal_slice(f, hs) or slice_distance(f, hs) < SLICE_MARGIN:
            # every certificate of the final form lives on the slice, so f
            # must stay visibly away from it
            log.debug("f attempt %d lies in or near the ideal slice", attempt)
            continue
        if is_sos(f).status != INFEASIBLE:
            log.debug("f attempt %d not shown to be non-SOS", attempt)
            continue
        return f
    raise ExhaustedAttempts(f"no admissible f in {cfg.attempts} attempts")


def _hessian(F: Biform, point) -> np.ndarray:
    P = F.to_float().to_polynomial()
    first = [P.derivative(i) for i in range(P.nvars)]
    return np.array([[first[i].derivative(j).evaluate(point) for j in range(P.nvars)] for i in range(P.nvars)])


def local_threshold(f: Biform, H: Biform, points) -> float:
    """Largest delta keeping ``delta f + H`` locally nonnegative at every designed zero.

    At a zero both Hessians act on the tangent space of the product of
    spheres; the bound is the smallest ``-1/lambda`` over negative generalized
    eigenvalues of (Hess f, Hess H).  An upper bound for the true threshold.
    """
    best = math.inf
    for x, y in points:
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        n, m = len(x), len(y)
        K = np.zeros((n + m, 2))
        K[:n, 0] = x
        K[n:, 1] = y
        Q = sla.null_space(K.T)
        p = list(x) + list(y)
        A = Q.T @ _hessian(H, p) @ Q
        B = Q.T @ _hessian(f, p) @ Q
        try:
            ev = sla.eigh(0.5 * (B + B.T), 0.5 * (A + A.T), eigvals_only=True)
        except (np.linalg.LinAlgError, ValueError):
            return math.nan
        if ev[0] < 0:
            best = min(best, -1.0 / ev[0])
    return best


def _rescale(f: Biform, H: Biform, points, cfg: ConstructionConfig) -> Biform:
    """Scale f by a power of two so its local threshold is about ``cfg.local_target``.

    The global threshold is at most the local one, so this places the
    halving schedule 1, 1/2, ... just below where nonnegativity can break.
    Falls back to coefficient-size matching when the local bound is
    unavailable.
    """
    lam = local_threshold(f, H, points)
    if math.isfinite(lam) and lam > 0:
        ratio = lam / float(cfg.local_target)
    else:
        ratio = H.to_float().max_abs_coeff() / f.to_float().max_abs_coeff()
    t = int(round(math.log2(ratio)))
    c = Fraction(2) ** t if cfg.mode == RATIONAL else 2.0 ** t
    return f.scale(c)


# ---------------------------------------------------------------------------
# step 4


def assemble_F(f: Biform, hs, delta) -> Biform:
    if any(h.mode != f.mode for h in hs):
        raise ModeMismatch("f and the bilinear forms use different modes")
    if float(delta) < 0:
        raise ValueError("delta must be nonnegative")
    return f.scale(delta) + sum_of_squares_of(hs)


def construct_pncp(cfg: ConstructionConfig, method: str = "hilbert", params: Optional[MethodParams] = None) -> ConstructionResult:
    """Steps 1-3, the delta search, and the final non-SOS check.

    Raises NoDeltaFound when the search fails and FinalFormIsSos when every
    attempt ended with an SOS form.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}")
    params = params or MethodParams(method, delta_exponents=tuple(range(cfg.delta_floor_exp + 1)))
    rng = cfg.rng()
    last_reason = ""
    last = None
    for attempt in range(1, cfg.attempts + 1):
        points = sample_zero_points(cfg, rng)
        hs = build_bilinear_forms(cfg, points, rng)
        try:
            f = build_residual_f(cfg, points, hs, rng)
        except ExhaustedAttempts as exc:
            last_reason = str(exc)
            continue
        delta, outcome = find_delta(f, hs, method, params)
        F = assemble_F(f, hs, delta)
        final = is_sos(F, params.tol).status
        if final != INFEASIBLE:
            last_reason = f"final form SOS test returned {final}"
            last = outcome
            log.info("attempt %d rejected: %s", attempt, last_reason)
            continue
        return ConstructionResult(cfg, method, points, hs, f, delta, F, outcome, final, attempt)
    raise FinalFormIsSos(f"all {cfg.attempts} attempts rejected ({last_reason})", last)
