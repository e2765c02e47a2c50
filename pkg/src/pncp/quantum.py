"""Density matrices, ampliations of maps, the PPT test and map-based
entanglement detection."""
from __future__ import annotations

import functools
import json
import logging
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import List, Optional, Sequence

import numpy as np

from . import exact
from .construct import ConstructionConfig, construct_pncp
from .errors import DimensionMismatch, PncpError
from .polyalg import FLOAT, RATIONAL, PncpMap, matrix_from_json, matrix_to_json
from .rationalize import ldl_pivots

log = logging.getLogger(__name__)

ENTANGLED = "Entangled"
INCONCLUSIVE = "Inconclusive"
UNKNOWN = "Unknown"

EIG_TOL = 1e-9
# float eigenvalues this close to -EIG_TOL are re-decided exactly (rational inputs)
GUARD_BAND = 1e-9


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    dims: tuple
    matrix: np.ndarray
    mode: str = FLOAT

    def __post_init__(self):
        n, m = (int(d) for d in self.dims)
        M = np.array(self.matrix, dtype=object if self.mode == RATIONAL else float)
        if self.mode == RATIONAL:
            M = np.vectorize(Fraction, otypes=[object])(M)
        if M.shape != (n * m, n * m):
            raise DimensionMismatch(f"dims {n}x{m} need a {n * m}x{n * m} matrix, got {M.shape}")
        if not all(M[i, j] == M[j, i] for i in range(n * m) for j in range(i)):
            raise ValueError("density matrix must be symmetric")
        tr = sum(M[i, i] for i in range(n * m))
        if self.mode == RATIONAL:
            if tr != 1:
                raise ValueError(f"trace is {tr}, expected 1")
            if ldl_pivots(M) is None:
                raise ValueError("density matrix is not positive semidefinite")
        else:
            if abs(tr - 1) > 1e-12:
                raise ValueError(f"trace is {tr}, expected 1")
            if np.linalg.eigvalsh(M)[0] < -1e-8:
                raise ValueError("density matrix is not positive semidefinite")
        object.__setattr__(self, "dims", (n, m))
        object.__setattr__(self, "matrix", M)

    @property
    def size(self) -> int:
        return self.dims[0] * self.dims[1]

    def to_float(self) -> "DensityMatrix":
        return DensityMatrix(self.dims, self.matrix.astype(float), FLOAT)

    def to_dict(self) -> dict:
        return {"type": "density", "dims": list(self.dims), "mode": self.mode, "matrix": matrix_to_json(self.matrix)}

    @classmethod
    def from_dict(cls, d: dict) -> "DensityMatrix":
        mode = d.get("mode", FLOAT)
        return cls(tuple(d["dims"]), matrix_from_json(d["matrix"], mode), mode)

    @classmethod
    def load(cls, path) -> "DensityMatrix":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def product_state(a: np.ndarray, b: np.ndarray, mode: str = FLOAT) -> DensityMatrix:
    return DensityMatrix((a.shape[0], b.shape[0]), np.kron(np.asarray(a, dtype=object if mode == RATIONAL else float),
                                                           np.asarray(b, dtype=object if mode == RATIONAL else float)), mode)


def purity(rho: DensityMatrix):
    M = rho.matrix
    return sum(M[i, j] * M[j, i] for i in range(rho.size) for j in range(rho.size))


# ---------------------------------------------------------------------------
# ampliation


def _common(phi: PncpMap, rho: DensityMatrix):
    if phi.mode == RATIONAL and rho.mode == RATIONAL:
        return phi, rho.matrix, RATIONAL
    return (phi.to_float() if phi.mode == RATIONAL else phi), rho.matrix.astype(float), FLOAT


def _swap_factors(M: np.ndarray, a: int, b: int) -> np.ndarray:
    """Reorder a matrix on R^a (x) R^b into one on R^b (x) R^a."""
    T = M.reshape(a, b, a, b).transpose(1, 0, 3, 2)
    return T.reshape(a * b, a * b)


def ampliate(phi: PncpMap, rho: DensityMatrix, factor: str = "second") -> np.ndarray:
    """``(I (x) Phi)(rho)``; with ``factor="first"`` the map acts on the first factor."""
    n_r, m_r = rho.dims
    if factor == "first":
        if n_r != phi.n:
            raise DimensionMismatch(f"map acts on {phi.n}x{phi.n}, first factor has size {n_r}")
        swapped = DensityMatrix((m_r, n_r), _swap_factors(rho.matrix, n_r, m_r), rho.mode)
        out = ampliate(phi, swapped, "second")
        return _swap_factors(out, m_r, phi.m)
    if factor != "second":
        raise ValueError(f"factor must be 'first' or 'second', not {factor!r}")
    if m_r != phi.n:
        raise DimensionMismatch(f"map acts on {phi.n}x{phi.n}, second factor has size {m_r}")
    phi, M, mode = _common(phi, rho)
    k = phi.m
    out = np.zeros((n_r * k, n_r * k), dtype=object if mode == RATIONAL else float)
    for r in range(n_r):
        for s in range(n_r):
            block = M[r * m_r:(r + 1) * m_r, s * m_r:(s + 1) * m_r]
            out[r * k:(r + 1) * k, s * k:(s + 1) * k] = phi.apply(block)
    return out


def partial_transpose(rho: DensityMatrix) -> np.ndarray:
    n, m = rho.dims
    return rho.matrix.reshape(n, m, n, m).transpose(0, 3, 2, 1).reshape(n * m, n * m)


# ---------------------------------------------------------------------------
# eigenvalue verdicts


def _negative_root_count(M) -> int:
    """Negative eigenvalues of a rational symmetric matrix, by Descartes on
    the (real-rooted) characteristic polynomial evaluated at -t."""
    coeffs = exact.charpoly([[Fraction(v) for v in row] for row in M])
    flipped = [c * (-1) ** i for i, c in enumerate(coeffs)]
    signs = [c > 0 for c in flipped if c != 0]
    return sum(1 for a, b in zip(signs, signs[1:]) if a != b)


def _exact_eigenvalue(M, approx: float):
    """``approx`` as an exact rational eigenvalue when one is that close."""
    coeffs = exact.charpoly([[Fraction(v) for v in row] for row in M])
    for bound in (10, 1000, 10 ** 6):
        r = Fraction(approx).limit_denominator(bound)
        if abs(float(r) - approx) < 1e-9 and sum(c * r ** i for i, c in enumerate(coeffs)) == 0:
            return r
    return approx


def min_eigenvalue_verdict(M, eig_tol: float = EIG_TOL):
    """(is_negative, min_eigenvalue) with exact resolution near the threshold.

    For rational matrices the returned eigenvalue is an exact Fraction when the
    minimum is rational."""
    rational = M.dtype == object
    ev = float(np.linalg.eigvalsh(np.asarray(M, dtype=float))[0])
    if not rational:
        return ev < -eig_tol, ev
    value = _exact_eigenvalue(M, ev)
    if abs(ev + eig_tol) > GUARD_BAND and abs(ev) > GUARD_BAND:
        return ev < -eig_tol, value
    negative = _negative_root_count(M) > 0
    return negative, value


@dataclass
class PptResult:
    status: str
    min_eigenvalue: object
    partial_transpose: np.ndarray


def ppt_check(rho: DensityMatrix, eig_tol: float = EIG_TOL) -> PptResult:
    PT = partial_transpose(rho)
    negative, lam = min_eigenvalue_verdict(PT, eig_tol)
    return PptResult(ENTANGLED if negative else INCONCLUSIVE, lam, PT)


# ---------------------------------------------------------------------------
# detection loop


@dataclass
class DetectReport:
    status: str
    witness: Optional[PncpMap] = None
    min_eigenvalue: Optional[object] = None
    attempts_used: int = 0
    failures: List[str] = field(default_factory=list)
    witness_seed: Optional[int] = None

    def to_dict(self) -> dict:
        from .polyalg import format_scalar, map_to_dict

        return {
            "type": "detect_report",
            "status": self.status,
            "min_eigenvalue": None if self.min_eigenvalue is None else format_scalar(self.min_eigenvalue),
            "attempts_used": self.attempts_used,
            "failures": list(self.failures),
            "witness_seed": self.witness_seed,
            "witness": None if self.witness is None else map_to_dict(self.witness),
        }


@functools.lru_cache(maxsize=256)
def _cached_map(cfg: ConstructionConfig) -> PncpMap:
    # CNR is cheap; Hilbert covers what it misses
    try:
        return construct_pncp(cfg, "cnr").map
    except PncpError as exc:
        log.info("cnr construction failed for seed %d: %s", cfg.seed, exc)
    return construct_pncp(cfg, "hilbert").map


def random_maps(cfg: ConstructionConfig, attempts: int):
    """Yield (seed, map or exception) for the attempt seeds cfg.seed, cfg.seed+1, ..."""
    for t in range(attempts):
        c = replace(cfg, seed=cfg.seed + t)
        try:
            yield c.seed, _cached_map(c)
        except PncpError as exc:
            yield c.seed, exc


def detect_entanglement(
    rho: DensityMatrix,
    attempts: int = 5,
    cfg: Optional[ConstructionConfig] = None,
    maps: Optional[Sequence[PncpMap]] = None,
    factor: str = "second",
    eig_tol: float = EIG_TOL,
) -> DetectReport:
    """Ampliate generated (or supplied) maps on ``rho`` until one yields a
    negative eigenvalue."""
    if attempts < 1:
        raise ValueError("attempts must be at least 1")
    side = rho.dims[1] if factor == "second" else rho.dims[0]
    if maps is not None:
        source = [(None, phi) for phi in maps][:attempts]
    else:
        cfg = cfg or ConstructionConfig(n=side, m=side)
        if cfg.n != side:
            raise DimensionMismatch(f"maps act on {cfg.n}x{cfg.n}, state factor has size {side}")
        source = random_maps(cfg, attempts)
    report = DetectReport(UNKNOWN)
    best = None
    for seed, phi in source:
        report.attempts_used += 1
        if isinstance(phi, Exception):
            report.failures.append(f"seed {seed}: {type(phi).__name__}: {phi}")
            continue
        negative, lam = min_eigenvalue_verdict(ampliate(phi, rho, factor), eig_tol)
        if best is None or float(lam) < float(best):
            best = lam
        if negative:
            return DetectReport(ENTANGLED, phi, lam, report.attempts_used, report.failures, seed)
    report.min_eigenvalue = best
    return report
