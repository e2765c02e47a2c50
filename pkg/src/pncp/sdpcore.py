"""Semidefinite feasibility layer: Gram parametrisations, solving and residuals.

A problem is a polynomial identity

    sum_j  sum_{a,b} G_j[a, b] P_j[a, b]  +  sum_t u_t Q_t  =  target

compared coefficient by coefficient, with every ``G_j`` PSD and ``u`` free,
plus optional extra linear rows (trace normalisations and the like).
"""
from __future__ import annotations

import os
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp

from .errors import BasisDeficient, DimensionMismatch
from .ipm import solve_sdp
from .polyalg import Polynomial

FEASIBLE = "Feasible"
INFEASIBLE = "Infeasible"
UNKNOWN = "Unknown"


@dataclass(frozen=True)
class ToleranceConfig:
    feas_tol: float = 1e-6
    psd_tol: float = 1e-8
    max_iter: int = 500
    ipm_tol: float = 1e-9

    @classmethod
    def from_env(cls, **kw) -> "ToleranceConfig":
        """Defaults, with ``feas_tol`` taken from ``PNCP_SOLVER_TOL`` when set."""
        env = os.environ.get("PNCP_SOLVER_TOL")
        if env and "feas_tol" not in kw:
            kw["feas_tol"] = float(env)
        return cls(**kw)


@dataclass(frozen=True)
class SdpProblem:
    block_names: Tuple[str, ...]
    block_dims: Tuple[int, ...]
    A: Tuple[sp.csr_matrix, ...]  # each p x n_j^2, row-major, symmetric rows
    b: np.ndarray
    B: np.ndarray  # p x q coefficients of free scalars
    free_names: Tuple[str, ...]
    row_labels: Tuple[object, ...]
    objective: Optional[dict] = None  # {"blocks": {name: C}, "free": {name: c}}, minimised

    @property
    def num_constraints(self) -> int:
        return len(self.b)

    def block_index(self, name: str) -> int:
        return self.block_names.index(name)

    def apply(self, blocks: Dict[str, np.ndarray], free: Dict[str, float]) -> np.ndarray:
        out = np.zeros(self.num_constraints)
        for name, A in zip(self.block_names, self.A):
            out += A @ np.asarray(blocks[name], dtype=float).ravel()
        if self.free_names:
            out += self.B @ np.array([free[t] for t in self.free_names], dtype=float)
        return out


@dataclass
class SolveReport:
    status: str
    blocks: Dict[str, np.ndarray] = field(default_factory=dict)
    free: Dict[str, float] = field(default_factory=dict)
    residual: float = np.inf
    min_eig: Dict[str, float] = field(default_factory=dict)
    iterations: int = 0
    wall_time: float = 0.0
    objective: Optional[float] = None
    message: str = ""
    farkas: Optional[np.ndarray] = None

    @property
    def mu(self) -> float:
        return min(self.min_eig.values(), default=np.inf)


# ---------------------------------------------------------------------------
# assembly


class SdpBuilder:
    """Accumulates coefficient rows of a polynomial identity."""

    def __init__(self):
        self._rows: Dict[object, int] = {}
        self._blocks: List[Tuple[str, int, Dict[Tuple[int, int, int], float]]] = []
        self._free: List[Tuple[str, Dict[int, float]]] = []
        self._rhs: Dict[int, float] = {}

    def row(self, label) -> int:
        if label not in self._rows:
            self._rows[label] = len(self._rows)
        return self._rows[label]

    def add_block(self, name: str, dim: int) -> int:
        if any(b[0] == name for b in self._blocks):
            raise ValueError(f"duplicate block name {name!r}")
        self._blocks.append((name, int(dim), {}))
        return len(self._blocks) - 1

    def add_free(self, name: str) -> int:
        self._free.append((name, {}))
        return len(self._free) - 1

    def gram_entry(self, label, block: int, a: int, b: int, value: float):
        """Add ``value * (G[a,b] + G[b,a])`` (just ``value * G[a,a]`` when a == b)."""
        r = self.row(label)
        entries = self._blocks[block][2]
        entries[(r, a, b)] = entries.get((r, a, b), 0.0) + value
        if a != b:
            entries[(r, b, a)] = entries.get((r, b, a), 0.0) + value

    def free_entry(self, label, free: int, value: float):
        r = self.row(label)
        col = self._free[free][1]
        col[r] = col.get(r, 0.0) + value

    def rhs(self, label, value: float):
        r = self.row(label)
        self._rhs[r] = self._rhs.get(r, 0.0) + value

    def gram_polynomial(self, block: int, basis: Sequence, multiplier: Optional[Polynomial] = None, sign: float = 1.0):
        """Add ``sign * multiplier * basis^T G basis`` to the left-hand side."""
        mterms = [((0,) * len(basis[0]), 1.0)] if multiplier is None else [
            (e, float(c)) for e, c in multiplier.terms.items()
        ]
        nb = len(basis)
        for a in range(nb):
            ea = basis[a]
            for b in range(a, nb):
                eab = tuple(i + j for i, j in zip(ea, basis[b]))
                for em, c in mterms:
                    label = tuple(i + j for i, j in zip(eab, em))
                    self.gram_entry(label, block, a, b, sign * c)

    def free_polynomial(self, free: int, poly: Polynomial, sign: float = 1.0):
        for e, c in poly.terms.items():
            self.free_entry(e, free, sign * float(c))

    def target(self, poly: Polynomial):
        for e, c in poly.terms.items():
            self.rhs(e, float(c))

    def build(self, objective=None) -> SdpProblem:
        labels = list(self._rows)
        mono = sorted((l for l in labels if isinstance(l, tuple)), key=lambda e: (sum(e), e), reverse=True)
        other = [l for l in labels if not isinstance(l, tuple)]
        order = mono + other
        perm = {self._rows[l]: i for i, l in enumerate(order)}
        p = len(order)
        covered = np.zeros(p, dtype=bool)
        A = []
        for name, n, entries in self._blocks:
            r = [perm[k[0]] for k in entries]
            c = [k[1] * n + k[2] for k in entries]
            v = list(entries.values())
            Aj = sp.csr_matrix((v, (r, c)), shape=(p, n * n))
            Aj.eliminate_zeros()
            A.append(Aj)
            covered |= np.diff(Aj.indptr) > 0
        B = np.zeros((p, len(self._free)))
        for t, (_, col) in enumerate(self._free):
            for r, v in col.items():
                B[perm[r], t] += v
        covered |= np.any(B != 0, axis=1)
        b = np.zeros(p)
        for r, v in self._rhs.items():
            b[perm[r]] += v
        for i in range(p):
            if not covered[i] and b[i] != 0:
                raise BasisDeficient(order[i])
        # rows with nothing on either side carry no information
        keep = covered | (b != 0)
        if not np.all(keep):
            idx = np.flatnonzero(keep)
            A = [Aj[idx] for Aj in A]
            B = B[idx]
            b = b[idx]
            order = [order[i] for i in idx]
        return SdpProblem(
            block_names=tuple(bl[0] for bl in self._blocks),
            block_dims=tuple(bl[1] for bl in self._blocks),
            A=tuple(sp.csr_matrix(Aj) for Aj in A),
            b=b,
            B=B,
            free_names=tuple(f[0] for f in self._free),
            row_labels=tuple(order),
            objective=objective,
        )


def sos_constraint(target: Polynomial, basis: Sequence, extra_free_terms: Sequence = ()) -> SdpBuilder:
    """Builder for ``basis^T G basis + sum_t u_t Q_t = target``.

    ``extra_free_terms`` is a sequence of ``(name, Q_t)`` pairs.
    """
    if basis and len(basis[0]) != target.nvars:
        raise DimensionMismatch("basis exponents do not match the target ring")
    bld = SdpBuilder()
    blk = bld.add_block("gram", len(basis))
    bld.gram_polynomial(blk, list(basis))
    for name, poly in extra_free_terms:
        bld.free_polynomial(bld.add_free(name), poly)
    bld.target(target)
    return bld


# ---------------------------------------------------------------------------
# solving


def residual(report: SolveReport, problem: SdpProblem) -> float:
    """``||A(G) + B u - b||_2`` recomputed from the problem data."""
    if not report.blocks:
        return float("inf")
    return float(np.linalg.norm(problem.apply(report.blocks, report.free) - problem.b))


def _min_eigs(blocks: Dict[str, np.ndarray]) -> Dict[str, float]:
    return {k: float(np.linalg.eigvalsh(0.5 * (v + v.T))[0]) for k, v in blocks.items()}


def _farkas_ok(problem: SdpProblem, yc: np.ndarray) -> bool:
    """Check ``A^*(yc) PSD, B^T yc = 0, b.yc < 0`` with margins."""
    traces = 0.0
    mats = []
    for A, n in zip(problem.A, problem.block_dims):
        S = (A.T @ yc).reshape(n, n)
        S = 0.5 * (S + S.T)
        mats.append(S)
        traces += np.trace(S)
    if traces <= 0:
        return False
    yc = yc / traces
    mats = [S / traces for S in mats]
    gap = -float(problem.b @ yc)
    if gap <= 1e-7:
        return False
    worst = min(float(np.linalg.eigvalsh(S)[0]) for S in mats)
    free_err = float(np.max(np.abs(problem.B.T @ yc))) if problem.B.shape[1] else 0.0
    # a violation e of the cone or the free columns moves b.y by at most e times
    # the size of a bounded solution, so demand a wide margin
    return worst >= -1e-3 * gap and free_err <= 1e-3 * gap


def solve(problem: SdpProblem, tol: Optional[ToleranceConfig] = None) -> SolveReport:
    tol = tol or ToleranceConfig.from_env()
    t0 = time.perf_counter()
    try:
        if problem.objective is None:
            report = _solve_feasibility(problem, tol)
        else:
            report = _solve_objective(problem, tol)
    except (np.linalg.LinAlgError, ValueError, FloatingPointError) as exc:
        report = SolveReport(UNKNOWN, message=f"numerical breakdown: {exc}")
    report.wall_time = time.perf_counter() - t0
    if report.blocks:
        report.residual = residual(report, problem)
        report.min_eig = _min_eigs(report.blocks)
    if report.status == FEASIBLE and (report.residual > tol.feas_tol or report.mu < -tol.psd_tol):
        report.message = (
            f"downgraded: residual {report.residual:.2e}, min eigenvalue {report.mu:.2e}; " + report.message
        )
        report.status = UNKNOWN
    return report


def _solve_feasibility(problem: SdpProblem, tol: ToleranceConfig) -> SolveReport:
    # maximise gamma <= 0 subject to A(X + gamma I) + B u = b, X PSD.
    # With t = -gamma this is strictly feasible and bounded below by zero.
    p = problem.num_constraints
    shift = np.zeros(p)
    for A, n in zip(problem.A, problem.block_dims):
        shift += A @ np.eye(n).ravel()
    A_blocks = list(problem.A) + [sp.csr_matrix(-shift.reshape(p, 1))]
    dims = list(problem.block_dims) + [1]
    C = [None] * len(problem.A) + [np.ones((1, 1))]
    res = solve_sdp(A_blocks, dims, problem.b, B=problem.B, C_blocks=C, tol=tol.ipm_tol, max_iter=tol.max_iter)
    t = float(res.X[-1][0, 0])
    blocks = {
        name: X - t * np.eye(n) for name, X, n in zip(problem.block_names, res.X, problem.block_dims)
    }
    free = dict(zip(problem.free_names, (float(v) for v in res.u)))
    report = SolveReport(UNKNOWN, blocks, free, iterations=res.iterations, objective=t)
    report.message = f"ipm {res.status}, shift {t:.3e}"
    eigs = _min_eigs(blocks)
    resid = residual(report, problem)
    if min(eigs.values(), default=0.0) >= -tol.psd_tol and resid <= tol.feas_tol:
        report.status = FEASIBLE
    elif res.status == "optimal" or t > 1e-4:
        yc = -res.y
        if _farkas_ok(problem, yc):
            report.status = INFEASIBLE
            report.farkas = yc
    return report


def _solve_objective(problem: SdpProblem, tol: ToleranceConfig) -> SolveReport:
    obj = problem.objective
    C = [obj.get("blocks", {}).get(name) for name in problem.block_names]
    c_u = np.array([obj.get("free", {}).get(name, 0.0) for name in problem.free_names], dtype=float)
    res = solve_sdp(list(problem.A), list(problem.block_dims), problem.b, B=problem.B, C_blocks=C,
                    c_u=c_u, tol=tol.ipm_tol, max_iter=tol.max_iter)
    blocks = dict(zip(problem.block_names, res.X))
    free = dict(zip(problem.free_names, (float(v) for v in res.u)))
    status = FEASIBLE if res.status in ("optimal", "stalled", "max_iter") else UNKNOWN
    return SolveReport(status, blocks, free, iterations=res.iterations, objective=res.pobj,
                       message=f"ipm {res.status}")


# ---------------------------------------------------------------------------
# SDPA export


def to_sdpa(problem: SdpProblem) -> str:
    """Sparse SDPA text.  Our primal is SDPA's dual form; free scalars become
    a diagonal block holding ``u+`` and ``u-``."""
    p = problem.num_constraints
    q = len(problem.free_names)
    struct = list(problem.block_dims) + ([-2 * q] if q else [])
    lines = [f'"pncp problem with {p} constraints"', str(p), str(len(struct)),
             " ".join(str(s) for s in struct), " ".join(repr(float(v)) for v in problem.b)]
    obj = problem.objective or {}
    for j, name in enumerate(problem.block_names):
        Cj = obj.get("blocks", {}).get(name)
        if Cj is None:
            continue
        Cj = np.asarray(Cj, dtype=float)
        for r in range(Cj.shape[0]):
            for c in range(r, Cj.shape[0]):
                if Cj[r, c] != 0:
                    lines.append(f"0 {j + 1} {r + 1} {c + 1} {-Cj[r, c]!r}")
    for t, name in enumerate(problem.free_names):
        ct = obj.get("free", {}).get(name, 0.0)
        if ct:
            lp = len(problem.block_dims) + 1
            lines.append(f"0 {lp} {2 * t + 1} {2 * t + 1} {-ct!r}")
            lines.append(f"0 {lp} {2 * t + 2} {2 * t + 2} {ct!r}")
    for j, (A, n) in enumerate(zip(problem.A, problem.block_dims)):
        coo = A.tocoo()
        for i, flat, v in sorted(zip(coo.row, coo.col, coo.data)):
            r, c = divmod(int(flat), n)
            if r <= c:
                lines.append(f"{i + 1} {j + 1} {r + 1} {c + 1} {float(v)!r}")
    lp = len(problem.block_dims) + 1
    for t in range(q):
        for i in np.flatnonzero(problem.B[:, t]):
            v = float(problem.B[i, t])
            lines.append(f"{i + 1} {lp} {2 * t + 1} {2 * t + 1} {v!r}")
            lines.append(f"{i + 1} {lp} {2 * t + 2} {2 * t + 2} {-v!r}")
    return "\n".join(lines) + "\n"
