"""A small primal-dual interior point method for block semidefinite programs.

Problem (primal)::

    min  sum_j <C_j, X_j> + c_u . u
    s.t. sum_j A_j(X_j) + B u = b,   X_j PSD,   u free

with dual ``max b.y  s.t.  C_j - A_j^*(y) = Z_j PSD,  B^T y = c_u``.

Each ``A_j`` is a sparse ``p x n_j^2`` matrix acting on the row-major
vectorisation of a symmetric matrix; every row must itself be symmetric.
Search directions are HKM with a Mehrotra predictor-corrector step.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

KRON_LIMIT = 48  # blocks up to this size form the Schur complement through kron(X, W)
STALL_ITERS = 8


@dataclass
class IpmResult:
    X: List[np.ndarray]
    Z: List[np.ndarray]
    y: np.ndarray
    u: np.ndarray
    status: str  # "optimal", "stalled", "max_iter" or "breakdown"
    iterations: int
    pobj: float
    dobj: float
    rel_primal: float
    rel_dual: float
    rel_gap: float
    message: str = ""


@dataclass
class _Block:
    n: int
    A: sp.csr_matrix
    C: np.ndarray
    groups: list = field(default_factory=list)  # (columns, rows, dense sub-blocks)


def _sym(a):
    return 0.5 * (a + a.T)


def _prepare(block: _Block):
    """Row supports of every constraint matrix, grouped by support size."""
    n = block.n
    if n <= KRON_LIMIT:
        return
    A = block.A
    by_size = {}
    for g in range(A.shape[0]):
        lo, hi = A.indptr[g], A.indptr[g + 1]
        flat = A.indices[lo:hi]
        if len(flat) == 0:
            continue
        rows = np.unique(flat // n)
        by_size.setdefault(len(rows), []).append((g, rows, flat, A.data[lo:hi]))
    for r, items in sorted(by_size.items()):
        cols = np.array([it[0] for it in items])
        R = np.array([it[1] for it in items])
        sub = np.zeros((len(items), r, n))
        for t, (_, rows, flat, data) in enumerate(items):
            pos = {v: i for i, v in enumerate(rows)}
            for f, val in zip(flat, data):
                sub[t, pos[f // n], f % n] += val
        block.groups.append((cols, R, sub))


def _schur(block: _Block, X, W, p):
    n = block.n
    A = block.A
    if n <= KRON_LIMIT:
        K = np.kron(X, W)
        left = A @ K
        return (A @ left.T).T if sp.issparse(A) else left @ A.T
    M = np.zeros((p, p))
    budget = max(1, int(4e6 // (n * n)))
    for cols, R, sub in block.groups:
        for s in range(0, len(cols), budget):
            c = cols[s:s + budget]
            AW = sub[s:s + budget] @ W  # (g, r, n)
            XR = np.transpose(X[:, R[s:s + budget]], (1, 0, 2))  # (g, n, r)
            K = XR @ AW  # (g, n, n)
            M[:, c] = A @ K.reshape(len(c), n * n).T
    return M


def _max_step(X, dX):
    try:
        L = np.linalg.cholesky(X)
    except np.linalg.LinAlgError:
        return 0.0
    S = sla.solve_triangular(L, dX, lower=True)
    S = sla.solve_triangular(L, S.T, lower=True).T
    lam = np.linalg.eigvalsh(_sym(S))[0]
    return np.inf if lam >= 0 else -1.0 / lam


def solve_sdp(A_blocks, dims, b, B=None, C_blocks=None, c_u=None, tol=1e-9, max_iter=500, verbose=False) -> IpmResult:
    b = np.asarray(b, dtype=float)
    p = b.shape[0]
    q = 0 if B is None else B.shape[1]
    B = np.zeros((p, 0)) if B is None else np.asarray(B, dtype=float)
    c_u = np.zeros(q) if c_u is None else np.asarray(c_u, dtype=float)
    if C_blocks is None:
        C_blocks = [None] * len(dims)

    # row scaling
    norms = np.zeros(p)
    for A in A_blocks:
        norms += np.asarray(A.multiply(A).sum(axis=1)).ravel()
    norms += (B * B).sum(axis=1)
    norms = np.sqrt(norms)
    norms[norms == 0] = 1.0
    D = sp.diags(1.0 / norms)
    b = b / norms
    B = B / norms[:, None]
    blocks = []
    for A, n, C in zip(A_blocks, dims, C_blocks):
        C = np.zeros((n, n)) if C is None else np.asarray(C, dtype=float)
        blk = _Block(n, sp.csr_matrix(D @ A), C)
        _prepare(blk)
        blocks.append(blk)

    normb = np.linalg.norm(b)
    normC = np.sqrt(sum(np.sum(bl.C ** 2) for bl in blocks) + c_u @ c_u)
    X, Z = [], []
    for bl in blocks:
        anorm = np.sqrt(np.asarray(bl.A.multiply(bl.A).sum(axis=1)).ravel())
        xi = max(10.0, np.sqrt(bl.n), bl.n * np.max((1 + np.abs(b)) / (1 + anorm)))
        zeta = max(10.0, np.sqrt(bl.n), np.max(anorm), np.linalg.norm(bl.C))
        X.append(xi * np.eye(bl.n))
        Z.append(zeta * np.eye(bl.n))
    y = np.zeros(p)
    u = np.zeros(q)
    ntot = sum(bl.n for bl in blocks)

    def amap(mats):
        out = np.zeros(p)
        for bl, Mx in zip(blocks, mats):
            out += bl.A @ Mx.ravel()
        return out

    def astar(bl, v):
        return _sym((bl.A.T @ v).reshape(bl.n, bl.n))

    status, message = "max_iter", ""
    it = 0
    best = (np.inf, 0, None)
    relp = reld = gap = np.inf
    pobj = dobj = 0.0
    for it in range(1, max_iter + 1):
        Rp = b - amap(X) - B @ u
        Rd = [bl.C - Zj - astar(bl, y) for bl, Zj in zip(blocks, Z)]
        Ru = c_u - B.T @ y
        mu = sum(np.sum(Xj * Zj) for Xj, Zj in zip(X, Z)) / ntot
        pobj = sum(np.sum(bl.C * Xj) for bl, Xj in zip(blocks, X)) + c_u @ u
        dobj = b @ y
        relp = np.linalg.norm(Rp) / (1 + normb)
        reld = np.sqrt(sum(np.sum(r * r) for r in Rd) + Ru @ Ru) / (1 + normC)
        gap = abs(pobj - dobj) / (1 + abs(pobj) + abs(dobj))
        complementarity = mu * ntot / (1 + abs(pobj) + abs(dobj))
        if verbose:
            print(f"{it:4d} relp {relp:.2e} reld {reld:.2e} gap {gap:.2e} mu {mu:.2e} pobj {pobj:.6e}")
        if relp <= tol and reld <= tol and max(gap, complementarity) <= tol:
            status = "optimal"
            break
        merit = max(relp, reld, gap, complementarity)
        if merit < 0.5 * best[0]:
            best = (merit, it, (X, Z, y, u, pobj, dobj, relp, reld, gap))
        elif it - best[1] >= STALL_ITERS:
            status, message = "stalled", f"no progress since iteration {best[1]}"
            break
        try:
            W = []
            for Zj in Z:
                Lz = np.linalg.cholesky(Zj)
                Li = sla.solve_triangular(Lz, np.eye(len(Zj)), lower=True)
                W.append(Li.T @ Li)
            M = np.zeros((p, p))
            for bl, Xj, Wj in zip(blocks, X, W):
                M += _schur(bl, Xj, Wj, p)
            M = _sym(M)
            reg = 1e-14 * max(1.0, np.max(np.abs(np.diag(M))))
            K = np.block([[M + reg * np.eye(p), B], [B.T, -reg * np.eye(q)]])
            lu = sla.lu_factor(K, check_finite=True)
        except (np.linalg.LinAlgError, ValueError) as exc:
            status, message = "breakdown", str(exc)
            break

        def direction(extra):
            T = []
            for bl, Xj, Wj, Rdj, Ej in zip(blocks, X, W, Rd, extra):
                T.append(Ej - Xj - _sym(Xj @ Rdj @ Wj))
            r1 = Rp - amap(T)
            sol = sla.lu_solve(lu, np.concatenate([r1, Ru]))
            dy, du = sol[:p], sol[p:]
            dZ = [Rdj - astar(bl, dy) for bl, Rdj in zip(blocks, Rd)]
            dX = [Tj + _sym(Xj @ (Rdj - dZj) @ Wj) for Tj, Xj, Rdj, dZj, Wj in zip(T, X, Rd, dZ, W)]
            # T already holds -sym(X Rd W); adding sym(X (Rd - dZ) W) yields -sym(X dZ W)
            return dX, du, dy, dZ

        zeros = [np.zeros((bl.n, bl.n)) for bl in blocks]
        dXa, dua, dya, dZa = direction(zeros)
        ap = min(1.0, min(_max_step(Xj, d) for Xj, d in zip(X, dXa)))
        ad = min(1.0, min(_max_step(Zj, d) for Zj, d in zip(Z, dZa)))
        mu_aff = sum(np.sum((Xj + ap * a) * (Zj + ad * c)) for Xj, a, Zj, c in zip(X, dXa, Z, dZa)) / ntot
        sigma = min(1.0, (max(mu_aff, 0.0) / mu) ** max(1.0, 3 * min(ap, ad) ** 2)) if mu > 0 else 0.0
        extra = [sigma * mu * Wj - _sym(a @ c @ Wj) for Wj, a, c in zip(W, dXa, dZa)]
        dX, du, dy, dZ = direction(extra)
        if not all(np.all(np.isfinite(d)) for d in dX + dZ):
            status, message = "breakdown", "non-finite search direction"
            break
        gamma = 0.9 + 0.09 * min(ap, ad)
        ap = min(1.0, gamma * min(_max_step(Xj, d) for Xj, d in zip(X, dX)))
        ad = min(1.0, gamma * min(_max_step(Zj, d) for Zj, d in zip(Z, dZ)))
        if ap < 1e-12 and ad < 1e-12:
            status, message = "breakdown", "step length collapsed"
            break
        X = [_sym(Xj + ap * d) for Xj, d in zip(X, dX)]
        u = u + ap * du
        y = y + ad * dy
        Z = [_sym(Zj + ad * d) for Zj, d in zip(Z, dZ)]

    if status != "optimal" and best[2] is not None:
        X, Z, y, u, pobj, dobj, relp, reld, gap = best[2]
    return IpmResult(
        X=X,
        Z=Z,
        y=y / norms,
        u=u,
        status=status,
        iterations=it,
        pobj=float(pobj),
        dobj=float(dobj),
        rel_primal=float(relp),
        rel_dual=float(reld),
        rel_gap=float(gap),
        message=message,
    )
