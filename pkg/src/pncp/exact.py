"""Exact rational linear algebra on top of python-flint matrices."""
from __future__ import annotations

from fractions import Fraction
from math import lcm
from typing import List, Sequence

import flint


def fq(x) -> "flint.fmpq":
    x = Fraction(x)
    return flint.fmpq(x.numerator, x.denominator)


def to_fraction(x) -> Fraction:
    if isinstance(x, flint.fmpz):
        return Fraction(int(x))
    return Fraction(int(x.p), int(x.q))


def qmat(rows: Sequence[Sequence]) -> "flint.fmpq_mat":
    rows = [list(r) for r in rows]
    nr = len(rows)
    nc = len(rows[0]) if nr else 0
    return flint.fmpq_mat(nr, nc, [fq(v) for r in rows for v in r])


def to_rows(M) -> List[List[Fraction]]:
    return [[to_fraction(M[i, j]) for j in range(M.ncols())] for i in range(M.nrows())]


def _integer_rows(rows):
    out = []
    for r in rows:
        r = [Fraction(v) for v in r]
        den = 1
        for v in r:
            den = lcm(den, v.denominator)
        out.append([int(v * den) for v in r])
    return out


def rank(rows) -> int:
    if not rows:
        return 0
    return flint.fmpz_mat(_integer_rows(rows)).rank()


def nullspace(rows, ncols: int = None) -> List[List[Fraction]]:
    """Integer basis vectors of ``{v : rows v = 0}``."""
    if not rows:
        return [[Fraction(int(i == j)) for j in range(ncols)] for i in range(ncols)]
    Z = flint.fmpz_mat(_integer_rows(rows))
    N, nullity = Z.nullspace()
    basis = []
    for c in range(nullity):
        basis.append([Fraction(int(N[i, c])) for i in range(N.nrows())])
    return basis


def lll_reduce(vectors) -> List[List[Fraction]]:
    """LLL-reduced integer basis of the lattice spanned by integer ``vectors``."""
    if not vectors:
        return []
    R = flint.fmpz_mat(_integer_rows(vectors)).lll()
    return [[Fraction(int(R[i, j])) for j in range(R.ncols())] for i in range(R.nrows())]


def integer_kernel(rows) -> List[List[Fraction]]:
    """Short integer basis of ``{v in Z^n : rows v = 0}`` (the saturated lattice).

    LLL on ``[I | N rows^T]``: for large ``N`` the reduced rows with a zero
    tail span the orthogonal lattice."""
    K = _integer_rows(rows)
    n = len(K[0])
    N = 1 + sum(abs(v) for row in K for v in row)
    N = N ** 2 * (1 << n)
    emb = [[int(i == j) for j in range(n)] + [N * K[r][i] for r in range(len(K))] for i in range(n)]
    R = flint.fmpz_mat(emb).lll()
    out = []
    for i in range(R.nrows()):
        if all(R[i, n + r] == 0 for r in range(len(K))):
            out.append([Fraction(int(R[i, j])) for j in range(n)])
    if len(out) != n - rank(rows):
        raise ArithmeticError("integer kernel: embedding weight too small")
    return out


def independent_rows(rows) -> List[int]:
    """Indices of a maximal independent subset of rows (first-come order)."""
    if not rows:
        return []
    T = flint.fmpq_mat(flint.fmpz_mat(_integer_rows(rows)).transpose())
    R, rk = T.rref()
    pivots = []
    col = 0
    for i in range(rk):
        while R[i, col] == 0:
            col += 1
        pivots.append(col)
        col += 1
    return pivots


def pivot_rows(M: "flint.fmpq_mat") -> List[int]:
    """Indices of a maximal independent set of rows of a flint matrix."""
    R, rk = M.transpose().rref()
    pivots, col = [], 0
    for i in range(rk):
        while R[i, col] == 0:
            col += 1
        pivots.append(col)
        col += 1
    return pivots


def solve(A_rows, b) -> List[Fraction]:
    """Solve a square nonsingular system exactly."""
    A = qmat(A_rows)
    B = qmat([[v] for v in b])
    X = A.solve(B)
    return [to_fraction(X[i, 0]) for i in range(X.nrows())]


def charpoly(rows) -> List[Fraction]:
    """Coefficients of ``det(t I - A)``, constant term first."""
    p = qmat(rows).charpoly()
    return [to_fraction(c) for c in p.coeffs()]
