"""Sparse polynomial arithmetic for biforms and the biform/map correspondence.

Coefficients are either Python floats or exact :class:`fractions.Fraction`
values; a single object never mixes the two.  Variables of a biform are
ordered ``x_0..x_{n-1}, y_0..y_{m-1}`` whenever it is viewed as a general
polynomial in ``n + m`` variables.  All indices are 0-based.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from fractions import Fraction
from numbers import Integral, Real
from typing import Dict, Mapping, Sequence, Tuple

import numpy as np

from .errors import DimensionMismatch, ModeMismatch, NonSymmetricBlock

FLOAT = "float"
RATIONAL = "rational"
MODES = (FLOAT, RATIONAL)

Exponent = Tuple[int, ...]
BiKey = Tuple[int, int, int, int]


# ---------------------------------------------------------------------------
# scalars


def coerce(value, mode: str):
    """Convert ``value`` to the scalar type of ``mode``.

    Integers are accepted in both modes.  A float is never promoted to a
    rational and a Fraction is never silently demoted to a float.
    """
    if mode == RATIONAL:
        if isinstance(value, Fraction):
            return value
        if isinstance(value, Integral):
            return Fraction(int(value))
        if isinstance(value, str):
            return parse_scalar(value, RATIONAL)
        raise ModeMismatch(f"cannot use {type(value).__name__} {value!r} in rational mode")
    if mode == FLOAT:
        if isinstance(value, Fraction):
            raise ModeMismatch("rational value in float mode; convert explicitly with to_float()")
        if isinstance(value, (Real, np.floating, np.integer)):
            return float(value)
        if isinstance(value, str):
            return parse_scalar(value, FLOAT)
        raise ModeMismatch(f"cannot use {type(value).__name__} in float mode")
    raise ValueError(f"unknown mode {mode!r}")


def zero(mode: str):
    return Fraction(0) if mode == RATIONAL else 0.0


def parse_scalar(text, mode: str):
    if mode == RATIONAL:
        if isinstance(text, str):
            return Fraction(text.strip())
        return coerce(text, RATIONAL)
    if isinstance(text, str):
        return float(Fraction(text.strip())) if "/" in text else float(text)
    return float(text)


def format_scalar(value):
    """JSON representation: rationals as ``"p/q"`` strings, floats as numbers."""
    if isinstance(value, Fraction):
        return str(value)
    return float(value)


def mode_of(value) -> str:
    return RATIONAL if isinstance(value, (Fraction, Integral)) else FLOAT


# ---------------------------------------------------------------------------
# monomials


def monomials(nvars: int, degree: int) -> list:
    """Exponent vectors of total ``degree`` in graded-lex order (x_0 first)."""
    out = []
    for combo in itertools.combinations_with_replacement(range(nvars), degree):
        e = [0] * nvars
        for i in combo:
            e[i] += 1
        out.append(tuple(e))
    out.sort(reverse=True)
    return out


def monomials_upto(nvars: int, degree: int) -> list:
    out = []
    for d in range(degree + 1):
        out.extend(monomials(nvars, d))
    return out


def bihomogeneous_monomials(n: int, m: int, dx: int, dy: int) -> list:
    """Exponents in ``n + m`` variables of bidegree ``(dx, dy)``."""
    return [a + b for a in monomials(n, dx) for b in monomials(m, dy)]


def _add_exp(a: Exponent, b: Exponent) -> Exponent:
    return tuple(i + j for i, j in zip(a, b))


# ---------------------------------------------------------------------------
# general polynomials


@dataclass(frozen=True)
class Polynomial:
    """A sparse polynomial ``{exponent: coefficient}`` in ``nvars`` variables."""

    nvars: int
    terms: Mapping[Exponent, object]
    mode: str = FLOAT
    names: Tuple[str, ...] = ()

    def __post_init__(self):
        clean = {}
        for e, c in self.terms.items():
            e = tuple(int(v) for v in e)
            if len(e) != self.nvars:
                raise DimensionMismatch(f"exponent {e} has wrong length for {self.nvars} variables")
            c = coerce(c, self.mode)
            if c != 0:
                clean[e] = c
        object.__setattr__(self, "terms", clean)

    # construction helpers
    @classmethod
    def zero(cls, nvars: int, mode: str = FLOAT, names=()) -> "Polynomial":
        return cls(nvars, {}, mode, tuple(names))

    @classmethod
    def constant(cls, nvars: int, value, mode: str = FLOAT, names=()) -> "Polynomial":
        return cls(nvars, {(0,) * nvars: value}, mode, tuple(names))

    @classmethod
    def variable(cls, nvars: int, index: int, mode: str = FLOAT, names=()) -> "Polynomial":
        e = [0] * nvars
        e[index] = 1
        return cls(nvars, {tuple(e): 1}, mode, tuple(names))

    def _like(self, terms) -> "Polynomial":
        return Polynomial(self.nvars, terms, self.mode, self.names)

    def _check(self, other: "Polynomial"):
        if not isinstance(other, Polynomial):
            raise TypeError(f"expected Polynomial, got {type(other).__name__}")
        if other.nvars != self.nvars:
            raise DimensionMismatch("polynomials live in different rings")
        if other.mode != self.mode:
            raise ModeMismatch("cannot combine float and rational polynomials")

    # queries
    @property
    def degree(self) -> int:
        return max((sum(e) for e in self.terms), default=-1)

    def coefficient(self, exponent: Exponent):
        return self.terms.get(tuple(exponent), zero(self.mode))

    def is_zero(self) -> bool:
        return not self.terms

    def max_abs_coeff(self) -> float:
        return max((abs(float(c)) for c in self.terms.values()), default=0.0)

    def sorted_terms(self):
        return sorted(self.terms.items(), key=lambda kv: (sum(kv[0]), kv[0]), reverse=True)

    # arithmetic
    def __add__(self, other: "Polynomial") -> "Polynomial":
        self._check(other)
        out = dict(self.terms)
        z = zero(self.mode)
        for e, c in other.terms.items():
            out[e] = out.get(e, z) + c
        return self._like(out)

    def __neg__(self) -> "Polynomial":
        return self._like({e: -c for e, c in self.terms.items()})

    def __sub__(self, other: "Polynomial") -> "Polynomial":
        return self + (-other)

    def scale(self, factor) -> "Polynomial":
        factor = coerce(factor, self.mode)
        return self._like({e: c * factor for e, c in self.terms.items()})

    def __mul__(self, other):
        if isinstance(other, Polynomial):
            return multiply(self, other)
        return self.scale(other)

    __rmul__ = __mul__

    def __pow__(self, k: int) -> "Polynomial":
        out = Polynomial.constant(self.nvars, 1, self.mode, self.names)
        for _ in range(k):
            out = multiply(out, self)
        return out

    def derivative(self, index: int) -> "Polynomial":
        out = {}
        for e, c in self.terms.items():
            if e[index]:
                d = list(e)
                d[index] -= 1
                out[tuple(d)] = c * e[index]
        return self._like(out)

    def evaluate(self, point: Sequence):
        if len(point) != self.nvars:
            raise DimensionMismatch(f"point has {len(point)} entries, ring has {self.nvars} variables")
        total = zero(self.mode) if self.mode == RATIONAL else 0.0
        for e, c in self.terms.items():
            t = c
            for v, k in zip(point, e):
                if k:
                    t = t * v**k
            total = total + t
        return total

    def to_float(self) -> "Polynomial":
        return Polynomial(self.nvars, {e: float(c) for e, c in self.terms.items()}, FLOAT, self.names)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Polynomial):
            return NotImplemented
        return self.nvars == other.nvars and self.mode == other.mode and self.terms == other.terms

    def __str__(self) -> str:
        names = self.names or tuple(f"v{i}" for i in range(self.nvars))
        if not self.terms:
            return "0"
        parts = []
        for e, c in self.sorted_terms():
            mono = "*".join(
                (names[i] if k == 1 else f"{names[i]}^{k}") for i, k in enumerate(e) if k
            )
            parts.append(f"{c}*{mono}" if mono else f"{c}")
        return " + ".join(parts)


def multiply(p: Polynomial, q: Polynomial) -> Polynomial:
    """Exact coefficient convolution of two polynomials in the same ring."""
    p._check(q)
    out: Dict[Exponent, object] = {}
    z = zero(p.mode)
    for ea, ca in p.terms.items():
        for eb, cb in q.terms.items():
            e = _add_exp(ea, eb)
            out[e] = out.get(e, z) + ca * cb
    return p._like(out)


def gradient(p, point: Sequence) -> list:
    """Exact partial derivatives of ``p`` (Polynomial or Biform) at ``point``."""
    if isinstance(p, Biform):
        p = p.to_polynomial()
    if len(point) != p.nvars:
        raise DimensionMismatch(f"point has {len(point)} entries, ring has {p.nvars} variables")
    return [p.derivative(i).evaluate(point) for i in range(p.nvars)]


# ---------------------------------------------------------------------------
# biforms


def biform_keys(n: int, m: int) -> list:
    return [
        (i, j, k, l)
        for i in range(n)
        for j in range(i, n)
        for k in range(m)
        for l in range(k, m)
    ]


def _bikey(i, j, k, l) -> BiKey:
    return (min(i, j), max(i, j), min(k, l), max(k, l))


@dataclass(frozen=True)
class Biform:
    """Bidegree-(2,2) form ``sum c[i,j,k,l] x_i x_j y_k y_l`` with i<=j, k<=l."""

    n: int
    m: int
    coeffs: Mapping[BiKey, object] = field(default_factory=dict)
    mode: str = FLOAT

    def __post_init__(self):
        clean = {}
        z = zero(self.mode)
        for key, c in self.coeffs.items():
            i, j, k, l = key
            if not (0 <= i < self.n and 0 <= j < self.n and 0 <= k < self.m and 0 <= l < self.m):
                raise DimensionMismatch(f"index {key} out of range for ({self.n},{self.m})")
            key = _bikey(i, j, k, l)
            clean[key] = clean.get(key, z) + coerce(c, self.mode)
        object.__setattr__(self, "coeffs", {k: v for k, v in clean.items() if v != 0})

    @property
    def nvars(self) -> int:
        return self.n + self.m

    def coefficient(self, i, j, k, l):
        return self.coeffs.get(_bikey(i, j, k, l), zero(self.mode))

    def vector(self) -> list:
        """Coefficients in canonical key order."""
        z = zero(self.mode)
        return [self.coeffs.get(key, z) for key in biform_keys(self.n, self.m)]

    @classmethod
    def from_vector(cls, n, m, values, mode=FLOAT) -> "Biform":
        return cls(n, m, dict(zip(biform_keys(n, m), values)), mode)

    def _check(self, other: "Biform"):
        if (self.n, self.m) != (other.n, other.m):
            raise DimensionMismatch("biforms have different shapes")
        if self.mode != other.mode:
            raise ModeMismatch("cannot combine float and rational biforms")

    def __add__(self, other: "Biform") -> "Biform":
        self._check(other)
        out = dict(self.coeffs)
        z = zero(self.mode)
        for k, v in other.coeffs.items():
            out[k] = out.get(k, z) + v
        return Biform(self.n, self.m, out, self.mode)

    def __neg__(self):
        return self.scale(-1)

    def __sub__(self, other):
        return self + (-other)

    def scale(self, factor) -> "Biform":
        factor = coerce(factor, self.mode)
        return Biform(self.n, self.m, {k: v * factor for k, v in self.coeffs.items()}, self.mode)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Biform):
            return NotImplemented
        return (self.n, self.m, self.mode, self.coeffs) == (other.n, other.m, other.mode, other.coeffs)

    def __hash__(self):
        return hash((self.n, self.m, self.mode, tuple(sorted(self.coeffs.items()))))

    def max_abs_coeff(self) -> float:
        return max((abs(float(c)) for c in self.coeffs.values()), default=0.0)

    def is_zero(self) -> bool:
        return not self.coeffs

    def to_float(self) -> "Biform":
        return Biform(self.n, self.m, {k: float(v) for k, v in self.coeffs.items()}, FLOAT)

    def evaluate(self, x: Sequence, y: Sequence):
        return eval_biform(self, x, y)

    def to_polynomial(self) -> Polynomial:
        n = self.n
        terms = {}
        for (i, j, k, l), c in self.coeffs.items():
            e = [0] * (n + self.m)
            e[i] += 1
            e[j] += 1
            e[n + k] += 1
            e[n + l] += 1
            terms[tuple(e)] = c
        return Polynomial(n + self.m, terms, self.mode, variable_names(self.n, self.m))

    @classmethod
    def from_polynomial(cls, p: Polynomial, n: int, m: int) -> "Biform":
        if p.nvars != n + m:
            raise DimensionMismatch("polynomial ring does not match (n, m)")
        coeffs = {}
        for e, c in p.terms.items():
            xs = [i for i in range(n) for _ in range(e[i])]
            ys = [k for k in range(m) for _ in range(e[n + k])]
            if len(xs) != 2 or len(ys) != 2:
                raise ValueError(f"monomial {e} is not of bidegree (2,2)")
            coeffs[(xs[0], xs[1], ys[0], ys[1])] = c
        return cls(n, m, coeffs, p.mode)

    def __str__(self) -> str:
        return str(self.to_polynomial())


def variable_names(n: int, m: int) -> tuple:
    return tuple(f"x{i + 1}" for i in range(n)) + tuple(f"y{j + 1}" for j in range(m))


def eval_biform(F: Biform, x: Sequence, y: Sequence):
    if len(x) != F.n or len(y) != F.m:
        raise DimensionMismatch(f"expected vectors of lengths ({F.n},{F.m}), got ({len(x)},{len(y)})")
    total = zero(F.mode) if F.mode == RATIONAL else 0.0
    for (i, j, k, l), c in F.coeffs.items():
        total = total + c * x[i] * x[j] * y[k] * y[l]
    return total


def biform_eval_many(F: Biform, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """Vectorised float evaluation on rows of ``X`` (s, n) and ``Y`` (s, m)."""
    out = np.zeros(X.shape[0])
    for (i, j, k, l), c in F.coeffs.items():
        out += float(c) * X[:, i] * X[:, j] * Y[:, k] * Y[:, l]
    return out


def sum_of_coordinate_squares(n: int, m: int, mode: str = FLOAT) -> Biform:
    """``sum_{i,j} (x_i y_j)^2``."""
    return Biform(n, m, {(i, i, k, k): 1 for i in range(n) for k in range(m)}, mode)


# ---------------------------------------------------------------------------
# bilinear forms


@dataclass(frozen=True)
class BilinearForm:
    """``h(x, y) = x^T H y`` with H an n x m coefficient matrix."""

    H: Tuple[Tuple[object, ...], ...]
    mode: str = FLOAT

    def __post_init__(self):
        rows = tuple(tuple(coerce(v, self.mode) for v in row) for row in self.H)
        if not rows or len({len(r) for r in rows}) != 1:
            raise DimensionMismatch("bilinear form needs a rectangular non-empty matrix")
        object.__setattr__(self, "H", rows)

    @property
    def n(self) -> int:
        return len(self.H)

    @property
    def m(self) -> int:
        return len(self.H[0])

    def evaluate(self, x, y):
        if len(x) != self.n or len(y) != self.m:
            raise DimensionMismatch("vector lengths do not match the bilinear form")
        total = zero(self.mode) if self.mode == RATIONAL else 0.0
        for i in range(self.n):
            for k in range(self.m):
                total = total + self.H[i][k] * x[i] * y[k]
        return total

    def flat(self) -> list:
        return [v for row in self.H for v in row]

    def product(self, other: "BilinearForm") -> Biform:
        """The biform ``h * g``."""
        if self.mode != other.mode:
            raise ModeMismatch("cannot multiply float and rational bilinear forms")
        if (self.n, self.m) != (other.n, other.m):
            raise DimensionMismatch("bilinear forms have different shapes")
        z = zero(self.mode)
        out: Dict[BiKey, object] = {}
        for i in range(self.n):
            for k in range(self.m):
                a = self.H[i][k]
                if a == 0:
                    continue
                for j in range(self.n):
                    for l in range(self.m):
                        b = other.H[j][l]
                        if b == 0:
                            continue
                        key = _bikey(i, j, k, l)
                        out[key] = out.get(key, z) + a * b
        return Biform(self.n, self.m, out, self.mode)

    def square(self) -> Biform:
        return self.product(self)

    def to_float(self) -> "BilinearForm":
        return BilinearForm(tuple(tuple(float(v) for v in row) for row in self.H), FLOAT)


def sum_of_squares_of(hs: Sequence[BilinearForm]) -> Biform:
    total = None
    for h in hs:
        sq = h.square()
        total = sq if total is None else total + sq
    return total


# ---------------------------------------------------------------------------
# maps


def _matrix(rows, mode: str) -> np.ndarray:
    dtype = object if mode == RATIONAL else float
    arr = np.array([[coerce(v, mode) for v in row] for row in rows], dtype=dtype)
    return arr


def _is_symmetric(a: np.ndarray) -> bool:
    return a.shape[0] == a.shape[1] and all(
        a[i, j] == a[j, i] for i in range(a.shape[0]) for j in range(i + 1, a.shape[0])
    )


@dataclass(frozen=True, eq=False)
class PncpMap:
    """Linear map on symmetric n x n matrices, stored by its images of
    ``E_ii`` (``diag[i]``) and ``E_ij + E_ji`` (``offdiag[(i, j)]``, i<j).

    The full cross images are stored; the halving ``Phi(E_ij) = C_ij / 2``
    happens only when the map is applied to arbitrary matrices.
    """

    n: int
    m: int
    diag: Tuple[np.ndarray, ...]
    offdiag: Mapping[Tuple[int, int], np.ndarray]
    mode: str = FLOAT

    def __post_init__(self):
        diag = tuple(_matrix(c, self.mode) for c in self.diag)
        if len(diag) != self.n:
            raise DimensionMismatch(f"expected {self.n} diagonal images, got {len(diag)}")
        off = {}
        for (i, j), c in self.offdiag.items():
            if not 0 <= i < j < self.n:
                raise DimensionMismatch(f"bad off-diagonal index {(i, j)}")
            off[(i, j)] = _matrix(c, self.mode)
        z = zero(self.mode)
        for i in range(self.n):
            for j in range(i + 1, self.n):
                if (i, j) not in off:
                    off[(i, j)] = _matrix([[z] * self.m for _ in range(self.m)], self.mode)
        for c in list(diag) + list(off.values()):
            if c.shape != (self.m, self.m):
                raise DimensionMismatch(f"image blocks must be {self.m} x {self.m}")
            if not _is_symmetric(c):
                raise NonSymmetricBlock("map images must be symmetric matrices")
        object.__setattr__(self, "diag", diag)
        object.__setattr__(self, "offdiag", off)

    def image_of_unit(self, i: int, j: int) -> np.ndarray:
        """``Phi(E_ij)`` under the canonical extension to all n x n matrices."""
        if i == j:
            return self.diag[i]
        c = self.offdiag[(min(i, j), max(i, j))]
        half = Fraction(1, 2) if self.mode == RATIONAL else 0.5
        return c * half

    def apply(self, A) -> np.ndarray:
        A = np.asarray(A, dtype=object if self.mode == RATIONAL else float)
        if A.shape != (self.n, self.n):
            raise DimensionMismatch(f"map acts on {self.n} x {self.n} matrices")
        out = np.zeros((self.m, self.m), dtype=A.dtype)
        if self.mode == RATIONAL:
            out = out + Fraction(0)
        for i in range(self.n):
            for j in range(self.n):
                if A[i, j] != 0:
                    out = out + A[i, j] * self.image_of_unit(i, j)
        return out

    def to_float(self) -> "PncpMap":
        return PncpMap(
            self.n,
            self.m,
            tuple(c.astype(float) for c in self.diag),
            {k: c.astype(float) for k, c in self.offdiag.items()},
            FLOAT,
        )

    def __eq__(self, other) -> bool:
        if not isinstance(other, PncpMap):
            return NotImplemented
        if (self.n, self.m, self.mode) != (other.n, other.m, other.mode):
            return False
        return all(np.array_equal(a, b) for a, b in zip(self.diag, other.diag)) and all(
            np.array_equal(self.offdiag[k], other.offdiag[k]) for k in self.offdiag
        )


def biform_to_map(F: Biform) -> PncpMap:
    half = Fraction(1, 2) if F.mode == RATIONAL else 0.5
    z = zero(F.mode)

    def block(i, j):
        c = [[z] * F.m for _ in range(F.m)]
        for k in range(F.m):
            c[k][k] = F.coefficient(i, j, k, k)
            for l in range(k + 1, F.m):
                c[k][l] = c[l][k] = F.coefficient(i, j, k, l) * half
        return c

    diag = tuple(block(i, i) for i in range(F.n))
    off = {(i, j): block(i, j) for i in range(F.n) for j in range(i + 1, F.n)}
    return PncpMap(F.n, F.m, diag, off, F.mode)


def map_to_biform(phi: PncpMap) -> Biform:
    """``p(x, y) = y^T Phi(x x^T) y`` written in coefficient form."""
    coeffs = {}
    blocks = [((i, i), phi.diag[i]) for i in range(phi.n)] + list(phi.offdiag.items())
    for (i, j), c in blocks:
        for k in range(phi.m):
            coeffs[(i, j, k, k)] = c[k, k]
            for l in range(k + 1, phi.m):
                coeffs[(i, j, k, l)] = c[k, l] * 2
    return Biform(phi.n, phi.m, coeffs, phi.mode)


# ---------------------------------------------------------------------------
# JSON


def matrix_to_json(a) -> list:
    return [[format_scalar(v) for v in row] for row in np.asarray(a, dtype=object)]


def matrix_from_json(rows, mode: str) -> np.ndarray:
    return _matrix([[parse_scalar(v, mode) for v in row] for row in rows], mode)


def biform_to_dict(F: Biform) -> dict:
    return {
        "type": "biform",
        "n": F.n,
        "m": F.m,
        "mode": F.mode,
        "entries": [[i, j, k, l, format_scalar(c)] for (i, j, k, l), c in sorted(F.coeffs.items())],
    }


def biform_from_dict(d: dict) -> Biform:
    mode = d.get("mode", FLOAT)
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    coeffs = {}
    for entry in d["entries"]:
        i, j, k, l, c = entry
        key = _bikey(int(i), int(j), int(k), int(l))
        if key in coeffs:
            raise ValueError(f"duplicate biform entry {key}")
        coeffs[key] = parse_scalar(c, mode)
    return Biform(int(d["n"]), int(d["m"]), coeffs, mode)


def map_to_dict(phi: PncpMap) -> dict:
    return {
        "type": "map",
        "n": phi.n,
        "m": phi.m,
        "mode": phi.mode,
        "diag": [matrix_to_json(c) for c in phi.diag],
        "offdiag": {f"{i},{j}": matrix_to_json(c) for (i, j), c in sorted(phi.offdiag.items())},
    }


def map_from_dict(d: dict) -> PncpMap:
    mode = d.get("mode", FLOAT)
    diag = tuple(matrix_from_json(c, mode) for c in d["diag"])
    off = {}
    for key, c in d.get("offdiag", {}).items():
        i, j = (int(t) for t in key.split(","))
        off[(i, j)] = matrix_from_json(c, mode)
    return PncpMap(int(d["n"]), int(d["m"]), diag, off, mode)


def dumps(obj) -> str:
    if isinstance(obj, Biform):
        obj = biform_to_dict(obj)
    elif isinstance(obj, PncpMap):
        obj = map_to_dict(obj)
    return json.dumps(obj, indent=1, sort_keys=True)


def loads(text: str):
    d = json.loads(text)
    kind = d.get("type")
    if kind == "biform":
        return biform_from_dict(d)
    if kind == "map":
        return map_from_dict(d)
    raise ValueError(f"unrecognised document type {kind!r}")
