"""Exact rational certificates from numerical Gram matrices.

Pipeline: restrict the Gram matrix to the face orthogonal to the monomial
vectors of the designed zeros, round to a dyadic grid, project exactly onto
the affine space of the coefficient identity, and verify PSD-ness with a
rational LDL^T factorisation.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple

import flint
import numpy as np
import scipy.sparse as sp

from . import exact
from .errors import ModeMismatch, RationalizationError
from .polyalg import RATIONAL, Biform, Polynomial, sum_of_coordinate_squares

MU_TOO_SMALL = "MuTooSmall"
MOVED_TOO_FAR = "ProjectionMovedTooFar"
NOT_PSD = "NotPsdAfterProjection"
UNSUPPORTED = "UnsupportedMethod"
DEGENERATE_ZERO = "DegenerateZero"


@dataclass(frozen=True)
class RoundingParams:
    bits: int = 16
    max_rounds: int = 8

    def __post_init__(self):
        if self.bits < 1:
            raise ValueError("bits must be at least 1")


@dataclass(frozen=True)
class FaceBasis:
    """Integer matrix ``W`` (rows: monomials, columns: face coordinates)
    with ``W^T v = 0`` for every kernel vector ``v``."""

    W: Tuple[Tuple[Fraction, ...], ...]
    kernel: Tuple[Tuple[Fraction, ...], ...]

    @property
    def dim(self) -> int:
        return len(self.W[0]) if self.W else 0

    def array(self) -> np.ndarray:
        return np.array(self.W, dtype=object)

    def lift(self, Ghat) -> np.ndarray:
        """``W Ghat W^T``."""
        W = self.array()
        return W.dot(np.asarray(Ghat, dtype=object)).dot(W.T)


@dataclass
class ExactCertificate:
    method: str
    order: int
    nvars: int
    basis: Tuple[Tuple[int, ...], ...]
    face: FaceBasis
    gram_face: np.ndarray  # rational, face coordinates
    scale: Fraction
    pivots: List[Fraction]
    multiplier_basis: Tuple[Tuple[int, ...], ...] = ()
    multiplier_gram: Optional[np.ndarray] = None
    multiplier_pivots: List[Fraction] = field(default_factory=list)
    bits: int = 16
    tau: float = 0.0
    eps: float = 0.0
    mu: float = 0.0
    projection_distance: float = 0.0
    checksum: str = ""

    @property
    def bound_holds(self) -> bool:
        return self.tau ** 2 + self.eps ** 2 <= self.mu ** 2

    @property
    def gram(self) -> np.ndarray:
        return self.face.lift(self.gram_face)

    def to_dict(self) -> dict:
        q = lambda M: [[str(Fraction(v)) for v in row] for row in np.asarray(M, dtype=object)]
        d = {
            "type": "exact_certificate",
            "method": self.method,
            "order": self.order,
            "nvars": self.nvars,
            "basis": [list(e) for e in self.basis],
            "face": q(self.face.W),
            "kernel": q(self.face.kernel),
            "gram_face": q(self.gram_face),
            "scale": str(self.scale),
            "bits": self.bits,
            "tau": self.tau,
            "eps": self.eps,
            "mu": self.mu,
            "bound_holds": self.bound_holds,
            "checksum": self.checksum,
        }
        if self.multiplier_gram is not None:
            d["multiplier_basis"] = [list(e) for e in self.multiplier_basis]
            d["multiplier_gram"] = q(self.multiplier_gram)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExactCertificate":
        r = lambda rows: np.array([[Fraction(v) for v in row] for row in rows], dtype=object)
        face = FaceBasis(
            tuple(tuple(Fraction(v) for v in row) for row in d["face"]),
            tuple(tuple(Fraction(v) for v in row) for row in d["kernel"]),
        )
        mg = d.get("multiplier_gram")
        return cls(
            method=d["method"],
            order=int(d["order"]),
            nvars=int(d["nvars"]),
            basis=tuple(tuple(e) for e in d["basis"]),
            face=face,
            gram_face=r(d["gram_face"]),
            scale=Fraction(d["scale"]),
            pivots=[],
            multiplier_basis=tuple(tuple(e) for e in d.get("multiplier_basis", [])),
            multiplier_gram=None if mg is None else r(mg),
            bits=int(d.get("bits", 16)),
            tau=float(d.get("tau", 0.0)),
            eps=float(d.get("eps", 0.0)),
            mu=float(d.get("mu", 0.0)),
            checksum=d.get("checksum", ""),
        )


# ---------------------------------------------------------------------------
# building blocks


def monomial_vector(basis: Sequence, point: Sequence) -> List[Fraction]:
    out = []
    for e in basis:
        v = Fraction(1)
        for c, k in zip(point, e):
            if k:
                v *= Fraction(c) ** k
        out.append(v)
    return out


def facial_reduce(basis: Sequence, zeros: Sequence) -> FaceBasis:
    """Integer basis of the complement of the monomial vectors at ``zeros``."""
    kernel = []
    for x, y in zeros:
        n = len(x)
        v = monomial_vector(basis, list(x) + list(y))
        if all(c == 0 for c in v):
            raise RationalizationError(DEGENERATE_ZERO, "monomial vector vanishes at the zero")
        # (s x, t y) is a zero for all s, t, so each bidegree block is in the kernel
        blocks: Dict[Tuple[int, int], List[Fraction]] = {}
        for i, e in enumerate(basis):
            key = (sum(e[:n]), sum(e[n:]))
            blocks.setdefault(key, [Fraction(0)] * len(basis))[i] = v[i]
        kernel.extend(b for b in blocks.values() if any(b))
    if exact.rank(kernel) < len(kernel):
        kernel = [kernel[i] for i in exact.independent_rows(kernel)]
    cols = exact.integer_kernel(kernel)
    W = tuple(tuple(cols[c][i] for c in range(len(cols))) for i in range(len(basis)))
    return FaceBasis(W, tuple(tuple(v) for v in kernel))


def round_gram(G, bits: int = 16) -> Tuple[np.ndarray, float]:
    """Nearest dyadic rationals with denominator ``2^bits``; returns (G~, tau)."""
    G = np.asarray(G, dtype=float)
    n = G.shape[0]
    den = 1 << bits
    out = np.empty((n, n), dtype=object)
    for i in range(n):
        for j in range(i, n):
            v = 0.5 * (G[i, j] + G[j, i])
            out[i, j] = out[j, i] = Fraction(int(round(v * den)), den)
    tau = float(np.linalg.norm(G - out.astype(float)))
    return out, tau


def ldl_pivots(M) -> Optional[List[Fraction]]:
    """Pivots of a symmetric-pivoted rational LDL^T, or None if M is not PSD."""
    A = [[exact.fq(v) for v in row] for row in np.asarray(M, dtype=object)]
    n = len(A)
    active = list(range(n))
    pivots = []
    while active:
        p = max(active, key=lambda i: A[i][i])
        d = A[p][p]
        if d < 0:
            return None
        if d == 0:
            # PSD forces the whole remaining block to vanish
            if any(A[i][j] != 0 for i in active for j in active):
                return None
            pivots.extend([Fraction(0)] * len(active))
            break
        pivots.append(exact.to_fraction(d))
        active.remove(p)
        row = {j: A[p][j] for j in active}
        for i in active:
            li = row[i] / d
            if li == 0:
                continue
            Ai = A[i]
            for j in active:
                if row[j]:
                    Ai[j] -= li * row[j]
    return pivots


# ---------------------------------------------------------------------------
# the exact identity


@dataclass
class _Unknown:
    block: str
    a: int
    b: int


class _ExactSystem:
    """Rows: monomials (plus a trace row); columns: upper-triangular Gram entries."""

    def __init__(self):
        self.rows: Dict[object, int] = {}
        self.cols: List[_Unknown] = []
        self.entries: Dict[Tuple[int, int], Fraction] = {}
        self.rhs: Dict[int, Fraction] = {}

    def row(self, label) -> int:
        if label not in self.rows:
            self.rows[label] = len(self.rows)
        return self.rows[label]

    def add_column(self, unknown: _Unknown, poly_terms: Dict[tuple, Fraction]):
        c = len(self.cols)
        self.cols.append(unknown)
        for e, v in poly_terms.items():
            if v:
                key = (self.row(e), c)
                self.entries[key] = self.entries.get(key, Fraction(0)) + v
        return c

    def add_entry(self, label, col: int, value: Fraction):
        key = (self.row(label), col)
        self.entries[key] = self.entries.get(key, Fraction(0)) + value

    def set_target(self, poly: Polynomial):
        for e, v in poly.terms.items():
            r = self.row(e)
            self.rhs[r] = self.rhs.get(r, Fraction(0)) + v

    def sparse_rows(self) -> List[Dict[int, Fraction]]:
        out = [dict() for _ in range(len(self.rows))]
        for (r, c), v in self.entries.items():
            if v:
                out[r][c] = v
        return out

    def b(self) -> List[Fraction]:
        return [self.rhs.get(r, Fraction(0)) for r in range(len(self.rows))]


def _mul_terms(p: Dict[tuple, Fraction], q: Dict[tuple, Fraction]) -> Dict[tuple, Fraction]:
    out: Dict[tuple, Fraction] = {}
    for ea, ca in p.items():
        for eb, cb in q.items():
            e = tuple(i + j for i, j in zip(ea, eb))
            out[e] = out.get(e, Fraction(0)) + ca * cb
    return out


def _face_polys(basis, face: FaceBasis) -> List[Dict[tuple, Fraction]]:
    polys = []
    for c in range(face.dim):
        polys.append({basis[i]: face.W[i][c] for i in range(len(basis)) if face.W[i][c] != 0})
    return polys


def project_affine(z, rows: List[Dict[int, Fraction]], b: List[Fraction]) -> List[Fraction]:
    """Exact orthogonal projection of ``z`` onto ``{z : rows z = b}``."""
    m, N = len(rows), len(z)
    A = flint.fmpq_mat(m, N)
    for r, row in enumerate(rows):
        for c, v in row.items():
            A[r, c] = exact.fq(v)
    zq = flint.fmpq_mat(N, 1, [exact.fq(v) for v in z])
    bq = flint.fmpq_mat(m, 1, [exact.fq(v) for v in b])
    # redundant rows make A A^T singular; a consistent system loses nothing by dropping them
    keep = exact.pivot_rows(A)
    if keep:
        Ak = flint.fmpq_mat(len(keep), N)
        for i, r in enumerate(keep):
            for c, v in rows[r].items():
                Ak[i, c] = exact.fq(v)
        resid = Ak * zq - flint.fmpq_mat(len(keep), 1, [bq[r, 0] for r in keep])
        w = (Ak * Ak.transpose()).solve(resid)
        zq = zq - Ak.transpose() * w
    if A * zq != bq:
        raise RationalizationError(NOT_PSD, "identity is inconsistent after projection")
    return [exact.to_fraction(zq[i, 0]) for i in range(N)]


# ---------------------------------------------------------------------------
# top level


def _exact_multiplier(method: str, order: int, n: int, m: int) -> Polynomial:
    base = sum_of_coordinate_squares(n, m, RATIONAL).to_polynomial()
    return base ** order


def _target(F: Biform, scale: Fraction) -> Polynomial:
    return F.to_polynomial().scale(1 / scale)


def certify_rational(F: Biform, cert, zeros: Sequence, params: Optional[RoundingParams] = None) -> ExactCertificate:
    """Turn a numerical CNR / plain-SOS / Hilbert certificate of ``F`` into an exact one."""
    if F.mode != RATIONAL:
        raise ModeMismatch("exact certification needs a rational-mode form")
    if cert.method not in ("sos", "cnr", "hilbert"):
        raise RationalizationError(UNSUPPORTED, f"method {cert.method!r} has no exact pipeline")
    params = params or RoundingParams()
    basis = list(cert.basis)
    face = facial_reduce(basis, zeros)
    Wf = np.array(face.W, dtype=float)
    Wp = np.linalg.pinv(Wf)
    Ghat = Wp @ np.asarray(cert.gram, dtype=float) @ Wp.T
    mu = float(np.linalg.eigvalsh(0.5 * (Ghat + Ghat.T))[0])
    if cert.method == "hilbert":
        mu = min(mu, float(np.linalg.eigvalsh(cert.multiplier_gram)[0]))
    if mu <= 0:
        raise RationalizationError(MU_TOO_SMALL, f"minimal face eigenvalue {mu:.3e}")
    scale = Fraction(cert.scale).limit_denominator(10 ** 6)
    target = _target(F, scale)

    system = _ExactSystem()
    fpolys = _face_polys(basis, face)
    k = face.dim
    for a in range(k):
        for b in range(a, k):
            terms = _mul_terms(fpolys[a], fpolys[b])
            if a != b:
                terms = {e: 2 * v for e, v in terms.items()}
            system.add_column(_Unknown("gram", a, b), terms)
    sbasis = list(cert.multiplier_basis)
    if cert.method == "hilbert":
        Fterms = dict(target.terms)
        s = len(sbasis)
        for a in range(s):
            for b in range(a, s):
                mono = tuple(i + j for i, j in zip(sbasis[a], sbasis[b]))
                factor = Fraction(-1 if a == b else -2)
                terms = {tuple(i + j for i, j in zip(mono, e)): factor * v for e, v in Fterms.items()}
                c = system.add_column(_Unknown("sigma", a, b), terms)
                if a == b:
                    system.add_entry("trace", c, Fraction(1))
        system.rhs[system.row("trace")] = Fraction(1)
    else:
        system.set_target(target * _exact_multiplier(cert.method, cert.order, F.n, F.m) if cert.order else target)
    rows = system.sparse_rows()
    bvec = system.b()

    def float_values():
        out = []
        for u in system.cols:
            M = Ghat if u.block == "gram" else cert.multiplier_gram
            out.append(0.5 * (M[u.a, u.b] + M[u.b, u.a]))
        return out

    zf = float_values()
    weights = np.array([1.0 if u.a == u.b else 2.0 for u in system.cols])
    A_float = sp.csr_matrix(
        ([float(v) for row in rows for v in row.values()],
         ([r for r, row in enumerate(rows) for _ in row], [c for row in rows for c in row])),
        shape=(len(rows), len(zf)),
    )
    b_float = np.array([float(v) for v in bvec])
    zf_arr = np.array(zf)

    def estimate(bits):
        den = float(1 << bits)
        zr = np.round(zf_arr * den) / den
        return (math.sqrt(float(weights @ (zr - zf_arr) ** 2)),
                float(np.linalg.norm(A_float @ zr - b_float)))

    # the smallest precision at which the perturbation bound guarantees a PSD projection
    bits = params.bits
    top = params.bits + 4 * (params.max_rounds - 1)
    while bits < top:
        tau_f, eps_f = estimate(bits)
        if tau_f ** 2 + eps_f ** 2 <= mu ** 2:
            break
        bits += 4
    last_reason, last_detail = NOT_PSD, ""
    while bits <= top:
        den = 1 << bits
        z = [Fraction(int(round(v * den)), den) for v in zf]
        tau = math.sqrt(sum((float(zi) - vi) ** 2 * (1 if u.a == u.b else 2)
                            for zi, vi, u in zip(z, zf, system.cols)))
        eps = math.sqrt(sum(float(sum((v * z[c] for c, v in row.items()), Fraction(0)) - bb) ** 2
                            for row, bb in zip(rows, bvec)))
        zp = project_affine(z, rows, bvec)
        dist = math.sqrt(sum(float(a - b) ** 2 for a, b in zip(zp, z)))
        G = np.empty((k, k), dtype=object)
        S = np.empty((len(sbasis), len(sbasis)), dtype=object) if sbasis else None
        for val, u in zip(zp, system.cols):
            M = G if u.block == "gram" else S
            M[u.a, u.b] = M[u.b, u.a] = val
        piv = ldl_pivots(G)
        spiv = ldl_pivots(S) if S is not None else []
        if piv is not None and spiv is not None:
            out = ExactCertificate(
                method=cert.method, order=cert.order, nvars=cert.nvars, basis=tuple(basis), face=face,
                gram_face=G, scale=scale, pivots=piv, multiplier_basis=tuple(sbasis), multiplier_gram=S,
                multiplier_pivots=spiv, bits=bits, tau=tau, eps=eps, mu=mu, projection_distance=dist,
            )
            out.checksum = checksum(F, out)
            return out
        last_reason = MOVED_TOO_FAR if dist > mu else NOT_PSD
        last_detail = f"bits {bits}, projection moved {dist:.3e}, mu {mu:.3e}"
        bits += 4
    raise RationalizationError(last_reason, last_detail)


def checksum(F: Biform, cert: ExactCertificate) -> str:
    payload = {
        "form": sorted([list(k) + [str(v)] for k, v in F.coeffs.items()]),
        "basis": [list(e) for e in cert.basis],
        "method": cert.method,
        "order": cert.order,
        "scale": str(cert.scale),
    }
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()


def exact_lhs(F: Biform, cert: ExactCertificate) -> Polynomial:
    target = _target(F, cert.scale)
    if cert.method == "hilbert":
        sigma = _gram_poly_exact(cert.multiplier_basis, cert.multiplier_gram, cert.nvars)
        return sigma * target
    if cert.order:
        return target * _exact_multiplier(cert.method, cert.order, F.n, F.m)
    return target


def _gram_poly_exact(basis, G, nvars) -> Polynomial:
    terms: Dict[tuple, Fraction] = {}
    for a, ea in enumerate(basis):
        for b, eb in enumerate(basis):
            v = Fraction(G[a, b])
            if v:
                e = tuple(i + j for i, j in zip(ea, eb))
                terms[e] = terms.get(e, Fraction(0)) + v
    return Polynomial(nvars, terms, RATIONAL)


def exact_residual(F: Biform, cert: ExactCertificate) -> Fraction:
    """Max coefficient gap of the identity in exact arithmetic (0 for a valid certificate)."""
    rhs = _gram_poly_exact(cert.basis, cert.gram, cert.nvars)
    diff = exact_lhs(F, cert) - rhs
    return max((abs(c) for c in diff.terms.values()), default=Fraction(0))


def verify_exact(F: Biform, cert: ExactCertificate) -> bool:
    """Re-check an exact certificate from its data alone."""
    if F.mode != RATIONAL:
        raise ModeMismatch("exact verification needs a rational-mode form")
    W = cert.face.array()
    for v in cert.face.kernel:
        if any(x != 0 for x in np.array(v, dtype=object).dot(W)):
            return False
    if ldl_pivots(cert.gram_face) is None:
        return False
    if cert.multiplier_gram is not None:
        if ldl_pivots(cert.multiplier_gram) is None:
            return False
        if sum(cert.multiplier_gram[i, i] for i in range(len(cert.multiplier_basis))) != 1:
            return False
    return exact_residual(F, cert) == 0
