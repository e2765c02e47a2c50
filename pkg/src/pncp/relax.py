"""Nonnegativity certificates for biforms: plain SOS, Hilbert, CNR, KKT and
Jacobian relaxations, and the delta search used by the construction."""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import NoDeltaFound
from .polyalg import (
    FLOAT,
    Biform,
    Polynomial,
    bihomogeneous_monomials,
    biform_eval_many,
    monomials_upto,
    sum_of_coordinate_squares,
)
from .sdpcore import FEASIBLE, INFEASIBLE, UNKNOWN, SdpBuilder, SolveReport, ToleranceConfig, solve

log = logging.getLogger(__name__)

CERTIFIED = "Certified"
NOT_CERTIFIED = "NotCertified"
METHODS = ("hilbert", "cnr", "kkt", "jacobian")


@dataclass(frozen=True)
class MethodParams:
    method: str = "hilbert"
    k_start: Optional[int] = None
    k_max: int = 2
    l_max: int = 2
    delta_exponents: Tuple[int, ...] = tuple(range(7))  # delta = 2^-t
    delta_min_accept: float = 1e-4
    tol: ToleranceConfig = field(default_factory=ToleranceConfig.from_env)

    def orders(self) -> List[int]:
        if self.method == "hilbert":
            start = 2 if self.k_start is None else self.k_start
            return list(range(start, self.k_max + 1))
        if self.method == "cnr":
            return list(range(1 if self.k_start is None else self.k_start, self.l_max + 1))
        if self.method == "kkt":
            return list(range(1 if self.k_start is None else self.k_start, self.k_max + 1))
        return [2]


@dataclass
class GramCertificate:
    """``multiplier * F / scale - ideal part = basis^T gram basis``."""

    method: str
    order: int
    nvars: int
    basis: Tuple[Tuple[int, ...], ...]
    gram: np.ndarray
    residual: float
    mu: float
    scale: float = 1.0
    multiplier_basis: Tuple[Tuple[int, ...], ...] = ()
    multiplier_gram: Optional[np.ndarray] = None
    free: Dict[object, float] = field(default_factory=dict)
    max_error: float = float("nan")

    def to_dict(self) -> dict:
        d = {
            "method": self.method,
            "order": self.order,
            "nvars": self.nvars,
            "scale": self.scale,
            "basis": [list(e) for e in self.basis],
            "gram": self.gram.tolist(),
            "residual": self.residual,
            "mu": self.mu,
            "max_error": self.max_error,
        }
        if self.multiplier_gram is not None:
            d["multiplier_basis"] = [list(e) for e in self.multiplier_basis]
            d["multiplier_gram"] = self.multiplier_gram.tolist()
        if self.free:
            d["free"] = [[_label_json(k), v] for k, v in self.free.items()]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "GramCertificate":
        mg = d.get("multiplier_gram")
        return cls(
            method=d["method"],
            order=int(d["order"]),
            nvars=int(d["nvars"]),
            basis=tuple(tuple(e) for e in d["basis"]),
            gram=np.array(d["gram"], dtype=float),
            residual=float(d["residual"]),
            mu=float(d["mu"]),
            scale=float(d.get("scale", 1.0)),
            multiplier_basis=tuple(tuple(e) for e in d.get("multiplier_basis", [])),
            multiplier_gram=None if mg is None else np.array(mg, dtype=float),
            free={_label_from_json(k): float(v) for k, v in d.get("free", [])},
            max_error=float(d.get("max_error", "nan")),
        )


def _label_json(label):
    kind, idx, exp = label
    return [kind, idx, list(exp)]


def _label_from_json(item):
    kind, idx, exp = item
    return (kind, idx, tuple(exp))


@dataclass
class CertifyOutcome:
    status: str
    method: str
    order: int
    certificate: Optional[GramCertificate] = None
    delta: Optional[object] = None
    report: Optional[SolveReport] = None
    reason: str = ""

    @property
    def certified(self) -> bool:
        return self.status == CERTIFIED


@dataclass
class SosResult:
    status: str  # Feasible / Infeasible / Unknown
    certificate: Optional[GramCertificate] = None
    report: Optional[SolveReport] = None


# ---------------------------------------------------------------------------
# helpers


def gram_polynomial(basis: Sequence, G, nvars: int) -> Polynomial:
    terms: Dict[tuple, float] = {}
    G = np.asarray(G, dtype=float)
    for a, ea in enumerate(basis):
        for b, eb in enumerate(basis):
            if G[a, b] != 0:
                e = tuple(i + j for i, j in zip(ea, eb))
                terms[e] = terms.get(e, 0.0) + float(G[a, b])
    return Polynomial(nvars, terms, FLOAT)


def normalised(F: Biform) -> Tuple[Polynomial, float]:
    Ff = F.to_float() if F.mode != FLOAT else F
    scale = Ff.max_abs_coeff() or 1.0
    return Ff.to_polynomial().scale(1.0 / scale), scale


def sphere_samples(n: int, m: int, count: int, seed: int = 0):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((count, n))
    Y = rng.standard_normal((count, m))
    X /= np.linalg.norm(X, axis=1, keepdims=True)
    Y /= np.linalg.norm(Y, axis=1, keepdims=True)
    return X, Y


def sphere_min(F: Biform, count: int = 100_000, seed: int = 0) -> float:
    """Monte Carlo minimum of F over products of unit spheres."""
    X, Y = sphere_samples(F.n, F.m, count, seed)
    return float(np.min(biform_eval_many(F.to_float(), X, Y)))


def sphere_oracle_ok(F: Biform, count: int = 100_000, seed: int = 0, rel: float = 1e-8) -> bool:
    return sphere_min(F, count, seed) >= -rel * F.max_abs_coeff()


def _cnr_multiplier(n: int, m: int, power: int) -> Polynomial:
    return sum_of_coordinate_squares(n, m).to_polynomial() ** power


def _report_certificate(method, order, basis, report: SolveReport, nvars, scale, block="gram", **kw):
    return GramCertificate(
        method=method,
        order=order,
        nvars=nvars,
        basis=tuple(basis),
        gram=report.blocks[block],
        residual=report.residual,
        mu=report.mu,
        scale=scale,
        **kw,
    )


def _outcome(method, order, report: SolveReport, cert_factory, F: Biform) -> CertifyOutcome:
    if report.status != FEASIBLE:
        return CertifyOutcome(NOT_CERTIFIED, method, order, report=report, reason=f"{report.status}: {report.message}")
    cert = cert_factory()
    cert.max_error = certificate_error(F, cert)
    if not cert.max_error <= 1e-6:
        return CertifyOutcome(NOT_CERTIFIED, method, order, report=report,
                              reason=f"reconstruction error {cert.max_error:.2e}")
    return CertifyOutcome(CERTIFIED, method, order, certificate=cert, report=report)


def _zero_outcome(F: Biform, method: str, order: int) -> CertifyOutcome:
    cert = GramCertificate(method, order, F.nvars, (), np.zeros((0, 0)), 0.0, 0.0, max_error=0.0)
    return CertifyOutcome(CERTIFIED, method, order, certificate=cert, reason="zero form")


# ---------------------------------------------------------------------------
# plain SOS and CNR


def is_sos(F: Biform, tol: Optional[ToleranceConfig] = None) -> SosResult:
    """Gram search over the bilinear monomials ``x_i y_j``."""
    if F.is_zero():
        return SosResult(FEASIBLE, _zero_outcome(F, "sos", 0).certificate)
    out = cnr_certify(F, 0, tol)
    status = FEASIBLE if out.certified else (out.report.status if out.report else UNKNOWN)
    if status == FEASIBLE and not out.certified:
        status = UNKNOWN
    return SosResult(status, out.certificate, out.report)


def cnr_certify(F: Biform, l: int, tol: Optional[ToleranceConfig] = None) -> CertifyOutcome:
    """``(sum (x_i y_j)^2)^l F`` is SOS over the bidegree (l+1, l+1) monomials."""
    method = "sos" if l == 0 else "cnr"
    if F.is_zero():
        return _zero_outcome(F, method, l)
    tol = tol or ToleranceConfig.from_env()
    P, scale = normalised(F)
    basis = bihomogeneous_monomials(F.n, F.m, l + 1, l + 1)
    bld = SdpBuilder()
    g = bld.add_block("gram", len(basis))
    bld.gram_polynomial(g, basis)
    bld.target(P * _cnr_multiplier(F.n, F.m, l) if l else P)
    report = solve(bld.build(), tol)
    return _outcome(method, l, report, lambda: _report_certificate(method, l, basis, report, F.nvars, scale), F)


def cnr_max_delta(f: Biform, H: Biform, l: int, tol: Optional[ToleranceConfig] = None):
    """Largest ``delta <= 1`` with ``(sum z^2)^l (delta f + H)`` SOS.

    Returns ``(delta_star, report, basis, scale)``; the same scale is applied
    to f and H so that the Gram blocks are comparable across delta.
    """
    tol = tol or ToleranceConfig.from_env()
    scale = max(H.to_float().max_abs_coeff(), 1e-300)
    mult = _cnr_multiplier(f.n, f.m, l)
    fp = f.to_float().to_polynomial().scale(1.0 / scale) * mult
    hp = H.to_float().to_polynomial().scale(1.0 / scale) * mult
    basis = bihomogeneous_monomials(f.n, f.m, l + 1, l + 1)
    bld = SdpBuilder()
    g = bld.add_block("gram", len(basis))
    d = bld.add_block("delta", 1)
    s = bld.add_block("slack", 1)
    bld.gram_polynomial(g, basis)
    for e, c in fp.terms.items():
        bld.gram_entry(e, d, 0, 0, -float(c))
    bld.target(hp)
    bld.gram_entry("cap", d, 0, 0, 1.0)
    bld.gram_entry("cap", s, 0, 0, 1.0)
    bld.rhs("cap", 1.0)
    prob = bld.build(objective={"blocks": {"delta": -np.ones((1, 1))}})
    report = solve(prob, tol)
    delta_star = float(report.blocks["delta"][0, 0]) if report.blocks else 0.0
    return delta_star, report, basis, scale, prob


def cnr_base_gram(hs, n: int, m: int, l: int, basis) -> np.ndarray:
    """Exact-structure Gram of ``(sum z^2)^l * sum h_i^2`` in ``basis``."""
    index = {e: t for t, e in enumerate(basis)}
    G = np.zeros((len(basis), len(basis)))
    pairs = [(i, j) for i in range(n) for j in range(m)]
    for alpha in itertools.combinations_with_replacement(range(len(pairs)), l):
        counts = {}
        for a in alpha:
            counts[a] = counts.get(a, 0) + 1
        coef = math.factorial(l)
        for c in counts.values():
            coef //= math.factorial(c)
        shift = [0] * (n + m)
        for a in alpha:
            i, j = pairs[a]
            shift[i] += 1
            shift[n + j] += 1
        for h in hs:
            v = np.zeros(len(basis))
            for i in range(n):
                for j in range(m):
                    e = list(shift)
                    e[i] += 1
                    e[n + j] += 1
                    v[index[tuple(e)]] += float(h.H[i][j])
            G += coef * np.outer(v, v)
    return G


# ---------------------------------------------------------------------------
# Hilbert


def hilbert_certify(F: Biform, k: int, tol: Optional[ToleranceConfig] = None) -> CertifyOutcome:
    """Search an SOS ``sigma`` of bidegree (2k, 2k), trace one, with sigma F SOS."""
    if F.is_zero():
        return _zero_outcome(F, "hilbert", k)
    tol = tol or ToleranceConfig.from_env()
    P, scale = normalised(F)
    sbasis = bihomogeneous_monomials(F.n, F.m, k, k)
    basis = bihomogeneous_monomials(F.n, F.m, k + 1, k + 1)
    bld = SdpBuilder()
    g = bld.add_block("gram", len(basis))
    s = bld.add_block("sigma", len(sbasis))
    bld.gram_polynomial(g, basis)
    bld.gram_polynomial(s, sbasis, multiplier=P, sign=-1.0)
    for a in range(len(sbasis)):
        bld.gram_entry("trace", s, a, a, 1.0)
    bld.rhs("trace", 1.0)
    report = solve(bld.build(), tol)

    def cert():
        return _report_certificate(
            "hilbert", k, basis, report, F.nvars, scale,
            multiplier_basis=tuple(sbasis), multiplier_gram=report.blocks["sigma"],
        )

    return _outcome("hilbert", k, report, cert, F)


# ---------------------------------------------------------------------------
# KKT and Jacobian


def sphere_polynomial(nvars: int, total: int) -> Polynomial:
    """``sum_{i < nvars} v_i^2 - 1`` in a ring with ``total`` variables."""
    terms = {}
    for i in range(nvars):
        e = [0] * total
        e[i] = 2
        terms[tuple(e)] = 1.0
    terms[(0,) * total] = -1.0
    return Polynomial(total, terms, FLOAT)


def _embed(p: Polynomial, total: int) -> Polynomial:
    pad = (0,) * (total - p.nvars)
    return Polynomial(total, {e + pad: c for e, c in p.terms.items()}, p.mode)


def kkt_generators(P: Polynomial) -> Tuple[List[Polynomial], Polynomial, Polynomial]:
    """Generators ``dP/dv_i - lambda ds/dv_i``, the sphere ``s``, and ``lambda``
    in the ring ``(v, lambda)``."""
    N = P.nvars
    R = N + 1
    lam = Polynomial.variable(R, N)
    Pe = _embed(P, R)
    gens = []
    for i in range(N):
        vi = Polynomial.variable(R, i)
        gens.append(Pe.derivative(i) - lam * vi * 2.0)
    return gens, sphere_polynomial(N, R), lam


def kkt_certify(F: Biform, k: int, tol: Optional[ToleranceConfig] = None) -> CertifyOutcome:
    """``F - sum phi_i (dF/dv_i - 2 lambda v_i) - lambda eta s`` SOS, deg phi, eta <= k."""
    if F.is_zero():
        return _zero_outcome(F, "kkt", k)
    tol = tol or ToleranceConfig.from_env()
    P, scale = normalised(F)
    N = P.nvars
    R = N + 1
    gens, s, lam = kkt_generators(P)
    mults = monomials_upto(R, k)
    top = max(4, 3 + k)
    # a Gram block over degree > top/2 monomials would have to vanish (its
    # top-degree square terms cannot cancel), so the half degree suffices
    basis = monomials_upto(R, top // 2)
    bld = SdpBuilder()
    g = bld.add_block("gram", len(basis))
    bld.gram_polynomial(g, basis)
    one = lambda e: Polynomial(R, {e: 1.0}, FLOAT)
    for i, gi in enumerate(gens):
        for e in mults:
            bld.free_polynomial(bld.add_free(("phi", i, e)), one(e) * gi)
    ls = lam * s
    for e in mults:
        bld.free_polynomial(bld.add_free(("eta", 0, e)), one(e) * ls)
    bld.target(_embed(P, R))
    report = solve(bld.build(), tol)

    def cert():
        c = _report_certificate("kkt", k, basis, report, R, scale)
        c.free = dict(report.free)
        return c

    return _outcome("kkt", k, report, cert, F)


def jacobian_generators(P: Polynomial) -> List[Polynomial]:
    """``phi_l = sum_{i<j, i+j=l} (dP/dv_i ds/dv_j - dP/dv_j ds/dv_i)``, l = 3..2N-1
    with 1-based indices."""
    N = P.nvars
    grads = [P.derivative(i) for i in range(N)]
    v = [Polynomial.variable(N, i) for i in range(N)]
    out = []
    for l in range(3, 2 * N):
        acc = Polynomial.zero(N)
        for i in range(1, N + 1):
            j = l - i
            if i < j <= N:
                acc = acc + grads[i - 1] * v[j - 1] * 2.0 - grads[j - 1] * v[i - 1] * 2.0
        out.append(acc)
    return out


def jacobian_certify(F: Biform, k: int = 2, tol: Optional[ToleranceConfig] = None) -> CertifyOutcome:
    """``F - eta_0 s - sum c_l phi_l`` SOS over monomials of degree <= 2."""
    if k != 2:
        raise ValueError("the Jacobian relaxation is defined for k = 2 only")
    if F.is_zero():
        return _zero_outcome(F, "jacobian", k)
    tol = tol or ToleranceConfig.from_env()
    P, scale = normalised(F)
    N = P.nvars
    s = sphere_polynomial(N, N)
    phis = jacobian_generators(P)
    basis = monomials_upto(N, 2)
    bld = SdpBuilder()
    g = bld.add_block("gram", len(basis))
    bld.gram_polynomial(g, basis)
    for e in monomials_upto(N, 2):
        bld.free_polynomial(bld.add_free(("eta", 0, e)), Polynomial(N, {e: 1.0}, FLOAT) * s)
    for t, phi in enumerate(phis):
        bld.free_polynomial(bld.add_free(("phi", t + 3, ())), phi)
    bld.target(P)
    report = solve(bld.build(), tol)

    def cert():
        c = _report_certificate("jacobian", k, basis, report, N, scale)
        c.free = dict(report.free)
        return c

    return _outcome("jacobian", k, report, cert, F)


# ---------------------------------------------------------------------------
# independent reconstruction


def certificate_lhs(F: Biform, cert: GramCertificate) -> Polynomial:
    """The polynomial the Gram matrix is supposed to represent, rebuilt from F."""
    P = F.to_float().to_polynomial().scale(1.0 / cert.scale)
    if cert.method in ("sos", "cnr"):
        return P * _cnr_multiplier(F.n, F.m, cert.order) if cert.order else P
    if cert.method == "hilbert":
        sigma = gram_polynomial(cert.multiplier_basis, cert.multiplier_gram, F.nvars)
        return sigma * P
    if cert.method == "kkt":
        gens, s, lam = kkt_generators(P)
        R = P.nvars + 1
        out = _embed(P, R)
        for (kind, i, e), c in cert.free.items():
            mono = Polynomial(R, {e: c}, FLOAT)
            out = out - mono * (gens[i] if kind == "phi" else lam * s)
        return out
    if cert.method == "jacobian":
        N = P.nvars
        s = sphere_polynomial(N, N)
        phis = jacobian_generators(P)
        out = P
        for (kind, i, e), c in cert.free.items():
            if kind == "eta":
                out = out - Polynomial(N, {e: c}, FLOAT) * s
            else:
                out = out - phis[i - 3].scale(c)
        return out
    raise ValueError(f"unknown method {cert.method!r}")


def certificate_error(F: Biform, cert: GramCertificate) -> float:
    """Max coefficient error between the rebuilt identity and ``basis^T G basis``."""
    if not cert.basis:
        return F.max_abs_coeff()
    lhs = certificate_lhs(F, cert)
    rhs = gram_polynomial(cert.basis, cert.gram, cert.nvars)
    return (lhs - rhs).max_abs_coeff()


def verify_certificate(F: Biform, cert: GramCertificate, tol: float = 1e-6, psd_tol: float = 1e-8) -> bool:
    if cert.basis and np.linalg.eigvalsh(0.5 * (cert.gram + cert.gram.T))[0] < -psd_tol:
        return False
    if cert.multiplier_gram is not None:
        mg = cert.multiplier_gram
        if np.linalg.eigvalsh(0.5 * (mg + mg.T))[0] < -psd_tol or abs(np.trace(mg) - 1) > tol:
            return False
    return certificate_error(F, cert) <= tol


# ---------------------------------------------------------------------------
# delta search


CERTIFIERS = {
    "hilbert": hilbert_certify,
    "cnr": cnr_certify,
    "kkt": kkt_certify,
    "jacobian": jacobian_certify,
}


def dyadic(t: int, mode: str):
    return Fraction(1, 2 ** t) if mode != FLOAT else 2.0 ** -t


def assemble(f: Biform, H: Biform, delta) -> Biform:
    return f.scale(delta) + H


def find_delta(f: Biform, hs, method: str, params: Optional[MethodParams] = None):
    """First certified ``(order, delta)`` with delta the inner loop, halving from 1."""
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}")
    params = params or MethodParams(method)
    from .polyalg import sum_of_squares_of

    H = sum_of_squares_of(hs)
    tried = []
    last = None
    if method == "cnr":
        for l in params.orders():
            out, last = _cnr_search(f, H, hs, l, params)
            if out is not None:
                return out.delta, out
            tried.append(f"l={l}")
        raise NoDeltaFound(f"cnr: no delta >= 2^-{max(params.delta_exponents)} for {', '.join(tried)}", last)
    certify = CERTIFIERS[method]
    for k in params.orders():
        for t in params.delta_exponents:
            delta = dyadic(t, f.mode)
            F = assemble(f, H, delta)
            out = _guarded(certify(F, k, params.tol), F)
            log.debug("%s k=%d delta=2^-%d: %s %s", method, k, t, out.status, out.reason)
            if out.certified:
                out.delta = delta
                return delta, out
            last = out
        tried.append(f"k={k}")
    raise NoDeltaFound(f"{method}: no delta >= 2^-{max(params.delta_exponents)} for {', '.join(tried)}", last)


def _guarded(out: CertifyOutcome, F: Biform) -> CertifyOutcome:
    # sigma F SOS with sigma SOS forces F >= 0, so a sampled negative value
    # exposes a certificate that only holds up to solver tolerance
    if out.certified and out.method in ("hilbert", "cnr") and not sphere_oracle_ok(F):
        return CertifyOutcome(NOT_CERTIFIED, out.method, out.order, report=out.report,
                              reason="certificate contradicted by sphere sampling")
    return out


def _cnr_search(f, H, hs, l, params: MethodParams) -> Tuple[Optional[CertifyOutcome], Optional[CertifyOutcome]]:
    # The certified deltas form an interval [0, delta*]: a Gram for delta*
    # and the explicit Gram of the delta = 0 form combine linearly.  One
    # maximisation therefore answers the whole halving scan.
    delta_star, report, basis, scale, prob = cnr_max_delta(f, H, l, params.tol)
    if report.status != FEASIBLE:
        return None, CertifyOutcome(NOT_CERTIFIED, "cnr", l, report=report, reason=report.message)
    G_star = report.blocks["gram"]
    last = CertifyOutcome(NOT_CERTIFIED, "cnr", l, report=report, reason=f"delta* = {delta_star:.3e}")
    G_zero = cnr_base_gram(hs, f.n, f.m, l, basis) / scale
    for t in params.delta_exponents:
        delta = dyadic(t, f.mode)
        if float(delta) <= params.delta_min_accept:
            break
        if float(delta) > delta_star * (1 + 1e-9) + 1e-12:
            continue
        theta = min(1.0, float(delta) / delta_star)
        G = theta * G_star + (1 - theta) * G_zero
        F = assemble(f, H, delta)
        out = _combined_outcome(F, l, basis, G, scale, params)
        if out is None:
            # numerical edge of the interval; confirm directly
            out = cnr_certify(F, l, params.tol)
        out = _guarded(out, F)
        if out.certified:
            out.delta = delta
            return out, out
        last = out
    return None, last


def _combined_outcome(F, l, basis, G, scale, params) -> Optional[CertifyOutcome]:
    mu = float(np.linalg.eigvalsh(G)[0])
    if mu < -params.tol.psd_tol:
        return None
    Fs = F.to_float()
    cert = GramCertificate("cnr", l, F.nvars, tuple(basis), G, 0.0, mu, scale=scale)
    lhs = certificate_lhs(Fs, cert)
    rhs = gram_polynomial(basis, G, F.nvars)
    diff = lhs - rhs
    cert.residual = float(np.sqrt(sum(c * c for c in diff.terms.values())))
    cert.max_error = diff.max_abs_coeff()
    if cert.residual > params.tol.feas_tol or cert.max_error > 1e-6:
        return None
    return CertifyOutcome(CERTIFIED, "cnr", l, certificate=cert)
