"""Command-line front end: ``pncp gen|check|entangle|ppt|bench|verify``."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from .construct import ConstructionConfig, construct_pncp
from .errors import DimensionMismatch, FinalFormIsSos, NoDeltaFound, PncpError, RationalizationError
from .polyalg import FLOAT, RATIONAL, Biform, biform_from_dict, map_from_dict
from .quantum import ENTANGLED, DensityMatrix, detect_entanglement, ppt_check
from .relax import CERTIFIERS, METHODS, GramCertificate, is_sos, verify_certificate
from .sdpcore import FEASIBLE, INFEASIBLE

EXIT_OK = 0
EXIT_NEGATIVE = 1
EXIT_NO_DELTA = 2
EXIT_FINAL_SOS = 3
EXIT_USAGE = 64
EXIT_DATA = 65

log = logging.getLogger("pncp")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


class MalformedInput(Exception):
    pass


def _read_json(path) -> dict:
    try:
        with open(path) as fh:
            d = json.load(fh)
    except (OSError, ValueError) as exc:
        raise MalformedInput(f"cannot read {path}: {exc}") from exc
    if not isinstance(d, dict):
        raise MalformedInput(f"{path}: expected a JSON object")
    return d


def _load_form(path):
    """A biform plus the stored certificate if the file is a construction."""
    d = _read_json(path)
    try:
        if d.get("type") == "construction":
            F = biform_from_dict(d["form"])
            cert = d.get("certificate")
            return F, (GramCertificate.from_dict(cert) if cert else None), d
        return biform_from_dict(d), None, d
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedInput(f"{path}: {exc}") from exc


def _load_state(path) -> DensityMatrix:
    d = _read_json(path)
    try:
        return DensityMatrix.from_dict(d)
    except DimensionMismatch:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedInput(f"{path}: {exc}") from exc


def _write(text: str, out: Optional[str]):
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------------------
# gen


def cmd_gen(args) -> int:
    if args.n < 3 or args.m < 3:
        print("error: need n, m >= 3", file=sys.stderr)
        return EXIT_USAGE
    cfg = ConstructionConfig(n=args.n, m=args.m, seed=args.seed, attempts=args.attempts,
                             mode=RATIONAL if args.rational else FLOAT)
    try:
        result = construct_pncp(cfg, args.method)
    except NoDeltaFound as exc:
        print(f"NoDeltaFound: {exc}", file=sys.stderr)
        return EXIT_NO_DELTA
    except FinalFormIsSos as exc:
        print(f"FinalFormIsSos: {exc}", file=sys.stderr)
        return EXIT_FINAL_SOS
    doc = result.to_dict()
    # exact certificates for Hilbert are supported by the library but the
    # projection takes minutes, so the CLI emits them for CNR only
    if args.rational and args.method == "cnr":
        from .rationalize import certify_rational

        try:
            doc["exact_certificate"] = certify_rational(result.F, result.certificate, result.zeros).to_dict()
        except RationalizationError as exc:
            doc["exact_certificate"] = None
            doc["exact_failure"] = str(exc)
            print(f"exact certification failed: {exc}", file=sys.stderr)
    _write(json.dumps(doc, indent=1, sort_keys=True) + "\n", args.out)
    print(f"Certified {args.method} order {result.outcome.order} delta {doc['delta']}", file=sys.stderr)
    return EXIT_OK


# ---------------------------------------------------------------------------
# check / verify


def cmd_check(args) -> int:
    F, stored, doc = _load_form(args.form)
    if args.exact:
        return _verify_exact_doc(doc, F)
    if stored is not None and not verify_certificate(F, stored):
        print("VerificationFailed: stored certificate does not reproduce the form")
        return EXIT_NEGATIVE
    method = args.method or (doc.get("method") if doc.get("type") == "construction" else "sos")
    if method == "sos":
        res = is_sos(F)
        label = {FEASIBLE: "Sos", INFEASIBLE: "NotSos"}.get(res.status, "Unknown")
        print(label)
        return EXIT_OK if res.status in (FEASIBLE, INFEASIBLE) else EXIT_NEGATIVE
    k = args.k if args.k is not None else int(doc.get("order", 2 if method in ("hilbert", "jacobian") else 1))
    out = CERTIFIERS[method](F, k)
    if out.certified:
        print(f"Certified {method} order {k} residual {out.certificate.max_error:.3e}")
        return EXIT_OK
    print(f"NotCertified {method} order {k}: {out.reason}")
    return EXIT_NEGATIVE


def _verify_exact_doc(doc: dict, F: Biform) -> int:
    from .rationalize import ExactCertificate, verify_exact

    data = doc.get("exact_certificate") if doc.get("type") == "construction" else doc
    if not data:
        print("VerificationFailed: no exact certificate in file")
        return EXIT_NEGATIVE
    try:
        cert = ExactCertificate.from_dict(data)
    except (KeyError, TypeError, ValueError, ZeroDivisionError) as exc:
        raise MalformedInput(str(exc)) from exc
    if F.mode != RATIONAL:
        print("VerificationFailed: exact verification needs a rational form")
        return EXIT_NEGATIVE
    if verify_exact(F, cert):
        print("ExactCertificateValid")
        return EXIT_OK
    print("VerificationFailed")
    return EXIT_NEGATIVE


def cmd_verify(args) -> int:
    F, stored, doc = _load_form(args.file)
    if args.exact:
        return _verify_exact_doc(doc, F)
    if stored is None:
        print("VerificationFailed: no certificate in file")
        return EXIT_NEGATIVE
    if verify_certificate(F, stored):
        print("CertificateValid")
        return EXIT_OK
    print("VerificationFailed")
    return EXIT_NEGATIVE


# ---------------------------------------------------------------------------
# entangle / ppt


def cmd_ppt(args) -> int:
    rho = _load_state(args.state)
    res = ppt_check(rho)
    lam = res.min_eigenvalue
    print(f"{res.status} min_eigenvalue {lam}")
    return EXIT_OK if res.status == ENTANGLED else EXIT_NEGATIVE


def cmd_entangle(args) -> int:
    rho = _load_state(args.state)
    maps = None
    if args.map:
        d = _read_json(args.map)
        try:
            maps = [map_from_dict(d)]
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedInput(f"{args.map}: {exc}") from exc
    side = rho.dims[1] if args.factor == "second" else rho.dims[0]
    cfg = ConstructionConfig(n=side, m=args.out_dim or side, seed=args.seed) if side >= 3 else None
    if maps is None and cfg is None:
        print("error: generated maps need a factor of size >= 3", file=sys.stderr)
        return EXIT_USAGE
    report = detect_entanglement(rho, args.attempts, cfg=cfg, maps=maps, factor=args.factor)
    print(f"{report.status} min_eigenvalue {report.min_eigenvalue} attempts {report.attempts_used}")
    if args.out:
        _write(json.dumps(report.to_dict(), indent=1, sort_keys=True) + "\n", args.out)
    return EXIT_OK if report.status == ENTANGLED else EXIT_NEGATIVE


# ---------------------------------------------------------------------------
# bench


@dataclass
class BenchRow:
    n: int
    m: int
    method: str
    trials: int
    success_pct: float
    mean_time_s: float
    mean_residual: float
    mean_delta: float

    def as_list(self):
        return [self.n, self.m, self.method, self.trials, f"{self.success_pct:.1f}",
                f"{self.mean_time_s:.3f}", f"{self.mean_residual:.3e}", f"{self.mean_delta:.4f}"]


BENCH_COLUMNS = ["n", "m", "method", "trials", "success_pct", "mean_time_s", "mean_residual", "mean_delta"]


def run_trial(n: int, m: int, method: str, seed: int) -> dict:
    """One construction; residual is taken from the last solve even on failure."""
    t0 = time.perf_counter()
    out = {"seed": seed, "success": False, "delta": None, "residual": math.nan, "error": ""}
    try:
        res = construct_pncp(ConstructionConfig(n=n, m=m, seed=seed), method)
        out.update(success=True, delta=float(res.delta), residual=res.certificate.max_error, result=res)
    except (NoDeltaFound, FinalFormIsSos) as exc:
        out["error"] = type(exc).__name__
        last = exc.last
        if last is not None:
            if last.certificate is not None:
                out["residual"] = last.certificate.max_error
            elif last.report is not None:
                out["residual"] = last.report.residual
    except PncpError as exc:
        out["error"] = type(exc).__name__
    out["time"] = time.perf_counter() - t0
    return out


def _trial_star(a):
    r = run_trial(*a)
    r.pop("result", None)
    return r


def summarize(n, m, method, trials: List[dict]) -> BenchRow:
    ok = [t for t in trials if t["success"]]
    res = [t["residual"] for t in trials if math.isfinite(t["residual"])]
    return BenchRow(
        n, m, method, len(trials),
        100.0 * len(ok) / len(trials) if trials else 0.0,
        float(np.mean([t["time"] for t in trials])) if trials else math.nan,
        float(np.mean(res)) if res else math.nan,
        float(np.mean([t["delta"] for t in ok])) if ok else math.nan,
    )


def trial_seeds(master: int, count: int) -> List[int]:
    return [master + t for t in range(count)]


def bench(sizes, methods, trials: int, seed: int, jobs: int = 1) -> List[BenchRow]:
    rows = []
    for n, m in sizes:
        for method in methods:
            tasks = [(n, m, method, s) for s in trial_seeds(seed, trials)]
            if jobs > 1:
                with ProcessPoolExecutor(jobs) as pool:
                    results = list(pool.map(_trial_star, tasks))
            else:
                results = [_trial_star(t) for t in tasks]
            rows.append(summarize(n, m, method, results))
    return rows


def _parse_sizes(text: str):
    sizes = []
    for part in text.split(","):
        try:
            n, m = (int(v) for v in part.lower().split("x"))
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad size {part!r}, expected NxM")
        if n < 3 or m < 3:
            raise argparse.ArgumentTypeError(f"size {part!r}: need n, m >= 3")
        sizes.append((n, m))
    return sizes


def _parse_methods(text: str):
    methods = [t.strip() for t in text.split(",") if t.strip()]
    for t in methods:
        if t not in METHODS:
            raise argparse.ArgumentTypeError(f"unknown method {t!r}")
    return methods


def cmd_bench(args) -> int:
    rows = bench(args.sizes, args.methods, args.trials, args.seed, args.jobs)
    fh = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(BENCH_COLUMNS)
        for r in rows:
            w.writerow(r.as_list())
    finally:
        if args.out:
            fh.close()
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="pncp", description="Positive but not completely positive maps from biforms.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", help="construct a pncp map")
    g.add_argument("--n", type=int, default=3)
    g.add_argument("--m", type=int, default=3)
    g.add_argument("--method", choices=METHODS, default="hilbert")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--attempts", type=int, default=10)
    g.add_argument("--rational", action="store_true")
    g.add_argument("--out")
    g.set_defaults(func=cmd_gen)

    c = sub.add_parser("check", help="certify a stored form")
    c.add_argument("--form", required=True)
    c.add_argument("--method", choices=("sos",) + METHODS)
    c.add_argument("--k", type=int)
    c.add_argument("--exact", action="store_true")
    c.set_defaults(func=cmd_check)

    v = sub.add_parser("verify", help="re-validate a stored certificate")
    v.add_argument("file")
    v.add_argument("--exact", action="store_true")
    v.set_defaults(func=cmd_verify)

    e = sub.add_parser("entangle", help="search a map witnessing entanglement")
    e.add_argument("--state", required=True)
    e.add_argument("--attempts", type=int, default=5)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--map")
    e.add_argument("--out-dim", type=int)
    e.add_argument("--factor", choices=("first", "second"), default="second")
    e.add_argument("--out")
    e.set_defaults(func=cmd_entangle)

    t = sub.add_parser("ppt", help="partial transpose test")
    t.add_argument("--state", required=True)
    t.set_defaults(func=cmd_ppt)

    b = sub.add_parser("bench", help="success rates and timings as CSV")
    b.add_argument("--sizes", type=_parse_sizes, default=[(3, 3)])
    b.add_argument("--methods", type=_parse_methods, default=list(METHODS))
    b.add_argument("--trials", type=int, default=10)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--jobs", type=int, default=1)
    b.add_argument("--out")
    b.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        return args.func(args)
    except MalformedInput as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except DimensionMismatch as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
