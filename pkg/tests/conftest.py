import json
from fractions import Fraction
from importlib import resources

import numpy as np
import pytest

from pncp.construct import ConstructionConfig, construct_pncp
from pncp.polyalg import RATIONAL, biform_from_dict, map_from_dict
from pncp.quantum import DensityMatrix


def load_fixture(name: str) -> dict:
    return json.loads(resources.files("pncp").joinpath("data", name).read_text())


@pytest.fixture(scope="session")
def f1():
    return biform_from_dict(load_fixture("example1_form.json"))


@pytest.fixture(scope="session")
def phi1():
    return map_from_dict(load_fixture("example1_map.json"))


@pytest.fixture(scope="session")
def phi2():
    return map_from_dict(load_fixture("example2_map.json"))


@pytest.fixture(scope="session")
def delta_state():
    return DensityMatrix.from_dict(load_fixture("example1_state.json"))


@pytest.fixture(scope="session")
def sigma_state():
    return DensityMatrix.from_dict(load_fixture("example2_state.json"))


@pytest.fixture(scope="session")
def bell():
    return DensityMatrix.from_dict(load_fixture("bell.json"))


@pytest.fixture(scope="session")
def cnr_result():
    return construct_pncp(ConstructionConfig(n=3, m=3, seed=0), "cnr")


@pytest.fixture(scope="session")
def rational_cnr_result():
    return construct_pncp(ConstructionConfig(n=3, m=3, seed=4, mode=RATIONAL), "cnr")


def frac_matrix(rows, scale=1):
    return np.array([[Fraction(v) * Fraction(scale) for v in row] for row in rows], dtype=object)


# acceptance results, printed once per criterion at the end of the run
ACCEPTANCE = {}


def record_acceptance(criterion: int, part: str, ok: bool, detail: str = ""):
    ACCEPTANCE.setdefault(criterion, []).append((part, bool(ok), detail))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for c in sorted(ACCEPTANCE):
        parts = ACCEPTANCE[c]
        verdict = "PASS" if all(ok for _, ok, _ in parts) else "FAIL"
        detail = "; ".join(f"{p} {'ok' if ok else 'FAILED'}{' (' + d + ')' if d else ''}" for p, ok, d in parts)
        terminalreporter.write_line(f"criterion {c:2d}: {verdict}  {detail}")
