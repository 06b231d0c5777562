import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from dunkl_hardy import build_root_system, make_grid

settings.register_profile("default", deadline=None, derandomize=True, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

# filled by tests/test_acceptance.py, printed at the end of the session
ACCEPTANCE: dict = {}


def record(criterion: int, label: str, ok: bool, detail: str = "") -> None:
    ACCEPTANCE.setdefault(criterion, []).append((label, bool(ok), detail))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for crit in sorted(ACCEPTANCE):
        entries = ACCEPTANCE[crit]
        ok = all(e[1] for e in entries)
        failed = [f"{label} ({detail})" for label, good, detail in entries if not good]
        summary = "; ".join(failed) if failed else "; ".join(
            f"{label}: {detail}" for label, _, detail in entries if detail)
        tr.write_line(f"criterion {crit:2d}: {'PASS' if ok else 'FAIL'}  {summary}")


@pytest.fixture(scope="session")
def rs1():
    return build_root_system("Z2", k=1.0)


@pytest.fixture(scope="session")
def rs0():
    return build_root_system("Z2", k=0.0)


@pytest.fixture(scope="session")
def rs2():
    return build_root_system("Z2^N", k=[1.0, 1.0])


@pytest.fixture(scope="session")
def grid1(rs1):
    return make_grid(rs1, 8.0, 256)


@pytest.fixture(scope="session")
def grid0(rs0):
    return make_grid(rs0, 8.0, 256)


@pytest.fixture(scope="session")
def grid2(rs2):
    return make_grid(rs2, 4.0, 48)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
