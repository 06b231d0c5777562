"""Acceptance criteria 1 to 12 on the desk-scale systems.

Each experiment runs once per root system (cached for the session); every
test records one line per system, and the terminal summary prints one
pass/fail line per criterion.
"""
import functools
import time

import pytest

from conftest import record
from dunkl_hardy import build_root_system, load_config, run_experiment
from dunkl_hardy.experiments import IDENTITY_LIMITS, TWO_SIDED_LIMIT, kernel_identities
from dunkl_hardy.kernels import verify_t_lemma

SYSTEMS = {
    "Z2 k=0": "[root_system]\nfamily = Z2\nmultiplicity = 0\n",
    "Z2 k=0.5": "[root_system]\nfamily = Z2\nmultiplicity = 0.5\n",
    "Z2 k=1": "[root_system]\nfamily = Z2\nmultiplicity = 1\n",
    "Z2 k=2": "[root_system]\nfamily = Z2\nmultiplicity = 2\n",
    "Z2^2 k=(1,1)": "[root_system]\nfamily = Z2^N\nmultiplicity = 1, 1\n",
}
NAMES = list(SYSTEMS)
ATOMS_LIMIT = 50.0


def config(experiment, system):
    return load_config(f"[experiment]\nid = {experiment}\nseed = 0\n" + SYSTEMS[system])


@functools.lru_cache(maxsize=None)
def run(experiment, system):
    start = time.perf_counter()
    report = run_experiment(config(experiment, system))
    return report, time.perf_counter() - start


def cert(report, name):
    return next(c for c in report.certificates if c["name"] == name)


def check(criterion, system, ok, detail):
    record(criterion, system, ok, detail)
    assert ok, f"criterion {criterion} [{system}]: {detail}"


# ---------------------------------------------------------------- 1 to 4: kernels


@pytest.mark.parametrize("dim", [1, 2])
def test_criterion_01_classical_reduction(dim):
    rs = build_root_system("Z2", k=0.0) if dim == 1 else build_root_system("Z2^N", k=[0.0, 0.0])
    start = time.perf_counter()
    errs = kernel_identities(rs, seed=0, n=1000)
    elapsed = time.perf_counter() - start
    worst = max(errs["classical_heat"], errs["classical_mehler"])
    check(1, f"N={dim} k=0", worst <= 1e-8 and elapsed < 5.0,
          f"max rel err {worst:.1e}, {elapsed:.2f} s")


@pytest.mark.parametrize("system", NAMES)
def test_criterion_02_kernel_identities(system):
    rs = config("kernel-bounds", system).root_system()
    errs = kernel_identities(rs, seed=0, n=1000)
    limits = {"connection": 1e-12, "symmetry_heat": 1e-10, "symmetry_hermite": 1e-10, "rescaling": 1e-10}
    assert all(IDENTITY_LIMITS[k] == v for k, v in limits.items())
    bad = {k: errs[k] for k in limits if not errs[k] <= limits[k]}
    check(2, system, not bad, f"connection {errs['connection']:.1e}, rescaling {errs['rescaling']:.1e}"
          + (f"; failing {bad}" if bad else ""))


def test_criterion_03_t_lemma():
    start = time.perf_counter()
    res = verify_t_lemma()
    elapsed = time.perf_counter() - start
    items = res["items"]
    ok = res["points"] >= 1000 and set(items) == set("ABCDE") and all(i["passed"] for i in items.values())
    check(3, "t grid", ok and elapsed < 1.0, f"{res['points']} points, {elapsed:.2f} s")


@pytest.mark.parametrize("system", NAMES)
def test_criterion_04_bound_catalog(system):
    report, elapsed = run("kernel-bounds", system)
    bounds = [c for c in report.certificates if c["name"].startswith("bound:")]
    worst = max(c["max_violation_ratio"] for c in bounds)
    failed = [c["name"] for c in bounds if not c["passed"]]
    alphas = {c["name"] for c in bounds if c["name"].startswith("bound:substitute_alpha")}
    ok = not failed and len(alphas) == 4 and elapsed < 120.0
    check(4, system, ok, f"{len(bounds)} bounds, worst ratio {worst:.2f}, {elapsed:.0f} s"
          + (f"; failing {failed}" if failed else ""))


# ---------------------------------------------------------------- 5 and 6: semigroup, maximal


@pytest.mark.parametrize("system", NAMES)
def test_criterion_05_semigroup_law_and_mass(system):
    report, _ = run("maximal-equivalence", system)
    law, mass = cert(report, "semigroup:law"), cert(report, "semigroup:mass")
    check(5, system, law["passed"] and mass["passed"],
          f"law {law['max_relative_error']:.1e}, mass {mass['max_relative_drift']:.1e}")


@pytest.mark.parametrize("system", NAMES)
def test_criterion_06_maximal_ordering(system):
    report, _ = run("maximal-equivalence", system)
    order, norm = cert(report, "ordering:radial<=nontangential"), cert(report, "norm:nontangential<=C*radial")
    ok = order["passed"] and norm["passed"] and norm["C"] <= 100 and norm["functions"] == 20
    check(6, system, ok, f"C = {norm['C']:.2f}")


# ---------------------------------------------------------------- 7 and 8: local spaces


@pytest.mark.parametrize("system", NAMES)
def test_criterion_07_local_characterization(system):
    report, _ = run("local-characterization", system)
    c = cert(report, "two-sided:local_vs_char")
    ok = c["passed"] and c["C"] <= TWO_SIDED_LIMIT and set(c["per_scale"]) == {"0.25", "1.0", "4.0"}
    check(7, system, ok, f"C = {c['C']:.2f}")


@pytest.mark.parametrize("system", NAMES)
def test_criterion_08_goldberg(system):
    report, _ = run("goldberg", system)
    parts = {n: cert(report, n) for n in ("residual", "atoms:valid", "coefficients:sum<=C*local_norm",
                                          "telescope:identity")}
    failed = [n for n, c in parts.items() if not c["passed"]]
    tele = parts["telescope:identity"]
    check(8, system, not failed and tele["cases"] > 0,
          f"residual {parts['residual']['max_relative_residual']:.1e}, "
          f"C = {parts['coefficients:sum<=C*local_norm']['C']:.2f}, telescope {tele['max_error']:.1e}"
          + (f"; failing {failed}" if failed else ""))


# ---------------------------------------------------------------- 9 to 11: Hermite space


@pytest.mark.parametrize("system", NAMES)
def test_criterion_09_partition_of_unity(system):
    report, _ = run("atomic-hermite", system)
    names = ("partition:sum", "partition:disjoint", "partition:covering", "partition:gradient")
    failed = [n for n in names if not cert(report, n)["passed"]]
    check(9, system, not failed, f"sum error {cert(report, 'partition:sum')['max_error']:.1e}"
          + (f"; failing {failed}" if failed else ""))


@pytest.mark.parametrize("system", NAMES)
def test_criterion_10_hermite_atomic(system):
    report, _ = run("atomic-hermite", system)
    two, spread = cert(report, "two-sided:hermite_vs_atomic"), cert(report, "atoms:uniform_hermite_norm")
    ok = (two["passed"] and two["C"] <= TWO_SIDED_LIMIT and spread["passed"]
          and spread["max_over_min"] <= ATOMS_LIMIT and spread["atoms"] == 50)
    check(10, system, ok, f"two-sided C = {two['C']:.1f}, atom spread {spread['max_over_min']:.1f}")


@pytest.mark.parametrize("system", NAMES)
def test_criterion_11_riesz(system):
    report, _ = run("riesz-hermite", system)
    two = cert(report, "two-sided:riesz_vs_hermite")
    diff = cert(report, "riesz_difference:L1<=C*||f||_1")
    tail = cert(report, "riesz_tail:bounded")
    norms = {d["center_norm"] for d in report.details["riesz_difference"]}
    ok = two["passed"] and two["C"] <= TWO_SIDED_LIMIT and diff["passed"] and tail["passed"]
    check(11, system, ok and norms == {0.0, 2.0, 5.0},
          f"two-sided C = {two['C']:.1f}, difference C = {diff['C']:.2f}, tail C = {tail['C']:.2f}")


# ---------------------------------------------------------------- 12: determinism


@pytest.mark.parametrize("system", NAMES)
@pytest.mark.parametrize("experiment", ["kernel-bounds", "maximal-equivalence"])
def test_criterion_12_determinism(system, experiment):
    first, _ = run(experiment, system)
    cfg = config(experiment, system)
    cfg.threads = 2
    again = run_experiment(cfg)
    same = first.to_json() == again.to_json() and first.table.to_csv() == again.table.to_csv()
    check(12, f"{system} {experiment}", same, "bit-identical" if same else "reports differ")
