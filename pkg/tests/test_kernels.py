"""Heat, Hermite and comparison kernels; bound certificates; the t lemma."""
import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, strategies as st

from dunkl_hardy import (SamplePlan, apply_dunkl_op, ball_measure, build_root_system, comparison_kernel,
                         heat_kernel, hermite_kernel, kernel_space_derivative, make_grid, sample,
                         t1_of_t, verify_bound, verify_t_lemma)
from dunkl_hardy.kernels import (BOUND_CATALOG, catalog_entries, connection_exponent, fit_certificate,
                                 heat_time_derivative, log_heat_kernel, log_hermite_kernel)
from dunkl_hardy.root_system import orbit_distance

mult = st.sampled_from([0.0, 0.5, 1.0, 2.0])
pos = st.floats(-3, 3, allow_nan=False)
times = st.floats(0.01, 5.0)


mp.mp.dps = 30


def mp_heat(k, t, x, y):
    """Rank-one heat kernel in 30-digit arithmetic via the Bessel form of E."""
    k, t, x, y = (mp.mpf(v) for v in (k, t, x, y))
    z = x * y / (2 * t)
    if z == 0:
        e = mp.mpf(1)
    else:
        a = abs(z)
        e = mp.gamma(k + 0.5) * (a / 2) ** (0.5 - k) * (mp.besseli(k - 0.5, a) + mp.sign(z) * mp.besseli(k + 0.5, a))
    ck = 2 ** (2 * k + 0.5) * mp.gamma(k + 0.5)
    n = 1 + 2 * k
    return e * mp.exp(-(x * x + y * y) / (4 * t)) / (ck * (2 * t) ** (n / 2))


def test_t1_examples():
    assert t1_of_t(0.0) == 0.0
    assert t1_of_t(0.5) == pytest.approx(0.587600596821900728441190925298, rel=1e-14)
    t = 1e-3
    # Taylor oracle: (t1 - t) / t^3 = 2/3 + O(t^2), frozen at 30 digits
    assert (t1_of_t(t) - t) / t ** 3 == pytest.approx(0.6666668, rel=1e-6)
    with pytest.raises(ValueError):
        t1_of_t(-0.1)


@given(st.floats(1e-6, 30.0))
def test_t1_bounds(t):
    t1 = t1_of_t(t)
    assert t1 >= t
    if t < 1:
        assert t1 <= 2 * t


def test_heat_kernel_classical_value():
    rs = build_root_system("Z2", k=0.0)
    assert heat_kernel(rs, 1.0, 0.0, 0.0) == pytest.approx(0.28209479177387814347403972578, rel=1e-14)


@pytest.mark.parametrize("k", [0.5, 1.0, 2.0])
def test_heat_kernel_against_bessel_oracle(k):
    rs = build_root_system("Z2", k=k)
    rng = np.random.default_rng(int(10 * k))
    for _ in range(25):
        t = float(np.exp(rng.uniform(np.log(0.01), np.log(10))))
        x, y = rng.uniform(-4, 4, 2)
        want = float(mp.log(mp_heat(k, t, x, y)))
        assert log_heat_kernel(rs, t, x, y) == pytest.approx(want, abs=1e-11)


def test_rescaling_example():
    for rs in (build_root_system("Z2", k=1.0), build_root_system("Z2", k=0.5)):
        t, x, y, lam = 0.3, 1.0, -2.0, 1.7
        lhs = heat_kernel(rs, lam ** 2 * t, lam * x, lam * y) * lam ** rs.homogeneous_dim
        assert lhs == pytest.approx(heat_kernel(rs, t, x, y), rel=1e-10)


@given(times, pos, pos, pos, pos, mult, mult)
def test_kernel_symmetry_positivity_and_domination(t, x1, x2, y1, y2, k1, k2):
    rs = build_root_system("Z2^N", k=[k1, k2])
    x, y = np.array([x1, x2]), np.array([y1, y2])
    h = heat_kernel(rs, t, x, y)
    kt = hermite_kernel(rs, t, x, y)
    assert h > 0 and kt > 0
    assert log_heat_kernel(rs, t, y, x) == pytest.approx(log_heat_kernel(rs, t, x, y), abs=1e-10)
    assert log_hermite_kernel(rs, t, y, x) == pytest.approx(log_hermite_kernel(rs, t, x, y), abs=1e-10)
    assert log_hermite_kernel(rs, t, x, y) <= log_heat_kernel(rs, t1_of_t(t), x, y) + 1e-12


@given(times, pos, pos, mult)
def test_connection_identity(t, x, y, k):
    rs = build_root_system("Z2", k=k)
    expo = 1 / (4 * t1_of_t(t)) - 0.5 / np.tanh(2 * t)
    route = expo * (x * x + y * y) + log_heat_kernel(rs, t1_of_t(t), x, y)
    assert log_hermite_kernel(rs, t, x, y) == pytest.approx(route, abs=1e-12 * max(1.0, abs(route)))
    assert connection_exponent(t) == pytest.approx(expo, abs=1e-13)


def test_mehler_reduction():
    rs = build_root_system("Z2", k=0.0)
    rng = np.random.default_rng(7)
    for _ in range(20):
        t = float(rng.uniform(0.05, 3.0))
        x, y = rng.uniform(-3, 3, 2)
        s = np.sinh(2 * t)
        mehler = (2 * np.pi * s) ** -0.5 * np.exp(-0.5 / np.tanh(2 * t) * (x * x + y * y) + x * y / s)
        assert hermite_kernel(rs, t, x, y) == pytest.approx(mehler, rel=1e-12)


def test_hermite_kernel_large_time_decay():
    # for t >= 1 the connection exponent is <= -1/4, so k_t(x, x) <= e^(-|x|^2/2) h_t1(x, x)
    rs = build_root_system("Z2^N", k=[1.0, 1.0])
    x = np.array([3.0, 0.0])
    bound = np.exp(-0.5 * x @ x) * heat_kernel(rs, t1_of_t(2.0), x, x)
    assert hermite_kernel(rs, 2.0, x, x) <= bound


def test_kernels_reject_nonpositive_time():
    rs = build_root_system("Z2", k=1.0)
    for fn in (heat_kernel, hermite_kernel, comparison_kernel):
        with pytest.raises(ValueError):
            fn(rs, 0.0, 1.0, 1.0)


def test_far_arguments_stay_finite():
    rs = build_root_system("Z2", k=1.0)
    # orbit distance 2 at t = 1e-4: far below the clamp
    for y in (3.0, -3.0):
        assert heat_kernel(rs, 1e-4, 5.0, y) == pytest.approx(np.exp(-700.0))
    # x and -x share an orbit, so h_t(x, -x) is not small
    assert heat_kernel(rs, 1e-4, 5.0, -5.0) > 1e-8
    assert np.isfinite(log_heat_kernel(rs, 1e-4, 50.0, 50.0))


def test_comparison_kernel_two_term_sum():
    rs = build_root_system("Z2", k=0.0)
    for x, t in ((0.7, 0.5), (-2.0, 3.0)):
        want = (1 + np.exp(-4 * x * x / t)) / ball_measure(rs, x, np.sqrt(t))
        assert comparison_kernel(rs, t, x, x) == pytest.approx(want, rel=1e-12)


@given(times, pos, pos, pos, pos, mult)
def test_comparison_kernel_sandwich(t, x1, x2, y1, y2, k):
    rs = build_root_system("Z2^N", k=[k, 1.0])
    x, y = np.array([x1, x2]), np.array([y1, y2])
    base = np.exp(-orbit_distance(rs, x, y) ** 2 / t) / ball_measure(rs, x, np.sqrt(t))
    g = comparison_kernel(rs, t, x, y)
    if base > 1e-250:
        assert base * (1 - 1e-9) <= g <= rs.order * base * (1 + 1e-9)


def test_space_derivative_examples():
    rs = build_root_system("Z2^N", k=[1.0, 0.5])
    x = np.array([0.4, -1.0])
    assert kernel_space_derivative(rs, 0, 0.3, x, x) == 0.0
    y = np.array([1.2, 0.3])
    t = 0.7
    at0 = kernel_space_derivative(rs, 1, t, np.zeros(2), y, which="hermite")
    assert at0 == pytest.approx(y[1] / (2 * t1_of_t(t)) * hermite_kernel(rs, t, np.zeros(2), y), rel=1e-13)
    first, second = kernel_space_derivative(rs, 0, t, x, y, which="hermite", split=True)
    assert first + second == pytest.approx(kernel_space_derivative(rs, 0, t, x, y, which="hermite"))
    with pytest.raises(ValueError):
        kernel_space_derivative(rs, 2, t, x, y)
    with pytest.raises(ValueError):
        kernel_space_derivative(rs, 0, t, x, y, which="poisson")


def test_space_derivative_classical_finite_difference():
    rs = build_root_system("Z2^N", k=[0.0, 0.0])
    rng = np.random.default_rng(9)
    h = 1e-4
    for _ in range(50):
        t = float(rng.uniform(0.1, 3.0))
        x, y = rng.uniform(-2, 2, (2, 2))
        for which, kern in (("heat", heat_kernel), ("hermite", hermite_kernel)):
            e = np.array([h, 0.0])
            fd = (kern(rs, t, x + e, y) - kern(rs, t, x - e, y)) / (2 * h)
            got = kernel_space_derivative(rs, 0, t, x, y, which=which)
            assert got == pytest.approx(fd, rel=1e-6, abs=1e-10)


@pytest.mark.parametrize("which", ["heat", "hermite"])
def test_space_derivative_matches_grid_operator(which):
    # T_j applied to a sampled kernel column converges to the closed form
    rs = build_root_system("Z2", k=1.0)
    y, t = 0.8, 0.4
    kern = heat_kernel if which == "heat" else hermite_kernel
    errs = []
    for res in (64, 128, 256):
        g = make_grid(rs, 6.0, res)
        col = sample(g, lambda p: kern(rs, t, p[:, 0], y))
        num = apply_dunkl_op(rs, 0, col).values
        exact = kernel_space_derivative(rs, 0, t, g.axes[0], y, which=which)
        core = np.abs(g.axes[0]) < 4
        errs.append(np.max(np.abs(num - exact)[core]))
    assert errs[-1] < 1e-5
    assert errs[2] < errs[1] < errs[0]


@pytest.mark.parametrize("k", [0.0, 1.0])
def test_heat_time_derivatives_against_oracle(k):
    rs = build_root_system("Z2", k=k)
    rng = np.random.default_rng(3)
    for _ in range(8):
        t = float(rng.uniform(0.1, 2.0))
        x, y = rng.uniform(-2, 2, 2)
        for m in (1, 2):
            want = float(mp.diff(lambda s: mp_heat(k, s, x, y), t, m))
            got = heat_time_derivative(rs, m, t, x, y)
            assert got == pytest.approx(want, rel=1e-6, abs=1e-12)


def test_heat_mass_conservation():
    # grids resolve sqrt(0.01) by at least two cells
    for ks, tol in (([0.0], 1e-6), ([1.0], 1e-3), ([0.5, 1.0], 1e-3)):
        rs = build_root_system("Z2" if len(ks) == 1 else "Z2^N", k=ks[0] if len(ks) == 1 else ks)
        g = make_grid(rs, 10.0 if len(ks) == 1 else 6.0, 512 if len(ks) == 1 else 256)
        rng = np.random.default_rng(1)
        for t in (0.01, 0.1, 1.0):
            y = rng.uniform(-0.5, 0.5, rs.dimension) * g.extent * (0.5 if len(ks) == 1 else 0.3)
            mass = np.sum(heat_kernel(rs, t, g.nodes, y) * g.quad_weights)
            assert mass == pytest.approx(1.0, abs=tol)


def test_catalog_covers_every_direction():
    rs = build_root_system("Z2^N", k=[1.0, 1.0])
    entries = catalog_entries(rs)
    assert {b for b, _ in entries} == set(BOUND_CATALOG)
    assert sum(1 for b, _ in entries if b == "gauss_C") == 4
    alphas = sorted(p["alpha"] for b, p in entries if b == "substitute_alpha")
    assert alphas == [-0.5, 0.0, 0.5, 1.0]


def test_fit_certificate_logic():
    lhs = np.log([1.0, 2.0, 3.0])
    rhs = {1.0: np.log([1.0, 1.0, 1.0]), 2.0: np.log([2.0, 2.0, 2.0])}
    cert = fit_certificate("demo", lhs, rhs, np.log([2.0]), {1.0: np.log([1.0]), 2.0: np.log([2.0])},
                           margin=2.0)
    # dilation 2 gives the smaller training max (3/2), inflated by the margin
    assert cert.fitted_constants == {"C": pytest.approx(3.0), "c": 2.0}
    assert cert.max_violation_ratio == pytest.approx(1.0 / 3.0)
    assert cert.passed
    bad = fit_certificate("demo", lhs, rhs, np.log([50.0]), {1.0: np.log([1.0]), 2.0: np.log([2.0])})
    assert not bad.passed
    assert '"bound_id": "demo"' in bad.to_json()


def test_unknown_bound_rejected():
    with pytest.raises(KeyError):
        verify_bound("nope", SamplePlan(build_root_system("Z2", k=1.0)))


@pytest.mark.parametrize("bound_id", ["gauss_A", "ht_ht1_diff", "ht1_kt_diff"])
def test_catalog_examples_pass(bound_id):
    plan = SamplePlan(build_root_system("Z2", k=0.0), n_train=2000, n_validation=500, seed=1)
    cert = verify_bound(bound_id, plan)
    assert cert.passed, cert.to_dict()
    assert cert.train_samples == 2000 and cert.validation_samples == 500
    assert cert.fitted_constants["c"] in plan.dilations


def test_certificates_are_reproducible():
    plan = SamplePlan(build_root_system("Z2", k=1.0), n_train=500, n_validation=200, seed=4)
    a = verify_bound("gauss_B", plan, m=1)
    b = verify_bound("gauss_B", plan, m=1)
    assert a.to_json() == b.to_json()


def test_t_lemma_examples():
    res = verify_t_lemma()
    assert res["passed"]
    assert set(res["items"]) == set("ABCDE")
    t = 0.5
    assert t <= t1_of_t(t) <= 2 * t
    assert 1 / (4 * t1_of_t(1.0)) - 0.5 / np.tanh(2.0) <= -0.25
    assert np.exp(20.0) / t1_of_t(10.0) <= res["items"]["E"]["C"]
    with pytest.raises(ValueError):
        verify_t_lemma(np.logspace(-3, 1, 100))
