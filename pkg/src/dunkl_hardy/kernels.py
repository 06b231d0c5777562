"""Heat, Hermite and comparison kernels, and fitted bound certificates.

All kernels are computed as logarithms and exponentiated at the very end,
so evaluation far from the diagonal underflows gracefully instead of
producing ``0 * inf``.  Points are arrays whose last axis has length N
(for N = 1 a bare scalar or 1-d array is accepted).
"""
from __future__ import annotations

import json
import zlib
from dataclasses import asdict, dataclass, field

import numpy as np
from .dunkl_core import gaussian_const, log_kernel_1d
from .root_system import RootSystem, _as_points, ball_measure_many, orbit_distance, rho

LOG_FLOOR = -700.0
DILATIONS = (1.0, 2.0, 4.0, 8.0, 16.0)
VALIDATION_MARGIN = 2.0


def t1_of_t(t):
    """``t1 = sinh(2t) / 2``; rejects negative times."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0) or np.any(np.isnan(t)):
        raise ValueError("time must be nonnegative")
    out = 0.5 * np.sinh(2.0 * t)
    return float(out) if out.ndim == 0 else out


def log_t1(t):
    """``log t1`` without overflow for large t."""
    t = np.asarray(t, dtype=float)
    return np.where(t < 5.0, np.log(0.5 * np.sinh(2.0 * np.minimum(t, 5.0))),
                    2.0 * t + np.log1p(-np.exp(-4.0 * t)) - 2.0 * np.log(2.0))


def connection_exponent(t):
    """``1/(4 t1) - coth(2t)/2``, simplified to ``-tanh(t)/2``."""
    return -0.5 * np.tanh(np.asarray(t, dtype=float))


def _check_time(t) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    if np.any(~(t > 0)):
        raise ValueError("time must be positive")
    return t


def _pair(rs: RootSystem, x, y):
    x = _as_points(rs, x)
    y = _as_points(rs, y)
    return np.broadcast_arrays(x, y)


def _log_e(rs: RootSystem, x, y, scale) -> np.ndarray:
    # log E(x, y) evaluated at x_j y_j * scale, summed over axes
    total = 0.0
    for j, kj in enumerate(rs.k):
        total = total + log_kernel_1d(kj, x[..., j] * y[..., j] * scale)
    return np.asarray(total, dtype=float)


def log_heat_kernel(rs: RootSystem, t, x, y) -> np.ndarray:
    """``log h_t(x, y)``."""
    t = _check_time(t)
    x, y = _pair(rs, x, y)
    n_hom = rs.homogeneous_dim
    sq = np.sum(x * x + y * y, axis=-1)
    return (-np.log(gaussian_const(rs)) - 0.5 * n_hom * np.log(2.0 * t)
            - sq / (4.0 * t) + _log_e(rs, x, y, 1.0 / (2.0 * t)))


def heat_kernel(rs: RootSystem, t, x, y) -> np.ndarray:
    """Dunkl heat kernel ``h_t(x, y)``, clamped below at ``exp(-700)``."""
    return np.exp(np.maximum(log_heat_kernel(rs, t, x, y), LOG_FLOOR))


def log_hermite_kernel(rs: RootSystem, t, x, y) -> np.ndarray:
    """``log k_t(x, y)`` through the connection with ``h_{t1}``."""
    t = _check_time(t)
    x, y = _pair(rs, x, y)
    lt1 = log_t1(t)
    n_hom = rs.homogeneous_dim
    sq = np.sum(x * x + y * y, axis=-1)
    coth = 1.0 / np.tanh(2.0 * t)
    return (-np.log(gaussian_const(rs)) - 0.5 * n_hom * (np.log(2.0) + lt1)
            - 0.5 * coth * sq + _log_e(rs, x, y, np.exp(-lt1) / 2.0))


def hermite_kernel(rs: RootSystem, t, x, y) -> np.ndarray:
    """Dunkl-Hermite kernel ``k_t(x, y)``, clamped below at ``exp(-700)``."""
    return np.exp(np.maximum(log_hermite_kernel(rs, t, x, y), LOG_FLOOR))


def log_comparison_kernel(rs: RootSystem, t, x, y) -> np.ndarray:
    """``log G_t(x, y)``: orbit-summed Gaussian over the ball measure at ``x``."""
    t = _check_time(t)
    x, y = _pair(rs, x, y)
    gy = y[..., None, :] * rs.signs
    expo = -np.sum((x[..., None, :] - gy) ** 2, axis=-1) / np.asarray(t)[..., None]
    top = expo.max(axis=-1)
    lse = top + np.log(np.sum(np.exp(expo - top[..., None]), axis=-1))
    vol = ball_measure_many(rs, x, np.broadcast_to(np.sqrt(t), lse.shape))
    return lse - np.log(vol)


def comparison_kernel(rs: RootSystem, t, x, y) -> np.ndarray:
    return np.exp(np.maximum(log_comparison_kernel(rs, t, x, y), LOG_FLOOR))


def kernel_space_derivative(rs: RootSystem, j: int, t, x, y, which: str = "heat",
                            split: bool = False):
    """``T_{j,x}`` applied to ``h_t`` or ``k_t`` (j is 0-based).

    For ``which="hermite"`` and ``split=True`` the two summands (the heat-type
    term at time ``t1`` and the term from the Gaussian prefactor) are
    returned separately.
    """
    if not 0 <= j < rs.dimension:
        raise ValueError(f"direction j must be in [0, {rs.dimension})")
    t = _check_time(t)
    x, y = _pair(rs, x, y)
    if which == "heat":
        return (y[..., j] - x[..., j]) / (2.0 * t) * heat_kernel(rs, t, x, y)
    if which != "hermite":
        raise ValueError("which must be 'heat' or 'hermite'")
    kt = hermite_kernel(rs, t, x, y)
    first = (y[..., j] - x[..., j]) * np.exp(-log_t1(t)) / 2.0 * kt
    second = 2.0 * x[..., j] * connection_exponent(t) * kt
    return (first, second) if split else first + second


def _log_heat_tderiv(rs: RootSystem, t, x, y):
    # first and second t-derivatives of log h_t
    t = _check_time(t)
    if rs.is_classical:
        x, y = _pair(rs, x, y)
        d2 = np.sum((x - y) ** 2, axis=-1)
        n = rs.dimension
        return -n / (2 * t) + d2 / (4 * t * t), n / (2 * t * t) - d2 / (2 * t ** 3)
    # central differences with step t/1000, one Richardson step
    d = 1e-3 * t
    vals = {s: log_heat_kernel(rs, t + s * d / 2, x, y) for s in (-2, -1, 0, 1, 2)}
    d1_big = (vals[2] - vals[-2]) / (2 * d)
    d1_small = (vals[1] - vals[-1]) / d
    d2_big = (vals[2] - 2 * vals[0] + vals[-2]) / (d * d)
    d2_small = (vals[1] - 2 * vals[0] + vals[-1]) / (d * d / 4)
    return (4 * d1_small - d1_big) / 3, (4 * d2_small - d2_big) / 3


def heat_time_derivative(rs: RootSystem, m: int, t, x, y) -> np.ndarray:
    """``d^m/dt^m h_t(x, y)`` for m in {0, 1, 2}."""
    sign, logabs = log_abs_heat_time_derivative(rs, m, t, x, y)
    return sign * np.exp(np.maximum(logabs, LOG_FLOOR))


def log_abs_heat_time_derivative(rs: RootSystem, m: int, t, x, y):
    """Sign and ``log|d^m/dt^m h_t|`` (m in {0, 1, 2})."""
    if m not in (0, 1, 2):
        raise ValueError("time-derivative order must be 0, 1 or 2")
    logh = log_heat_kernel(rs, t, x, y)
    if m == 0:
        return np.ones_like(logh), logh
    l1, l2 = _log_heat_tderiv(rs, t, x, y)
    factor = l1 if m == 1 else l2 + l1 * l1
    with np.errstate(divide="ignore"):
        return np.sign(factor), logh + np.log(np.abs(factor))


def log_abs_space_time_derivative(rs: RootSystem, j: int, m: int, t, x, y):
    """Sign and ``log|T_{j,x} d^m/dt^m h_t|`` for m in {0, 1}.

    Uses ``T_{j,x} h_t = (y_j - x_j)/(2t) h_t``, differentiated in t.
    """
    if m not in (0, 1):
        raise ValueError("space-time derivative order must be 0 or 1")
    t = _check_time(t)
    xx, yy = _pair(rs, x, y)
    diff = (yy[..., j] - xx[..., j]) / (2.0 * t)
    logh = log_heat_kernel(rs, t, xx, yy)
    if m == 0:
        factor = diff
    else:
        l1, _ = _log_heat_tderiv(rs, t, xx, yy)
        factor = diff * (l1 - 1.0 / t)
    with np.errstate(divide="ignore"):
        return np.sign(factor), logh + np.log(np.abs(factor))


# ---------------------------------------------------------------- certificates


@dataclass
class SamplePlan:
    """How to draw (t, x, y) samples for a bound certificate."""

    root_system: RootSystem
    n_train: int = 8000
    n_validation: int = 2000
    seed: int = 0
    box: float = 6.0
    max_offset: float = 12.0
    margin: float = VALIDATION_MARGIN
    dilations: tuple = DILATIONS


@dataclass
class BoundCertificate:
    """Outcome of fitting and validating one kernel inequality.

    ``fitted_constants`` holds ``C`` and the dilation ``c`` of the comparison
    kernel (the comparison is ``G_{c t}``).  ``max_violation_ratio`` is the
    largest validation ratio ``LHS / (C * RHS)``.
    """

    bound_id: str
    fitted_constants: dict
    train_samples: int
    validation_samples: int
    max_violation_ratio: float
    passed: bool
    params: dict = field(default_factory=dict)
    worst_sample: dict = field(default_factory=dict)
    root_system: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _draw(rs: RootSystem, rng: np.random.Generator, n: int, t_lo: float, t_hi: float,
          box: float, max_offset: float, time_scale=None):
    """Times log-uniform; x uniform in a box; y near x, near a reflected x, or anywhere."""
    n_dim = rs.dimension
    t = np.exp(rng.uniform(np.log(t_lo), np.log(t_hi), n))
    scale = np.sqrt(t if time_scale is None else time_scale(t))
    # half of the points sit at the kernel's own scale, near the mirrors
    x = np.where((rng.uniform(size=n) < 0.5)[:, None], rng.uniform(-box, box, (n, n_dim)),
                 scale[:, None] * rng.uniform(-4.0, 4.0, (n, n_dim)))
    direction = rng.normal(size=(n, n_dim))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    offset = direction * (scale * rng.uniform(0, max_offset, n))[:, None]
    mode = rng.integers(0, 3, n)
    flips = rs.signs[rng.integers(0, rs.order, n)]
    y = np.where((mode == 0)[:, None], x + offset,
                 np.where((mode == 1)[:, None], flips * x + offset,
                          rng.uniform(-box, box, (n, n_dim))))
    return t, x, y


def _gauss_lhs(rs, bound_id, m, j, t, x, y):
    if bound_id == "gauss_A":
        return log_heat_kernel(rs, t, x, y)
    if bound_id == "gauss_B":
        return log_abs_heat_time_derivative(rs, m, t, x, y)[1]
    if bound_id == "gauss_C":
        return log_abs_space_time_derivative(rs, j, m, t, x, y)[1]
    raise KeyError(bound_id)


def _log_diff(la, sa, lb, sb):
    # log|sa e^la - sb e^lb| computed from logs
    top = np.maximum(la, lb)
    with np.errstate(divide="ignore"):
        return top + np.log(np.abs(sa * np.exp(la - top) - sb * np.exp(lb - top)))


class _Bound:
    """A catalog entry: sampler plus log-LHS and log-RHS (per dilation)."""

    def __init__(self, rs, bound_id, params):
        self.rs = rs
        self.bound_id = bound_id
        self.params = params

    def sample(self, rng, n, plan):
        rs = self.rs
        bid = self.bound_id
        if bid in ("gauss_A", "gauss_B", "gauss_C"):
            return _draw(rs, rng, n, 1e-3, 50.0, plan.box, plan.max_offset)
        if bid == "ht_ht1_diff":
            return _draw(rs, rng, n, 1e-3, 1.0, plan.box, plan.max_offset)
        if bid == "ht1_kt_diff":
            return _draw(rs, rng, n, 1e-3, 1.0, plan.box, plan.max_offset)
        if bid == "tj_kt_bound":
            return _draw(rs, rng, n, 1e-3, 5.0, plan.box, plan.max_offset, time_scale=t1_of_t)
        if bid == "riesz_diff_bound":
            t, x, _ = _draw(rs, rng, n, 1e-3, 1.0, plan.box, plan.max_offset)
            centre = rng.uniform(-plan.box, plan.box, (n, rs.dimension))
            reach = self.params["A"] * rho(centre)
            d = rng.normal(size=centre.shape)
            d /= np.linalg.norm(d, axis=1, keepdims=True)
            y = centre + d * (reach * rng.uniform(0, 1, n) ** (1.0 / rs.dimension))[:, None]
            near = rng.uniform(size=n) < 0.5
            x = np.where(near[:, None], y + d * np.sqrt(t)[:, None] * rng.uniform(0, plan.max_offset, (n, 1)), x)
            return t, x, y, centre
        if bid == "substitute_alpha":
            t, x, y = _draw(rs, rng, n, 1e-4, 1e3, plan.box, plan.max_offset)
            return t, x, y
        if bid == "psi_cancellation":
            return self.params["sampler"](rng, n)
        raise KeyError(bid)

    def log_lhs(self, s):
        rs, bid, p = self.rs, self.bound_id, self.params
        t, x, y = s[:3]
        if bid in ("gauss_A", "gauss_B", "gauss_C"):
            return _gauss_lhs(rs, bid, p.get("m", 0), p.get("j", 0), t, x, y)
        if bid == "ht_ht1_diff":
            a = log_heat_kernel(rs, t, x, y)
            b = log_heat_kernel(rs, t1_of_t(t), x, y)
            with np.errstate(divide="ignore"):
                return a + np.log(np.abs(np.expm1(b - a)))
        if bid == "ht1_kt_diff":
            lh = log_heat_kernel(rs, t1_of_t(t), x, y)
            sq = np.sum(x * x + y * y, axis=-1)
            with np.errstate(divide="ignore"):
                return lh + np.log(-np.expm1(connection_exponent(t) * sq))
        if bid == "tj_kt_bound":
            j = p.get("j", 0)
            lk = log_hermite_kernel(rs, t, x, y)
            factor = (y[..., j] - x[..., j]) * np.exp(-log_t1(t)) / 2 + 2 * x[..., j] * connection_exponent(t)
            with np.errstate(divide="ignore"):
                return lk + np.log(np.abs(factor)) - 0.5 * np.log(t)
        if bid == "riesz_diff_bound":
            j = p.get("j", 0)
            lk = log_hermite_kernel(rs, t, x, y)
            fk = (y[..., j] - x[..., j]) * np.exp(-log_t1(t)) / 2 + 2 * x[..., j] * connection_exponent(t)
            lh = log_heat_kernel(rs, t, x, y)
            fh = (y[..., j] - x[..., j]) / (2 * t)
            with np.errstate(divide="ignore"):
                return _log_diff(lk + np.log(np.abs(fk)), np.sign(fk),
                                 lh + np.log(np.abs(fh)), np.sign(fh)) - 0.5 * np.log(t)
        if bid == "substitute_alpha":
            # LHS and RHS swap roles: G is bounded by the orbit-distance expression
            return None
        if bid == "psi_cancellation":
            return p["lhs"](s)
        raise KeyError(bid)

    def log_rhs(self, s, dil):
        rs, bid, p = self.rs, self.bound_id, self.params
        t, x, y = s[:3]
        if bid == "gauss_A":
            d = np.linalg.norm(x - y, axis=-1)
            return -2 * np.log1p(d / np.sqrt(t)) + log_comparison_kernel(rs, dil * t, x, y)
        if bid in ("gauss_B", "gauss_C"):
            m = p.get("m", 0)
            power = m + (0.5 if bid == "gauss_C" else 0.0)
            return -power * np.log(t) + log_comparison_kernel(rs, dil * t, x, y)
        if bid == "ht_ht1_diff":
            return 2 * np.log(t) + log_comparison_kernel(rs, dil * t, x, y)
        if bid == "ht1_kt_diff":
            sq = np.sum(x * x + y * y, axis=-1)
            lh = log_heat_kernel(rs, t1_of_t(t), x, y)
            return np.log(t * sq) + np.minimum(log_comparison_kernel(rs, dil * t, x, y), lh)
        if bid == "tj_kt_bound":
            t1 = t1_of_t(t)
            sq = np.sum(x * x + y * y, axis=-1)
            d = np.linalg.norm(x - y, axis=-1)
            return (np.log1p(1 / t) + 0.5 * connection_exponent(t) * sq
                    - np.log1p(d / np.sqrt(t1)) + log_comparison_kernel(rs, dil * t1, x, y))
        if bid == "riesz_diff_bound":
            centre = s[3]
            return -2 * np.log(rho(centre)) + log_comparison_kernel(rs, 2 * dil * t, x, y)
        if bid == "psi_cancellation":
            return p["rhs"](s, dil)
        raise KeyError(bid)


def _substitute_alpha_logs(rs, alpha, s, dil):
    # t^(-alpha) G_{ct}(x, y)  versus  d^(-2 alpha) / w(B(x, d)), d = d_G(x, y)
    t, x, y = s[:3]
    d = orbit_distance(rs, x, y)
    lhs = -alpha * np.log(t) + log_comparison_kernel(rs, dil * t, x, y)
    rhs = -2 * alpha * np.log(d) - np.log(ball_measure_many(rs, x, d))
    return lhs, rhs


BOUND_CATALOG = {
    "gauss_A": [{}],
    "gauss_B": [{"m": 0}, {"m": 1}, {"m": 2}],
    "gauss_C": [{"m": 0}, {"m": 1}],
    "ht_ht1_diff": [{}],
    "ht1_kt_diff": [{}],
    "tj_kt_bound": [{}],
    "riesz_diff_bound": [{"A": 4.0}],
    "substitute_alpha": [{"alpha": -0.5}, {"alpha": 0.0}, {"alpha": 0.5}, {"alpha": 1.0}],
}


def catalog_entries(rs: RootSystem):
    """Every (bound_id, params) pair, with one Dunkl direction per axis where relevant."""
    out = []
    for bid, variants in BOUND_CATALOG.items():
        for params in variants:
            if bid in ("gauss_C", "tj_kt_bound", "riesz_diff_bound"):
                for j in range(rs.dimension):
                    out.append((bid, dict(params, j=j)))
            else:
                out.append((bid, dict(params)))
    return out


def fit_certificate(bound_id: str, train_lhs, train_rhs: dict, val_lhs, val_rhs: dict,
                    margin: float = VALIDATION_MARGIN, params=None, worst_info=None,
                    rs: RootSystem | None = None) -> BoundCertificate:
    """Fit ``(C, c)`` on training logs and validate on a disjoint set.

    ``train_rhs``/``val_rhs`` map each dilation to log-RHS arrays.  For each
    dilation ``C`` is the largest training ratio; the dilation with the
    smallest ``C`` is kept and ``C`` is inflated by ``margin``.
    """
    best = None
    for dil in sorted(train_rhs):
        ratio = np.asarray(train_lhs) - np.asarray(train_rhs[dil])
        ok = np.isfinite(ratio) | (np.asarray(train_lhs) == -np.inf)
        if not np.all(ok):
            continue
        log_c = float(np.max(ratio[np.isfinite(ratio)], initial=-np.inf))
        if best is None or log_c < best[1] - 1e-12:
            best = (dil, log_c)
    n_tr = int(np.size(train_lhs))
    n_va = int(np.size(val_lhs))
    meta = rs.describe() if rs is not None else {}
    if best is None or not np.isfinite(best[1]):
        return BoundCertificate(bound_id, {"C": float("inf"), "c": None}, n_tr, n_va,
                                float("inf"), False, dict(params or {}),
                                {"reason": "fit diverged"}, meta)
    dil, log_c = best
    log_c_fit = log_c + np.log(margin)
    vr = np.asarray(val_lhs) - np.asarray(val_rhs[dil]) - log_c_fit
    vr = np.where(np.asarray(val_lhs) == -np.inf, -np.inf, vr)
    bad = ~np.isfinite(vr) & ~(vr == -np.inf)
    worst = int(np.argmax(np.where(bad, np.inf, vr)))
    max_ratio = float(np.exp(vr[worst])) if not bad.any() else float("inf")
    info = {"index": worst}
    if worst_info is not None:
        info.update(worst_info(worst))
    return BoundCertificate(bound_id, {"C": float(np.exp(log_c_fit)), "c": float(dil)}, n_tr, n_va,
                            max_ratio, bool(max_ratio <= 1.0), dict(params or {}), info, meta)


def verify_bound(bound_id: str, plan: SamplePlan, **params) -> BoundCertificate:
    """Certify one catalog inequality on random samples.

    Training and validation samples come from independent random streams.
    """
    rs = plan.root_system
    if bound_id not in BOUND_CATALOG and bound_id != "psi_cancellation":
        raise KeyError(f"unknown bound {bound_id!r}")
    if not params and bound_id in BOUND_CATALOG:
        params = dict(BOUND_CATALOG[bound_id][0])
    bound = _Bound(rs, bound_id, params)
    seq = np.random.SeedSequence([plan.seed, _stable_hash(bound_id, params)])
    rng_tr, rng_va = (np.random.default_rng(s) for s in seq.spawn(2))
    s_tr = bound.sample(rng_tr, plan.n_train, plan)
    s_va = bound.sample(rng_va, plan.n_validation, plan)

    def logs(s):
        if bound_id == "substitute_alpha":
            pairs = {c: _substitute_alpha_logs(rs, params["alpha"], s, c) for c in plan.dilations}
            # the LHS depends on the dilation here, so fold it into the RHS
            return np.zeros(len(s[0])), {c: r - lv for c, (lv, r) in pairs.items()}
        return bound.log_lhs(s), {c: bound.log_rhs(s, c) for c in plan.dilations}

    lt, rt = logs(s_tr)
    lv, rv = logs(s_va)

    def where(i):
        return {"t": float(s_va[0][i]), "x": [float(v) for v in np.atleast_1d(s_va[1][i])],
                "y": [float(v) for v in np.atleast_1d(s_va[2][i])]}

    return fit_certificate(bound_id, lt, rt, lv, rv, plan.margin,
                           {k: v for k, v in params.items() if not callable(v)}, where, rs)


def _stable_hash(bound_id: str, params: dict) -> int:
    text = bound_id + json.dumps({k: v for k, v in params.items() if not callable(v)}, sort_keys=True)
    return zlib.crc32(text.encode("utf-8"))


def verify_catalog(plan: SamplePlan) -> list[BoundCertificate]:
    return [verify_bound(bid, plan, **params) for bid, params in catalog_entries(plan.root_system)]


# ---------------------------------------------------------------- the t-lemma


def verify_t_lemma(t_grid=None, margin: float = VALIDATION_MARGIN) -> dict:
    """Pointwise checks of the elementary inequalities relating t and t1.

    Items: (A) ``t <= t1`` and ``t1 <= 2t`` on (0, 1); (B) ``0 <= t1 - t <= C t^3``
    on (0, 1); (C) ``1/(4 t1) - coth(2t)/2 + t/4 < 0`` on (0, 1) and
    ``|1/(4 t1) - coth(2t)/2| <= C t``; (D) the same exponent is ``<= -1/4``
    for ``t >= 1``; (E) ``1/t1 <= C exp(-2t)`` for ``t >= 1``.  Fitted
    constants use the even-indexed points and are validated on the odd ones.
    """
    if t_grid is None:
        t_grid = np.logspace(-4, np.log10(50.0), 1000)
    t = np.asarray(t_grid, dtype=float)
    if t.size < 1000 or np.any(t <= 0) or np.any(t > 50.0):
        raise ValueError("t_grid must hold at least 1000 points in (0, 50]")
    t1 = 0.5 * np.sinh(2 * t)
    # the exponent as written, not the simplified tanh form
    expo = 1.0 / (4.0 * t1) - 0.5 / np.tanh(2.0 * t)
    small = t < 1
    large = ~small
    items = {}

    def fitted(ratio, mask):
        idx = np.nonzero(mask)[0]
        tr, va = idx[::2], idx[1::2]
        if tr.size == 0 or va.size == 0:
            return {"C": None, "validation_ratio": None, "passed": True}
        c = float(ratio[tr].max()) * margin
        worst = float(ratio[va].max() / c)
        return {"C": c, "validation_ratio": worst, "passed": bool(worst <= 1.0)}

    items["A"] = {"passed": bool(np.all(t <= t1) and np.all(t1[small] <= 2 * t[small]))}
    diff = t1 - t
    b = fitted(diff / t ** 3, small)
    b["passed"] = bool(b["passed"] and np.all(diff[small] >= 0))
    items["B"] = b
    c = fitted(np.abs(expo) / t, np.ones_like(t, dtype=bool))
    c["strict_negative"] = bool(np.all(expo[small] + t[small] / 4 < 0))
    c["passed"] = bool(c["passed"] and c["strict_negative"])
    items["C"] = c
    items["D"] = {"passed": bool(np.all(expo[large] <= -0.25)),
                  "max_value": float(expo[large].max()) if large.any() else None}
    items["E"] = fitted(np.exp(2 * t - np.log(t1)), large)
    return {"points": int(t.size), "items": items,
            "passed": all(v["passed"] for v in items.values())}
