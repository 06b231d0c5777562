"""Dunkl kernel, Gaussian normalization constant and the Dunkl operators.

The rank-one kernel is evaluated from its defining power series for moderate
arguments and from the large-argument expansion of the confluent series
beyond that, always returning ``log E`` so that callers never overflow.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import integrate
from scipy.special import gammaln

from .root_system import GeometryCache, RootSystem, SQRT2

SERIES_SWITCH = 30.0


class SeriesError(RuntimeError):
    """Raised when a truncated series cannot meet its tail tolerance."""


@dataclass(frozen=True)
class DunklKernelEvaluator:
    root_system: RootSystem
    series_truncation: int = 600
    tail_tolerance: float = 1e-13

    def __post_init__(self):
        if self.series_truncation < 16:
            raise ValueError("series_truncation must be at least 16")
        if not (0 < self.tail_tolerance <= 1e-10):
            raise ValueError("tail_tolerance must lie in (0, 1e-10]")


def switch_point(k: float) -> float:
    # beyond this |z| the asymptotic expansion is accurate to machine precision
    return max(SERIES_SWITCH, 4.0 * k * k)


def _positive_series(k: float, z: np.ndarray, max_terms: int, tol: float) -> np.ndarray:
    # sum_n c_n with c_0 = 1, c_n = z c_{n-1} / (n + 2k [n odd]), z >= 0
    total = np.ones_like(z)
    term = np.ones_like(z)
    zmax = float(z.max(initial=0.0))
    for n in range(1, max_terms + 1):
        term = term * z / (n + 2.0 * k * (n & 1))
        total += term
        if n > zmax and np.all(term <= tol * total):
            return total
    raise SeriesError(f"power series did not converge in {max_terms} terms")


def _kummer_series(k: float, u: np.ndarray, max_terms: int, tol: float) -> np.ndarray:
    # 1F1(k; 2k+1; 2u) for u >= 0, positive terms
    total = np.ones_like(u)
    term = np.ones_like(u)
    x = 2.0 * u
    xmax = float(x.max(initial=0.0))
    for n in range(1, max_terms + 1):
        term = term * x * (k + n - 1.0) / ((2.0 * k + n) * n)
        total += term
        if n > xmax and np.all(term <= tol * total):
            return total
    raise SeriesError(f"confluent series did not converge in {max_terms} terms")


def _asymptotic_sum(a: float, b: float, x: np.ndarray, max_terms: int, tol: float) -> np.ndarray:
    # sum_s (a)_s (b)_s / s! x^(-s), stopped at the smallest term
    total = np.ones_like(x)
    term = np.ones_like(x)
    last = np.ones_like(x)
    done = np.zeros(x.shape, dtype=bool)
    for s in range(1, max_terms + 1):
        term = term * (a + s - 1.0) * (b + s - 1.0) / (s * x)
        mag = np.abs(term)
        stop = done | (mag > last)
        total = np.where(stop, total, total + term)
        last = np.where(stop, last, mag)
        done = stop | (mag <= tol * np.abs(total))
        if np.all(done):
            break
    if not np.all(done) or np.any(last > 1e4 * tol * np.abs(total)):
        raise SeriesError("asymptotic expansion did not reach tolerance")
    return total


def log_kernel_1d(k: float, z, max_terms: int = 600, tol: float = 1e-17) -> np.ndarray:
    """``log E_k(z)`` for the rank-one kernel with argument ``z = x y``.

    The kernel is positive for real arguments, so the logarithm is always
    defined.  For ``k = 0`` this is ``z`` itself.
    """
    z = np.asarray(z, dtype=float)
    if k == 0.0:
        return z.copy()
    out = np.empty_like(z)
    flat = z.reshape(-1)
    res = out.reshape(-1)
    zs = switch_point(k)
    pos_small = (flat >= 0) & (flat <= zs)
    neg_small = (flat < 0) & (flat >= -zs)
    pos_big = flat > zs
    neg_big = flat < -zs
    # bin moderate arguments so small ones stop early
    for lo, hi in ((0.0, 2.0), (2.0, 8.0), (8.0, np.inf)):
        m = pos_small & (flat >= lo) & (flat < hi)
        if m.any():
            res[m] = np.log(_positive_series(k, flat[m], max_terms, tol))
        m = neg_small & (-flat >= lo) & (-flat < hi)
        if m.any():
            u = -flat[m]
            res[m] = -u + np.log(_kummer_series(k, u, max_terms, tol))
    lg = gammaln(2.0 * k + 1.0)
    if pos_big.any():
        zz = flat[pos_big]
        s = _asymptotic_sum(k, -k, 2.0 * zz, max_terms, tol)
        res[pos_big] = zz + lg - gammaln(k + 1.0) - k * np.log(2.0 * zz) + np.log(s)
    if neg_big.any():
        u = -flat[neg_big]
        s = _asymptotic_sum(1.0 - k, k + 1.0, 2.0 * u, max_terms, tol)
        dom = u + lg - gammaln(k) - (k + 1.0) * np.log(2.0 * u) + np.log(s)
        sub = -u + lg - gammaln(k + 1.0) - k * np.log(2.0 * u) + np.log(max(np.cos(np.pi * k), 0.0) + 1e-300)
        res[neg_big] = np.logaddexp(dom, sub)
    return out


def log_dunkl_kernel(ev: DunklKernelEvaluator | RootSystem, x, y) -> np.ndarray:
    """``log E(x, y)`` for points with last axis of length N (broadcasting)."""
    if isinstance(ev, RootSystem):
        ev = DunklKernelEvaluator(ev)
    rs = ev.root_system
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if rs.dimension == 1:
        if x.ndim == 0 or x.shape[-1] != 1:
            x = x[..., None]
        if y.ndim == 0 or y.shape[-1] != 1:
            y = y[..., None]
    x, y = np.broadcast_arrays(x, y)
    total = np.zeros(x.shape[:-1])
    for j, kj in enumerate(rs.k):
        total = total + log_kernel_1d(kj, x[..., j] * y[..., j], ev.series_truncation,
                                      ev.tail_tolerance * 1e-4)
    return total


def dunkl_kernel(ev: DunklKernelEvaluator | RootSystem, x, y) -> np.ndarray:
    """The Dunkl kernel ``E(x, y)`` of a product root system."""
    return np.exp(log_dunkl_kernel(ev, x, y))


def gaussian_const(rs: RootSystem, method: str = "closed") -> float:
    """``c_k``, the integral of ``exp(-|x|^2 / 2)`` against ``dw``.

    ``method="closed"`` uses ``prod_j 2^(2k_j + 1/2) Gamma(k_j + 1/2)``;
    ``method="quad"`` integrates each factor adaptively.
    """
    if method == "closed":
        k = np.asarray(rs.k)
        return float(np.exp(np.sum((2 * k + 0.5) * np.log(2.0) + gammaln(k + 0.5))))
    if method != "quad":
        raise ValueError("method must be 'closed' or 'quad'")
    out = 1.0
    for kj in rs.k:
        val, err = integrate.quad(lambda s: np.abs(SQRT2 * s) ** (2 * kj) * np.exp(-s * s / 2),
                                  0.0, np.inf, epsabs=0.0, epsrel=1e-12, limit=200)
        if not np.isfinite(val) or err > 1e-9 * abs(val):
            raise RuntimeError(f"quadrature for c_k did not converge (k={kj}, err={err})")
        out *= 2.0 * val
    return out


def geometry(rs: RootSystem) -> GeometryCache:
    return GeometryCache(rs.homogeneous_dim, gaussian_const(rs))


def _derivative_1d(v: np.ndarray, h: float, axis: int) -> np.ndarray:
    # 4th-order central inside, 2nd-order central next to the edge, one-sided at the edge
    v = np.moveaxis(v, axis, 0)
    n = v.shape[0]
    if n < 5:
        raise ValueError("need at least 5 nodes per axis")
    d = np.empty_like(v)
    d[2:-2] = (-v[4:] + 8.0 * v[3:-1] - 8.0 * v[1:-3] + v[:-4]) / (12.0 * h)
    d[1] = (v[2] - v[0]) / (2.0 * h)
    d[-2] = (v[-1] - v[-3]) / (2.0 * h)
    d[0] = (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * h)
    d[-1] = (3.0 * v[-1] - 4.0 * v[-2] + v[-3]) / (2.0 * h)
    return np.moveaxis(d, 0, axis)


def dunkl_derivative(values: np.ndarray, nodes: np.ndarray, k: float, axis: int = 0) -> np.ndarray:
    """Apply ``T = d/dx + k (f(x) - f(-x)) / x`` along one axis.

    ``nodes`` must be uniform and symmetric about 0 so that reflection maps
    nodes to nodes.  A node at the origin uses the limit ``2k f'(0)``.
    """
    nodes = np.asarray(nodes, dtype=float)
    values = np.asarray(values, dtype=float)
    h = nodes[1] - nodes[0]
    if not np.allclose(nodes, -nodes[::-1], atol=1e-12 * max(1.0, np.abs(nodes).max())):
        raise ValueError("nodes must be symmetric about the origin")
    d = _derivative_1d(values, h, axis)
    if k == 0.0:
        return d
    reflected = np.flip(values, axis=axis)
    shape = [1] * values.ndim
    shape[axis] = -1
    xs = nodes.reshape(shape)
    on_plane = np.abs(xs) < 1e-14 * max(1.0, np.abs(nodes).max())
    safe = np.where(on_plane, 1.0, xs)
    quotient = np.where(on_plane, 2.0 * d, (values - reflected) / safe)
    return d + k * quotient


def apply_dunkl_op(rs: RootSystem, j: int, f):
    """``T_j f`` for a grid function on a symmetric tensor grid."""
    from .grid import GridFunction

    if not 0 <= j < rs.dimension:
        raise ValueError(f"direction j must be in [0, {rs.dimension})")
    g = f.grid
    vals = f.values.reshape(g.shape)
    out = dunkl_derivative(vals, g.axes[j], rs.k[j], axis=j)
    return GridFunction(g, out.reshape(-1))
