"""Riesz transforms as time integrals of Dunkl derivatives of the semigroups.

With ``t = s^2`` the measure ``dt / sqrt(t)`` becomes ``2 ds``, which keeps the
integrand bounded near ``t = 0``.  The Dunkl derivative always falls on the
kernel: ``T_{j,x} h_t(x, y) = (y_j - x_j)/(2t) h_t(x, y)``, and the Hermite
kernel picks up one extra term from its Gaussian prefactor.  Directions are
0-based.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .dunkl_core import apply_dunkl_op
from .grid import GridFunction, lp_norm
from .kernels import connection_exponent, kernel_space_derivative, log_t1
from .root_system import RootSystem, rho
from .semigroup import _apply_axes, axis_matrix

RIESZ_TAGS = ("global", "local", "hermite")


def dk_const(rs: RootSystem) -> float:
    """``2^(N/2) Gamma((N + 1)/2) / sqrt(pi)`` with N the homogeneous dimension."""
    n = rs.homogeneous_dim
    return float(np.exp(0.5 * n * np.log(2.0) + gammaln(0.5 * (n + 1)) - 0.5 * np.log(np.pi)))


@dataclass(frozen=True)
class RieszVariant:
    tag: str
    j: int = 0
    T: float | None = None

    def __post_init__(self):
        if self.tag not in RIESZ_TAGS:
            raise ValueError(f"unknown Riesz variant {self.tag!r}")
        if self.j < 0:
            raise ValueError("direction must be nonnegative (0-based)")
        if self.tag == "local" and (self.T is None or not self.T > 0):
            raise ValueError("local Riesz transform needs T > 0")


@dataclass(frozen=True)
class TimeQuadrature:
    """Composite Gauss-Legendre rule in ``s = sqrt(t)`` on geometric panels."""

    t_lo: float
    t_hi: float = 50.0
    panels: int = 20
    order: int = 10

    def __post_init__(self):
        if not (0 < self.t_lo < self.t_hi):
            raise ValueError("need 0 < t_lo < t_hi")

    @classmethod
    def for_grid(cls, grid, t_hi: float = 50.0) -> "TimeQuadrature":
        return cls(grid.spacing ** 2, t_hi)

    def nodes(self, t_hi: float | None = None):
        """Times and weights for ``int_{t_lo}^{t_hi} g(t) dt / sqrt(t)``."""
        t_hi = self.t_hi if t_hi is None else t_hi
        edges = np.geomspace(np.sqrt(self.t_lo), np.sqrt(self.t_hi), self.panels + 1)
        if t_hi < self.t_hi:
            # shorter ranges reuse the same panels and end on one partial panel
            edges = np.append(edges[edges < np.sqrt(t_hi) * (1 - 1e-12)], np.sqrt(t_hi))
        x, w = np.polynomial.legendre.leggauss(self.order)
        s = (0.5 * (edges[:-1] + edges[1:])[:, None] + 0.5 * np.diff(edges)[:, None] * x).ravel()
        ws = (0.5 * np.diff(edges)[:, None] * w).ravel()
        return s * s, 2.0 * ws


def _derivative_mats(grid, j: int, t: float, which: str):
    """Axis matrices whose tensor product applies ``T_j`` to the kernel."""
    mats = [axis_matrix(grid, ax, t, which) for ax in range(grid.dimension)]
    x = grid.axes[j]
    diff = x[None, :] - x[:, None]
    base = mats[j]
    if which == "heat":
        first = diff / (2.0 * t) * base
        return [mats[:j] + [first] + mats[j + 1:]]
    inv = np.exp(-log_t1(t)) / 2.0
    first = diff * inv * base
    second = 2.0 * x[:, None] * float(connection_exponent(t)) * base
    return [mats[:j] + [first] + mats[j + 1:], mats[:j] + [second] + mats[j + 1:]]


def riesz(rs: RootSystem, f: GridFunction, variant: RieszVariant, tq: TimeQuadrature | None = None,
          ) -> GridFunction:
    """Global, local or Hermite Riesz transform of a grid function.

    Two corrections are added and their sizes reported in ``flags``: below
    ``t_lo`` the integrand is replaced by its limit ``T_j f`` (size
    ``d_k * 2 sqrt(t_lo) * max|T_j f|``), and for the global variant the
    part beyond ``t_hi`` comes from the far field of ``f``, a point mass at
    the origin.  The Hermite tail decays exponentially and is dropped.  For
    the Hermite variant the two summands of the kernel derivative are kept
    in ``flags["summands"]``.
    """
    grid = f.grid
    if variant.j >= grid.dimension:
        raise ValueError("direction out of range")
    tq = TimeQuadrature.for_grid(grid) if tq is None else tq
    which = "hermite" if variant.tag == "hermite" else "heat"
    t_hi = tq.t_hi if variant.tag != "local" else variant.T ** 2
    if t_hi <= tq.t_lo:
        raise ValueError("upper time limit below the resolved range")
    times, wts = tq.nodes(t_hi)
    dk = dk_const(rs)
    parts = np.zeros((2 if which == "hermite" else 1, grid.size))
    for t, wt in zip(times, wts):
        for p, m in enumerate(_derivative_mats(grid, variant.j, t, which)):
            parts[p] += wt * _apply_axes(grid, f.values, m)
    parts *= dk
    # below t_lo the kernel is unresolved; T_j H_t f -> T_j f gives the leading term
    tj_f = apply_dunkl_op(rs, variant.j, f).values
    small = dk * 2.0 * np.sqrt(tq.t_lo) * tj_f
    parts[0] += small
    out = GridFunction(grid, parts.sum(axis=0))
    out.flags["small_t_remainder"] = float(np.abs(small).max(initial=0.0))
    tail = np.zeros(grid.size)
    if variant.tag == "global":
        tail = dk * far_field_tail(rs, grid, variant.j, f, t_hi)
        out.values += tail
        scale = np.abs(out.values).max(initial=0.0)
        if scale > 0 and np.abs(tail).max() > 0.5 * scale:
            raise RuntimeError("time integral tail did not converge")
    out.flags["tail_estimate"] = float(np.abs(tail).max(initial=0.0))
    out.flags["unresolved"] = bool(np.sqrt(tq.t_lo) < grid.spacing)
    if which == "hermite":
        out.flags["summands"] = (parts[0].copy(), parts[1].copy())
    return out


def far_field_tail(rs: RootSystem, grid, j: int, f: GridFunction, t_hi: float) -> np.ndarray:
    """``int_{t_hi}^inf T_j H_t f dt / sqrt(t)`` with ``f`` replaced by its mass at 0.

    ``T_{j,x} h_t(x, 0) = -x_j/(2t) h_t(x, 0)`` and ``h_t(x, 0)`` is a pure
    Gaussian, so the tail is ``-M x_j c_k^{-1} 2^(-N/2-1) I(x)`` with
    ``I = int_{t_hi}^inf t^(-(N+3)/2) exp(-|x|^2/(4t)) dt``, computed as
    ``t_hi^(-(N+1)/2) int_0^1 v^((N-1)/2) exp(-v |x|^2/(4 t_hi)) dv``.
    """
    from .dunkl_core import gaussian_const
    from .grid import integrate

    mass = integrate(f)
    n = rs.homogeneous_dim
    z = np.sum(grid.nodes ** 2, axis=1) / (4.0 * t_hi)
    v, w = np.polynomial.legendre.leggauss(64)
    v = 0.5 * (v + 1.0)
    inner = (0.5 * w * v ** (0.5 * (n - 1)) * np.exp(-np.outer(z, v))).sum(axis=1)
    integral = t_hi ** (-0.5 * (n + 1)) * inner
    return -mass * grid.nodes[:, j] / gaussian_const(rs) * 2.0 ** (-0.5 * n - 1) * integral


def riesz_difference(rs: RootSystem, f: GridFunction, j: int, y0, A: float = 4.0,
                     tq: TimeQuadrature | None = None):
    """``R~_j f - R_j^{rho(y0)} f`` and its L1 norm.

    Rejects ``f`` unless every node where it is nonzero lies in
    ``B(y0, A rho(y0))``.
    """
    y0 = np.atleast_1d(np.asarray(y0, dtype=float))
    grid = f.grid
    reach = A * float(rho(y0))
    support = grid.nodes[np.abs(f.values) > 0]
    if support.size and np.linalg.norm(support - y0, axis=1).max() >= reach:
        raise ValueError("f is not supported in B(y0, A rho(y0))")
    full = riesz(rs, f, RieszVariant("hermite", j), tq)
    local = riesz(rs, f, RieszVariant("local", j, T=float(rho(y0))), tq)
    diff = GridFunction(grid, full.values - local.values)
    return diff, lp_norm(diff, 1.0)


def riesz_tail_integral(rs: RootSystem, grid, j: int, y, r: float, t_hi: float = 50.0,
                        panels: int = 20, order: int = 10) -> float:
    """``int_{r^2}^{t_hi} int |T_{j,x} k_t(x, y)| dw(x) dt / sqrt(t)`` on the grid."""
    y = np.atleast_1d(np.asarray(y, dtype=float))
    tq = TimeQuadrature(r * r, t_hi, panels, order)
    times, wts = tq.nodes()
    total = 0.0
    for t, wt in zip(times, wts):
        d = kernel_space_derivative(rs, j, t, grid.nodes, y[None, :], which="hermite")
        total += wt * float(np.sum(np.abs(d) * grid.quad_weights))
    return total
