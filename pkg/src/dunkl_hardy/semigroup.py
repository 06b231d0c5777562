"""Heat and Hermite semigroups on grids, maximal functions, and ``H_{T^2/2} - I``.

Both kernels factorize over the coordinates for Z2^N, so each semigroup
operator is a tensor product of per-axis matrices ``P[i, j] = kernel(x_i, y_j)
* W_j``.  For small times the rows are divided by their sum over a padded
copy of the axis lattice, which makes the discrete operator tend to the
identity as ``t -> 0`` even when the kernel is narrower than a cell.
"""
from __future__ import annotations

import threading
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from scipy.special import gammaln

from .dunkl_core import log_kernel_1d
from .grid import GridFunction, WeightedGrid, axis_weights
from .kernels import connection_exponent, log_t1

NORMALIZE_BELOW = 1.0
CACHE_BYTES = 1536 * 2 ** 20
MAXIMAL_TAGS = ("radial", "nontangential", "tangential", "hardy_littlewood", "local", "hermite")


@dataclass(frozen=True)
class TimeGrid:
    """Log-spaced times used to discretize suprema over ``t > 0``."""

    t_min: float = 1e-4
    t_max: float = 25.0
    count: int = 64

    def __post_init__(self):
        if self.count < 48:
            raise ValueError("a time grid needs at least 48 points")
        if not (0 < self.t_min < self.t_max):
            raise ValueError("need 0 < t_min < t_max")

    @property
    def times(self) -> np.ndarray:
        return np.geomspace(self.t_min, self.t_max, self.count)


@dataclass(frozen=True)
class MaximalKind:
    tag: str
    T: float | None = None
    exponent: float | None = None  # tangential decay power, default 2 * homogeneous dim

    def __post_init__(self):
        if self.tag not in MAXIMAL_TAGS:
            raise ValueError(f"unknown maximal kind {self.tag!r}")
        if self.tag == "local" and (self.T is None or not self.T > 0):
            raise ValueError("local maximal function needs T > 0")


# ------------------------------------------------------------ axis matrices

_CACHE: OrderedDict = OrderedDict()
_CACHE_SIZE = [0]
_CACHE_LOCK = threading.Lock()


def _cached(key, build):
    with _CACHE_LOCK:
        if key in _CACHE:
            _CACHE.move_to_end(key)
            return _CACHE[key]
    val = build()  # built outside the lock; a concurrent duplicate is identical
    with _CACHE_LOCK:
        if key in _CACHE:
            return _CACHE[key]
        _CACHE[key] = val
        _CACHE_SIZE[0] += val.nbytes
        while _CACHE_SIZE[0] > CACHE_BYTES and len(_CACHE) > 1:
            _, old = _CACHE.popitem(last=False)
            _CACHE_SIZE[0] -= old.nbytes
    return val


def clear_cache():
    with _CACHE_LOCK:
        _CACHE.clear()
        _CACHE_SIZE[0] = 0


def _axis_log_heat(k: float, log_t: float, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    # rank-one heat kernel with time exp(log_t)
    log_c = (2 * k + 0.5) * np.log(2.0) + gammaln(k + 0.5)
    inv4t = 0.25 * np.exp(-log_t)
    return (-log_c - (0.5 + k) * (np.log(2.0) + log_t) - (x * x + y * y) * inv4t
            + log_kernel_1d(k, x * y * 2 * inv4t))


def _row_mass(k: float, log_t: float, nodes: np.ndarray, h: float) -> np.ndarray:
    # row sums against a lattice padded far enough that the kernel has decayed
    pad = int(np.ceil(10.0 * np.sqrt(2.0 * np.exp(log_t)) / h)) + 2
    n = nodes.size + 2 * pad
    ext = nodes[-1] + h * pad
    lat = -ext + h * np.arange(n)
    lat = 0.5 * (lat - lat[::-1])
    wts = axis_weights(k, lat, h)
    half = nodes.size // 2
    rows = np.exp(_axis_log_heat(k, log_t, nodes[:half, None], lat[None, :])) @ wts
    return np.concatenate([rows, rows[::-1]])


def _mirror_fill(top: np.ndarray) -> np.ndarray:
    # the kernels are invariant under (x, y) -> (-x, -y)
    return np.vstack([top, top[::-1, ::-1]])


def axis_matrix(grid: WeightedGrid, axis: int, t: float, which: str = "heat") -> np.ndarray:
    """Per-axis operator matrix for ``H_t`` or ``K_t`` (cached)."""
    t = float(t)
    if not t > 0:
        raise ValueError("time must be positive")
    if which not in ("heat", "hermite"):
        raise ValueError("which must be 'heat' or 'hermite'")
    k = grid.root_system.k[axis]
    key = (grid, axis, t, which)

    def build():
        nodes = grid.axes[axis]
        wq = grid.axis_quad[axis]
        half = nodes.size // 2
        log_time = np.log(t) if which == "heat" else float(log_t1(t))
        logm = _axis_log_heat(k, log_time, nodes[:half, None], nodes[None, :])
        if which == "hermite":
            a = float(connection_exponent(t))
            logm = logm + a * (nodes[:half, None] ** 2 + nodes[None, :] ** 2)
        mat = _mirror_fill(np.exp(logm)) * wq[None, :]
        if np.exp(log_time) <= NORMALIZE_BELOW:
            mat /= _row_mass(k, log_time, nodes, grid.spacing)[:, None]
        return mat

    return _cached(key, build)


def _apply_axes(grid: WeightedGrid, vals: np.ndarray, mats) -> np.ndarray:
    out = vals.reshape(grid.shape)
    for ax, m in enumerate(mats):
        out = np.moveaxis(np.tensordot(m, out, axes=([1], [ax])), 0, ax)
    return out.reshape(-1)


def apply_semigroup(rs, f: GridFunction, t: float, which: str = "heat") -> GridFunction:
    """``H_t f`` or ``K_t f`` by quadrature on the grid of ``f``.

    The output carries ``flags["unresolved"] = True`` when ``sqrt(t)`` is
    below two grid spacings.
    """
    grid = f.grid
    if rs is not None and tuple(rs.k) != tuple(grid.root_system.k):
        raise ValueError("root system does not match the grid")
    mats = [axis_matrix(grid, ax, t, which) for ax in range(grid.dimension)]
    out = GridFunction(grid, _apply_axes(grid, f.values, mats))
    out.flags["unresolved"] = bool(np.sqrt(t) < 2 * grid.spacing)
    return out


def semigroup_stack(f: GridFunction, times, which: str = "heat") -> np.ndarray:
    """Rows ``H_t f`` (or ``K_t f``) for every t, shape (len(times), size)."""
    grid = f.grid
    return np.stack([_apply_axes(grid, f.values, [axis_matrix(grid, ax, t, which)
                                                  for ax in range(grid.dimension)])
                     for t in times])


def char_operator(rs, f: GridFunction, T: float) -> GridFunction:
    """``(H_{T^2/2} - I) f`` nodewise."""
    if not T > 0:
        raise ValueError("T must be positive")
    return GridFunction(f.grid, apply_semigroup(rs, f, 0.5 * T * T).values - f.values)


# ------------------------------------------------------------ disk reductions


def _disk_offsets(radius: float, h: float, dim: int, strict: bool = True):
    """Half-widths of the row segments of a disk (in nodes), keyed by row offset."""
    m = int(np.floor(radius / h)) + 1
    if dim == 1:
        off = np.arange(m + 1)
        ok = (off * h < radius) if strict else (off * h <= radius)
        return {0: int(off[ok].max()) if ok.any() else -1}
    out = {}
    for dy in range(-m, m + 1):
        rem = radius * radius - (dy * h) ** 2
        if rem < 0 or (strict and rem == 0):
            continue
        w = int(np.floor(np.sqrt(rem) / h))
        if strict and (w * h) ** 2 + (dy * h) ** 2 >= radius * radius:
            w -= 1
        if w >= 0:
            out[dy] = w
    return out


def _shift(a: np.ndarray, dy: int, axis: int) -> np.ndarray:
    out = np.zeros_like(a)
    n = a.shape[axis]
    if abs(dy) >= n:
        return out
    src = [slice(None)] * a.ndim
    dst = [slice(None)] * a.ndim
    src[axis] = slice(max(dy, 0), n + min(dy, 0))
    dst[axis] = slice(max(-dy, 0), n - max(dy, 0))
    out[tuple(dst)] = a[tuple(src)]
    return out


def disk_max(u: np.ndarray, shape: tuple, radius: float, h: float) -> np.ndarray:
    """``max`` of nonnegative ``u`` over nodes at distance ``< radius``."""
    a = u.reshape(shape)
    offs = _disk_offsets(radius, h, len(shape))
    if not offs:
        return np.zeros_like(u)
    out = np.zeros_like(a)
    last = len(shape) - 1
    for dy, w in offs.items():
        row = ndimage.maximum_filter1d(a, 2 * w + 1, axis=last, mode="constant", cval=0.0)
        out = np.maximum(out, _shift(row, dy, 0) if len(shape) > 1 else row)
    return out.reshape(-1)


def disk_sum(u: np.ndarray, shape: tuple, radius: float, h: float) -> np.ndarray:
    """Sum of ``u`` over nodes at distance ``< radius`` (zero outside the grid)."""
    a = u.reshape(shape)
    offs = _disk_offsets(radius, h, len(shape))
    out = np.zeros_like(a)
    last = len(shape) - 1
    n = shape[last]
    pad = [(0, 0)] * a.ndim
    pad[last] = (1, 0)
    csum = np.cumsum(np.pad(a, pad), axis=last)
    idx = np.arange(n)
    for dy, w in offs.items():
        hi = np.clip(idx + w + 1, 0, n)
        lo = np.clip(idx - w, 0, n)
        row = np.take(csum, hi, axis=last) - np.take(csum, lo, axis=last)
        out += _shift(row, dy, 0) if len(shape) > 1 else row
    return out.reshape(-1)


# ------------------------------------------------------------ maximal functions


def _radius_grid(grid: WeightedGrid, count: int = 32) -> np.ndarray:
    return np.geomspace(0.5 * grid.spacing, 2.0 * grid.extent * np.sqrt(grid.dimension), count)


def hardy_littlewood(f: GridFunction, count: int = 32) -> GridFunction:
    """Discrete uncentred maximal function over node-centred balls.

    Ball averages use the quadrature measure in both numerator and
    denominator, so a ball holding a single node averages to ``|f|`` there.
    """
    grid = f.grid
    shape, h = grid.shape, grid.spacing
    a = np.abs(f.values) * grid.quad_weights
    best = np.zeros(grid.size)
    for r in _radius_grid(grid, count):
        mass = disk_sum(grid.quad_weights, shape, r, h)
        avg = np.where(mass > 0, disk_sum(a, shape, r, h) / np.where(mass > 0, mass, 1.0), 0.0)
        best = np.maximum(best, disk_max(avg, shape, r, h))
    return GridFunction(grid, best)


def _orthant_view(grid: WeightedGrid, v: np.ndarray) -> np.ndarray:
    # fold a function onto the positive orthant, keeping the max over the group
    a = v.reshape(grid.shape)
    half = grid.resolution // 2
    for ax in range(grid.dimension):
        a = np.maximum(np.take(a, np.arange(half, 2 * half), axis=ax),
                       np.flip(np.take(a, np.arange(0, half), axis=ax), axis=ax))
    return a.reshape(-1)


def _unfold(grid: WeightedGrid, q: np.ndarray) -> np.ndarray:
    half = grid.resolution // 2
    a = q.reshape((half,) * grid.dimension)
    for ax in range(grid.dimension):
        a = np.concatenate([np.flip(a, axis=ax), a], axis=ax)
    return a.reshape(-1)


def tangential(f: GridFunction, stack: np.ndarray, times, exponent: float) -> GridFunction:
    """``sup_{t, y} (1 + d_G(x, y)/sqrt(t))^(-exponent) |H_t f(y)|`` over the nodes."""
    grid = f.grid
    half = grid.resolution // 2
    pos = np.stack(np.meshgrid(*[ax[half:] for ax in grid.axes], indexing="ij"), -1)
    pos = pos.reshape(-1, grid.dimension)
    # single precision for the weight matrix; it only ranks candidates
    dist = np.sqrt(((pos[:, None, :] - pos[None, :, :]) ** 2).sum(-1)).astype(np.float32)
    buf = np.empty_like(dist)
    best = np.zeros(pos.shape[0])
    for t, row in zip(times, stack):
        v = _orthant_view(grid, np.abs(row)).astype(np.float32)
        if not v.any():
            continue
        np.multiply(dist, np.float32(1.0 / np.sqrt(t)), out=buf)
        buf += np.float32(1.0)
        np.power(buf, np.float32(-exponent), out=buf)
        buf *= v[None, :]
        best = np.maximum(best, buf.max(axis=1).astype(float))
    return GridFunction(grid, _unfold(grid, best))


def maximal_function(rs, f: GridFunction, kind: MaximalKind | str, tg: TimeGrid | None = None,
                     stack: np.ndarray | None = None) -> GridFunction:
    """Discrete maximal functions; all are lower bounds of the continuum suprema.

    ``stack`` may pass precomputed semigroup rows for ``tg.times``.
    """
    if isinstance(kind, str):
        kind = MaximalKind(kind)
    tg = TimeGrid() if tg is None else tg
    grid = f.grid
    if kind.tag == "hardy_littlewood":
        return hardy_littlewood(f)
    times = tg.times
    if kind.tag == "local":
        times = np.union1d(times[times < kind.T ** 2], [kind.T ** 2])
        stack = None
    which = "hermite" if kind.tag == "hermite" else "heat"
    if stack is None or kind.tag in ("local", "hermite"):
        stack = semigroup_stack(f, times, which)
    u = np.abs(stack)
    if kind.tag in ("radial", "local", "hermite"):
        return GridFunction(grid, u.max(axis=0))
    if kind.tag == "nontangential":
        out = np.zeros(grid.size)
        for t, row in zip(times, u):
            out = np.maximum(out, disk_max(row, grid.shape, np.sqrt(t), grid.spacing))
        return GridFunction(grid, out)
    exponent = kind.exponent if kind.exponent is not None else 2 * grid.root_system.homogeneous_dim
    return tangential(f, stack, times, exponent)
