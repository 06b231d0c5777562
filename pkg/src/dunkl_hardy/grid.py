"""Symmetric tensor grids with quadrature weights for ``dw``."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from functools import cached_property
from math import comb
from pathlib import Path

import numpy as np

from .root_system import RootSystem, build_root_system

DEFAULT_GRIDS = {1: (10.0, 512), 2: (6.0, 128)}
SUPPORTED_P = (1.0, 4.0 / 3.0, 2.0, np.inf)


def _signed_moment(k: float, q: int, x: np.ndarray) -> np.ndarray:
    # antiderivative of |sqrt2 x|^(2k) x^q, valid on either side of 0
    m = 2.0 * k + q + 1.0
    return 2.0 ** k * np.sign(x) ** (q + 1) * np.abs(x) ** m / m


def _cell_moments(k: float, centers: np.ndarray, h: float) -> np.ndarray:
    """``int_cell w(x) ((x - c)/h)^p dx`` for p = 0, 1, 2 (cells avoid 0)."""
    a = centers - h / 2
    b = centers + h / 2
    raw = [_signed_moment(k, q, b) - _signed_moment(k, q, a) for q in range(3)]
    out = np.empty((3, centers.size))
    for p in range(3):
        acc = np.zeros_like(centers)
        for q in range(p + 1):
            acc += comb(p, q) * raw[q] * (-centers) ** (p - q)
        out[p] = acc / h ** p
    return out


def axis_weights(k: float, centers: np.ndarray, h: float) -> np.ndarray:
    """Product-integration weights on one axis.

    Each cell integrates the quadratic interpolant of ``f`` through the
    node and its two neighbours against the exact weight; edge cells use the
    node value only.  Near the origin, where a large multiplicity makes the
    weight vary by orders of magnitude inside a cell, cells fall back to the
    node value until every weight is positive.  The weights always sum to
    the exact weighted length of the axis.
    """
    mu0, mu1, mu2 = _cell_moments(k, centers, h)
    n = centers.size
    for m in range(n // 2 + 1):
        plain = np.abs(centers) < m * h
        plain[0] = plain[-1] = True
        quad = ~plain
        wts = np.where(plain, mu0, 0.0)
        idx = np.nonzero(quad)[0]
        np.add.at(wts, idx, mu0[idx] - mu2[idx])
        np.add.at(wts, idx - 1, 0.5 * (mu2[idx] - mu1[idx]))
        np.add.at(wts, idx + 1, 0.5 * (mu2[idx] + mu1[idx]))
        if np.all(wts > 0):
            return wts
    raise RuntimeError("could not build positive quadrature weights")


@dataclass(frozen=True, eq=False)
class WeightedGrid:
    """Cell-centred tensor grid on ``[-R, R]^N``.

    ``resolution`` is even, so the origin is a cell boundary and every
    coordinate reflection permutes the nodes.
    """

    root_system: RootSystem
    extent: float
    resolution: int
    axes: tuple = field(repr=False)
    axis_quad: tuple = field(repr=False)

    @property
    def dimension(self) -> int:
        return self.root_system.dimension

    @property
    def shape(self) -> tuple:
        return (self.resolution,) * self.dimension

    @property
    def spacing(self) -> float:
        return 2.0 * self.extent / self.resolution

    @property
    def size(self) -> int:
        return self.resolution ** self.dimension

    @cached_property
    def nodes(self) -> np.ndarray:
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([m.reshape(-1) for m in mesh], axis=-1)

    @cached_property
    def quad_weights(self) -> np.ndarray:
        out = self.axis_quad[0]
        for wq in self.axis_quad[1:]:
            out = np.multiply.outer(out, wq)
        return np.asarray(out).reshape(-1)

    def core_mask(self, fraction: float = 0.5) -> np.ndarray:
        return np.all(np.abs(self.nodes) <= fraction * self.extent, axis=-1)

    def reflect_index(self, j: int) -> np.ndarray:
        """Node permutation implementing the reflection in coordinate j."""
        idx = np.arange(self.size).reshape(self.shape)
        return np.flip(idx, axis=j).reshape(-1)

    def metadata(self) -> dict:
        return {"dimension": self.dimension, "extent": self.extent, "resolution": self.resolution,
                "family": self.root_system.family,
                "multiplicity": ",".join(repr(v) for v in self.root_system.k)}


def make_grid(rs: RootSystem, extent: float | None = None, resolution: int | None = None) -> WeightedGrid:
    """Symmetric grid with ``resolution`` nodes per axis on ``[-extent, extent]``."""
    d_ext, d_res = DEFAULT_GRIDS.get(rs.dimension, (4.0, 32))
    extent = d_ext if extent is None else float(extent)
    resolution = d_res if resolution is None else int(resolution)
    if resolution % 2 or resolution < 16:
        raise ValueError("resolution must be even and at least 16")
    if not extent > 0:
        raise ValueError("extent must be positive")
    h = 2.0 * extent / resolution
    centers = -extent + h * (np.arange(resolution) + 0.5)
    centers = 0.5 * (centers - centers[::-1])  # exact mirror symmetry
    quad = tuple(axis_weights(kj, centers, h) for kj in rs.k)
    return WeightedGrid(rs, extent, resolution, tuple(centers.copy() for _ in rs.k), quad)


@dataclass(eq=False)
class GridFunction:
    """Values at the nodes of a grid; ``flags`` carries numerical warnings."""

    grid: WeightedGrid
    values: np.ndarray
    flags: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).reshape(-1)
        if self.values.size != self.grid.size:
            raise ValueError("value count does not match the grid")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("grid function values must be finite")

    def _other(self, other):
        if isinstance(other, GridFunction):
            if other.grid is not self.grid:
                raise ValueError("grid functions live on different grids")
            return other.values
        return other

    def __add__(self, other):
        return GridFunction(self.grid, self.values + self._other(other))

    __radd__ = __add__

    def __sub__(self, other):
        return GridFunction(self.grid, self.values - self._other(other))

    def __rsub__(self, other):
        return GridFunction(self.grid, self._other(other) - self.values)

    def __mul__(self, other):
        return GridFunction(self.grid, self.values * self._other(other))

    __rmul__ = __mul__

    def __neg__(self):
        return GridFunction(self.grid, -self.values)

    def __truediv__(self, c):
        return GridFunction(self.grid, self.values / c)

    def reshaped(self) -> np.ndarray:
        return self.values.reshape(self.grid.shape)


def sample(grid: WeightedGrid, func) -> GridFunction:
    """Evaluate ``func`` on the nodes (it receives an (M, N) array)."""
    return GridFunction(grid, func(grid.nodes))


def integrate(f: GridFunction) -> float:
    """``int f dw`` (pairwise summation, so the order is fixed)."""
    return float(np.sum(f.values * f.grid.quad_weights))


def lp_norm(f: GridFunction, p: float) -> float:
    p = float(p)
    match = [q for q in SUPPORTED_P if np.isclose(p, q, rtol=1e-12) or (np.isinf(q) and np.isinf(p))]
    if not match:
        raise ValueError(f"unsupported exponent {p}; use 1, 4/3, 2 or inf")
    q = match[0]
    a = np.abs(f.values)
    top = float(a.max(initial=0.0))
    if np.isinf(q) or top == 0.0:
        return top
    if q == 1.0:
        return float(np.sum(a * f.grid.quad_weights))
    # scale by the max so tiny or huge values neither underflow nor overflow
    return top * float(np.sum((a / top) ** q * f.grid.quad_weights) ** (1.0 / q))


def to_csv(f: GridFunction, path: str | Path | None = None) -> str:
    """Write node coordinates and values; grid metadata goes in ``#`` lines."""
    buf = io.StringIO(newline="")
    meta = f.grid.metadata()
    for key, val in meta.items():
        buf.write(f"# {key}={val}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([f"x{j + 1}" for j in range(f.grid.dimension)] + ["value"])
    for node, v in zip(f.grid.nodes, f.values):
        w.writerow([f"{c:.17g}" for c in node] + [f"{v:.17g}"])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text, encoding="utf-8", newline="")
    return text


def from_csv(source: str | Path) -> GridFunction:
    """Inverse of :func:`to_csv`; accepts a path or the CSV text."""
    text = Path(source).read_text(encoding="utf-8") if isinstance(source, Path) or (
        isinstance(source, str) and "\n" not in source) else source
    meta = {}
    rows = []
    for line in text.splitlines():
        if line.startswith("#"):
            key, _, val = line[1:].strip().partition("=")
            meta[key.strip()] = val.strip()
        elif line.strip():
            rows.append(line)
    reader = csv.reader(rows)
    next(reader)
    data = np.array([[float(c) for c in r] for r in reader])
    ks = [float(v) for v in meta["multiplicity"].split(",")]
    dim = int(meta["dimension"])
    rs = build_root_system(meta["family"], k=ks if meta["family"] != "Z2" else ks[0],
                           dimension=dim if meta["family"] != "Z2" else None)
    grid = make_grid(rs, float(meta["extent"]), int(meta["resolution"]))
    if not np.allclose(data[:, :dim], grid.nodes, rtol=0, atol=1e-12 * grid.extent):
        raise ValueError("node coordinates do not match the declared grid")
    return GridFunction(grid, data[:, dim])
