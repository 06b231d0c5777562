"""Root systems of product reflection type and their geometry.

Only the rank-one system Z2 and its products Z2^N are supported.  In this
setting every root is ``±sqrt(2) e_j``, the reflection group is the group of
coordinate sign flips and the weight ``w`` factorizes over the coordinates,
which is what makes closed-form kernel evaluation possible downstream.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy import integrate

SQRT2 = np.sqrt(2.0)
FAMILIES = ("Z2", "Z2^N")


@dataclass(frozen=True, eq=False)
class RootSystem:
    """Normalized root system with a multiplicity function.

    Attributes
    ----------
    family : str
        ``"Z2"`` or ``"Z2^N"``.
    dimension : int
        Ambient dimension N.
    k : tuple of float
        Multiplicity of the positive root ``sqrt(2) e_j`` for each axis j.
    roots : ndarray, shape (2N, N)
        All roots, positive ones first.
    positive_roots : ndarray, shape (N, N)
    multiplicity : ndarray, shape (2N,)
        Multiplicity aligned with ``roots``.
    group : ndarray, shape (2**N, N, N)
        The reflection group as orthogonal matrices, identity first.
    """

    family: str
    dimension: int
    k: tuple
    roots: np.ndarray = field(repr=False)
    positive_roots: np.ndarray = field(repr=False)
    multiplicity: np.ndarray = field(repr=False)
    group: np.ndarray = field(repr=False)

    @property
    def signs(self) -> np.ndarray:
        """Diagonals of the group elements, shape (|G|, N)."""
        return np.einsum("gii->gi", self.group)

    @property
    def order(self) -> int:
        return self.group.shape[0]

    @property
    def homogeneous_dim(self) -> float:
        return float(self.dimension + 2.0 * sum(self.k))

    @property
    def is_classical(self) -> bool:
        return all(kj == 0.0 for kj in self.k)

    def axis(self, j: int) -> "RootSystem":
        """The rank-one factor acting on coordinate j."""
        return build_root_system("Z2", k=self.k[j])

    def describe(self) -> dict:
        return {"family": self.family, "dimension": self.dimension,
                "multiplicity": list(self.k), "homogeneous_dim": self.homogeneous_dim}


@dataclass(frozen=True)
class GeometryCache:
    """Derived constants of a root system."""

    homogeneous_dim: float
    gaussian_const: float


def build_root_system(family: str = "Z2", k: float | Sequence[float] = 0.0,
                      dimension: int | None = None) -> RootSystem:
    """Instantiate a supported root system.

    Parameters
    ----------
    family : {"Z2", "Z2^N"}
    k : float or sequence of float
        Multiplicity; a scalar is broadcast over all axes for ``Z2^N``.
    dimension : int, optional
        Required for ``Z2^N`` when ``k`` is a scalar.
    """
    if family not in FAMILIES:
        raise ValueError(f"unsupported root system family {family!r}; expected one of {FAMILIES}")
    ks = np.atleast_1d(np.asarray(k, dtype=float))
    if family == "Z2":
        if ks.size != 1 or (dimension not in (None, 1)):
            raise ValueError("Z2 is rank one: give a single multiplicity")
        n = 1
    else:
        if dimension is None:
            dimension = ks.size
        n = int(dimension)
        if n < 1:
            raise ValueError("dimension must be >= 1")
        if ks.size == 1:
            ks = np.full(n, ks[0])
        if ks.size != n:
            raise ValueError(f"expected {n} multiplicities, got {ks.size}")
    if not np.all(np.isfinite(ks)):
        raise ValueError("multiplicities must be finite")
    if np.any(ks < 0):
        raise ValueError("multiplicities must be nonnegative")

    pos = SQRT2 * np.eye(n)
    roots = np.vstack([pos, -pos])
    mult = np.concatenate([ks, ks])
    sign_rows = [np.array(s, dtype=float) for s in itertools.product((1.0, -1.0), repeat=n)]
    group = np.stack([np.diag(s) for s in sign_rows])
    return RootSystem(family, n, tuple(float(v) for v in ks), roots, pos, mult, group)


def root_system_from_mapping(cfg: Mapping[str, str]) -> RootSystem:
    """Build from a key-value mapping (``family``, ``dimension``, ``multiplicity``)."""
    family = cfg.get("family", "Z2").strip()
    mult = [float(v) for v in str(cfg.get("multiplicity", "0")).replace(";", ",").split(",") if v.strip()]
    dim = cfg.get("dimension")
    dim = int(dim) if dim not in (None, "") else None
    if family == "Z2":
        return build_root_system("Z2", k=mult[0] if mult else 0.0, dimension=dim)
    return build_root_system(family, k=mult, dimension=dim)


def _as_points(rs: RootSystem, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if rs.dimension == 1 and (x.ndim == 0 or x.shape[-1] != 1):
        x = x[..., None]
    if x.shape[-1] != rs.dimension:
        raise ValueError(f"points must have last axis of length {rs.dimension}")
    return x


def _find_root(rs: RootSystem, alpha) -> int:
    a = np.atleast_1d(np.asarray(alpha, dtype=float))
    d = np.max(np.abs(rs.roots - a[None, :]), axis=1)
    idx = int(np.argmin(d))
    if d[idx] > 1e-12:
        raise ValueError(f"{a} is not a root of this system")
    return idx


def reflect(rs: RootSystem, alpha, x) -> np.ndarray:
    """Reflection of ``x`` in the hyperplane orthogonal to the root ``alpha``."""
    a = rs.roots[_find_root(rs, alpha)]
    pts = _as_points(rs, x)
    proj = (pts @ a) / (a @ a)
    out = pts - 2.0 * proj[..., None] * a
    return out if np.ndim(x) else out[..., 0]


def apply_group(rs: RootSystem, x) -> np.ndarray:
    """All images ``g(x)``; the group axis is inserted first."""
    pts = _as_points(rs, x)
    return rs.signs.reshape((rs.order,) + (1,) * (pts.ndim - 1) + (rs.dimension,)) * pts


def orbit_distance(rs: RootSystem, x, y) -> np.ndarray:
    """``min_g |x - g(y)|``; for sign-flip groups this is ``| |x| - |y| |``."""
    xa = np.abs(_as_points(rs, x))
    ya = np.abs(_as_points(rs, y))
    return np.sqrt(np.sum((xa - ya) ** 2, axis=-1))


def weight(rs: RootSystem, x) -> np.ndarray:
    """Density of ``dw``: ``prod_j |sqrt(2) x_j|^(2 k_j)``."""
    pts = _as_points(rs, x)
    k = np.asarray(rs.k)
    return np.prod(np.abs(SQRT2 * pts) ** (2.0 * k), axis=-1)


def axis_antiderivative(k: float, s) -> np.ndarray:
    """Antiderivative of ``|sqrt(2) s|^(2k)`` vanishing at 0."""
    s = np.asarray(s, dtype=float)
    return 2.0 ** k * np.sign(s) * np.abs(s) ** (2.0 * k + 1.0) / (2.0 * k + 1.0)


def axis_mass(k: float, a, b) -> np.ndarray:
    """Weighted length of ``[a, b]`` for a rank-one factor."""
    return axis_antiderivative(k, b) - axis_antiderivative(k, a)


def _check_radius(r) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    if np.any(~(r > 0)):
        raise ValueError("ball radius must be positive")
    return r


def _ball_mass_rec(ks: Sequence[float], x: Sequence[float], r: float, lower: Sequence[float] | None) -> float:
    # nested adaptive integration; the innermost axis is integrated exactly
    lo0 = x[0] - r if lower is None else max(x[0] - r, lower[0])
    if len(ks) == 1:
        return float(axis_mass(ks[0], lo0, x[0] + r)) if x[0] + r > lo0 else 0.0
    rest_lower = None if lower is None else lower[1:]

    def integrand(theta: float) -> float:
        s = x[0] + r * np.sin(theta)
        if lower is not None and s < lower[0]:
            return 0.0
        h = r * np.cos(theta)
        if h <= 0.0:
            return 0.0
        inner = _ball_mass_rec(ks[1:], x[1:], h, rest_lower)
        return float(np.abs(SQRT2 * s) ** (2 * ks[0])) * inner * h

    breaks = []
    for c in (0.0,) if lower is None else (0.0, lower[0]):
        if abs(x[0] - c) < r:
            breaks.append(float(np.arcsin((c - x[0]) / r)))
    val, _ = integrate.quad(integrand, -np.pi / 2, np.pi / 2, points=breaks or None,
                            epsabs=0.0, epsrel=1e-11, limit=200)
    return float(val)


def ball_measure(rs: RootSystem, x, r: float) -> float:
    """``w(B(x, r))`` by nested adaptive quadrature (exact in the last axis)."""
    r = float(_check_radius(r))
    pts = np.atleast_1d(np.asarray(x, dtype=float)).reshape(rs.dimension)
    return _ball_mass_rec(rs.k, list(pts), r, None)


def orbit_ball_measure(rs: RootSystem, x, r: float) -> float:
    """``w(O(B(x, r)))`` where ``O(B)`` is the union of the balls ``B(g x, r)``."""
    r = float(_check_radius(r))
    pts = np.abs(np.atleast_1d(np.asarray(x, dtype=float)).reshape(rs.dimension))
    return rs.order * _ball_mass_rec(rs.k, list(pts), r, [0.0] * rs.dimension)


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(64)


def _gl_panel(a: np.ndarray, b: np.ndarray):
    half = 0.5 * (b - a)
    nodes = 0.5 * (a + b)[:, None] + half[:, None] * _GL_NODES[None, :]
    return nodes, half[:, None] * _GL_WEIGHTS[None, :]


def ball_measure_many(rs: RootSystem, x, r) -> np.ndarray:
    """Vectorized ``w(B(x, r))`` for arrays of centers and radii.

    Exact for N = 1.  For N = 2 the outer axis uses Gauss-Legendre panels
    in the angular variable, split where the integrand has kinks.
    """
    pts = _as_points(rs, x)
    r = _check_radius(r)
    pts, r = np.broadcast_arrays(pts, r[..., None] if r.ndim else r)
    r = r[..., 0]
    shape = r.shape
    pts = pts.reshape(-1, rs.dimension)
    r = r.reshape(-1)
    if rs.dimension == 1:
        k = rs.k[0]
        return axis_mass(k, pts[:, 0] - r, pts[:, 0] + r).reshape(shape)
    if rs.dimension > 2:
        return np.array([ball_measure(rs, p, rr) for p, rr in zip(pts, r)]).reshape(shape)
    k1, k2 = rs.k
    x1, x2 = pts[:, 0], pts[:, 1]
    # panel breaks: the outer integrand has kinks where s crosses 0 and where
    # the chord end x2 +- h crosses 0 (h = |x2|)
    mid = np.arcsin(np.clip(-x1 / r, -1.0, 1.0))
    chord = np.arccos(np.clip(np.abs(x2) / r, 0.0, 1.0))
    edges = np.sort(np.stack([np.full_like(r, -np.pi / 2), mid, -chord, chord,
                              np.full_like(r, np.pi / 2)], axis=1), axis=1)
    total = np.zeros_like(r)
    for p in range(edges.shape[1] - 1):
        th, wt = _gl_panel(edges[:, p], edges[:, p + 1])
        s = x1[:, None] + r[:, None] * np.sin(th)
        h = r[:, None] * np.cos(th)
        inner = axis_mass(k2, x2[:, None] - h, x2[:, None] + h)
        total += np.sum(wt * np.abs(SQRT2 * s) ** (2 * k1) * inner * h, axis=1)
    return total.reshape(shape)


def ball_measure_surrogate(rs: RootSystem, x, r) -> np.ndarray:
    """Closed-form comparison ``r^N prod_j (sqrt(2)|x_j| + r)^(2 k_j)``."""
    pts = _as_points(rs, x)
    r = np.asarray(r, dtype=float)
    k = np.asarray(rs.k)
    return r ** rs.dimension * np.prod((SQRT2 * np.abs(pts) + r[..., None]) ** (2 * k), axis=-1)


def rho(x) -> np.ndarray:
    """Critical radius ``1 / (1 + |x|)``."""
    x = np.asarray(x, dtype=float)
    norm = np.abs(x) if x.ndim == 0 else np.linalg.norm(x, axis=-1)
    return 1.0 / (1.0 + norm)
