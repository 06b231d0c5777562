"""Atoms, a rho-adapted partition of unity and constructive atomic decompositions.

Atoms are stored sparsely (support indices plus values) because a Hermite
decomposition on a 2-D grid produces thousands of small pieces.  Every
constructed atom is normalized so that ``sup|a| = 1 / w(B)`` for its ball;
the coefficient carries the size.  Balls used inside the telescoping step are
discrete (grid nodes within the closed ball) and averaged with the discrete
measure, so their mean-zero property is exact up to rounding.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from .grid import GridFunction, WeightedGrid, lp_norm
from .kernels import SamplePlan, log_comparison_kernel, log_heat_kernel, verify_bound
from .root_system import RootSystem, ball_measure_many, rho
from .semigroup import MaximalKind, TimeGrid, apply_semigroup, maximal_function

ATOM_KINDS = ("global", "local", "hermite")
EPS_QUAD = 1e-6
HERMITE_A = 16.0
HARDY_SPACES = ("H1", "H1_loc", "Hermite", "Hermite_atomic")
ROUNDING = 1e-13  # pieces below this fraction of their inputs are rounding noise


def _same_system(a: RootSystem, b: RootSystem) -> bool:
    return a is b or (a.family == b.family and a.dimension == b.dimension and tuple(a.k) == tuple(b.k))


def _ball_w(rs: RootSystem, center, radius: float) -> float:
    c = np.asarray(center, dtype=float).reshape(1, rs.dimension)
    return float(ball_measure_many(rs, c, np.array([float(radius)]))[0])


class Atom:
    """A normalized building block supported in ``B(center, radius)``.

    ``kind`` is ``"global"``, ``"local"`` (``scale`` is T) or ``"hermite"``
    (``scale`` is A).  Values live on ``grid``; only the nodes listed in
    ``support`` may be nonzero.
    """

    def __init__(self, center, radius: float, kind: str, values: GridFunction | None = None,
                 scale: float | None = None, *, grid: WeightedGrid | None = None,
                 support=None, local_values=None):
        if kind not in ATOM_KINDS:
            raise ValueError(f"unknown atom kind {kind!r}")
        if kind in ("local", "hermite") and (scale is None or not scale > 0):
            raise ValueError(f"{kind} atoms need a positive scale")
        self.center = np.atleast_1d(np.asarray(center, dtype=float)).copy()
        self.radius = float(radius)
        self.kind = kind
        self.scale = None if scale is None else float(scale)
        if values is not None:
            self.grid = values.grid
            self.support = np.flatnonzero(values.values)
            self.local_values = values.values[self.support].copy()
        else:
            self.grid = grid
            self.support = np.asarray(support, dtype=np.intp)
            self.local_values = np.asarray(local_values, dtype=float)

    @property
    def values(self) -> GridFunction:
        v = np.zeros(self.grid.size)
        v[self.support] = self.local_values
        return GridFunction(self.grid, v)

    def label(self) -> str:
        if self.kind == "global":
            return "global"
        return f"{self.kind}({'T' if self.kind == 'local' else 'A'}={self.scale:g})"

    def with_kind(self, kind: str, scale: float | None = None, radius: float | None = None,
                  rescale: float = 1.0) -> "Atom":
        return Atom(self.center, self.radius if radius is None else radius, kind, scale=scale,
                    grid=self.grid, support=self.support, local_values=self.local_values * rescale)

    def describe(self) -> dict:
        return {"center": [float(c) for c in self.center], "radius": self.radius,
                "kind": self.kind, "scale": self.scale}


@dataclass
class AtomCheck:
    passed: bool
    violations: list

    def __bool__(self):
        return self.passed


def _mean_zero(atom: Atom, eps: float = EPS_QUAD) -> bool:
    w = atom.grid.quad_weights[atom.support]
    mass = float(np.sum(atom.local_values * w))
    return abs(mass) <= eps * float(np.sum(np.abs(atom.local_values) * w))


def validate_atom(rs: RootSystem, a: Atom, eps: float = EPS_QUAD) -> AtomCheck:
    """Check support, size, cancellation and (Hermite) radius conditions.

    Raises ``ValueError`` when the atom lives on a grid for another root system.
    """
    if not _same_system(a.grid.root_system, rs) or a.center.size != rs.dimension:
        raise ValueError("atom grid is not compatible with the root system")
    bad = []
    if not a.radius > 0:
        return AtomCheck(False, ["radius: must be positive"])
    live = a.local_values != 0
    nodes = a.grid.nodes[a.support[live]]
    if nodes.size:
        far = np.linalg.norm(nodes - a.center, axis=1).max()
        if far > a.radius * (1 + 1e-12):
            bad.append(f"support: node at distance {far:.6g} > radius {a.radius:.6g}")
    bound = 1.0 / _ball_w(rs, a.center, a.radius)
    top = float(np.abs(a.local_values).max(initial=0.0))
    if top > bound * (1 + eps):
        bad.append(f"size: sup {top:.6g} exceeds 1/w(B) = {bound:.6g}")
    if a.kind == "global":
        needs_mean = True
    elif a.kind == "local":
        needs_mean = a.radius < a.scale
    else:
        r0 = float(rho(a.center))
        if a.radius > a.scale * r0 * (1 + 1e-12):
            bad.append(f"radius: {a.radius:.6g} > A rho(x0) = {a.scale * r0:.6g}")
        needs_mean = a.radius < r0
    if needs_mean and not _mean_zero(a, eps):
        bad.append("cancellation: nonzero mean")
    return AtomCheck(not bad, bad)


_TINY = np.finfo(float).tiny


def _normalize(rs, grid, pieces, kind: str, scale: float) -> list:
    """Turn raw pieces ``(idx, vals, center, radius)`` into ``(coefficient, Atom)``.

    Ball measures are computed in one vectorized call.  Zero pieces, and
    pieces whose coefficient underflows to a subnormal float, map to ``None``
    so the output stays aligned with the input.
    """
    if not pieces:
        return []
    tops = np.array([float(np.abs(p[1]).max(initial=0.0)) for p in pieces])
    centers = np.array([np.asarray(p[2], dtype=float).reshape(-1) for p in pieces])
    radii = np.array([float(p[3]) for p in pieces])
    w = ball_measure_many(rs, centers, radii)
    out = []
    for (idx, vals, c, r), top, wb in zip(pieces, tops, w):
        coef = float(wb * top)
        if coef < _TINY:
            out.append(None)
            continue
        out.append((coef, Atom(c, r, kind, scale=scale, grid=grid, support=idx,
                               local_values=vals / coef)))
    return out


def _atomize(rs, grid, idx, vals, center, radius, kind, scale):
    """Normalize one sparse piece; ``None`` if it is zero."""
    return _normalize(rs, grid, [(idx, vals, center, radius)], kind, scale)[0]


def _piece_mean_zero(grid, idx, vals, eps: float = EPS_QUAD) -> bool:
    w = grid.quad_weights[idx]
    return abs(float(np.sum(vals * w))) <= eps * float(np.sum(np.abs(vals) * w))


# ---------------------------------------------------------------- decompositions


@dataclass
class AtomicDecomposition:
    """``f = sum c_j a_j`` with diagnostics.

    ``reconstruction_residual`` is ``||f - sum c_j a_j||_1`` and
    ``coefficient_sum`` is ``sum |c_j|``, an upper estimate of the atomic norm.
    """

    source: GridFunction
    terms: list
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.terms = [(float(c), a) for c, a in self.terms if c != 0.0]
        self.coefficient_sum = float(sum(abs(c) for c, _ in self.terms))
        self.reconstruction_residual = lp_norm(self.source - self.reconstruct(), 1.0)
        norm = lp_norm(self.source, 1.0)
        self.relative_residual = self.reconstruction_residual / norm if norm > 0 else 0.0

    def reconstruct(self) -> GridFunction:
        grid = self.source.grid
        out = np.zeros(grid.size)
        for c, a in self.terms:
            np.add.at(out, a.support, c * a.local_values)
        return GridFunction(grid, out)

    def validate(self, rs: RootSystem) -> list:
        """Indices and violations of every term that fails :func:`validate_atom`."""
        out = []
        for i, (_, a) in enumerate(self.terms):
            chk = validate_atom(rs, a)
            if not chk:
                out.append((i, chk.violations))
        return out

    def to_dict(self) -> dict:
        return {"coefficient_sum": self.coefficient_sum,
                "reconstruction_residual": self.reconstruction_residual,
                "relative_residual": self.relative_residual,
                "metadata": self.metadata,
                "atoms": [dict(a.describe(), coefficient=c) for c, a in self.terms]}

    def to_json(self, path: str | Path | None = None) -> str:
        text = json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"
        if path is not None:
            Path(path).write_text(text, encoding="utf-8", newline="")
        return text

    def atoms_csv(self, path: str | Path | None = None) -> str:
        """One row per nonzero atom value: atom id, node coordinates, value."""
        grid = self.source.grid
        buf = io.StringIO(newline="")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["atom"] + [f"x{j + 1}" for j in range(grid.dimension)] + ["value"])
        for i, (_, a) in enumerate(self.terms):
            for node, v in zip(grid.nodes[a.support], a.local_values):
                w.writerow([i] + [f"{c:.17g}" for c in node] + [f"{v:.17g}"])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text, encoding="utf-8", newline="")
        return text


def _closed_ball(grid: WeightedGrid, y, radius: float) -> np.ndarray:
    """Indices of the nodes with ``|node - y| <= radius``."""
    windows = []
    for ax, yj in zip(grid.axes, y):
        lo = np.searchsorted(ax, yj - radius * (1 + 1e-9), side="left")
        hi = np.searchsorted(ax, yj + radius * (1 + 1e-9), side="right")
        windows.append(np.arange(lo, hi))
    if any(w.size == 0 for w in windows):
        return np.zeros(0, dtype=np.intp)
    idx = np.ravel_multi_index(np.meshgrid(*windows, indexing="ij"), grid.shape).reshape(-1)
    d = np.linalg.norm(grid.nodes[idx] - y, axis=1)
    return np.sort(idx[d <= radius])


def _telescope_pieces(grid, idx, vals, y, r, T):
    """Raw pieces of the telescoping split, plus ``lambda`` and ``n``."""
    wq = grid.quad_weights
    lam = float(np.sum(vals * wq[idx]))
    scale = float(np.sum(np.abs(vals) * wq[idx]))
    n = 1
    while 2.0 ** n * r < T:
        n += 1
    if abs(lam) <= 1e-14 * scale:
        return [(idx, vals, y, 2 * r)], lam, n
    balls = [_closed_ball(grid, y, 2.0 ** j * r) for j in range(1, n + 1)]
    if any(b.size == 0 for b in balls):
        raise ValueError("telescoping ball contains no grid node")
    avgs = [1.0 / float(np.sum(wq[b])) for b in balls]
    # b0 = a~ - lambda chi_{B(y,2r)} / W(B(y,2r)), supported in B(y, 2r)
    sup0 = np.union1d(idx, balls[0])
    b0 = np.zeros(sup0.size)
    b0[np.searchsorted(sup0, idx)] = vals
    b0[np.searchsorted(sup0, balls[0])] -= lam * avgs[0]
    b0[np.abs(b0) <= ROUNDING * max(float(np.abs(vals).max()), abs(lam) * avgs[0])] = 0.0
    pieces = [(sup0[b0 != 0], b0[b0 != 0], y, 2 * r)]
    for j in range(1, n):
        big = balls[j]
        bj = np.full(big.size, -avgs[j])
        bj[np.searchsorted(big, balls[j - 1])] += avgs[j - 1]
        pieces.append((big, lam * bj, y, 2.0 ** (j + 1) * r))
    pieces.append((balls[-1], np.full(balls[-1].size, lam * avgs[-1]), y, 2.0 ** n * r))
    return pieces, lam, n


def telescope_split(rs: RootSystem, a_tilde: GridFunction, y, r: float, T: float) -> list:
    """Split a piece with nonzero mean into local(T) atoms along doubling balls.

    With ``lambda = int a~ dw`` and ``n`` the least integer with ``2^n r >= T``,
    ``a~ = b_0 + lambda sum_{j=1}^n b_j`` where ``b_0`` removes the mean on
    ``B(y, 2r)``, ``b_j`` is the difference of normalized indicators of
    ``B(y, 2^j r)`` and ``B(y, 2^(j+1) r)``, and ``b_n`` is the normalized
    indicator of ``B(y, 2^n r)``.  Returns ``(coefficient, Atom)`` pairs.
    """
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if not r > 0:
        raise ValueError("radius must be positive")
    if r >= T:
        raise ValueError("r >= T: the piece is already an atom without cancellation")
    grid = a_tilde.grid
    idx = np.flatnonzero(a_tilde.values)
    if idx.size and np.linalg.norm(grid.nodes[idx] - y, axis=1).max() > 2 * r * (1 + 1e-12):
        raise ValueError("piece is not supported in B(y, 2r)")
    pieces, _, _ = _telescope_pieces(grid, idx, a_tilde.values[idx], y, r, T)
    return [t for t in _normalize(rs, grid, pieces, "local", T) if t is not None]


def _block_labels(grid: WeightedGrid, cells: int) -> np.ndarray:
    """Label of the cube of ``cells`` grid cells (aligned at the origin) holding each node."""
    n = grid.resolution
    rel = np.arange(n) - n // 2
    per_axis = np.floor_divide(rel, cells)
    per_axis -= per_axis.min()
    width = int(per_axis.max()) + 1
    label = np.zeros(grid.shape, dtype=np.int64)
    for ax in range(grid.dimension):
        shape = [1] * grid.dimension
        shape[ax] = n
        label = label * width + per_axis.reshape(shape)
    return label.reshape(-1)


def _groups(labels: np.ndarray, active=None):
    """Node index arrays per label, only for labels where ``active`` holds somewhere."""
    order = np.argsort(labels, kind="stable")
    sorted_labels = labels[order]
    starts = np.flatnonzero(np.r_[True, sorted_labels[1:] != sorted_labels[:-1]])
    ends = np.r_[starts[1:], labels.size]
    if active is not None:
        hit = np.bincount(labels, weights=active.astype(float), minlength=labels.max() + 1) > 0
        sel = hit[sorted_labels[starts]]
        starts, ends = starts[sel], ends[sel]
    return [order[a:b] for a, b in zip(starts, ends)]


def _box_ball(nodes: np.ndarray):
    lo = nodes.min(axis=0)
    hi = nodes.max(axis=0)
    return 0.5 * (lo + hi), float(np.linalg.norm(0.5 * (hi - lo)))


def _goldberg_pieces(rs, f: GridFunction, T: float, keep=None):
    """Global local(T) decomposition of ``f`` as sparse pieces.

    ``f = H_{T^2/2} f + (f - H_{T^2/2} f)``.  The smooth part is chopped into
    cubes of side about ``T / sqrt(N)`` (balls of radius at least T, no
    cancellation).  The remainder goes through a dyadic martingale: the
    differences of weighted cube averages between consecutive levels are
    mean-zero pieces, and the averages on the coarsest cubes (side at least
    ``T / sqrt(N)``) go on balls of radius at least T.  ``keep`` optionally
    restricts output to cubes touching a node mask.
    Returns ``(values, idx, center, radius, mean_zero, part)`` tuples.
    """
    grid = f.grid
    h = grid.spacing
    dim = grid.dimension
    wq = grid.quad_weights
    nodes = grid.nodes
    keep = np.ones(grid.size, dtype=bool) if keep is None else keep
    smooth = apply_semigroup(rs, f, 0.5 * T * T, "heat").values
    rest = f.values - smooth
    side = max(1, int(round(T / (np.sqrt(dim) * h))))
    out = []
    for group in _groups(_block_labels(grid, side), keep & (smooth != 0)):
        c, rad = _box_ball(nodes[group])
        out.append((smooth[group], group, c, max(T, rad), False, "heat"))
    # dyadic martingale: differences of weighted cube averages between levels
    top = 0
    while 2 ** top * h < T / np.sqrt(dim) and 2 ** top < grid.resolution:
        top += 1
    fine = rest
    for level in range(1, top + 1):
        labels = _block_labels(grid, 2 ** level)
        mass = np.bincount(labels, weights=fine * wq)
        vol = np.bincount(labels, weights=wq)
        coarse = (mass / vol)[labels]
        diff = fine - coarse
        for group in _groups(labels, keep & (diff != 0)):
            if group.size < 2:
                continue
            noise = ROUNDING * float(np.abs(fine[group]).max(initial=0.0))
            d = np.where(np.abs(diff[group]) > noise, diff[group], 0.0)
            coarse[group] = fine[group] - d
            if np.any(d):
                c, rad = _box_ball(nodes[group])
                out.append((d, group, c, rad, True, "martingale"))
        fine = coarse
    for group in _groups(_block_labels(grid, 2 ** top), keep & (fine != 0)):
        c, rad = _box_ball(nodes[group])
        out.append((fine[group], group, c, max(T, rad), False, "average"))
    return out


def cutoff(grid: WeightedGrid, y0, inner: float, outer: float) -> np.ndarray:
    """Smooth radial cutoff: 1 on ``B(y0, inner)``, 0 outside ``B(y0, outer)``.

    The transition ``g(1-s)/(g(1-s)+g(s))`` with ``g(u) = exp(-1/u)`` has slope
    at most ``2 / (outer - inner)``.
    """
    return cutoff_profile((np.linalg.norm(grid.nodes - y0, axis=1) - inner) / (outer - inner))


def cutoff_profile(s) -> np.ndarray:
    """Smooth step from 1 at ``s <= 0`` to 0 at ``s >= 1``."""
    s = np.clip(np.asarray(s, dtype=float), 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        a = np.where(s < 1, np.exp(-1.0 / np.where(s < 1, 1 - s, 1.0)), 0.0)
        b = np.where(s > 0, np.exp(-1.0 / np.where(s > 0, s, 1.0)), 0.0)
    return a / (a + b)


def _single_candidate(rs, f: GridFunction, kind: str, scale: float):
    """``f`` as one atom on the box-centred ball around its support, if that is valid."""
    grid = f.grid
    idx = np.flatnonzero(f.values)
    if idx.size == 0:
        return None
    c, rad = _box_ball(grid.nodes[idx])
    rad = max(rad, 0.5 * grid.spacing)
    if not _piece_mean_zero(grid, idx, f.values[idx]):
        rad = max(rad, scale if kind == "local" else float(rho(c)))
    term = _atomize(rs, grid, idx, f.values[idx], c, rad, kind, scale)
    return term if term and validate_atom(rs, term[1]) else None


def _cheaper(rs, f, decomposition: AtomicDecomposition, kind: str, scale: float):
    single = _single_candidate(rs, f, kind, scale)
    if single is not None and single[0] <= decomposition.coefficient_sum:
        meta = dict(decomposition.metadata, route="single", constructed_sum=decomposition.coefficient_sum)
        return AtomicDecomposition(f, [single], meta)
    decomposition.metadata["route"] = "constructed"
    return decomposition


def _localized_pieces(rs, f: GridFunction, T: float, y0, reach: float):
    """Raw local(T) pieces of ``f`` (supported in ``B(y0, reach T)``) inside ``B(y0, (reach+3) T)``."""
    grid = f.grid
    live = np.flatnonzero(f.values)
    inner = reach * T
    if live.size and np.linalg.norm(grid.nodes[live] - y0, axis=1).max() > inner * (1 + 1e-9):
        raise ValueError("f is not supported in B(y0, reach * T)")
    outer = inner + 0.5 * T
    phi = cutoff(grid, y0, inner, outer)
    pieces = []
    counts = {"inside": 0, "wide": 0, "telescoped": 0}
    for vals, idx, c, rad, mean_zero, _ in _goldberg_pieces(rs, f, T, phi > 0):
        local_phi = phi[idx]
        cut = local_phi * vals
        if not np.any(cut):
            continue
        if np.all(local_phi[vals != 0] == 1.0):
            pieces.append((idx, vals, c, rad))
            counts["inside"] += 1
            continue
        if rad >= 0.5 * T or not mean_zero:
            # radius-T ball about the piece's own center: no cancellation needed
            pieces.append((idx, cut, c, max(T, rad)))
            counts["wide"] += 1
            continue
        phi_c = float(cutoff_profile((np.linalg.norm(c - y0) - inner) / (outer - inner)))
        if phi_c != 0.0:
            pieces.append((idx, phi_c * vals, c, rad))
        tilde = (local_phi - phi_c) * vals
        nz = tilde != 0
        if nz.any():
            counts["telescoped"] += 1
            tel, _, _ = _telescope_pieces(grid, idx[nz], tilde[nz], c, rad, T)
            pieces.extend(tel)
    return pieces, counts


def local_atomic_decompose(rs: RootSystem, f, T: float, y0=None, reach: float = 1.0,
                           single: bool = True) -> AtomicDecomposition:
    """Decompose ``f`` into local(T) atoms.

    Without ``y0`` this is the global construction.  With ``y0`` the function
    must be supported in ``B(y0, reach * T)``; the global pieces are then
    multiplied by a cutoff equal to 1 there and vanishing outside
    ``B(y0, (reach + 1/2) T)``.  Pieces the cutoff leaves unchanged are kept.
    Other pieces of radius at least ``T/2`` move to the ball of radius
    ``max(T, r)`` about their own center; smaller mean-zero pieces ``a`` are
    written as ``phi(y) a + (phi - phi(y)) a`` and the second term is
    telescoped.  Every atom stays inside ``B(y0, (reach + 3) T)``.

    With ``single`` the result is replaced by ``f`` itself as one atom when
    that is valid and has a smaller coefficient (``metadata["route"]``).
    """
    if not T > 0:
        raise ValueError("T must be positive")
    if isinstance(f, Atom):
        if f.kind == "local" and f.scale == T and validate_atom(rs, f):
            return AtomicDecomposition(f.values, [(1.0, f)], {"T": T, "route": "atom"})
        f = f.values
    grid = f.grid
    if not np.all(np.isfinite(f.values)):
        raise ValueError("f is not integrable on the grid")
    meta = {"T": float(T)}
    if y0 is None:
        raw = _goldberg_pieces(rs, f, T)
        terms = _normalize(rs, grid, [(p[1], p[0], p[2], p[3]) for p in raw], "local", T)
        meta["heat_part_coefficient_sum"] = float(sum(t[0] for t, p in zip(terms, raw)
                                                      if t is not None and p[5] == "heat"))
    else:
        y0 = np.atleast_1d(np.asarray(y0, dtype=float))
        pieces, counts = _localized_pieces(rs, f, T, y0, reach)
        terms = _normalize(rs, grid, pieces, "local", T)
        meta.update({"y0": [float(v) for v in y0], "reach": float(reach),
                     "support_bound": float((reach + 3) * T), **counts})
    out = AtomicDecomposition(f, [t for t in terms if t is not None], meta)
    return _cheaper(rs, f, out, "local", T) if single else out


# ---------------------------------------------------------------- partition of unity


def _bump(s: np.ndarray) -> np.ndarray:
    out = np.zeros_like(s)
    inside = s < 1
    out[inside] = np.exp(-1.0 / (1.0 - s[inside] ** 2))
    return out


@dataclass(eq=False)
class PartitionOfUnity:
    """Balls ``B(y_m, rho(y_m))`` from greedy packing and smooth bumps ``psi_m``.

    ``supports[m]`` and ``values[m]`` hold ``psi_m`` on the nodes of
    ``B(y_m, 3 rho(y_m))``.
    """

    grid: WeightedGrid
    centers: np.ndarray
    scales: np.ndarray
    supports: list
    values: list
    multiplicity: int

    def __len__(self):
        return len(self.centers)

    def psi(self, m: int) -> GridFunction:
        v = np.zeros(self.grid.size)
        v[self.supports[m]] = self.values[m]
        return GridFunction(self.grid, v)

    def total(self) -> np.ndarray:
        out = np.zeros(self.grid.size)
        for idx, v in zip(self.supports, self.values):
            out[idx] += v
        return out

    def evaluate(self, m: int, points) -> np.ndarray:
        """``psi_m`` at arbitrary points (bump over the sum of all bumps)."""
        pts = np.asarray(points, dtype=float).reshape(-1, self.grid.dimension)
        own = _bump(np.linalg.norm(pts - self.centers[m], axis=1) / (3 * self.scales[m]))
        total = np.zeros(len(pts))
        for c, s in zip(self.centers, self.scales):
            total += _bump(np.linalg.norm(pts - c, axis=1) / (3 * s))
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(total > 0, own / np.where(total > 0, total, 1.0), np.nan)

    def check_disjoint(self) -> bool:
        d = np.linalg.norm(self.centers[:, None] - self.centers[None], axis=-1)
        need = self.scales[:, None] + self.scales[None]
        np.fill_diagonal(d, np.inf)
        return bool(np.all(d >= need))

    def check_covering(self, mask=None) -> bool:
        nodes = self.grid.nodes if mask is None else self.grid.nodes[mask]
        covered = np.zeros(len(nodes), dtype=bool)
        for c, s in zip(self.centers, self.scales):
            covered |= np.linalg.norm(nodes - c, axis=1) < 2 * s
        return bool(covered.all())

    def gradient_ratios(self) -> np.ndarray:
        """``rho(y_m) * max |grad psi_m|`` by central differences on the grid."""
        grid = self.grid
        out = np.empty(len(self))
        for m in range(len(self)):
            v = self.psi(m).reshaped()
            grads = np.gradient(v, grid.spacing) if grid.dimension > 1 else [np.gradient(v, grid.spacing)]
            mag = np.sqrt(sum(g * g for g in grads))
            out[m] = self.scales[m] * float(mag.max())
        return out


@lru_cache(maxsize=8)
def _partition_cached(grid: WeightedGrid) -> PartitionOfUnity:
    nodes = grid.nodes
    norms = np.linalg.norm(nodes, axis=1)
    order = np.lexsort(tuple(nodes[:, j] for j in reversed(range(grid.dimension))) + (norms,))
    node_rho = rho(nodes)
    blocked = np.zeros(grid.size, dtype=bool)
    chosen = []
    for i in order:
        if blocked[i]:
            continue
        chosen.append(i)
        blocked |= np.linalg.norm(nodes - nodes[i], axis=1) < node_rho + node_rho[i]
    centers = nodes[chosen]
    scales = node_rho[chosen]
    supports, bumps = [], []
    total = np.zeros(grid.size)
    count = np.zeros(grid.size, dtype=int)
    for c, s in zip(centers, scales):
        d = np.linalg.norm(nodes - c, axis=1) / (3 * s)
        idx = np.flatnonzero(d < 1)
        b = _bump(d[idx])
        supports.append(idx)
        bumps.append(b)
        total[idx] += b
        count[idx] += 1
    values = [b / total[idx] for idx, b in zip(supports, bumps)]
    return PartitionOfUnity(grid, centers, scales, supports, values, int(count.max()))


def partition_of_unity(rs: RootSystem, grid: WeightedGrid) -> PartitionOfUnity:
    """Greedy packing by ``|x|`` (ties lexicographic) with normalized bumps on ``B(y_m, 3 rho)``."""
    if not _same_system(grid.root_system, rs):
        raise ValueError("grid belongs to another root system")
    return _partition_cached(grid)


def psi_cancellation_certificate(rs: RootSystem, pu: PartitionOfUnity, plan: SamplePlan,
                                 t_range=(1e-4, 4.0)):
    """Fitted certificate for ``|psi_m(x) - psi_m(y)| h_t(x, y) <= C sqrt(t)/rho(y) G_{ct}(x, y)``.

    One of ``x``, ``y`` lies in ``B(y_m, 3 rho(y_m))``; the other is offset
    by up to ``4 sqrt(t)`` (or ``4 rho(y_m)``) in a random direction.  Points
    off the grid box are reflected back inside.
    """
    dim = rs.dimension
    box = pu.grid.extent

    def sampler(rng, n):
        m = rng.integers(0, len(pu), n)
        t = np.exp(rng.uniform(*np.log(t_range), n))
        u = rng.normal(size=(n, dim))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        base = pu.centers[m] + u * (3 * pu.scales[m] * rng.uniform(0, 1, n) ** (1 / dim))[:, None]
        v = rng.normal(size=(n, dim))
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        reach = np.where(rng.uniform(size=n) < 0.5, np.sqrt(t), pu.scales[m])
        other = base + v * (4 * reach * rng.uniform(0, 1, n))[:, None]
        other = np.clip(other, -box, box)
        swap = rng.uniform(size=n) < 0.5
        x = np.where(swap[:, None], other, base)
        y = np.where(swap[:, None], base, other)
        return t, x, y, m

    def lhs(s):
        t, x, y, m = s
        out = np.empty(len(t))
        for mm in np.unique(m):
            sel = m == mm
            pts = np.concatenate([x[sel], y[sel]])
            vals = pu.evaluate(int(mm), pts)
            out[sel] = np.abs(vals[: sel.sum()] - vals[sel.sum():])
        with np.errstate(divide="ignore"):
            return np.log(out) + log_heat_kernel(rs, t, x, y)

    def rhs(s, dil):
        t, x, y, _ = s
        return 0.5 * np.log(t) - np.log(rho(y)) + log_comparison_kernel(rs, dil * t, x, y)

    return verify_bound("psi_cancellation", plan, sampler=sampler, lhs=lhs, rhs=rhs,
                        centers=len(pu))


def hermite_atomic_decompose(rs: RootSystem, f, A: float = HERMITE_A,
                             pu: PartitionOfUnity | None = None, single: bool = True
                             ) -> AtomicDecomposition:
    """Hermite atoms via ``f = sum_m f psi_m`` and a localized local decomposition of each piece.

    Each ``f psi_m`` is supported in ``B(y_m, 3 rho(y_m))`` and is decomposed
    into local atoms at scale ``T = rho(y_m)``.  Pieces without cancellation
    whose radius is below ``rho`` at their own center get their ball enlarged
    to radius ``rho(center)``.  ``single`` works as in
    :func:`local_atomic_decompose`.
    """
    if isinstance(f, Atom):
        g = f if f.kind == "hermite" else f.with_kind("hermite", A)
        if g.scale == A and validate_atom(rs, g):
            return AtomicDecomposition(g.values, [(1.0, g)], {"A": A, "route": "atom"})
        f = f.values
    grid = f.grid
    pu = partition_of_unity(rs, grid) if pu is None else pu
    pieces = []
    used = 0
    max_reach = 0.0
    for m in range(len(pu)):
        idx = pu.supports[m]
        piece_vals = f.values[idx] * pu.values[m]
        if not np.any(piece_vals):
            continue
        used += 1
        piece = np.zeros(grid.size)
        piece[idx] = piece_vals
        sub, _ = _localized_pieces(rs, GridFunction(grid, piece), float(pu.scales[m]),
                                   pu.centers[m], 3.0)
        for p_idx, vals, c, r in sub:
            r0 = float(rho(np.asarray(c)))
            if r < r0 and not _piece_mean_zero(grid, p_idx, vals):
                r = r0
            pieces.append((p_idx, vals, c, r))
            reach = (np.linalg.norm(np.asarray(c) - pu.centers[m]) + r) / pu.scales[m]
            max_reach = max(max_reach, float(reach))
    terms = [t for t in _normalize(rs, grid, pieces, "hermite", A) if t is not None]
    meta = {"A": float(A), "pieces": used, "partition_size": len(pu),
            "max_support_over_rho": max_reach}
    out = AtomicDecomposition(f, terms, meta)
    return _cheaper(rs, f, out, "hermite", A) if single else out


# ---------------------------------------------------------------- norms


def hardy_norm(rs: RootSystem, f: GridFunction, space: str, T: float | None = None,
               tg: TimeGrid | None = None, A: float = HERMITE_A) -> float:
    """Maximal-function or atomic Hardy norm estimate.

    ``H1`` uses the nontangential heat maximal function, ``H1_loc`` the local
    radial one (needs ``T``), ``Hermite`` the radial maximal function of the
    Hermite semigroup.  ``Hermite_atomic`` is the coefficient sum of
    :func:`hermite_atomic_decompose`, an upper bound for the infimum.
    """
    if space not in HARDY_SPACES:
        raise ValueError(f"unsupported space {space!r}; use one of {HARDY_SPACES}")
    if space == "H1_loc" and (T is None or not T > 0):
        raise ValueError("H1_loc needs T > 0")
    if not np.any(f.values):
        return 0.0
    if space == "Hermite_atomic":
        return hermite_atomic_decompose(rs, f, A).coefficient_sum
    kind = {"H1": MaximalKind("nontangential"), "Hermite": MaximalKind("hermite")}.get(space)
    if space == "H1_loc":
        kind = MaximalKind("local", T=T)
    return lp_norm(maximal_function(rs, f, kind, tg), 1.0)
