"""Random test functions and sample atoms for the verification experiments.

Every generator takes a ``numpy.random.Generator`` so a fixed seed gives the
same battery on every run.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .atoms import HERMITE_A, Atom, cutoff_profile
from .grid import GridFunction, WeightedGrid, integrate, lp_norm
from .root_system import RootSystem, ball_measure_many, rho

ROLES = ("bumps", "atom", "non-atom")
NON_ATOM_DEFECTS = ("size", "support", "cancellation", "radius")
PLATEAU = 0.75  # plateaus are flat on this fraction of the radius


@dataclass(eq=False)
class TestFunction:
    """One battery member.

    ``role`` is ``"bumps"`` for bump sums, ``"atom"`` for a function claimed
    to be a Hermite atom and ``"non-atom"`` for a deliberately defective
    candidate (``defect`` names the broken condition).
    """

    __test__ = False  # keep pytest from collecting this class

    ident: str
    values: GridFunction
    role: str = "bumps"
    atom: Atom | None = None
    defect: str | None = None
    info: dict = field(default_factory=dict)


def smooth_bump(grid: WeightedGrid, center, radius: float) -> np.ndarray:
    """``exp(-1/(1-s^2))`` with ``s = |x - center| / radius``, zero outside the ball."""
    s = np.linalg.norm(grid.nodes - np.asarray(center, dtype=float), axis=1) / radius
    out = np.zeros(grid.size)
    inside = s < 1
    out[inside] = np.exp(-1.0 / (1.0 - s[inside] ** 2))
    return out


def _core_point(rng, grid: WeightedGrid, margin: float = 0.0) -> np.ndarray:
    half = 0.5 * grid.extent - margin
    return rng.uniform(-half, half, grid.dimension)


def _unit(rng, dim: int) -> np.ndarray:
    v = rng.normal(size=dim)
    return v / np.linalg.norm(v)


def bump_sum(rng, grid: WeightedGrid, count: int | None = None) -> GridFunction:
    """Sum of 1 to 5 bumps with random centers in the core and random signs, unit L1 norm."""
    count = int(rng.integers(1, 6)) if count is None else count
    r_lo = max(4 * grid.spacing, 0.2)
    vals = np.zeros(grid.size)
    for _ in range(count):
        radius = float(np.exp(rng.uniform(np.log(r_lo), np.log(max(1.2, 2 * r_lo)))))
        sign = 1.0 if rng.uniform() < 0.5 else -1.0
        vals += sign * rng.uniform(0.5, 1.0) * smooth_bump(grid, _core_point(rng, grid), radius)
    f = GridFunction(grid, vals)
    norm = lp_norm(f, 1.0)
    if norm == 0:  # exact cancellation of coincident bumps; start over
        return bump_sum(rng, grid, count)
    return f / norm


def normalize_to_ball(rs: RootSystem, grid, vals, center, radius) -> np.ndarray:
    """Scale ``vals`` so that ``sup|vals| = 1 / w(B(center, radius))``."""
    w = float(ball_measure_many(rs, np.reshape(center, (1, -1)), np.array([radius]))[0])
    return vals / (np.abs(vals).max() * w)


def plateau(grid: WeightedGrid, center, radius: float, flat: float = PLATEAU) -> np.ndarray:
    """1 on ``B(center, flat * radius)``, smooth decay to 0 at ``radius``."""
    s = np.linalg.norm(grid.nodes - np.asarray(center, dtype=float), axis=1) / radius
    return cutoff_profile((s - flat) / (1.0 - flat))


def _lobes(grid, env, offset, shift, radius):
    odd = np.clip((offset - shift) / (0.15 * radius), -1.0, 1.0) * env
    plus, minus = np.maximum(odd, 0.0), np.maximum(-odd, 0.0)
    wq = grid.quad_weights
    return plus, minus, float(plus @ wq), float(minus @ wq)


def dipole(rs: RootSystem, grid: WeightedGrid, center, radius: float, direction=None) -> np.ndarray:
    """Mean-zero odd-like plateau inside ``B(center, radius)``, unnormalized.

    The ball is split by a hyperplane orthogonal to a direction: ``direction``
    if given, otherwise each coordinate axis is tried and the one with the
    most balanced halves wins.  The plane is shifted by bisection until both
    lobes carry the same weighted mass, so a ball straddling a low-weight
    hyperplane still gets two full-height lobes.  The remaining imbalance is
    removed by scaling the heavier lobe.
    """
    center = np.asarray(center, dtype=float)
    env = plateau(grid, center, radius)
    dirs = [np.asarray(direction, dtype=float)] if direction is not None else list(np.eye(grid.dimension))
    best = None
    for u in dirs:
        offset = (grid.nodes - center) @ (u / np.linalg.norm(u))
        lo, hi = -0.8 * radius, 0.8 * radius
        for _ in range(50):
            mid = 0.5 * (lo + hi)
            _, _, mp, mm = _lobes(grid, env, offset, mid, radius)
            if mp > mm:
                lo = mid
            else:
                hi = mid
        lobes = _lobes(grid, env, offset, 0.5 * (lo + hi), radius)
        if best is None or min(lobes[2:]) > min(best[2:]):
            best = lobes
    plus, minus, mp, mm = best
    if mp == 0 or mm == 0:
        raise ValueError("ball too small for a dipole on this grid")
    return plus * min(1.0, mm / mp) - minus * min(1.0, mp / mm)


def hermite_atom(rs: RootSystem, grid: WeightedGrid, rng, A: float = HERMITE_A,
                 cancel: bool | None = None) -> Atom:
    """Random Hermite atom with center in the grid core.

    The radius is log-uniform in ``[rho/2, 4 rho]`` (clipped to the grid and
    to at least four cells).  Below ``rho`` the atom is a dipole; at or above
    ``rho`` it is a dipole or a plateau depending on ``cancel``.  Plateaus
    reach the size bound on most of the ball, so these atoms are close to
    extremal rather than arbitrarily small.
    """
    h = grid.spacing
    for _ in range(100):
        center = _core_point(rng, grid)
        r0 = float(rho(center))
        radius = float(np.exp(rng.uniform(np.log(0.5 * r0), np.log(4.0 * r0))))
        room = grid.extent - np.abs(center).max() - 2 * h
        radius = min(radius, room, A * r0)
        if radius >= 4 * h:
            break
    else:
        raise RuntimeError("grid too coarse for Hermite atoms")
    mean_zero = radius < r0 or (rng.uniform() < 0.5 if cancel is None else cancel)
    vals = dipole(rs, grid, center, radius) if mean_zero else plateau(grid, center, radius)
    vals = normalize_to_ball(rs, grid, vals, center, radius)
    return Atom(center, radius, "hermite", GridFunction(grid, vals), scale=A)


def non_atom(rs: RootSystem, grid: WeightedGrid, rng, defect: str, A: float = HERMITE_A) -> Atom:
    """A Hermite atom candidate with exactly one broken condition."""
    if defect not in NON_ATOM_DEFECTS:
        raise ValueError(f"unknown defect {defect!r}")
    h = grid.spacing
    base = hermite_atom(rs, grid, rng, A, cancel=True)
    center, radius = base.center, base.radius
    if defect == "size":
        return Atom(center, radius, "hermite", base.values * 3.0, scale=A)
    if defect == "support":
        # values spill outside the declared ball
        vals = normalize_to_ball(rs, grid, dipole(rs, grid, center, radius), center, radius)
        return Atom(center, 0.5 * radius, "hermite", GridFunction(grid, 0.1 * vals), scale=A)
    if defect == "cancellation":
        # a positive bump on a node-centred ball below rho: no cancellation
        center = grid.nodes[np.argmin(np.linalg.norm(grid.nodes - center, axis=1))]
        small = 0.6 * float(rho(center))
        vals = normalize_to_ball(rs, grid, smooth_bump(grid, center, small), center, small)
        return Atom(center, small, "hermite", GridFunction(grid, vals), scale=A)
    # radius beyond A rho(x0): a tiny A makes an ordinary ball too wide
    return Atom(center, radius, "hermite", base.values, scale=0.5 * radius / float(rho(center)))


def local_atom(rs: RootSystem, grid: WeightedGrid, rng, T: float) -> Atom:
    """Random local(T) atom of radius in ``[T, 2T]`` without cancellation."""
    h = grid.spacing
    radius = max(T * rng.uniform(1.0, 2.0), 4 * h)
    center = _core_point(rng, grid, margin=0.0)
    center = np.clip(center, -(grid.extent - radius - 2 * h), grid.extent - radius - 2 * h)
    vals = normalize_to_ball(rs, grid, plateau(grid, center, radius), center, radius)
    return Atom(center, radius, "local", GridFunction(grid, vals), scale=T)


def make_battery(rs: RootSystem, grid: WeightedGrid, size: int = 20, seed: int = 0,
                 atoms: int | None = None, non_atoms: int | None = None,
                 claimed_defect: str | None = None, A: float = HERMITE_A) -> list:
    """Mixed test battery: bump sums, genuine Hermite atoms and deliberate non-atoms.

    By default a quarter of the entries are atoms and one in six (at most
    four) a non-atom, with at least one of each once ``size >= 4``.
    ``claimed_defect`` appends a defective candidate labelled as an atom,
    which downstream validation must reject.
    """
    if size < 1:
        raise ValueError("battery needs at least one function")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xBA77]))
    n_atoms = (size // 4 if size >= 4 else 0) if atoms is None else atoms
    n_bad = (min(4, max(1, size // 6)) if size >= 4 else 0) if non_atoms is None else non_atoms
    n_bumps = size - n_atoms - n_bad
    if n_bumps < 0:
        raise ValueError("more atoms than battery entries")
    out = []
    for i in range(n_bumps):
        out.append(TestFunction(f"bumps-{i:02d}", bump_sum(rng, grid)))
    for i in range(n_atoms):
        a = hermite_atom(rs, grid, rng, A)
        out.append(TestFunction(f"atom-{i:02d}", a.values, "atom", a))
    for i in range(n_bad):
        defect = NON_ATOM_DEFECTS[i % len(NON_ATOM_DEFECTS)]
        a = non_atom(rs, grid, rng, defect, A)
        out.append(TestFunction(f"non-atom-{i:02d}", a.values, "non-atom", a, defect))
    if claimed_defect is not None:
        a = non_atom(rs, grid, rng, claimed_defect, A)
        out.append(TestFunction("claimed-atom", a.values, "atom", a, claimed_defect))
    for tf in out:
        tf.info = {"l1": lp_norm(tf.values, 1.0), "mean": integrate(tf.values)}
    return out
