"""Configuration-driven verification experiments and their reports.

An experiment turns an :class:`ExperimentConfig` into a report (a JSON-ready
dict of certificates and fitted constants) and one CSV table.  Reports hold
no timings or paths, so a fixed configuration gives byte-identical output.
"""
from __future__ import annotations

import configparser
import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .atoms import (HERMITE_A, hardy_norm, hermite_atomic_decompose, local_atomic_decompose,
                    partition_of_unity, psi_cancellation_certificate, telescope_split,
                    validate_atom)
from .battery import (NON_ATOM_DEFECTS, dipole, hermite_atom, make_battery, normalize_to_ball,
                      smooth_bump)
from .grid import GridFunction, lp_norm, make_grid
from .kernels import (SamplePlan, connection_exponent, log_heat_kernel, log_hermite_kernel,
                      t1_of_t, verify_catalog, verify_t_lemma)
from .riesz import RieszVariant, riesz, riesz_difference, riesz_tail_integral
from .root_system import FAMILIES, build_root_system, rho
from .semigroup import TimeGrid, apply_semigroup, char_operator, maximal_function, semigroup_stack

EXPERIMENTS = {
    "kernel-bounds": "kernel identities and fitted certificates for the kernel inequality catalog",
    "t-lemma": "pointwise checks of the elementary t versus t1 inequalities",
    "maximal-equivalence": "semigroup law, mass conservation and radial versus nontangential norms",
    "local-characterization": "local Hardy norm against ||(H_{T^2/2} - I) f||_H1 + ||f||_1",
    "atomic-hermite": "partition of unity, Hermite atoms and maximal versus atomic norms",
    "riesz-hermite": "Riesz characterization, localized Riesz differences and tail bounds",
    "goldberg": "local atomic decompositions: residuals, atom validity, coefficient bounds",
}
TWO_SIDED_LIMIT = 100.0  # bound on fitted two-sided constants
ATOM_SPREAD_LIMIT = 50.0  # max/min of Hermite norms over random atoms
RESIDUAL_LIMIT = 1e-6
TELESCOPE_LIMIT = 1e-12
SEMIGROUP_LIMIT = 1e-3
SPLIT_MARGIN = 2.0

CONFIG_HELP = """\
Configuration file (INI sections, all keys optional except experiment.id):

  [experiment]     id = one of the experiment ids; seed = 0; threads = 1
  [root_system]    family = Z2 | Z2^N; dimension = 1; multiplicity = 0 (comma list for Z2^N)
  [grid]           extent, resolution (defaults: N=1 -> 10, 512; N=2 -> 6, 128)
  [time_grid]      t_min = 1e-4; t_max = 25; count = 64
  [battery]        size = 20; atoms, non_atoms (default: a quarter, one in six);
                   claimed_defect = none | size | support | cancellation | radius;
                   hermite_atoms = 50
  [certificates]   n_train = 8000; n_validation = 2000; psi_train = 4000; psi_validation = 1000
  [scales]         T = 0.25, 1, 4
"""


class ConfigError(ValueError):
    """Invalid experiment configuration."""


@dataclass
class ExperimentConfig:
    experiment: str
    family: str = "Z2"
    dimension: int = 1
    multiplicity: tuple = (0.0,)
    extent: float | None = None
    resolution: int | None = None
    t_min: float = 1e-4
    t_max: float = 25.0
    t_count: int = 64
    seed: int = 0
    threads: int = 1
    battery_size: int = 20
    battery_atoms: int | None = None
    battery_non_atoms: int | None = None
    claimed_defect: str | None = None
    hermite_atoms: int = 50
    n_train: int = 8000
    n_validation: int = 2000
    psi_train: int = 4000
    psi_validation: int = 1000
    scales: tuple = (0.25, 1.0, 4.0)

    def validate(self) -> "ExperimentConfig":
        """Raise :class:`ConfigError` on any inconsistent field."""
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}; "
                              f"choose from {', '.join(EXPERIMENTS)}")
        if self.family not in FAMILIES:
            raise ConfigError(f"unsupported root system family {self.family!r}")
        if self.family == "Z2" and self.dimension != 1:
            raise ConfigError("family Z2 has dimension 1")
        if self.dimension < 1:
            raise ConfigError("dimension must be at least 1")
        if len(self.multiplicity) not in (1, self.dimension):
            raise ConfigError("multiplicity needs one value or one per coordinate")
        if any(not (k >= 0 and math.isfinite(k)) for k in self.multiplicity):
            raise ConfigError("multiplicities must be finite and nonnegative")
        if self.resolution is not None and (self.resolution % 2 or self.resolution < 16):
            raise ConfigError("grid resolution must be even and at least 16")
        if self.extent is not None and not self.extent > 0:
            raise ConfigError("grid extent must be positive")
        if not (0 < self.t_min < self.t_max) or self.t_count < 48:
            raise ConfigError("time grid needs 0 < t_min < t_max and at least 48 points")
        if self.seed < 0:
            raise ConfigError("seed must be nonnegative")
        if self.threads < 1:
            raise ConfigError("threads must be at least 1")
        if self.battery_size < 1:
            raise ConfigError("battery size must be at least 1")
        if self.claimed_defect is not None and self.claimed_defect not in NON_ATOM_DEFECTS:
            raise ConfigError(f"claimed_defect must be one of {', '.join(NON_ATOM_DEFECTS)}")
        if min(self.n_train, self.n_validation, self.psi_train, self.psi_validation) < 10:
            raise ConfigError("certificate sample counts must be at least 10")
        if self.hermite_atoms < 2:
            raise ConfigError("hermite_atoms must be at least 2")
        if not self.scales or any(not s > 0 for s in self.scales):
            raise ConfigError("scales must be positive")
        return self

    def root_system(self):
        k = list(self.multiplicity)
        if self.family == "Z2":
            return build_root_system("Z2", k=k[0])
        return build_root_system("Z2^N", k=k * self.dimension if len(k) == 1 else k,
                                 dimension=self.dimension)

    def describe(self) -> dict:
        out = asdict(self)
        out.pop("threads")  # results do not depend on it
        out["multiplicity"] = list(self.multiplicity)
        out["scales"] = list(self.scales)
        return out


def _floats(text: str) -> tuple:
    return tuple(float(v) for v in text.replace(";", ",").split(",") if v.strip())


def load_config(source, **overrides) -> ExperimentConfig:
    """Read an INI file (path or text) into a validated config.

    ``overrides`` (``seed``, ``threads``, ...) replace file values when not None.
    """
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    try:
        if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source and "[" not in source):
            path = Path(source)
            if not path.is_file():
                raise ConfigError(f"config file not found: {path}")
            parser.read_string(path.read_text(encoding="utf-8"))
        else:
            parser.read_string(str(source))
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None

    def get(section, key, conv, default=None):
        if not parser.has_option(section, key):
            return default
        raw = parser.get(section, key).strip()
        if raw.lower() in ("", "none", "default"):
            return default
        try:
            return conv(raw)
        except ValueError:
            raise ConfigError(f"bad value for {section}.{key}: {raw!r}") from None

    known = {"experiment": {"id", "seed", "threads"},
             "root_system": {"family", "dimension", "multiplicity"},
             "grid": {"extent", "resolution"},
             "time_grid": {"t_min", "t_max", "count"},
             "battery": {"size", "atoms", "non_atoms", "claimed_defect", "hermite_atoms"},
             "certificates": {"n_train", "n_validation", "psi_train", "psi_validation"},
             "scales": {"t"}}
    for section in parser.sections():
        if section not in known:
            raise ConfigError(f"unknown section [{section}]")
        for key in parser.options(section):
            if key not in known[section]:
                raise ConfigError(f"unknown key {section}.{key}")
    exp_id = get("experiment", "id", str)
    if exp_id is None:
        raise ConfigError("experiment.id is required")
    family = get("root_system", "family", str, "Z2")
    mult = get("root_system", "multiplicity", _floats, (0.0,))
    dim = get("root_system", "dimension", int, len(mult) if family == "Z2^N" else 1)
    cfg = ExperimentConfig(
        experiment=exp_id, family=family, dimension=dim, multiplicity=mult,
        extent=get("grid", "extent", float), resolution=get("grid", "resolution", int),
        t_min=get("time_grid", "t_min", float, 1e-4), t_max=get("time_grid", "t_max", float, 25.0),
        t_count=get("time_grid", "count", int, 64),
        seed=get("experiment", "seed", int, 0), threads=get("experiment", "threads", int, 1),
        battery_size=get("battery", "size", int, 20), battery_atoms=get("battery", "atoms", int),
        battery_non_atoms=get("battery", "non_atoms", int),
        claimed_defect=get("battery", "claimed_defect", str),
        hermite_atoms=get("battery", "hermite_atoms", int, 50),
        n_train=get("certificates", "n_train", int, 8000),
        n_validation=get("certificates", "n_validation", int, 2000),
        psi_train=get("certificates", "psi_train", int, 4000),
        psi_validation=get("certificates", "psi_validation", int, 1000),
        scales=get("scales", "t", _floats, (0.25, 1.0, 4.0)))
    for key, val in overrides.items():
        if val is not None:
            setattr(cfg, key, val)
    return cfg.validate()


# ---------------------------------------------------------------- report plumbing


@dataclass
class Table:
    columns: list
    rows: list

    def to_csv(self) -> str:
        buf = io.StringIO(newline="")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for row in self.rows:
            w.writerow([_cell(row.get(c)) for c in self.columns])
        return buf.getvalue()


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def _plain(obj):
    """Recursively convert numpy scalars and arrays for JSON."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    return obj


@dataclass
class Report:
    experiment: str
    certificates: list
    fitted_constants: dict
    table: Table
    details: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c["passed"] for c in self.certificates)

    @property
    def failures(self) -> list:
        return [c for c in self.certificates if not c["passed"]]

    def to_dict(self) -> dict:
        return _plain({"experiment": self.experiment, "version": __version__,
                       "passed": self.passed, "config": self.config,
                       "certificates": self.certificates,
                       "fitted_constants": self.fitted_constants, "details": self.details})

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True, ensure_ascii=False) + "\n"

    def write(self, out_dir) -> tuple:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        rp, tp = out / "report.json", out / "tables.csv"
        rp.write_text(self.to_json(), encoding="utf-8", newline="")
        tp.write_text(self.table.to_csv(), encoding="utf-8", newline="")
        return rp, tp


def _cert(name: str, ok, **info) -> dict:
    return dict(info, name=name, passed=bool(ok))


def two_sided_constant(ratios) -> float:
    """Smallest ``C`` with ``1/C <= r <= C`` for every ratio ``r``."""
    r = np.asarray(list(ratios), dtype=float)
    if r.size == 0 or np.any(~(r > 0)) or np.any(~np.isfinite(r)):
        return float("inf")
    return float(max(r.max(), 1.0 / r.min(), 1.0))


def split_constant(values, margin: float = SPLIT_MARGIN) -> dict:
    """Fit ``C`` on even-indexed values (times ``margin``) and validate on odd ones."""
    v = np.asarray(list(values), dtype=float)
    train, val = v[::2], v[1::2]
    if train.size == 0 or not np.all(np.isfinite(v)):
        return {"C": float("inf"), "validation_ratio": float("inf"), "passed": False}
    c = float(train.max()) * margin
    if c <= 0:
        c = np.finfo(float).tiny
    ratio = float(val.max() / c) if val.size else 0.0
    return {"C": c, "validation_ratio": ratio, "passed": ratio <= 1.0}


def emit_norm_table(results) -> Table:
    """Norm comparison table for a battery.

    Each result needs ``id``, ``l1``, ``hardy`` (maximal Hermite norm) and
    optionally ``atomic`` and ``riesz``; missing quantities leave empty cells.
    Two closing rows, ``max`` and ``min``, aggregate every ratio column.
    """
    results = list(results)
    if not results:
        raise ValueError("norm table needs at least one test function")
    cols = ["function_id", "l1_norm", "hardy_norm_hermite", "atomic_upper_bound",
            "riesz_norm", "atomic_over_hardy", "riesz_over_hardy", "atomic_over_riesz"]
    ratio_cols = cols[5:]
    rows = []
    for r in results:
        hardy, atomic, rz = r["hardy"], r.get("atomic"), r.get("riesz")
        row = {"function_id": r["id"], "l1_norm": r["l1"], "hardy_norm_hermite": hardy,
               "atomic_upper_bound": atomic, "riesz_norm": rz}
        row["atomic_over_hardy"] = atomic / hardy if atomic is not None and hardy > 0 else None
        row["riesz_over_hardy"] = rz / hardy if rz is not None and hardy > 0 else None
        row["atomic_over_riesz"] = atomic / rz if atomic is not None and rz else None
        rows.append(row)
    for name, op in (("max", max), ("min", min)):
        agg = {"function_id": name}
        for c in ratio_cols:
            vals = [row[c] for row in rows if row[c] is not None]
            agg[c] = op(vals) if vals else None
        rows.append(agg)
    return Table(cols, rows)


class _Context:
    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self.rs = cfg.root_system()
        self.grid = make_grid(self.rs, cfg.extent, cfg.resolution)
        self.tg = TimeGrid(cfg.t_min, cfg.t_max, cfg.t_count)
        self._battery = None

    def rng(self, tag: int) -> np.random.Generator:
        return np.random.default_rng(np.random.SeedSequence([self.cfg.seed, tag]))

    @property
    def battery(self) -> list:
        if self._battery is None:
            c = self.cfg
            self._battery = make_battery(self.rs, self.grid, c.battery_size, c.seed, c.battery_atoms,
                                         c.battery_non_atoms, c.claimed_defect)
        return self._battery

    def map(self, fn, items) -> list:
        """Ordered map, threaded when ``threads > 1``."""
        items = list(items)
        if self.cfg.threads <= 1 or len(items) < 2:
            return [fn(i) for i in items]
        with ThreadPoolExecutor(self.cfg.threads) as ex:
            return list(ex.map(fn, items))


# ---------------------------------------------------------------- experiments


def _random_kernel_points(rng, dim: int, n: int):
    t = np.exp(rng.uniform(np.log(1e-2), np.log(5.0), n))
    x = rng.uniform(-3, 3, (n, dim))
    y = rng.uniform(-3, 3, (n, dim))
    return t, x, y


def kernel_identities(rs, seed: int = 0, n: int = 1000) -> dict:
    """Relative errors of the classical reduction, connection, symmetry and rescaling identities.

    The classical reduction uses the ``k = 0`` system of the same dimension.
    """
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x1D]))
    dim = rs.dimension
    t, x, y = _random_kernel_points(rng, dim, n)
    classical = build_root_system("Z2", k=0.0) if dim == 1 else build_root_system("Z2^N", k=[0.0] * dim)
    sq = np.sum(x * x + y * y, axis=1)
    gauss = -0.5 * dim * np.log(4 * np.pi * t) - np.sum((x - y) ** 2, axis=1) / (4 * t)
    s2 = np.sinh(2 * t)
    mehler = (-0.5 * dim * np.log(2 * np.pi * s2) - 0.5 / np.tanh(2 * t) * sq
              + np.sum(x * y, axis=1) / s2)
    err = lambda a, b: float(np.max(np.abs(np.expm1(a - b))))
    t1 = t1_of_t(t)
    # exponent as displayed, 1/(4 t1) - coth(2t)/2, against the simplified form inside k_t
    expo = 1.0 / (4.0 * t1) - 0.5 / np.tanh(2.0 * t)
    lam = np.exp(rng.uniform(np.log(0.5), np.log(2.0), n))
    scaled = log_heat_kernel(rs, lam ** 2 * t, lam[:, None] * x, lam[:, None] * y) \
        + rs.homogeneous_dim * np.log(lam)
    out = {
        "classical_heat": err(log_heat_kernel(classical, t, x, y), gauss),
        "classical_mehler": err(log_hermite_kernel(classical, t, x, y), mehler),
        "connection": err(log_hermite_kernel(rs, t, x, y), expo * sq + log_heat_kernel(rs, t1, x, y)),
        "connection_simplified": float(np.max(np.abs(expo - connection_exponent(t)))),
        "symmetry_heat": err(log_heat_kernel(rs, t, x, y), log_heat_kernel(rs, t, y, x)),
        "symmetry_hermite": err(log_hermite_kernel(rs, t, x, y), log_hermite_kernel(rs, t, y, x)),
        "rescaling": err(scaled, log_heat_kernel(rs, t, x, y)),
    }
    return out


IDENTITY_LIMITS = {"classical_heat": 1e-8, "classical_mehler": 1e-8, "connection": 1e-12,
                   "connection_simplified": 1e-12, "symmetry_heat": 1e-10,
                   "symmetry_hermite": 1e-10, "rescaling": 1e-10}


def _kernel_bounds(ctx: _Context) -> Report:
    cfg = ctx.cfg
    certs, rows = [], []
    ident = kernel_identities(ctx.rs, cfg.seed)
    for name, value in ident.items():
        ok = value <= IDENTITY_LIMITS[name]
        certs.append(_cert(f"identity:{name}", ok, max_relative_error=value,
                           limit=IDENTITY_LIMITS[name]))
        rows.append({"check": f"identity:{name}", "max_ratio": value / IDENTITY_LIMITS[name],
                     "passed": ok})
    plan = SamplePlan(ctx.rs, cfg.n_train, cfg.n_validation, cfg.seed)
    fitted = {}
    for bc in verify_catalog(plan):
        label = bc.bound_id + "".join(f"[{k}={v}]" for k, v in sorted(bc.params.items()))
        certs.append(_cert(f"bound:{label}", bc.passed, max_violation_ratio=bc.max_violation_ratio,
                           fitted=bc.fitted_constants, train=bc.train_samples,
                           validation=bc.validation_samples, worst=bc.worst_sample))
        fitted[label] = bc.fitted_constants
        rows.append({"check": f"bound:{label}", "C": bc.fitted_constants["C"],
                     "c": bc.fitted_constants["c"], "max_ratio": bc.max_violation_ratio,
                     "passed": bc.passed})
    return Report(cfg.experiment, certs, fitted,
                  Table(["check", "C", "c", "max_ratio", "passed"], rows))


def _t_lemma(ctx: _Context) -> Report:
    res = verify_t_lemma()
    certs, rows, fitted = [], [], {}
    for item, info in res["items"].items():
        certs.append(_cert(f"item:{item}", info["passed"], **{k: v for k, v in info.items() if k != "passed"}))
        if info.get("C") is not None:
            fitted[item] = info["C"]
        rows.append({"item": item, "C": info.get("C"), "validation_ratio": info.get("validation_ratio"),
                     "passed": info["passed"]})
    return Report(ctx.cfg.experiment, certs, fitted,
                  Table(["item", "C", "validation_ratio", "passed"], rows), {"points": res["points"]})


SEMIGROUP_PAIRS = ((0.1, 0.2), (0.05, 0.05))
MASS_TIMES = (0.01, 0.1)


def _maximal_equivalence(ctx: _Context) -> Report:
    rs, tg = ctx.rs, ctx.tg

    def one(tf):
        f = tf.values
        stack = semigroup_stack(f, tg.times)
        radial = maximal_function(rs, f, "radial", tg, stack)
        nontangential = maximal_function(rs, f, "nontangential", tg, stack)
        sup = float(np.abs(f.values).max())
        law = max(float(np.abs(apply_semigroup(rs, apply_semigroup(rs, f, t), s).values
                                - apply_semigroup(rs, f, s + t).values).max()) / sup
                  for s, t in SEMIGROUP_PAIRS)
        mass = f.values @ f.grid.quad_weights
        drift = max(abs(apply_semigroup(rs, f, t).values @ f.grid.quad_weights - mass)
                    for t in MASS_TIMES) / lp_norm(f, 1.0)
        r1, n1 = lp_norm(radial, 1.0), lp_norm(nontangential, 1.0)
        return {"function_id": tf.ident, "role": tf.role, "l1_norm": tf.info["l1"],
                "radial_l1": r1, "nontangential_l1": n1, "ratio": n1 / r1,
                "ordering": bool(np.all(radial.values <= nontangential.values)),
                "semigroup_law": law, "mass_drift": drift}

    rows = ctx.map(one, ctx.battery)
    c_fit = max(r["ratio"] for r in rows)
    law = max(r["semigroup_law"] for r in rows)
    drift = max(r["mass_drift"] for r in rows)
    certs = [
        _cert("ordering:radial<=nontangential", all(r["ordering"] for r in rows),
              failures=[r["function_id"] for r in rows if not r["ordering"]]),
        _cert("norm:nontangential<=C*radial", c_fit <= TWO_SIDED_LIMIT, C=c_fit, limit=TWO_SIDED_LIMIT,
              functions=len(rows)),
        _cert("semigroup:law", law <= SEMIGROUP_LIMIT, max_relative_error=law, pairs=SEMIGROUP_PAIRS),
        _cert("semigroup:mass", drift <= SEMIGROUP_LIMIT, max_relative_drift=drift, times=MASS_TIMES),
    ]
    cols = ["function_id", "role", "l1_norm", "radial_l1", "nontangential_l1", "ratio", "ordering",
            "semigroup_law", "mass_drift"]
    return Report(ctx.cfg.experiment, certs, {"nontangential_over_radial": c_fit}, Table(cols, rows))


def _local_characterization(ctx: _Context) -> Report:
    rs, tg = ctx.rs, ctx.tg
    jobs = [(T, tf) for T in ctx.cfg.scales for tf in ctx.battery]

    def one(job):
        T, tf = job
        f = tf.values
        loc = hardy_norm(rs, f, "H1_loc", T=T, tg=tg)
        l1 = lp_norm(f, 1.0)
        char = hardy_norm(rs, char_operator(rs, f, T), "H1", tg=tg)
        return {"function_id": tf.ident, "T": T, "local_norm": loc, "char_h1_norm": char,
                "l1_norm": l1, "ratio": loc / (char + l1)}

    rows = ctx.map(one, jobs)
    c = two_sided_constant(r["ratio"] for r in rows)
    per_scale = {str(T): two_sided_constant(r["ratio"] for r in rows if r["T"] == T)
                 for T in ctx.cfg.scales}
    certs = [_cert("two-sided:local_vs_char", c <= TWO_SIDED_LIMIT, C=c, limit=TWO_SIDED_LIMIT,
                   per_scale=per_scale)]
    cols = ["function_id", "T", "local_norm", "char_h1_norm", "l1_norm", "ratio"]
    return Report(ctx.cfg.experiment, certs, {"two_sided": c, "per_scale": per_scale}, Table(cols, rows))


def telescope_checks(rs, grid, T: float, rng, levels=(1, 2, 3, 4, 5)) -> list:
    """Telescoping identity errors for positive pieces on ``B(y, 2r)``, ``r = T / 2^n``.

    Levels whose ball is thinner than a grid cell are skipped.
    """
    out = []
    for n in levels:
        r = T / 2 ** n
        if 2 * r < 2 * grid.spacing:
            continue
        y = rng.uniform(-0.25, 0.25, grid.dimension) * grid.extent
        piece = GridFunction(grid, smooth_bump(grid, y, 2 * r))
        if not np.any(piece.values):
            continue
        terms = telescope_split(rs, piece, y, r, T)
        recon = np.zeros(grid.size)
        for c, a in terms:
            recon[a.support] += c * a.local_values
        err = float(np.abs(recon - piece.values).max() / np.abs(piece.values).max())
        lam = float(piece.values @ grid.quad_weights)
        out.append({"T": T, "n": n, "r": r, "terms": len(terms), "error": err,
                    "lambda": lam, "valid": all(validate_atom(rs, a) for _, a in terms)})
    return out


def _goldberg(ctx: _Context) -> Report:
    rs, tg = ctx.rs, ctx.tg
    jobs = [(T, tf) for T in ctx.cfg.scales for tf in ctx.battery]

    def one(job):
        T, tf = job
        f = tf.values
        dec = local_atomic_decompose(rs, f, T)
        bad = dec.validate(rs)
        loc = hardy_norm(rs, f, "H1_loc", T=T, tg=tg)
        l1 = lp_norm(f, 1.0)
        heat = dec.metadata.get("heat_part_coefficient_sum")
        return {"function_id": tf.ident, "T": T, "atoms": len(dec.terms),
                "coefficient_sum": dec.coefficient_sum, "local_norm": loc, "ratio": dec.coefficient_sum / loc,
                "heat_part_over_l1": None if heat is None else heat / l1,
                "relative_residual": dec.relative_residual, "invalid_atoms": len(bad),
                "route": dec.metadata.get("route"),
                "violations": sorted({v.split(":")[0] for _, vs in bad for v in vs})}

    rows = ctx.map(one, jobs)
    rng = ctx.rng(0x7E1E)
    tele = [c for T in ctx.cfg.scales for c in telescope_checks(rs, ctx.grid, T, rng)]
    localized = _localized_support_checks(ctx)
    fit = split_constant(r["ratio"] for r in rows)
    heat_vals = [r["heat_part_over_l1"] for r in rows if r["heat_part_over_l1"] is not None]
    worst_res = max(r["relative_residual"] for r in rows)
    certs = [
        _cert("residual", worst_res <= RESIDUAL_LIMIT, max_relative_residual=worst_res,
              limit=RESIDUAL_LIMIT),
        _cert("atoms:valid", all(r["invalid_atoms"] == 0 for r in rows),
              failures=[(r["function_id"], r["T"], r["violations"]) for r in rows if r["invalid_atoms"]]),
        _cert("coefficients:sum<=C*local_norm", fit["passed"], **fit),
        _cert("telescope:identity", bool(tele) and all(t["error"] <= TELESCOPE_LIMIT and t["valid"]
                                                       for t in tele),
              max_error=max((t["error"] for t in tele), default=None), limit=TELESCOPE_LIMIT,
              cases=len(tele)),
        _cert("localized:support", all(c["passed"] for c in localized),
              worst_reach_over_T=max(c["reach_over_T"] for c in localized), bound_over_T=4.0),
    ]
    fitted = {"coefficient_over_local_norm": fit["C"],
              "heat_part_over_l1": max(heat_vals) if heat_vals else None}
    for r in rows:
        r["violations"] = ";".join(r["violations"])
    cols = ["function_id", "T", "atoms", "coefficient_sum", "local_norm", "ratio", "heat_part_over_l1",
            "relative_residual", "invalid_atoms", "route", "violations"]
    return Report(ctx.cfg.experiment, certs, fitted, Table(cols, rows),
                  {"telescope": tele, "localized": localized})


def _localized_support_checks(ctx: _Context, count: int = 3) -> list:
    """Localized decompositions of bumps in ``B(y0, T)``: atoms must stay in ``B(y0, 4T)``."""
    rs, grid = ctx.rs, ctx.grid
    rng = ctx.rng(0x10C)
    out = []
    for T in ctx.cfg.scales:
        if T < 3 * grid.spacing or 4 * T > grid.extent:
            continue
        for _ in range(count):
            y0 = rng.uniform(-0.2, 0.2, grid.dimension) * grid.extent
            f = GridFunction(grid, smooth_bump(grid, y0, T * rng.uniform(0.3, 1.0)))
            if not np.any(f.values):
                continue
            f = f - GridFunction(grid, smooth_bump(grid, y0, 0.5 * T)) * 0.5
            dec = local_atomic_decompose(rs, f, T, y0=y0, single=False)
            reach = max(np.linalg.norm(a.center - y0) + a.radius for _, a in dec.terms)
            out.append({"T": T, "reach_over_T": float(reach / T),
                        "passed": bool(reach <= 4 * T * (1 + 1e-9) + grid.spacing
                                       and not dec.validate(rs)
                                       and dec.relative_residual <= RESIDUAL_LIMIT)})
    return out


def _hermite_norms(ctx: _Context, with_atomic: bool, with_riesz: bool) -> list:
    rs, tg = ctx.rs, ctx.tg
    pu = partition_of_unity(rs, ctx.grid)

    def one(tf):
        f = tf.values
        res = {"id": tf.ident, "role": tf.role, "l1": lp_norm(f, 1.0),
               "hardy": hardy_norm(rs, f, "Hermite", tg=tg)}
        if with_atomic:
            dec = hermite_atomic_decompose(rs, f, pu=pu)
            bad = dec.validate(rs)
            res.update(atomic=dec.coefficient_sum, residual=dec.relative_residual,
                       invalid_atoms=len(bad), atoms=len(dec.terms), route=dec.metadata.get("route"),
                       max_support_over_rho=dec.metadata.get("max_support_over_rho"))
        if with_riesz:
            res["riesz"] = res["l1"] + sum(lp_norm(riesz(rs, f, RieszVariant("hermite", j)), 1.0)
                                           for j in range(rs.dimension))
        if tf.atom is not None:
            chk = validate_atom(rs, tf.atom)
            res.update(atom_valid=chk.passed, violations=chk.violations)
        return res

    return ctx.map(one, ctx.battery)


def _atom_claims(results, battery) -> list:
    """Certificates for battery members claimed as atoms and for deliberate non-atoms."""
    certs = []
    claimed = [(r, tf) for r, tf in zip(results, battery) if tf.role == "atom"]
    bad_claims = [(tf.ident, r["violations"]) for r, tf in claimed if not r["atom_valid"]]
    certs.append(_cert("battery:atoms_valid", not bad_claims, checked=len(claimed),
                       failures=[{"function_id": i, "violations": v} for i, v in bad_claims]))
    non = [(r, tf) for r, tf in zip(results, battery) if tf.role == "non-atom"]
    missed = [tf.ident for r, tf in non
              if r["atom_valid"] or not any(v.startswith(tf.defect) for v in r["violations"])]
    certs.append(_cert("battery:non_atoms_rejected", not missed, checked=len(non), missed=missed))
    return certs


def _partition_report(ctx: _Context) -> tuple:
    rs, grid = ctx.rs, ctx.grid
    pu = partition_of_unity(rs, grid)
    core = grid.core_mask()
    total_err = float(np.abs(pu.total()[core] - 1.0).max())
    grads = pu.gradient_ratios()
    fit = split_constant(grads)
    plan = SamplePlan(rs, ctx.cfg.psi_train, ctx.cfg.psi_validation, ctx.cfg.seed)
    psi = psi_cancellation_certificate(rs, pu, plan)
    certs = [
        _cert("partition:sum", total_err <= 1e-10, max_error=total_err, limit=1e-10),
        _cert("partition:disjoint", pu.check_disjoint()),
        _cert("partition:covering", pu.check_covering(core)),
        _cert("partition:gradient", fit["passed"], **fit),
        _cert("partition:psi_cancellation", psi.passed, max_violation_ratio=psi.max_violation_ratio,
              fitted=psi.fitted_constants),
    ]
    info = {"centers": len(pu), "multiplicity": pu.multiplicity,
            "gradient_ratio_range": [float(grads.min()), float(grads.max())]}
    return certs, {"gradient": fit["C"], "psi_cancellation": psi.fitted_constants}, info


def _atomic_hermite(ctx: _Context) -> Report:
    rs, grid, tg = ctx.rs, ctx.grid, ctx.tg
    certs, fitted, pu_info = _partition_report(ctx)
    results = _hermite_norms(ctx, with_atomic=True, with_riesz=False)
    certs += _atom_claims(results, ctx.battery)
    worst_res = max(r["residual"] for r in results)
    certs.append(_cert("decomposition:residual", worst_res <= RESIDUAL_LIMIT,
                       max_relative_residual=worst_res, limit=RESIDUAL_LIMIT))
    certs.append(_cert("decomposition:atoms_valid", all(r["invalid_atoms"] == 0 for r in results),
                       failures=[r["id"] for r in results if r["invalid_atoms"]]))
    c = two_sided_constant(r["hardy"] / r["atomic"] for r in results)
    certs.append(_cert("two-sided:hermite_vs_atomic", c <= TWO_SIDED_LIMIT, C=c, limit=TWO_SIDED_LIMIT))
    rng = ctx.rng(0xA70)
    atoms = [hermite_atom(rs, grid, rng) for _ in range(ctx.cfg.hermite_atoms)]
    norms = ctx.map(lambda a: hardy_norm(rs, a.values, "Hermite", tg=tg), atoms)
    spread = max(norms) / min(norms)
    certs.append(_cert("atoms:uniform_hermite_norm", spread <= ATOM_SPREAD_LIMIT, max_over_min=spread,
                       limit=ATOM_SPREAD_LIMIT, atoms=len(atoms), max=max(norms), min=min(norms)))
    fitted.update(two_sided=c, atom_norm_max=max(norms))
    details = {"partition": pu_info, "A": HERMITE_A,
               "functions": [{k: r.get(k) for k in ("id", "role", "atoms", "route", "residual",
                                                    "max_support_over_rho")} for r in results]}
    return Report(ctx.cfg.experiment, certs, fitted, emit_norm_table(results), details)


RIESZ_CENTER_NORMS = (0.0, 2.0, 5.0)
RIESZ_SCALES = (0.5, 1.0, 2.0)
RIESZ_A = 4.0


def _riesz_atoms(ctx: _Context) -> list:
    """Atoms at ``|y0|`` in {0, 2, 5} with radii ``lambda * rho(y0)`` inside ``B(y0, 4 rho(y0))``."""
    rs, grid = ctx.rs, ctx.grid
    rng = ctx.rng(0x121E)
    out = []
    for norm in RIESZ_CENTER_NORMS:
        if norm + RIESZ_A * float(rho(np.array([norm]))) > grid.extent:
            continue
        u = rng.normal(size=grid.dimension)
        y0 = norm * u / np.linalg.norm(u)
        r0 = float(rho(y0))
        for lam in RIESZ_SCALES:
            radius = max(lam * r0, 2.5 * grid.spacing)
            for cancel in (True, False):
                if radius < r0 and not cancel:
                    continue
                if cancel:
                    vals = dipole(rs, grid, y0, radius, u / np.linalg.norm(u))
                else:
                    vals = smooth_bump(grid, y0, radius)
                if not np.any(vals):
                    continue
                vals = normalize_to_ball(rs, grid, vals, y0, radius)
                out.append({"y0": y0, "center_norm": norm, "lambda": lam, "radius": radius,
                            "cancel": cancel, "f": GridFunction(grid, vals)})
    return out


def _riesz_hermite(ctx: _Context) -> Report:
    rs, grid = ctx.rs, ctx.grid
    results = _hermite_norms(ctx, with_atomic=True, with_riesz=True)
    c = two_sided_constant(r["riesz"] / r["hardy"] for r in results)
    certs = [_cert("two-sided:riesz_vs_hermite", c <= TWO_SIDED_LIMIT, C=c, limit=TWO_SIDED_LIMIT)]
    atoms = _riesz_atoms(ctx)

    def diff(item):
        vals = []
        for j in range(rs.dimension):
            _, norm = riesz_difference(rs, item["f"], j, item["y0"], A=RIESZ_A)
            vals.append(norm / lp_norm(item["f"], 1.0))
        return max(vals)

    ratios = ctx.map(diff, atoms)
    fit_diff = split_constant(ratios)
    by_scale = {str(lam): max(r for r, a in zip(ratios, atoms) if a["lambda"] == lam)
                for lam in RIESZ_SCALES}
    certs.append(_cert("riesz_difference:L1<=C*||f||_1", fit_diff["passed"], **fit_diff,
                       cases=len(atoms), per_scale=by_scale))
    tails = []
    for norm in RIESZ_CENTER_NORMS:
        y = np.zeros(grid.dimension)
        y[0] = norm
        if norm >= grid.extent:
            continue
        r0 = float(rho(y))
        for lam in (0.5, 1.0):
            for j in range(rs.dimension):
                tails.append({"center_norm": norm, "r": lam * r0, "j": j,
                              "tail": riesz_tail_integral(rs, grid, j, y, lam * r0)})
    fit_tail = split_constant(t["tail"] for t in tails)
    certs.append(_cert("riesz_tail:bounded", fit_tail["passed"], **fit_tail, cases=len(tails)))
    fitted = {"two_sided": c, "riesz_difference": fit_diff["C"], "riesz_tail": fit_tail["C"]}
    details = {"riesz_difference": [{"center_norm": a["center_norm"], "lambda": a["lambda"],
                                     "radius": a["radius"], "cancel": a["cancel"], "ratio": r}
                                    for a, r in zip(atoms, ratios)],
               "riesz_tail": tails}
    return Report(ctx.cfg.experiment, certs, fitted, emit_norm_table(results), details)


_RUNNERS = {
    "kernel-bounds": _kernel_bounds,
    "t-lemma": _t_lemma,
    "maximal-equivalence": _maximal_equivalence,
    "local-characterization": _local_characterization,
    "atomic-hermite": _atomic_hermite,
    "riesz-hermite": _riesz_hermite,
    "goldberg": _goldberg,
}


def run_experiment(cfg: ExperimentConfig, out_dir=None) -> Report:
    """Run one experiment; write ``report.json`` and ``tables.csv`` when ``out_dir`` is given."""
    cfg.validate()
    ctx = _Context(cfg)
    report = _RUNNERS[cfg.experiment](ctx)
    report.config = cfg.describe()
    report.details = dict(report.details, root_system=ctx.rs.describe(), grid=ctx.grid.metadata(),
                          hermite_A=HERMITE_A)
    if out_dir is not None:
        report.write(out_dir)
    return report
