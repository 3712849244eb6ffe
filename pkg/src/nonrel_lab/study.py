"""Study configuration, c-sweeps, report generation and serialization."""
from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
import os
import platform
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field as dc_field
from fractions import Fraction
from pathlib import Path
from typing import Any, Optional

import numpy as np
import yaml

from .dispersion import critical_radii, kernel_decay_fit, strichartz_probe, threshold_K
from .dynamics import (
    SimParams,
    SolverAbort,
    build_approximate,
    canonical_transform,
    error_metrics,
    nlkg_evolve,
    normalized_evolve,
    order2_termwise_report,
)
from .formal import derive_order2, dispersion_coefficients, printed_chi1_coefficient
from .spectral import make_grid, modulation_norm, random_field, sobolev_norm
from .thresholds import smallness_thresholds

__all__ = [
    "ConfigError",
    "StudyConfig",
    "parse_config",
    "parse_overrides",
    "config_from_mapping",
    "CRecord",
    "RunReport",
    "run_single_c",
    "run_convergence",
    "run_evolve",
    "run_reports",
    "emit_outputs",
    "write_files",
    "snapshot_csv",
    "fmt17",
]

MODES = ("converge", "evolve", "derive", "dispersion", "strichartz")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class StudyConfig:
    """Flat study description.  Keys in a config file use these field names;
    ``lambda`` is accepted for ``lam``.

    ``alpha=None`` means ``alpha*(d, l, max(r, 2)) + 0.25``.  ``T_rule`` is
    ``fixed`` (use ``T``) or ``horizon`` (``gamma * c^{2(r-1)}``).
    """

    mode: str
    c_list: tuple = (2.0, 4.0, 8.0)
    d: int = 2
    N: int = 64
    L: float = 16 * math.pi
    lam: float = 1.0
    l: int = 2
    r: int = 1
    dt0: float = 0.05
    dt: Optional[float] = None
    T_rule: str = "fixed"
    T: float = 1.0
    gamma: float = 0.1
    sobolev_k: float = 4.0
    alpha: Optional[float] = None
    amplitude: float = 0.1
    seed: int = 0
    output_dir: str = "results"
    step_budget: int = 200_000
    n_samples: int = 50
    workers: int = 1
    solver: str = "nlkg"
    p: Any = "inf"
    q: Any = 2
    strichartz_T: float = 1.0
    snapshot: bool = False

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        cl = tuple(float(c) for c in self.c_list)
        object.__setattr__(self, "c_list", cl)
        if not cl:
            raise ConfigError("c_list must not be empty")
        if any(c < 1 for c in cl):
            raise ConfigError("every c in c_list must be >= 1")
        if any(b <= a for a, b in zip(cl, cl[1:])):
            raise ConfigError("c_list must be strictly increasing")
        if self.T_rule not in ("fixed", "horizon"):
            raise ConfigError("T_rule must be 'fixed' or 'horizon'")
        if self.dt0 <= 0 or self.T <= 0 or self.gamma <= 0:
            raise ConfigError("dt0, T and gamma must be positive")
        if self.dt is not None and self.dt <= 0:
            raise ConfigError("dt must be positive")
        if self.r not in (1, 2) and self.mode in ("converge", "evolve"):
            raise ConfigError("dynamics supports r in {1, 2}")
        if self.solver not in ("nlkg", "normalized"):
            raise ConfigError("solver must be 'nlkg' or 'normalized'")
        if self.step_budget < 1 or self.n_samples < 1 or self.workers < 1:
            raise ConfigError("step_budget, n_samples and workers must be positive")
        try:
            make_grid(self.d, self.N, self.L)
        except ValueError as e:
            raise ConfigError(str(e)) from None

    @property
    def resolved_alpha(self) -> float:
        if self.alpha is not None:
            return float(self.alpha)
        th = smallness_thresholds(max(self.d, 2), self.l, max(self.r, 2))
        return float(th.alpha_star) + 0.25

    def horizon(self, c: float) -> float:
        return self.T if self.T_rule == "fixed" else self.gamma * c ** (2 * (self.r - 1))

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["c_list"] = list(self.c_list)
        return out


_FIELDS = {f.name for f in dataclasses.fields(StudyConfig)}
_ALIASES = {"lambda": "lam"}


def config_from_mapping(data: dict) -> StudyConfig:
    if not isinstance(data, dict):
        raise ConfigError("config must be a flat key-value mapping")
    clean = {}
    for k, v in data.items():
        key = _ALIASES.get(k, k)
        if key not in _FIELDS:
            raise ConfigError(f"unknown config key {k!r}")
        if isinstance(v, (dict,)):
            raise ConfigError(f"key {k!r}: nested values are not allowed")
        clean[key] = v
    if "mode" not in clean:
        raise ConfigError("missing required key 'mode'")
    if "c_list" in clean:
        v = clean["c_list"]
        if not isinstance(v, (list, tuple)):
            v = [v]
        try:
            clean["c_list"] = tuple(float(x) for x in v)
        except (TypeError, ValueError):
            raise ConfigError("c_list must be a list of numbers") from None
    elif clean["mode"] in ("converge",):
        raise ConfigError("missing required key 'c_list'")
    try:
        return StudyConfig(**clean)
    except TypeError as e:
        raise ConfigError(str(e)) from None


def parse_config(path, overrides: Optional[list] = None) -> StudyConfig:
    """Read a flat YAML mapping; ``overrides`` are ``key=value`` strings."""
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh) or {}
    except yaml.YAMLError as e:
        raise ConfigError(f"cannot parse {path}: {e}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: config must be a flat key-value mapping")
    data.update(parse_overrides(overrides))
    return config_from_mapping(data)


def parse_overrides(overrides: Optional[list]) -> dict:
    out = {}
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        k, v = item.split("=", 1)
        try:
            out[k.strip()] = yaml.safe_load(v)
        except yaml.YAMLError:
            raise ConfigError(f"override {item!r}: unparsable value") from None
    return out


# ---------------------------------------------------------------------------
# convergence sweep


@dataclass
class CRecord:
    c: float
    dt: float
    T: float
    seed: int
    sup_error_theorem: float
    sup_error_transformed: float
    sup_abs_theorem: float
    sup_abs_transformed: float
    energy_drift: float
    normalized_drift: float
    norm_start: float
    norm_end: float
    modulation_norm: float
    boundary_mass: float
    truncated: bool
    wall_s: float


@dataclass
class RunReport:
    config: dict
    records: list = dc_field(default_factory=list)
    slope: Optional[float] = None
    intercept: Optional[float] = None
    slope_transformed: Optional[float] = None
    flags: list = dc_field(default_factory=list)
    thresholds: dict = dc_field(default_factory=dict)
    environment: dict = dc_field(default_factory=dict)
    error: Optional[str] = None

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "records": [dataclasses.asdict(r) for r in self.records],
            "slope": self.slope,
            "intercept": self.intercept,
            "slope_transformed": self.slope_transformed,
            "flags": list(self.flags),
            "thresholds": self.thresholds,
            "environment": self.environment,
            "error": self.error,
        }


def environment_stamp() -> dict:
    import scipy

    return {
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "platform": platform.platform(),
    }


def _step_plan(cfg: StudyConfig, c: float):
    T = cfg.horizon(c)
    dt_target = cfg.dt if cfg.dt is not None else cfg.dt0 / (c * c)
    n = max(1, math.ceil(T / dt_target - 1e-9))
    dt = T / n
    truncated = False
    if n > cfg.step_budget:
        n = cfg.step_budget
        T = n * dt
        truncated = True
    return dt, T, n, truncated


def run_single_c(cfg: StudyConfig, c: float) -> CRecord:
    """One sweep point: both solvers from the same datum (theorem form), and the
    normalized flow from ``T^{-1} psi0`` mapped back by ``T`` (transformed form)."""
    grid = make_grid(cfg.d, cfg.N, cfg.L)
    amp = cfg.amplitude * c ** (-cfg.resolved_alpha)
    psi0 = random_field(grid, cfg.seed, norm_k=cfg.sobolev_k, amplitude=amp)
    dt, T, n, truncated = _step_plan(cfg, c)
    P = SimParams(
        c=c, lam=cfg.lam, l=cfg.l, grid=grid, dt=dt, T=T, r=cfg.r, k=cfg.sobolev_k,
        sample_every=max(1, n // cfg.n_samples),
    )
    t0 = time.perf_counter()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        true = nlkg_evolve(psi0, P)
        norm = normalized_evolve(psi0, P)
        start_r = canonical_transform(psi0, c, cfg.l, cfg.lam, -1)
        approx = build_approximate(normalized_evolve(start_r, P))
    wall = time.perf_counter() - t0
    e_th = error_metrics(true, norm, cfg.sobolev_k)
    e_tr = error_metrics(true, approx, cfg.sobolev_k)
    return CRecord(
        c=c, dt=dt, T=T, seed=cfg.seed,
        sup_error_theorem=e_th.sup_relative,
        sup_error_transformed=e_tr.sup_relative,
        sup_abs_theorem=e_th.sup_error,
        sup_abs_transformed=e_tr.sup_error,
        energy_drift=true.diagnostics["energy_drift"],
        normalized_drift=norm.diagnostics["energy_drift"],
        norm_start=sobolev_norm(psi0, cfg.sobolev_k),
        norm_end=sobolev_norm(true.final, cfg.sobolev_k),
        modulation_norm=modulation_norm(psi0, 0.0),
        boundary_mass=max(true.diagnostics["boundary_mass"], norm.diagnostics["boundary_mass"]),
        truncated=truncated,
        wall_s=wall,
    )


def _fit_slope(cs, errs):
    lc, le = np.log(cs), np.log(errs)
    A = np.vstack([lc, np.ones_like(lc)]).T
    (s, b), *_ = np.linalg.lstsq(A, le, rcond=None)
    return float(s), float(b)


def run_convergence(cfg: StudyConfig) -> RunReport:
    rep = RunReport(cfg.to_dict(), environment=environment_stamp())
    th = smallness_thresholds(max(cfg.d, 2), cfg.l, max(cfg.r, 2))
    rep.thresholds = {
        "delta0": str(th.delta0),
        "ratio": str(th.ratio),
        "alpha_star": str(th.alpha_star),
        "alpha_used": cfg.resolved_alpha,
        "s0": str(th.s0),
        "hypothesis_ok": th.hypothesis_ok,
        "notes": list(th.notes),
    }
    if cfg.r >= 2 and not th.hypothesis_ok:
        rep.flags.append("hypothesis r < d(l-1)/2 violated")
    try:
        if cfg.workers > 1 and len(cfg.c_list) > 1:
            with ProcessPoolExecutor(max_workers=cfg.workers) as ex:
                rep.records = list(ex.map(run_single_c, [cfg] * len(cfg.c_list), cfg.c_list))
        else:
            for c in cfg.c_list:
                rep.records.append(run_single_c(cfg, c))
    except SolverAbort as e:
        rep.error = f"solver abort: {e}"
        raise SolverAbortWithReport(str(e), rep) from e
    for r in rep.records:
        if r.truncated:
            rep.flags.append(f"c={r.c}: horizon truncated by step budget")
        if r.boundary_mass > 1e-8:
            rep.flags.append(f"c={r.c}: boundary-layer mass {r.boundary_mass:.2e} above 1e-8")
        if r.modulation_norm > r.c ** (-float(th.delta0)):
            rep.flags.append(f"c={r.c}: datum modulation norm above c^-delta0 (desk scale)")
    if len(rep.records) < 2:
        rep.flags.append("insufficient points")
    else:
        cs = [r.c for r in rep.records]
        rep.slope, rep.intercept = _fit_slope(cs, [r.sup_error_theorem for r in rep.records])
        rep.slope_transformed, _ = _fit_slope(cs, [r.sup_error_transformed for r in rep.records])
    return rep


class SolverAbortWithReport(SolverAbort):
    def __init__(self, msg, report):
        super().__init__(msg)
        self.report = report


def snapshot_csv(f) -> str:
    """Physical values in C order, one ``re,im`` pair per line, after a header."""
    g = f.grid
    v = f.physical().ravel()
    lines = [f"# d={g.d} N={g.N} L={fmt17(g.L)} order=C columns=re,im"]
    lines.extend(f"{fmt17(z.real)},{fmt17(z.imag)}" for z in v)
    return "\n".join(lines) + "\n"


def run_evolve(cfg: StudyConfig) -> dict:
    """Single run at ``c_list[0]`` with the configured solver; returns
    ``{filename: text}`` plus the final field under the key ``"_final"``."""
    c = cfg.c_list[0]
    grid = make_grid(cfg.d, cfg.N, cfg.L)
    alpha = cfg.alpha if cfg.alpha is not None else 0.0
    psi0 = random_field(grid, cfg.seed, norm_k=cfg.sobolev_k, amplitude=cfg.amplitude * c ** (-alpha))
    dt, T, n, truncated = _step_plan(cfg, c)
    P = SimParams(
        c=c, lam=cfg.lam, l=cfg.l, grid=grid, dt=dt, T=T, r=cfg.r, k=cfg.sobolev_k,
        sample_every=max(1, n // cfg.n_samples),
    )
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", RuntimeWarning)
        traj = nlkg_evolve(psi0, P) if cfg.solver == "nlkg" else normalized_evolve(psi0, P)
    flags = [str(w.message) for w in caught]
    if truncated:
        flags.append("horizon truncated by step budget")
    dg = traj.diagnostics
    rows = zip(traj.times, dg["norm"], dg["energy"],
               [sobolev_norm(f, cfg.sobolev_k) for f in traj.fields])
    series = _csv(rows, ["t", "l2_norm", "energy", f"h{cfg.sobolev_k:g}_norm"])
    manifest = {
        "config": cfg.to_dict(),
        "c": c, "dt": dt, "T": T, "n_steps": n,
        "energy_drift": dg["energy_drift"],
        "boundary_mass": dg["boundary_mass"],
        "wall_s": dg["wall_s"],
        "flags": flags,
        "environment": environment_stamp(),
    }
    return {
        "evolution.csv": series,
        "manifest.json": json.dumps(manifest, indent=2, sort_keys=True, default=_json_default) + "\n",
        "_final": traj.final,
    }


# ---------------------------------------------------------------------------
# reports


def fmt17(x) -> str:
    if isinstance(x, bool):
        return str(x).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.16e}"


def _csv(rows, header) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt17(v) if isinstance(v, (float, int, np.floating, np.integer, bool)) else v for v in row])
    return buf.getvalue()


def _derive_text(cfg: StudyConfig) -> str:
    l = cfg.l
    lam = Fraction(cfg.lam).limit_denominator(10**9)
    rep = derive_order2(l, lam)
    lines = [rep.text(), "", "first generator coefficients (degree a,b: exact ~ decimal)"]
    for (a, b), q in sorted(rep.chi1.items()):
        printed = printed_chi1_coefficient(l, b, lam)
        tag = "PASS" if printed == q else "FLAG"
        lines.append(f"  ({a},{b}): {q} ~ {complex(q).imag:.12g}i   {tag} vs closed form")
    lines.append("")
    lines.append("dispersion coefficients a_j: " + ", ".join(str(a) for a in dispersion_coefficients(3)))
    lines.append("")
    if l == 2:
        lines.extend(order2_termwise_report(l, lam))
        lines.append("")
    for r in (2, 3):
        th = smallness_thresholds(max(cfg.d, 2), l, r)
        lines.append(
            f"smallness d={th.d} l={l} r={r}: delta0={th.delta0} ratio={th.ratio} "
            f"alpha*={th.alpha_star} s0={th.s0} hypothesis={'ok' if th.hypothesis_ok else 'FLAGGED'}"
        )
        for n in th.notes:
            lines.append(f"  note: {n}")
    return "\n".join(lines) + "\n"


def run_reports(cfg: StudyConfig) -> dict:
    """Build the deterministic file set for ``derive``, ``dispersion`` or
    ``strichartz`` mode; returns ``{filename: text}``."""
    files = {}
    if cfg.mode == "derive":
        files["derivation.txt"] = _derive_text(cfg)
    elif cfg.mode == "dispersion":
        r = max(cfg.r, 2)
        summary = []
        radii_lines = []
        for c in cfg.c_list:
            eps = 1.0 / (c * c)
            cr = critical_radii(r, eps)
            radii_lines.append(
                [c, threshold_K(eps), ";".join(fmt17(x) for x in cr.roots), ";".join(fmt17(x) for x in cr.inflections), cr.lower, cr.upper]
            )
            for band in ("low", "medium", "high"):
                fit = kernel_decay_fit(r, c, band, cfg.d)
                files[f"decay_{band}_c{c:g}.csv"] = _csv(zip(fit.times, fit.sup_values), ["t", "sup_value"])
                summary.append([c, band, fit.fitted_exponent, fit.predicted_exponent, fit.fit_quality])
                if band == "medium":
                    for cand, res in fit.extra["candidates"].items():
                        summary.append([c, f"medium_candidate_{cand:.6f}", cand, cand, res])
        files["decay_summary.csv"] = _csv(summary, ["c", "band", "fitted_exponent", "predicted_exponent", "fit_quality"])
        files["critical_radii.csv"] = _csv(radii_lines, ["c", "K", "roots", "inflections", "lower", "upper"])
    elif cfg.mode == "strichartz":
        grid = make_grid(cfg.d, cfg.N, cfg.L)
        psi0 = random_field(grid, cfg.seed, amplitude=1.0)
        tab = strichartz_probe(cfg.p, cfg.q, list(cfg.c_list), psi0, cfg.strichartz_T)
        rows = [[c, a, b, x] for c, a, b, x in zip(tab.c_list, tab.lhs, tab.rhs, tab.ratios)]
        text = _csv(rows, ["c", "lhs", "rhs", "ratio"])
        files[f"strichartz_p{cfg.p}_q{cfg.q}.csv"] = text
        files["strichartz_summary.txt"] = f"p={cfg.p} q={cfg.q} max/min ratio={fmt17(tab.spread)}\n"
    else:
        raise ConfigError(f"run_reports does not handle mode {cfg.mode!r}")
    return files


# ---------------------------------------------------------------------------
# output


def _free_path(directory: Path, name: str, renamed: list) -> Path:
    p = directory / name
    if not p.exists():
        return p
    stem, suf = os.path.splitext(name)
    stamp = time.strftime("%Y%m%d-%H%M%S")
    k = 0
    while True:
        cand = directory / f"{stem}_{stamp}{'' if k == 0 else f'-{k}'}{suf}"
        if not cand.exists():
            renamed.append((name, cand.name))
            return cand
        k += 1


def write_files(files: dict, directory) -> list:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    renamed = []
    paths = []
    for name, text in files.items():
        p = _free_path(d, name, renamed)
        p.write_text(text)
        paths.append(p)
    return paths


CSV_COLUMNS = [
    "c", "dt", "T", "sup_error_theorem", "sup_error_transformed", "energy_drift", "wall_s",
    "sup_abs_theorem", "sup_abs_transformed", "normalized_drift", "norm_start", "norm_end",
    "modulation_norm", "boundary_mass", "truncated", "seed",
]


def emit_outputs(report: Optional[RunReport], directory) -> list:
    """Write ``manifest.json``, ``convergence.csv`` and ``slope_summary.txt``.

    Existing names get a timestamp suffix; the renames are listed in the manifest.
    """
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    renamed = []
    paths = []
    manifest = report.to_dict() if report is not None else {"records": []}
    if report is not None and report.records:
        rows = [[getattr(r, k) for k in CSV_COLUMNS] for r in report.records]
        p = _free_path(d, "convergence.csv", renamed)
        p.write_text(_csv(rows, CSV_COLUMNS))
        paths.append(p)
        lines = []
        if report.slope is None:
            lines.append("slope: insufficient points")
        else:
            lines.append(f"slope_theorem={fmt17(report.slope)} intercept={fmt17(report.intercept)}")
            lines.append(f"slope_transformed={fmt17(report.slope_transformed)}")
        for f in report.flags:
            lines.append(f"flag: {f}")
        p = _free_path(d, "slope_summary.txt", renamed)
        p.write_text("\n".join(lines) + "\n")
        paths.append(p)
    mp = _free_path(d, "manifest.json", renamed)
    manifest["outputs"] = [p.name for p in paths] + [mp.name]
    manifest["renamed"] = renamed
    mp.write_text(json.dumps(manifest, indent=2, sort_keys=True, default=_json_default) + "\n")
    paths.append(mp)
    return paths


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, Fraction):
        return str(o)
    raise TypeError(f"cannot serialize {type(o).__name__}")
