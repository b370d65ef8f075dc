"""Run configuration, verification suites and regularity sweeps.

Everything the command line does is available here as plain functions
taking a :class:`RunConfig`; the CLI module only parses flags into one.
"""

from __future__ import annotations

import hashlib
import itertools
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import besov
from .errors import ConfigurationError, FracLabError, ParameterError
from .fracops import (
    apply_frac_gradient,
    assemble_frac_gradient,
    duality_defect,
    pointwise_bound_ratio,
)
from .grid import DiscreteFunction, build_grid, grid_from_nodes, read_function_csv, sample
from .solver import ProblemSpec, Solution, energy, energy_gradient, regularity_modulus, solve_dirichlet
from .translations import commutator_bound_ratio, make_cutoff, translated_gradient_split

log = logging.getLogger(__name__)

COMMANDS = ("solve", "measure", "verify", "sweep")
SUITES = ("duality", "parity", "commutator", "pointwise", "gradient", "homogeneity", "modulus")
SLOPE_MARGIN = 0.1


# --------------------------------------------------------------------------
# predicted exponents and the acceptance rule


def predicted_exponent(p: float, s: float) -> float:
    """Besov smoothness guaranteed for the minimiser.

    p >= 2: s + min(1/p, s/(p-1));  1 < p < 2: s + min(1/2, s).
    """
    if not p > 1:
        raise ParameterError(f"p must exceed 1, got {p!r}")
    if not (0 < s < 1):
        raise ParameterError(f"s must lie in (0, 1), got {s!r}")
    if p >= 2:
        return s + min(1.0 / p, s / (p - 1.0))
    return s + min(0.5, s)


def exponent_passes(measured: float, predicted: float, p: float) -> bool:
    """One-sided check sigma_hat >= sigma* - 0.1; two-sided when p = 2."""
    if not math.isfinite(measured):
        return False
    ok = measured >= predicted - SLOPE_MARGIN
    if p == 2:
        ok = ok and abs(measured - predicted) <= SLOPE_MARGIN
    return ok


# --------------------------------------------------------------------------
# data fields given as strings


def bump(x, center: float = 0.0, radius: float = 1.0):
    """C-infinity bump exp(1 - 1/(1 - t^2)), t = (x - center)/radius; equals 1 at the center."""
    t = (np.asarray(x, dtype=float) - center) / radius
    out = np.zeros_like(t)
    inside = np.abs(t) < 1
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - t[inside] ** 2))
    return out


def parse_rhs(text: str, a: float = 1.0):
    """``const:<v>``, ``bump`` (supported in the domain) or ``file:<path>`` (x,u CSV)."""
    kind, _, arg = str(text).partition(":")
    if kind == "const":
        try:
            return float(arg)
        except ValueError:
            raise ParameterError(f"bad constant in source {text!r}") from None
    if kind == "bump" and not arg:
        return lambda x: bump(x, 0.0, a)
    if kind == "file":
        x, u, _ = read_function_csv(arg)
        return lambda y: np.interp(y, x, u, left=0.0, right=0.0)
    raise ParameterError(f"unknown source {text!r}; expected const:<v>, bump or file:<path>")


def parse_diffusivity(text: str | None):
    """Returns (diffusivity, (a_min, a_max)); None means A = 1."""
    if text is None:
        return None, None
    kind, _, arg = str(text).partition(":")
    if kind == "const":
        try:
            c = float(arg)
        except ValueError:
            raise ParameterError(f"bad constant in diffusivity {text!r}") from None
        if not c > 0:
            raise ParameterError(f"diffusivity must be positive, got {c!r}")
        return c, (c, c)
    if kind == "file":
        x, A, _ = read_function_csv(arg)
        if not np.all(A > 0):
            raise ParameterError(f"{arg}: diffusivity samples must be positive")
        # constant extension beyond the sampled range
        return (lambda y: np.interp(y, x, A)), (float(A.min()), float(A.max()))
    raise ParameterError(f"unknown diffusivity {text!r}; expected const:<v> or file:<path>")


# --------------------------------------------------------------------------
# configuration


def _float_list(text) -> tuple[float, ...]:
    if isinstance(text, (tuple, list)):
        return tuple(float(t) for t in text)
    try:
        return tuple(float(t) for t in str(text).replace(" ", "").split(",") if t)
    except ValueError:
        raise ParameterError(f"expected a comma-separated list of numbers, got {text!r}") from None


def _str_list(text) -> tuple[str, ...]:
    if isinstance(text, (tuple, list)):
        return tuple(text)
    return tuple(t for t in str(text).replace(" ", "").split(",") if t)


@dataclass(frozen=True)
class RunConfig:
    command: str = "solve"
    p: float = 2.0
    s: float = 0.5
    rhs: str = "const:1"
    diffusivity: str | None = None
    n: int = 2048
    L: float | None = None
    a: float = 1.0
    tol: float | None = None
    out: str | None = None
    input: str | None = None
    suite: tuple[str, ...] = ("all",)
    p_list: tuple[float, ...] | None = None
    s_list: tuple[float, ...] | None = None
    hmin: float | None = None
    hmax: float | None = None
    workers: int = 1
    # names of the fields the user set; verify suites narrow their p/s families to these
    explicit: frozenset = frozenset()

    _CONVERT = {
        "p": float, "s": float, "n": int, "L": float, "a": float, "tol": float,
        "hmin": float, "hmax": float, "workers": int,
        "suite": _str_list, "p_list": _float_list, "s_list": _float_list,
    }

    @classmethod
    def from_mapping(cls, values: dict) -> "RunConfig":
        names = {f.name for f in fields(cls)} - {"explicit"}
        kwargs = {}
        for key, raw in values.items():
            name = key.replace("-", "_")
            if name not in names:
                raise ConfigurationError(f"unknown configuration key {key!r}")
            if raw is None:
                continue
            conv = cls._CONVERT.get(name)
            try:
                kwargs[name] = conv(raw) if conv else raw
            except (TypeError, ValueError):
                raise ParameterError(f"bad value {raw!r} for {key!r}") from None
        cfg = cls(**kwargs, explicit=frozenset(kwargs))
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if self.command not in COMMANDS:
            raise ParameterError(f"unknown command {self.command!r}; choose from {', '.join(COMMANDS)}")
        if not self.p > 1:
            raise ParameterError(f"p must exceed 1, got {self.p!r}")
        if not (0 < self.s < 1):
            raise ParameterError(f"s must lie in (0, 1), got {self.s!r}")
        if self.n <= 0:
            raise ParameterError(f"n must be positive, got {self.n!r}")
        if self.workers < 1:
            raise ParameterError(f"workers must be >= 1, got {self.workers!r}")
        if self.tol is not None and not self.tol > 0:
            raise ParameterError(f"tol must be positive, got {self.tol!r}")
        for name in ("p_list", "s_list"):
            if getattr(self, name) is not None and not getattr(self, name):
                raise ParameterError(f"{name.replace('_', '-')} is empty")
        if self.out is not None:
            parent = Path(self.out).resolve().parent
            if not parent.is_dir():
                raise ConfigurationError(f"output directory {parent} does not exist")

    @property
    def window(self) -> float:
        """Window half-width: 8a for solve, 2a for measure and sweep."""
        if self.L is not None:
            return self.L
        return 8.0 * self.a if self.command == "solve" else 2.0 * self.a

    def problem(self, p: float | None = None, s: float | None = None) -> ProblemSpec:
        A, bounds = parse_diffusivity(self.diffusivity)
        return ProblemSpec(
            p=self.p if p is None else p,
            s=self.s if s is None else s,
            rhs=parse_rhs(self.rhs, self.a),
            diffusivity=A,
            a_bounds=bounds,
            L=self.window,
            a=self.a,
            n_cells=self.n,
            tol_grad=self.tol,
        )

    def provenance(self, p: float, s: float) -> str:
        """Short hash of everything that determines a solve-and-measure row."""
        key = repr((p, s, self.rhs, self.diffusivity, self.window, self.a, self.n, self.tol, self.hmin, self.hmax))
        return hashlib.sha256(key.encode()).hexdigest()[:16]


def read_config_file(path) -> dict:
    """Flat ``key = value`` file, ``#`` starts a comment."""
    values = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, val = line.partition("=")
            if not sep or not key.strip():
                raise ConfigurationError(f"{path}:{lineno}: expected key = value")
            values[key.strip().lstrip("-")] = val.strip()
    return values


# --------------------------------------------------------------------------
# solve and measure


def run_solve(cfg: RunConfig) -> Solution:
    sol = solve_dirichlet(cfg.problem())
    if cfg.out:
        sol.to_csv(cfg.out)
    return sol


def _probe_solution(u: DiscreteFunction, p: float, cfg: RunConfig, predicted=None) -> besov.BesovProbe:
    pr = besov.probe(u, p, cfg.hmin, cfg.hmax, predicted=predicted)
    besov.fit_exponent(pr)
    return pr


def run_measure(cfg: RunConfig) -> besov.BesovProbe:
    """Probe D(h) on a stored solution (``input``) or on a fresh solve, then fit."""
    if cfg.input:
        # values at +-a in the file are read as the boundary trace
        x, v, _ = read_function_csv(cfg.input)
        grid = grid_from_nodes(x, cfg.a)
    else:
        sol = solve_dirichlet(cfg.problem())
        grid, v = sol.u.grid, sol.u.values
    pred = predicted_exponent(cfg.p, cfg.s)
    pr = besov.probe(v, cfg.p, cfg.hmin, cfg.hmax, predicted=pred, grid=grid)
    try:
        besov.fit_exponent(pr)
    finally:
        if cfg.out:
            pr.to_csv(cfg.out)
    return pr


# --------------------------------------------------------------------------
# sweeps


@dataclass(frozen=True)
class RegularityRow:
    p: float
    s: float
    predicted: float
    measured: float
    residual: float
    passed: bool
    provenance: str
    error: str | None = None


@dataclass
class RegularityReport:
    rows: list = field(default_factory=list)

    @property
    def all_passed(self) -> bool:
        return bool(self.rows) and all(r.passed for r in self.rows)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(self.to_text())

    def to_text(self) -> str:
        lines = ["p,s,predicted,measured,residual,pass"]
        for r in self.rows:
            lines.append(
                f"{r.p:.17g},{r.s:.17g},{r.predicted:.17g},{r.measured:.17g},{r.residual:.17g},"
                f"{'true' if r.passed else 'false'}"
            )
        for r in self.rows:
            lines.append(f"# provenance,{r.p:.17g},{r.s:.17g},{r.provenance}")
            if r.error:
                lines.append(f"# error,{r.p:.17g},{r.s:.17g},{r.error.replace(chr(10), ' ')}")
        return "\n".join(lines) + "\n"


def _sweep_row(cfg: RunConfig, p: float, s: float) -> RegularityRow:
    pred = predicted_exponent(p, s)
    tag = cfg.provenance(p, s)
    try:
        sol = solve_dirichlet(cfg.problem(p, s))
        pr = _probe_solution(sol.u, p, cfg, pred)
    except FracLabError as exc:
        log.warning("sweep row p=%g s=%g failed: %s", p, s, exc)
        return RegularityRow(p, s, pred, math.nan, math.nan, False, tag, f"{type(exc).__name__}: {exc}")
    return RegularityRow(p, s, pred, pr.slope, pr.residual, exponent_passes(pr.slope, pred, p), tag)


def regularity_sweep(cfg: RunConfig, pairs) -> RegularityReport:
    """Solve and measure every (p, s) pair; rows come back ordered by (p, s)."""
    pairs = sorted({(float(p), float(s)) for p, s in pairs})
    for p, s in pairs:
        predicted_exponent(p, s)  # reject invalid pairs before any work
    with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
        rows = list(pool.map(lambda ps: _sweep_row(cfg, *ps), pairs))
    return RegularityReport(rows)


def run_sweep(cfg: RunConfig) -> RegularityReport:
    p_list = cfg.p_list or (cfg.p,)
    s_list = cfg.s_list or (cfg.s,)
    report = regularity_sweep(cfg, itertools.product(p_list, s_list))
    if cfg.out:
        report.to_csv(cfg.out)
    return report


# --------------------------------------------------------------------------
# verification suites


@dataclass(frozen=True)
class Check:
    suite: str
    name: str
    value: float
    threshold: float
    passed: bool

    def line(self) -> str:
        return f"{self.suite:12s} {self.name:44s} {self.value:12.4e} <= {self.threshold:<10.4g} {'PASS' if self.passed else 'FAIL'}"


def _check(suite, name, value, threshold) -> Check:
    value = float(value)
    return Check(suite, name, value, float(threshold), bool(math.isfinite(value) and value <= threshold))


_S_FAMILY = (0.25, 0.5, 0.75)
_P_FAMILY = (1.5, 2.0, 3.0)
_HOMOGENEITY_SCALE = {2.0: 10.0, 3.0: 8.0, 1.5: 4.0}
_BUMPS = ((0.0, 0.9), (0.3, 0.5), (-0.4, 0.45))


def _family(cfg: RunConfig, name: str, default):
    return (getattr(cfg, name),) if name in cfg.explicit else default


def bump_lipschitz(radius: float) -> float:
    """max |d/dx bump| for the unit-height bump of the given radius (dense sampling)."""
    t = np.linspace(-1, 1, 200001)[1:-1]
    f = np.exp(1.0 - 1.0 / (1.0 - t * t))
    return float(np.max(np.abs(f * (-2.0 * t / (1.0 - t * t) ** 2)))) / radius


def suite_duality(cfg: RunConfig, n: int = 512, L: float = 8.0) -> list[Check]:
    grid = build_grid(L, 1.0, n)
    out = []
    for s in _family(cfg, "s", _S_FAMILY):
        worst = 0.0
        for (c1, r1), (c2, r2) in itertools.combinations(_BUMPS, 2):
            phi = sample(lambda x: bump(x, c1, r1), grid)
            Phi = sample(lambda x: bump(x, c2, r2), grid)
            worst = max(worst, duality_defect(grid, s, phi, Phi).defect)
        out.append(_check("duality", f"s={s:g} max relative defect", worst, 1e-6))
    return out


def suite_parity(cfg: RunConfig, n: int = 512, L: float = 4.0) -> list[Check]:
    grid = build_grid(L, 1.0, n)
    v = sample(lambda x: x * bump(x, 0.0, 0.9), grid)
    out = []
    for s in _family(cfg, "s", _S_FAMILY):
        g = apply_frac_gradient(assemble_frac_gradient(grid, s), v)
        asym = np.max(np.abs(g - g[::-1])) / np.max(np.abs(g))
        out.append(_check("parity", f"s={s:g} odd input, even gradient", asym, 1e-10))
    return out


def _test_function(grid):
    return sample(lambda x: np.clip(1 - x * x, 0, None) * (1 + 0.3 * x + 0.2 * np.sin(3 * x)), grid)


def suite_commutator(cfg: RunConfig, n: int = 512, L: float = 4.0) -> list[Check]:
    grid = build_grid(L, 1.0, n)
    v = _test_function(grid)
    phi = make_cutoff(0.2, 0.25, grid)
    out = []
    for s in _family(cfg, "s", _S_FAMILY):
        op = assemble_frac_gradient(grid, s)
        ident, ratio, K = 0.0, 0.0, math.inf
        for k in (2, 8, 32):
            h = k * grid.dx
            lhs, translated, C = translated_gradient_split(phi, v, h, op)
            ident = max(ident, np.max(np.abs(lhs - translated - C)) / np.max(np.abs(lhs)))
            for p in _family(cfg, "p", _P_FAMILY):
                b = commutator_bound_ratio(phi, v, h, s, p, op)
                ratio, K = max(ratio, b.ratio / b.bound), b.bound
        out.append(_check("commutator", f"s={s:g} identity defect", ident, 1e-10))
        out.append(_check("commutator", f"s={s:g} max |C|_p / (K |v_h - v|_p)", ratio, 1.0))
    return out


POINTWISE_S = tuple(round(0.1 * k, 1) for k in range(1, 10))


def pointwise_constants(n: int, L: float = 4.0, s_values=POINTWISE_S) -> np.ndarray:
    """Empirical pointwise-bound constants over the profile family and s-grid.

    The family is the three exponential bumps plus a quintic plateau bump
    (the cut-off profile with rho = 0.3), each with analytic sup-norm 1.
    """
    grid = build_grid(L, 1.0, n)
    profiles = [(lambda x, c=c, r=r: bump(x, c, r), bump_lipschitz(r)) for c, r in _BUMPS]
    quintic = make_cutoff(0.0, 0.3, grid)
    profiles.append((quintic, quintic.lipschitz))
    vals = []
    for s in s_values:
        for f, lip in profiles:
            vals.append(pointwise_bound_ratio(sample(f, grid), s, 1.0, lip))
    return np.array(vals)


def suite_pointwise(cfg: RunConfig) -> list[Check]:
    s_values = _family(cfg, "s", POINTWISE_S)
    c1, c2 = pointwise_constants(512, s_values=s_values), pointwise_constants(1024, s_values=s_values)
    change = float(np.max(np.maximum(c1 / c2, c2 / c1)))
    return [
        _check("pointwise", "max empirical constant (n=1024)", np.max(c2), 1e3),
        _check("pointwise", "max change factor n=512 -> 1024", change, 2.0),
    ]


def gradient_fd_error(p: float, eps: float, n: int = 64, s: float = 0.5, step: float = 1e-5) -> float:
    """Relative gap between <grad J, w> and a central difference of J along w."""
    spec = ProblemSpec(p, s, rhs=lambda x: 1.0 + 0.5 * np.cos(x), L=2.0, n_cells=n)
    grid = spec.grid()
    op = assemble_frac_gradient(grid, s)
    v = _test_function(grid)
    w = sample(lambda x: np.clip(1 - x * x, 0, None) * np.cos(2 * x), grid)
    analytic = float(np.dot(energy_gradient(v, spec, op, eps), w.values))
    jp = energy(v + step * w, spec, op, eps)
    jm = energy(v - step * w, spec, op, eps)
    return abs((jp - jm) / (2 * step) - analytic) / abs(analytic)


def suite_gradient(cfg: RunConfig) -> list[Check]:
    out = []
    for p in _family(cfg, "p", _P_FAMILY):
        schedule = ProblemSpec(p, 0.5).eps_schedule
        for eps in ((0.0,) if p >= 2 else (schedule[0], schedule[-1])):
            out.append(_check("gradient", f"p={p:g} eps={eps:g} finite-difference gap", gradient_fd_error(p, eps), 1e-6))
    return out


def homogeneity_defect(p: float, lam: float, s: float = 0.5, n: int = 512, L: float = 2.0) -> float:
    """max |u(lam f) - lam^(1/(p-1)) u(f)| / max |lam^(1/(p-1)) u(f)|."""
    base = ProblemSpec(p, s, L=L, n_cells=n)
    op = assemble_frac_gradient(base.grid(), s)
    u1 = solve_dirichlet(base, op).u.values
    ul = solve_dirichlet(base.scaled(lam), op).u.values
    ref = lam ** (1.0 / (p - 1.0)) * u1
    return float(np.max(np.abs(ul - ref)) / np.max(np.abs(ref)))


def suite_homogeneity(cfg: RunConfig) -> list[Check]:
    out = []
    for p in _family(cfg, "p", _P_FAMILY):
        lam = _HOMOGENEITY_SCALE.get(p, 4.0)
        out.append(_check("homogeneity", f"p={p:g} lambda={lam:g} relative defect", homogeneity_defect(p, lam), 1e-3))
    return out


MODULUS_SITES = ((0.0, 0.25), (0.85, 0.125))


def modulus_values(n: int, p: float = 2.0, s: float = 0.5, L: float = 2.0, sigma: float = 1.0) -> list[float]:
    """omega(u) at an interior and a boundary-adjacent site for the solved u."""
    spec = ProblemSpec(p, s, L=L, n_cells=n)
    op = assemble_frac_gradient(spec.grid(), s)
    u = solve_dirichlet(spec, op).u
    return [regularity_modulus(u, spec, x0, rho, sigma, op) for x0, rho in MODULUS_SITES]


def suite_modulus(cfg: RunConfig) -> list[Check]:
    p = cfg.p if "p" in cfg.explicit else 2.0
    coarse, fine = modulus_values(512, p), modulus_values(1024, p)
    out = []
    for (x0, _), w1, w2 in zip(MODULUS_SITES, coarse, fine):
        change = max(w1 / w2, w2 / w1) if w1 > 0 and w2 > 0 else math.inf
        out.append(_check("modulus", f"x0={x0:g} change factor n=512 -> 1024", change, 2.0))
    spec = ProblemSpec(p, 0.5, L=2.0, n_cells=512)
    zero = regularity_modulus(DiscreteFunction.zeros(spec.grid()), spec, 0.0, 0.25, 1.0)
    out.append(_check("modulus", "omega(0)", zero, 0.0))
    return out


_SUITE_FUNCS = {
    "duality": suite_duality,
    "parity": suite_parity,
    "commutator": suite_commutator,
    "pointwise": suite_pointwise,
    "gradient": suite_gradient,
    "homogeneity": suite_homogeneity,
    "modulus": suite_modulus,
}


def resolve_suites(names) -> list[str]:
    names = list(names)
    if not names:
        raise ParameterError("no verification suite selected")
    chosen = []
    for name in names:
        if name == "all":
            chosen.extend(SUITES)
        elif name in _SUITE_FUNCS:
            chosen.append(name)
        else:
            raise ParameterError(f"unknown suite {name!r}; choose from all, {', '.join(SUITES)}")
    return list(dict.fromkeys(chosen))


def run_verify(cfg: RunConfig) -> list[Check]:
    checks = []
    for name in resolve_suites(cfg.suite):
        checks.extend(_SUITE_FUNCS[name](cfg))
    if cfg.out:
        with open(cfg.out, "w") as fh:
            fh.write("suite,check,value,threshold,pass\n")
            for c in checks:
                fh.write(f"{c.suite},{c.name},{c.value:.17g},{c.threshold:.17g},{'true' if c.passed else 'false'}\n")
    return checks

