"""Energy minimisation for the fractional p-Laplacian Dirichlet problem.

The discrete energy of a nodal vector v is

    J(v) = sum_r W_r A(x_r)/p * |(G v)_r|^p  -  sum_j m_j f_j v_j,

with G the collocation matrix of grad_s, W its quadrature weights and m
the trapezoid weights on the domain.  For 1 < p < 2 the flux is
regularised as (|g|^2 + eps^2)^((p-2)/2) g and eps is driven to zero by
continuation.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .errors import ConvergenceError, GeometryError, NumericError, ParameterError
from .fracops import FracGradOperator, assemble_frac_gradient
from .grid import DiscreteFunction, Grid, build_grid, lp_norm, write_function_csv
from .translations import admissible_directions, localized_translate, make_cutoff

log = logging.getLogger(__name__)

DEFAULT_EPS_SCHEDULE = (1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6)


@dataclass(frozen=True)
class ProblemSpec:
    """Data of -div_s(A |grad_s u|^(p-2) grad_s u) = f in (-a, a), u = 0 outside."""

    p: float
    s: float
    rhs: Callable | float = 1.0
    diffusivity: Callable | float | None = None
    a_bounds: tuple[float, float] | None = None
    L: float = 8.0
    a: float = 1.0
    n_cells: int = 2048
    tol_grad: float | None = None
    max_iter: int = 50_000
    eps_schedule: tuple[float, ...] = DEFAULT_EPS_SCHEDULE
    precondition: bool = True

    def __post_init__(self):
        if not self.p > 1:
            raise ParameterError(f"p must exceed 1, got {self.p!r}")
        if not (0 < self.s < 1):
            raise ParameterError(f"s must lie in (0, 1), got {self.s!r}")
        if self.a_bounds is not None and not (0 < self.a_bounds[0] <= self.a_bounds[1]):
            raise ParameterError(f"diffusivity bounds must satisfy 0 < a_min <= a_max, got {self.a_bounds!r}")
        if self.eps_schedule and any(e <= 0 for e in self.eps_schedule):
            raise ParameterError("regularisation parameters must be positive")

    @property
    def tol(self) -> float:
        if self.tol_grad is not None:
            return self.tol_grad
        return 1e-8 if self.p >= 2 else 1e-6

    def grid(self) -> Grid:
        return build_grid(self.L, self.a, self.n_cells)

    def scaled(self, lam: float) -> "ProblemSpec":
        """Same problem with the source multiplied by lam."""
        f = self.rhs
        rhs = (lambda x: lam * np.asarray(f(x), dtype=float)) if callable(f) else lam * float(f)
        return replace(self, rhs=rhs)


def _field(spec_value, x: np.ndarray) -> np.ndarray:
    if callable(spec_value):
        out = np.asarray(spec_value(x), dtype=float)
        return np.broadcast_to(out, x.shape).astype(float)
    return np.full(x.shape, float(spec_value))


def diffusivity_samples(spec: ProblemSpec, op: FracGradOperator) -> np.ndarray:
    """A at the collocation points, checked against the declared bounds."""
    if spec.diffusivity is None:
        return np.ones(op.points.size)
    A = _field(spec.diffusivity, op.points)
    if not np.all(np.isfinite(A)):
        raise NumericError("diffusivity has non-finite samples")
    lo, hi = spec.a_bounds if spec.a_bounds is not None else (np.finfo(float).tiny, np.inf)
    if A.min() < lo or A.max() > hi:
        raise ParameterError(f"diffusivity samples in [{A.min():.6g}, {A.max():.6g}] violate bounds {(lo, hi)}")
    return A


def load_vector(spec: ProblemSpec, grid: Grid) -> np.ndarray:
    """M f: trapezoid weights on the domain times f, zero on exterior nodes."""
    f = _field(spec.rhs, grid.x)
    if not np.all(np.isfinite(f[grid.interior])):
        raise NumericError("source term has non-finite samples inside the domain")
    return np.where(grid.interior, grid.trapezoid_weights(grid.i_left, grid.i_right) * f, 0.0)


class _Discretisation:
    """Reduced (interior-unknown) form of the energy, shared by all evaluations."""

    def __init__(self, spec: ProblemSpec, op: FracGradOperator):
        grid = op.grid
        if (grid.L, grid.a, grid.n_cells) != (spec.L, spec.a, spec.n_cells):
            raise ParameterError("operator grid does not match the problem grid")
        if abs(op.s - spec.s) > 0:
            raise ParameterError(f"operator order {op.s} differs from problem order {spec.s}")
        self.spec, self.op, self.grid = spec, op, grid
        self.p = spec.p
        self.G = np.ascontiguousarray(op.matrix[:, grid.interior])
        self.WA = op.weights * diffusivity_samples(spec, op)
        self.b = load_vector(spec, grid)[grid.interior]

    def flux_energy(self, g, eps):
        p = self.p
        if eps == 0.0:
            return float(np.dot(self.WA, np.abs(g) ** p)) / p
        return float(np.dot(self.WA, (g * g + eps * eps) ** (p / 2) - eps**p)) / p

    def energy(self, x, eps=0.0):
        return self.flux_energy(self.G @ x, eps) - float(np.dot(self.b, x))

    def flux(self, g, eps):
        p = self.p
        if eps == 0.0:
            if p < 2 and np.any(g == 0.0):
                bad = int(np.flatnonzero(g == 0.0)[0])
                raise NumericError(
                    f"p={p} < 2 with eps=0 and vanishing gradient at collocation point "
                    f"{self.op.points[bad]!r}; use eps > 0"
                )
            return np.abs(g) ** (p - 1) * np.sign(g)
        return (g * g + eps * eps) ** ((p - 2) / 2) * g

    def gradient(self, x, eps=0.0, g=None):
        g = self.G @ x if g is None else g
        return self.G.T @ (self.WA * self.flux(g, eps)) - self.b

    def flux_increment(self, g, dg, eps):
        """flux_energy(g + dg) - flux_energy(g) without cancellation."""
        p = self.p
        base = g * g + eps * eps
        ratio = np.divide(dg * (2 * g + dg), base, out=np.zeros_like(g), where=base > 0)
        with np.errstate(divide="ignore"):
            term = base ** (p / 2) * np.expm1((p / 2) * np.log1p(ratio))
        zero = base == 0
        term[zero] = np.abs(dg[zero]) ** p
        return float(np.dot(self.WA, term)) / p


def _check_consistent(v, op):
    if not isinstance(v, DiscreteFunction):
        raise ParameterError("expected a DiscreteFunction")
    if v.grid != op.grid:
        raise ParameterError("function and operator live on different grids")


def energy(v: DiscreteFunction, spec: ProblemSpec, op: FracGradOperator, eps: float = 0.0) -> float:
    """Discrete energy (1/p) int A |grad_s v|^p - <f, v>.

    With eps > 0 the flux term is (1/p) int A ((|g|^2 + eps^2)^(p/2) - eps^p),
    whose gradient is the regularised flux used by the solver.
    """
    _check_consistent(v, op)
    disc = _Discretisation(spec, op)
    x = v.values[op.grid.interior]
    val = disc.energy(x, eps)
    if not np.isfinite(val):
        g = disc.G @ x
        bad = int(np.flatnonzero(~np.isfinite(np.abs(g) ** spec.p))[0]) if np.any(~np.isfinite(g)) else -1
        raise NumericError(f"non-finite energy (first offending collocation index {bad})")
    return val


def energy_gradient_term(v: DiscreteFunction, spec: ProblemSpec, op: FracGradOperator, eps: float = 0.0) -> float:
    """The gradient-power piece (1/p) int A |grad_s v|^p of the energy."""
    _check_consistent(v, op)
    disc = _Discretisation(spec, op)
    return disc.flux_energy(disc.G @ v.values[op.grid.interior], eps)


def energy_linear_term(v: DiscreteFunction, spec: ProblemSpec) -> float:
    """The source pairing <f, v> (trapezoid over the domain)."""
    return float(np.dot(load_vector(spec, v.grid), v.values))


def energy_gradient(v: DiscreteFunction, spec: ProblemSpec, op: FracGradOperator, eps: float = 0.0) -> np.ndarray:
    """Nodal gradient of the (regularised) energy; exterior components are zero."""
    _check_consistent(v, op)
    if eps < 0:
        raise ParameterError("eps must be >= 0")
    disc = _Discretisation(spec, op)
    out = np.zeros(op.grid.n_nodes)
    out[op.grid.interior] = disc.gradient(v.values[op.grid.interior], eps)
    return out


@dataclass
class Solution:
    u: DiscreteFunction
    energy: float
    residual: float
    iterations: int
    grad_history: list = field(default_factory=list, repr=False)
    energy_history: list = field(default_factory=list, repr=False)
    stage_history: list = field(default_factory=list, repr=False)
    eps_used: tuple = ()
    spec: ProblemSpec | None = field(default=None, repr=False)

    def to_csv(self, path) -> None:
        spec = self.spec
        meta = [
            "p,s,L,a,n,energy,residual,iters",
            ",".join(
                f"{val:.17g}" if isinstance(val, float) else str(val)
                for val in (spec.p, spec.s, spec.L, spec.a, spec.n_cells, self.energy, self.residual, self.iterations)
            ),
        ]
        write_function_csv(path, self.u.grid, self.u, comments=meta)


def _bb_descent(disc, x, eps, tol_abs, max_iter, precond, hist, stage):
    """Barzilai-Borwein descent with Armijo backtracking on one regularised energy.

    Returns the final iterate and the number of iterations spent.  Only
    steps satisfying the Armijo condition are accepted, so the energy is
    non-increasing along the recorded history.
    """
    armijo = 1e-4
    g_col = disc.G @ x
    grad = disc.gradient(x, eps, g_col)
    gnorm = float(np.linalg.norm(grad))
    hist["grad"].append(gnorm)
    hist["energy"].append(disc.flux_energy(g_col, eps) - float(np.dot(disc.b, x)))
    hist["stage"].append(stage)
    if gnorm <= tol_abs:
        return x, 0
    direction = -precond(grad)
    alpha = 1.0 if precond is not _identity else 1.0 / max(gnorm, 1e-300)
    for it in range(1, max_iter + 1):
        slope = float(np.dot(grad, direction))
        if slope >= 0:
            direction, slope = -grad, -gnorm**2
        dg = disc.G @ direction
        db = float(np.dot(disc.b, direction))
        for _ in range(80):
            dJ = disc.flux_increment(g_col, alpha * dg, eps) - alpha * db
            if dJ <= armijo * alpha * slope:
                break
            alpha *= 0.5
        else:
            raise ConvergenceError(f"line search failed at iteration {it} (eps={eps})", history=hist)
        step = alpha * direction
        x = x + step
        g_col = g_col + alpha * dg
        if it % 50 == 0:
            g_col = disc.G @ x  # resynchronise the running product
        new_grad = disc.gradient(x, eps, g_col)
        y = new_grad - grad
        sy = float(np.dot(step, y))
        # preconditioned BB1: <s, P^-1 s>/<s, y> with P^-1 s = -alpha * grad
        ss = -alpha * float(np.dot(step, grad))
        grad = new_grad
        gnorm = float(np.linalg.norm(grad))
        hist["grad"].append(gnorm)
        hist["energy"].append(hist["energy"][-1] + dJ)
        hist["stage"].append(stage)
        if gnorm <= tol_abs:
            return x, it
        alpha = ss / sy if sy > 0 else 10.0 * alpha
        alpha = min(max(alpha, 1e-20), 1e20)
        direction = -precond(grad)
    raise ConvergenceError(f"no convergence in {max_iter} iterations (eps={eps}, |grad|={gnorm:.3e})", history=hist)


def _identity(r):
    return r


def _laplacian_preconditioner(disc):
    """Cholesky factor of the p = 2 stiffness matrix G^T W G on the interior unknowns."""
    from scipy.linalg import cho_factor, cho_solve

    K = disc.G.T @ (disc.op.weights[:, None] * disc.G)
    factor = cho_factor(K, lower=True, check_finite=False)
    return lambda r: cho_solve(factor, r, check_finite=False)


def solve_dirichlet(spec: ProblemSpec, op: FracGradOperator | None = None) -> Solution:
    """Minimise the discrete energy from the zero initial guess.

    p >= 2: BB descent on the unregularised energy until
    |grad J| <= tol * |M f|.  1 < p < 2: the same descent on the
    eps-regularised energies of the continuation schedule, warm-started,
    with the stopping rule enforced at the final eps (earlier stages stop
    at max(tol, 1e-4)).  The descent direction is preconditioned with the
    p = 2 stiffness matrix unless ``spec.precondition`` is false.
    """
    grid = spec.grid()
    op = op or assemble_frac_gradient(grid, spec.s)
    disc = _Discretisation(spec, op)
    bnorm = float(np.linalg.norm(disc.b))
    hist = {"grad": [], "energy": [], "stage": []}
    if bnorm == 0.0:
        u = DiscreteFunction.zeros(grid)
        return Solution(u, 0.0, 0.0, 0, [0.0], [0.0], [0], (), spec)
    precond = _laplacian_preconditioner(disc) if spec.precondition else _identity
    schedule = (0.0,) if spec.p >= 2 else tuple(spec.eps_schedule)
    if not schedule:
        raise ParameterError("1 < p < 2 needs a nonempty eps schedule")
    x = np.zeros(int(grid.interior.sum()))
    total = 0
    for stage, eps in enumerate(schedule):
        final = stage == len(schedule) - 1
        tol = spec.tol if final else max(spec.tol, 1e-4)
        x, its = _bb_descent(disc, x, eps, tol * bnorm, spec.max_iter - total, precond, hist, stage)
        total += its
        log.debug("stage eps=%g finished after %d iterations", eps, its)
    u = DiscreteFunction.from_interior(grid, x)
    eps_final = schedule[-1]
    return Solution(
        u=u,
        energy=disc.energy(x, 0.0),
        residual=_residual(disc, x, eps_final),
        iterations=total,
        grad_history=hist["grad"],
        energy_history=hist["energy"],
        stage_history=hist["stage"],
        eps_used=tuple(e for e in schedule if e > 0),
        spec=spec,
    )


def _residual(disc, x, eps=0.0):
    bnorm = float(np.linalg.norm(disc.b))
    r = float(np.linalg.norm(disc.gradient(x, eps)))
    if bnorm == 0.0:
        if r == 0.0:
            return 0.0
        raise ParameterError("weak residual undefined: zero source with nonzero flux")
    return r / bnorm


def weak_residual(u: DiscreteFunction, spec: ProblemSpec, op: FracGradOperator, eps: float = 0.0) -> float:
    """|G^T[W A |Gu|^(p-2) Gu] - M f| / |M f| over the interior unknowns.

    Unregularised by default; for p < 2 with a vanishing gradient sample,
    pass the final eps of the continuation.
    """
    _check_consistent(u, op)
    disc = _Discretisation(spec, op)
    return _residual(disc, u.values[op.grid.interior], eps)


def dense_linear_solution(spec: ProblemSpec, op: FracGradOperator | None = None) -> DiscreteFunction:
    """p = 2 minimiser from a dense symmetric solve of G^T W A G u = M f."""
    from scipy.linalg import solve

    if spec.p != 2:
        raise ParameterError("the dense linear solve applies to p = 2 only")
    grid = spec.grid()
    op = op or assemble_frac_gradient(grid, spec.s)
    disc = _Discretisation(spec, op)
    K = disc.G.T @ (disc.WA[:, None] * disc.G)
    return DiscreteFunction.from_interior(grid, solve(K, disc.b, assume_a="pos"))


@dataclass(frozen=True)
class StabilityRow:
    lam: float
    norm: float
    ratio: float
    expected: float
    passed: bool


def stability_check(spec: ProblemSpec, scalings, rtol: float = 1e-3) -> list[StabilityRow]:
    """Compare |grad_s u_lam|_p with lam^(1/(p-1)) |grad_s u_1|_p."""
    if any(lam <= 0 for lam in scalings):
        raise ParameterError("scalings must be positive")
    op = assemble_frac_gradient(spec.grid(), spec.s)

    def norm(sol):
        g = op.matrix @ sol.u.values
        return float(np.dot(op.weights, np.abs(g) ** spec.p) ** (1 / spec.p))

    base = norm(solve_dirichlet(spec, op))
    rows = []
    for lam in scalings:
        n = base if lam == 1 else norm(solve_dirichlet(spec.scaled(lam), op))
        ratio = n / base if base else float("nan")
        expected = lam ** (1 / (spec.p - 1))
        rows.append(StabilityRow(lam, n, ratio, expected, abs(ratio - expected) <= rtol * expected))
    return rows


def regularity_modulus(
    v: DiscreteFunction,
    spec: ProblemSpec,
    x0: float,
    rho: float,
    sigma: float,
    op: FracGradOperator | None = None,
    steps=None,
) -> float:
    """max over admissible h != 0 of |J(T_h v) - J(v)| / |h|^sigma.

    ``steps`` restricts the supremum to a subset of the admissible
    directions; the default is the full admissible set at (x0, rho).
    """
    if not (0 < sigma <= 1):
        raise ParameterError(f"sigma must lie in (0, 1], got {sigma!r}")
    grid = v.grid
    op = op or assemble_frac_gradient(grid, spec.s)
    disc = _Discretisation(spec, op)
    cutoff = make_cutoff(x0, rho, grid)
    admissible = admissible_directions(grid, x0, rho).steps
    hs = admissible if steps is None else np.asarray(steps, dtype=float)
    hs = hs[hs != 0]
    if hs.size == 0:
        raise GeometryError(f"no nonzero admissible direction at x0={x0!r}, rho={rho!r}")
    x = v.values[grid.interior]
    g = disc.G @ x
    best = 0.0
    for h in hs:
        th = localized_translate(v, float(h), cutoff).values[grid.interior]
        dx_ = th - x
        dJ = disc.flux_increment(g, disc.G @ dx_, 0.0) - float(np.dot(disc.b, dx_))
        best = max(best, abs(dJ) / abs(h) ** sigma)
    return best


def gradient_lp_norm(u: DiscreteFunction, op: FracGradOperator, p: float) -> float:
    """|grad_s u|_{L^p(R)} with the collocation quadrature."""
    g = op.matrix @ u.values
    return float(np.dot(op.weights, np.abs(g) ** p) ** (1 / p))


__all__ = [
    "ProblemSpec",
    "Solution",
    "energy",
    "energy_gradient",
    "energy_gradient_term",
    "energy_linear_term",
    "solve_dirichlet",
    "weak_residual",
    "dense_linear_solution",
    "stability_check",
    "regularity_modulus",
    "gradient_lp_norm",
    "lp_norm",
]
