"""Cut-offs, admissible outward steps, localized translations and the commutator."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import AdmissibilityError, ParameterError, ResolutionError
from .fracops import FracGradOperator, assemble_frac_gradient
from .grid import DiscreteFunction, Grid, shift_nodes

QUINTIC_LIPSCHITZ = 15.0 / 8.0
_ADMISSIBILITY_T = (0.0, 0.25, 0.5, 0.75, 1.0)


def smoothstep5(t):
    """6t^5 - 15t^4 + 10t^3 clipped to [0, 1]; C^2 with maximal slope 15/8 at t = 1/2."""
    t = np.clip(t, 0.0, 1.0)
    return t * t * t * (t * (6.0 * t - 15.0) + 10.0)


def cutoff_profile(x, x0: float, rho: float):
    """1 on |x - x0| <= rho, 0 on |x - x0| >= 2 rho, quintic ramp in between."""
    r = np.abs(np.asarray(x, dtype=float) - x0)
    return 1.0 - smoothstep5((r - rho) / rho)


@dataclass(frozen=True)
class Cutoff:
    x0: float
    rho: float
    grid: Grid = field(repr=False)
    values: np.ndarray = field(repr=False)

    @property
    def lipschitz(self) -> float:
        return QUINTIC_LIPSCHITZ / self.rho

    @property
    def sup_norm(self) -> float:
        return 1.0

    @property
    def w1inf_norm(self) -> float:
        """max(|phi|_inf, |phi'|_inf)."""
        return max(self.sup_norm, self.lipschitz)

    def __call__(self, x):
        return cutoff_profile(x, self.x0, self.rho)


def make_cutoff(x0: float, rho: float, grid: Grid) -> Cutoff:
    if rho < 4 * grid.dx * (1 - 1e-12):
        raise ResolutionError(f"cut-off radius rho={rho!r} is below 4*dx={4 * grid.dx!r}")
    vals = cutoff_profile(grid.x, x0, rho)
    vals.flags.writeable = False
    return Cutoff(float(x0), float(rho), grid, vals)


@dataclass(frozen=True)
class DirectionSet:
    x0: float
    rho: float
    steps: np.ndarray = field(repr=False)

    def __contains__(self, h) -> bool:
        return bool(np.any(np.isclose(self.steps, h, rtol=0, atol=1e-12 * max(1.0, abs(h)))))

    @property
    def signs(self) -> set:
        """Signs of the nonzero admissible steps (the 1-D remnant of a cone)."""
        return {int(np.sign(h)) for h in self.steps if h != 0}


def admissible_directions(grid: Grid, x0: float, rho: float) -> DirectionSet:
    """Node-multiple steps h, |h| < rho, that keep D_2rho(x0) minus the domain in the exterior.

    The inclusion (D_2rho(x0) \\ Omega) + t h in Omega^c is checked on the
    exterior nodes of D_2rho(x0) for t in {0, 1/4, 1/2, 3/4, 1}.
    """
    if rho < 4 * grid.dx * (1 - 1e-12):
        raise ResolutionError(f"rho={rho!r} is below 4*dx={4 * grid.dx!r}")
    tol = 1e-12 * grid.L
    x = grid.x
    excluded = x[(np.abs(x - x0) < 2 * rho) & ~grid.interior]
    mmax = int(np.ceil(rho / grid.dx - 1e-9)) - 1
    keep = []
    for m in range(-mmax, mmax + 1):
        h = m * grid.dx
        ok = all(np.all(np.abs(excluded + t * h) >= grid.a - tol) for t in _ADMISSIBILITY_T)
        if ok:
            keep.append(h)
    steps = np.array(keep)
    steps.flags.writeable = False
    return DirectionSet(float(x0), float(rho), steps)


def localized_translate(v: DiscreteFunction, h: float, cutoff: Cutoff, check_trace: bool = True):
    """T_h v = phi v_h + (1 - phi) v at the nodes, with v_h(x) = v(x + h).

    With check_trace (default) h must be admissible for the cut-off's
    (x0, rho) and a DiscreteFunction is returned; otherwise the raw nodal
    array is returned and may violate the exterior condition.
    """
    grid = v.grid
    m = grid.steps(h)
    phi = cutoff.values
    out = phi * shift_nodes(v.values, m) + (1.0 - phi) * v.values
    if m == 0:
        out = np.array(v.values)
    if not check_trace:
        return out
    if h not in admissible_directions(grid, cutoff.x0, cutoff.rho):
        raise AdmissibilityError(f"h={h!r} is not admissible at x0={cutoff.x0!r}, rho={cutoff.rho!r}")
    return DiscreteFunction(grid, out)


def _collocation_values(phi, op: FracGradOperator) -> np.ndarray:
    if callable(phi):
        return np.asarray(phi(op.points), dtype=float) * np.ones(op.points.size)
    raise ParameterError("cut-off must be callable at collocation points")


def commutator(phi, v: DiscreteFunction, h: float, s: float, op: FracGradOperator | None = None) -> np.ndarray:
    """C(x) = mu int (phi(x) - phi(y)) (v_h(y) - v(y)) sgn(x - y) |x - y|^(-1-s) dy.

    Computed at every collocation point as grad_s(phi g) - phi(x) grad_s g
    with g = v_h - v and phi g interpolated at the nodes, i.e. with the same
    closed-form cell integrals as grad_s itself.  ``phi`` needs nodal
    ``values`` and must be callable at arbitrary points.
    """
    grid = v.grid
    op = op or assemble_frac_gradient(grid, s)
    if op.grid != grid or op.s != s:
        raise ParameterError("operator does not match grid/order")
    g = shift_nodes(v.values, grid.steps(h)) - v.values
    phi_nodes = np.asarray(phi.values, dtype=float)
    return op.matrix @ (phi_nodes * g) - _collocation_values(phi, op) * (op.matrix @ g)


def translated_gradient_split(phi, v: DiscreteFunction, h: float, op: FracGradOperator):
    """The three pieces of grad_s(T_h v) = phi (grad_s v)_h + (1 - phi) grad_s v + C.

    Returns (lhs, localized_translate_of_gradient, commutator) at the
    collocation points.
    """
    grid = v.grid
    m = grid.steps(h)
    phi_nodes = np.asarray(phi.values, dtype=float)
    vh = shift_nodes(v.values, m)
    Th = phi_nodes * vh + (1.0 - phi_nodes) * v.values
    phi_c = _collocation_values(phi, op)
    lhs = op.matrix @ Th
    # (grad_s v)_h = grad_s(v_h) by translation invariance
    translated = phi_c * (op.matrix @ vh) + (1.0 - phi_c) * (op.matrix @ v.values)
    return lhs, translated, commutator(phi, v, h, op.s, op)


@dataclass(frozen=True)
class CommutatorBound:
    ratio: float
    bound: float
    commutator_norm: float
    difference_norm: float

    @property
    def holds(self) -> bool:
        return self.ratio <= self.bound


def commutator_constant(s: float, sup_norm: float, w1inf_norm: float) -> float:
    """mu(1,s) [2/(1-s) |phi|_W1inf + 2 |phi|_inf * 2/s]: near/far split at radius 1."""
    from .fracops import mu

    omega0 = 2.0
    return mu(1, s) * (omega0 / (1 - s) * w1inf_norm + 2.0 * sup_norm * omega0 / s)


def commutator_bound_ratio(phi: Cutoff, v: DiscreteFunction, h: float, s: float, p: float,
                           op: FracGradOperator | None = None) -> CommutatorBound:
    """|C|_{L^p} / |v_h - v|_{L^p} together with the explicit bound constant."""
    grid = v.grid
    op = op or assemble_frac_gradient(grid, s)
    diff = shift_nodes(v.values, grid.steps(h)) - v.values
    dnorm = float(np.dot(grid.trapezoid_weights(), np.abs(diff) ** p) ** (1 / p))
    if dnorm == 0.0:
        raise ParameterError("degenerate input: v_h = v")
    C = commutator(phi, v, h, s, op)
    cnorm = float(np.dot(op.weights, np.abs(C) ** p) ** (1 / p))
    K = commutator_constant(s, phi.sup_norm, phi.w1inf_norm)
    return CommutatorBound(cnorm / dnorm, K, cnorm, dnorm)
