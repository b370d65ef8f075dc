"""Riesz fractional gradient and divergence for piecewise-linear data in 1-D.

For a continuous piecewise-linear v with compact support, integrating the
defining singular integral by parts gives

    grad_s v(x) = (mu/s) * sum_cells slope_c * int_cell |x - y|^(-s) dy,

and every cell integral has the antiderivative sgn(t)|t|^(1-s)/(1-s).
Collecting the two cells that touch node j, the matrix entry for a
collocation point x is a centred second difference of that antiderivative,
so the operator is exact (no quadrature) for the discrete trial space at
any collocation point.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import ConfigurationError, ParameterError
from .grid import DiscreteFunction, Grid

# beyond this many cells from the node, the second difference of the
# antiderivative is evaluated from its asymptotic series (cancellation-free)
_FAR_CELLS = 32.0
# geometric grading of far-field collocation points beyond the window
_TAIL_RATIO = 1.05
_TAIL_EXTENT = 1.0e4


def mu(N: int, s: float) -> float:
    """Normalisation constant 2^s Gamma((N+s+1)/2) / (pi^(N/2) Gamma((1-s)/2))."""
    if int(N) != N or N < 1:
        raise ParameterError(f"dimension N must be a positive integer, got {N!r}")
    if not (0.0 < s < 1.0):
        raise ParameterError(f"order s must lie in (0, 1), got {s!r}")
    return 2.0**s * math.gamma((N + s + 1) / 2) / (math.pi ** (N / 2) * math.gamma((1 - s) / 2))


def _kernel_weights(tau: np.ndarray, s: float) -> np.ndarray:
    """(2F(tau) - F(tau-1) - F(tau+1)) / (s(1-s)) with F(t) = sgn(t)|t|^(1-s).

    Odd in tau by construction: computed on |tau| and re-signed.
    """
    t = np.abs(np.asarray(tau, dtype=float))
    out = np.empty_like(t)
    far = t > _FAR_CELLS
    near = ~far
    tn = t[near]
    e = 1.0 - s
    F = lambda z: np.sign(z) * np.abs(z) ** e
    out[near] = (2.0 * F(tn) - F(tn - 1.0) - F(tn + 1.0)) / (s * e)
    tf = t[far]
    r = 1.0 / (tf * tf)
    c1 = (s + 1) * (s + 2) / 12.0
    c2 = c1 * (s + 3) * (s + 4) / 30.0
    c3 = c2 * (s + 5) * (s + 6) / 56.0
    out[far] = tf ** (-s - 1.0) * (1.0 + r * (c1 + r * (c2 + r * c3)))
    return np.sign(tau) * out


def _trapezoid_on_points(x: np.ndarray) -> np.ndarray:
    w = np.zeros_like(x)
    d = np.diff(x)
    w[:-1] += 0.5 * d
    w[1:] += 0.5 * d
    return w


def _tail_points(L: float) -> np.ndarray:
    k = int(math.ceil(math.log(_TAIL_EXTENT) / math.log(_TAIL_RATIO)))
    return L * _TAIL_RATIO ** np.arange(1, k + 1)


@dataclass(frozen=True, eq=False)
class FracGradOperator:
    """Dense realisation of grad_s on a grid.

    Rows are collocation points in increasing order: every node and cell
    midpoint of the window, followed (when far_field is set) by
    geometrically graded points on both sides out to 1e4*L.  ``weights`` is
    the trapezoid rule on these points and is what the energy integrals use.
    """

    grid: Grid
    s: float
    mu: float
    points: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)
    matrix: np.ndarray = field(repr=False)
    node_rows: np.ndarray = field(repr=False)
    far_field: bool = True

    @property
    def window_rows(self) -> np.ndarray:
        return np.flatnonzero(np.abs(self.points) <= self.grid.L * (1 + 1e-12))

    def row_matrix(self, x_eval) -> np.ndarray:
        """Matrix rows of grad_s at arbitrary points (same closed form)."""
        return _rows(self.grid, self.s, np.atleast_1d(np.asarray(x_eval, dtype=float)))


def _rows(grid: Grid, s: float, x_eval: np.ndarray) -> np.ndarray:
    tau = (grid.x[None, :] - x_eval[:, None]) / grid.dx
    return (mu(1, s) * grid.dx ** (-s)) * _kernel_weights(tau, s)


def _check_order(s):
    if not (0.0 < s < 1.0):
        raise ParameterError(f"order s must lie in (0, 1), got {s!r}")


@lru_cache(maxsize=4)
def assemble_frac_gradient(grid: Grid, s: float, far_field: bool = True) -> FracGradOperator:
    """Assemble grad_s on the window half-grid (plus far-field rows).

    The half-grid block is Toeplitz in 2*(x_j - x_e)/dx, so its entries
    come from a single vector of 4n+1 kernel weights.  Results are cached
    per (grid, s, far_field); the operator is read-only.
    """
    _check_order(s)
    if grid.n_cells < 8:
        raise ConfigurationError(f"grid too small for assembly: n_cells={grid.n_cells} < 8")
    n = grid.n_cells
    scale = mu(1, s) * grid.dx ** (-s)
    half_index = np.arange(-2 * n, 2 * n + 1)
    table = scale * _kernel_weights(half_index / 2.0, s)
    k = np.arange(2 * n + 1)
    j = np.arange(n + 1)
    block = table[(2 * j[None, :] - k[:, None]) + 2 * n]
    half_pts = 0.5 * grid.dx * (k - n)
    points, matrix, node_rows = half_pts, block, 2 * j

    if far_field:
        tail = _tail_points(grid.L)
        left = -tail[::-1]
        points = np.concatenate([left, points, tail])
        matrix = np.vstack([_rows(grid, s, left), matrix, _rows(grid, s, tail)])
        node_rows = node_rows + left.size
    weights = _trapezoid_on_points(points)
    for arr in (points, weights, matrix, node_rows):
        arr.flags.writeable = False
    return FracGradOperator(grid, float(s), mu(1, s), points, weights, matrix, node_rows, far_field)


def _values(v, grid: Grid) -> np.ndarray:
    if isinstance(v, DiscreteFunction):
        if v.grid != grid:
            raise ParameterError("function and operator live on different grids")
        return v.values
    vals = np.asarray(v, dtype=float)
    if vals.shape != (grid.n_nodes,):
        raise ParameterError(f"expected {grid.n_nodes} nodal values, got shape {vals.shape}")
    return vals


def apply_frac_gradient(op: FracGradOperator, v, at: str = "nodes") -> np.ndarray:
    """grad_s v at the window nodes (default) or at every collocation point."""
    vals = _values(v, op.grid)
    if at == "nodes":
        return op.matrix[op.node_rows] @ vals
    if at == "collocation":
        return op.matrix @ vals
    raise ParameterError(f"unknown evaluation set {at!r}")


def apply_frac_divergence(op: FracGradOperator, Phi) -> np.ndarray:
    """Quadrature-weighted adjoint of grad_s, with the sign of integration by parts.

    Phi is sampled at the collocation points.  The result w satisfies
    sum_j m_j w_j v_j = -sum_r W_r Phi_r (G v)_r for every nodal v, where
    m are the trapezoid node weights of the window and W the collocation
    weights.
    """
    Phi = np.asarray(Phi, dtype=float)
    if Phi.shape != op.points.shape:
        raise ParameterError(f"expected {op.points.size} collocation samples, got shape {Phi.shape}")
    m = op.grid.trapezoid_weights()
    return -(op.matrix.T @ (op.weights * Phi)) / m


def assemble_frac_divergence_direct(grid: Grid, s: float) -> np.ndarray:
    """div_s at the window nodes, assembled from the defining integral cell by cell.

    Independent of the integration-by-parts route used for the gradient:
    for node k and hat function j = k + m,

        entry = mu * dx^(-s) * sgn(m) * int_0^inf hat(tau - |m|) tau^(-1-s) dtau,

    evaluated on the two cells of the hat with the antiderivatives
    -tau^(-s)/s (of tau^(-1-s)) and tau^(1-s)/(1-s) (of tau^(-s)).  The
    diagonal vanishes because the kernel is odd and the hat even.
    """
    _check_order(s)
    n = grid.n_cells
    m = np.arange(1, n + 1, dtype=float)
    P0 = lambda t: -np.power(t, -s) / s
    P1 = lambda t: np.power(t, 1.0 - s) / (1.0 - s)
    # rising cell [m-1, m], hat = tau - (m - 1)
    rising = P1(m) - P1(m - 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        rising -= (m - 1.0) * (P0(m) - np.where(m > 1, P0(m - 1.0), 0.0))
    # falling cell [m, m+1], hat = (m + 1) - tau
    falling = (m + 1.0) * (P0(m + 1.0) - P0(m)) - (P1(m + 1.0) - P1(m))
    psi = mu(1, s) * grid.dx ** (-s) * (rising + falling)
    full = np.concatenate([-psi[::-1], [0.0], psi])
    k = np.arange(n + 1)
    return full[(k[None, :] - k[:, None]) + n]


def quadrature_gradient(f, x: float, s: float, breakpoints=(), reach: float = np.inf) -> float:
    """Adaptive-quadrature value of mu * int_0^inf (f(x+t) - f(x-t)) t^(-1-s) dt.

    Used as an oracle for the closed-form assembly.  ``breakpoints`` are
    abscissae where f has kinks; they split the t-integral so QUADPACK sees
    smooth pieces.  ``reach`` bounds the support radius of f around x.
    """
    from scipy.integrate import IntegrationWarning, quad

    cuts = sorted({abs(b - x) for b in breakpoints if abs(b - x) > 0})
    cuts = [c for c in cuts if c < reach]
    integrand = lambda t: (f(x + t) - f(x - t)) * t ** (-1.0 - s)
    total, lo = 0.0, 0.0
    with warnings.catch_warnings():
        # QUADPACK flags roundoff once it is near machine precision on a piece
        warnings.simplefilter("ignore", IntegrationWarning)
        for c in cuts + ([reach] if np.isfinite(reach) else []):
            total += quad(integrand, lo, c, limit=400, epsabs=0, epsrel=1e-12)[0]
            lo = c
        if not np.isfinite(reach):
            total += quad(integrand, lo, np.inf, limit=400)[0]
    return mu(1, s) * total


@dataclass(frozen=True)
class DualityResult:
    defect: float
    lhs: float
    rhs: float
    boundary_warning: bool


def duality_defect(grid: Grid, s: float, phi, Phi, floor: float = 1e-300) -> DualityResult:
    """Relative defect of int phi div_s Phi + int Phi grad_s phi = 0.

    div_s comes from the direct cell-wise assembly and grad_s from the
    integration-by-parts assembly, so the check is not an identity of one
    matrix with its own transpose.  A warning flag is set when either
    function is nonzero on the outermost window nodes, where truncation of
    the window contaminates the comparison.
    """
    phi = _values(phi, grid)
    Phi = _values(Phi, grid)
    op = assemble_frac_gradient(grid, s)
    m = grid.trapezoid_weights()
    div = assemble_frac_divergence_direct(grid, s) @ Phi
    grad = apply_frac_gradient(op, phi)
    lhs = float(np.dot(m, phi * div))
    rhs = float(np.dot(m, Phi * grad))
    scale = math.sqrt(np.dot(m, phi**2) * np.dot(m, Phi**2))
    edge = lambda u: bool(u[0] != 0.0 or u[1] != 0.0 or u[-1] != 0.0 or u[-2] != 0.0)
    return DualityResult(abs(lhs + rhs) / (scale + floor), lhs, rhs, edge(phi) or edge(Phi))


def pointwise_bound_ratio(phi, s: float, sup_norm: float, lipschitz: float) -> float:
    """Empirical constant of |grad_s phi| <= C ((1-s)/s)^(1-s) |phi|_inf^(1-s) |phi'|_inf^s.

    sup_norm and lipschitz come from the analytic profile.  The maximum of
    |grad_s phi| is taken over the window collocation points.  A constant
    profile gives 0.
    """
    _check_order(s)
    if sup_norm == 0.0 or lipschitz == 0.0:
        return 0.0
    op = assemble_frac_gradient(phi.grid, s)
    g = apply_frac_gradient(op, phi, at="collocation")[op.window_rows]
    denom = ((1 - s) / s) ** (1 - s) * sup_norm ** (1 - s) * lipschitz**s
    return float(np.max(np.abs(g)) / denom)


def dump_operator_csv(op: FracGradOperator, path) -> None:
    """Debug dump of the node rows as `row,col,value` (only for n_cells <= 64)."""
    if op.grid.n_cells > 64:
        raise ParameterError("operator dump is limited to n_cells <= 64")
    G = op.matrix[op.node_rows]
    with open(path, "w") as fh:
        fh.write("row,col,value\n")
        for r in range(G.shape[0]):
            for c in range(G.shape[1]):
                fh.write(f"{r},{c},{G[r, c]:.17g}\n")
