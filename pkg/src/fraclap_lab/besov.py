"""Second-difference Besov seminorms and log-log regularity exponents.

The measured function lives on the closed domain [-a, a]: only the nodes
i_left..i_right are read, and the values at x = +-a are its boundary
trace.  A DiscreteFunction therefore has trace 0; data with a nonzero
trace (say |x| restricted to the domain) are passed as raw nodal arrays
together with their grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import MeasurementError, ParameterError
from .grid import DiscreteFunction, Grid, shift_nodes


def _grid_values(v, grid: Grid | None) -> tuple[Grid, np.ndarray]:
    if isinstance(v, DiscreteFunction):
        if grid is not None and grid != v.grid:
            raise ParameterError("function and grid do not match")
        return v.grid, v.values
    if grid is None:
        raise ParameterError("raw nodal values need their grid")
    vals = np.asarray(v, dtype=float)
    if vals.shape != (grid.n_nodes,):
        raise ParameterError(f"expected {grid.n_nodes} nodal values, got shape {vals.shape}")
    return grid, vals


def _steps(grid: Grid, h: float) -> int:
    m = grid.steps(h)
    if m <= 0:
        raise ParameterError(f"h must be positive, got {h!r}")
    if m * grid.dx >= grid.a:
        raise ParameterError(f"h={h!r} must be smaller than a={grid.a!r}")
    return m


def second_difference(v, h: float, grid: Grid | None = None) -> np.ndarray:
    """Nodal v(x+h) - 2v(x) + v(x-h); exact re-indexing for node-multiple h."""
    grid, vals = _grid_values(v, grid)
    m = _steps(grid, h)
    return shift_nodes(vals, m) - 2.0 * vals + shift_nodes(vals, -m)


def second_difference_norm(v, p: float, h: float, grid: Grid | None = None) -> float:
    """|v_h - 2v + v_{-h}|_{L^p(Omega_h)}, Omega_h = (-a+h, a-h).

    The trapezoid rule runs over the nodes of the closure [-a+h, a-h], so
    the stencil reaches the boundary trace at +-a but nothing beyond.
    Using only the nodes strictly inside would drop an O(dx/h) share of
    D(h)^p, which for boundary-singular data sits next to the boundary.
    """
    if p < 1:
        raise ParameterError(f"p must be >= 1, got {p!r}")
    grid, vals = _grid_values(v, grid)
    m = _steps(grid, h)
    lo, hi = grid.i_left + m, grid.i_right - m
    if hi <= lo:
        return 0.0
    d2 = second_difference(vals, h, grid)
    w = grid.trapezoid_weights(lo, hi)
    return float(np.dot(w, np.abs(d2) ** p) ** (1.0 / p))


def besov_seminorm(v, p: float, q: float, sigma: float, rho_ball: float, grid: Grid | None = None) -> float:
    """Difference-quotient Besov seminorm over steps 4 dx <= |h| <= rho_ball.

    Steps below 4 dx are resolution-limited and are left out.

    q < inf: (q sigma (2 - sigma) * 2 sum_h dx D(h)^q / h^(1 + q sigma))^(1/q),
    the factor 2 folding the negative steps onto the positive ones.
    q = inf: max_h D(h) / h^sigma.
    """
    if not (0 < sigma < 2):
        raise ParameterError(f"sigma must lie in (0, 2), got {sigma!r}")
    if not (q >= 1):
        raise ParameterError(f"q must be >= 1, got {q!r}")
    grid, vals = _grid_values(v, grid)
    if rho_ball >= grid.a:
        raise ParameterError(f"rho_ball={rho_ball!r} must be smaller than a={grid.a!r}")
    mmax = int(math.floor(rho_ball / grid.dx + 1e-9))
    hs = grid.dx * np.arange(4, mmax + 1)
    if hs.size == 0:
        raise ParameterError(f"rho_ball={rho_ball!r} is below 4*dx={4 * grid.dx!r}")
    D = np.array([second_difference_norm(vals, p, h, grid) for h in hs])
    if math.isinf(q):
        return float(np.max(D / hs**sigma))
    total = 2.0 * grid.dx * np.sum(D**q / hs ** (1.0 + q * sigma))
    return float((q * sigma * (2.0 - sigma) * total) ** (1.0 / q))


@dataclass
class BesovProbe:
    p: float
    h: np.ndarray = field(repr=False)
    D: np.ndarray = field(repr=False)
    h_min: float = 0.0
    h_max: float = 0.0
    slope: float | None = None
    residual: float | None = None
    npoints: int = 0
    predicted: float | None = None
    zero_floor: float = 0.0

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("h,D,logh,logD\n")
            for h, d in zip(self.h, self.D):
                logd = math.log(d) if d > 0 else float("-inf")
                fh.write(f"{h:.17g},{d:.17g},{math.log(h):.17g},{logd:.17g}\n")
            if self.slope is not None:
                fh.write(f"# fit,{self.slope:.17g},{self.residual:.17g},{self.npoints}\n")


def dyadic_steps(grid: Grid, h_min: float, h_max: float) -> np.ndarray:
    """h_max, h_max/2, ... down to max(h_min, 4 dx), all node multiples."""
    floor = max(h_min, 4.0 * grid.dx)
    hs = []
    h = h_max
    while h >= floor * (1 - 1e-12):
        m = h / grid.dx
        if abs(m - round(m)) > 1e-9 * m:
            raise ParameterError(f"dyadic step h={h!r} is not a multiple of dx={grid.dx!r}")
        hs.append(h)
        h /= 2.0
    return np.array(hs)


def probe(v, p: float, h_min: float | None = None, h_max: float | None = None,
          predicted: float | None = None, grid: Grid | None = None) -> BesovProbe:
    """Sample D(h) on the dyadic fit window (default [a/256, a/16])."""
    grid, vals = _grid_values(v, grid)
    h_min = grid.a / 256 if h_min is None else h_min
    h_max = grid.a / 16 if h_max is None else h_max
    hs = dyadic_steps(grid, h_min, h_max)
    D = np.array([second_difference_norm(vals, p, h, grid) for h in hs])
    w = grid.trapezoid_weights(grid.i_left, grid.i_right)
    vnorm = float(np.dot(w, np.abs(vals) ** p) ** (1 / p))
    return BesovProbe(p, hs, D, h_min, h_max, predicted=predicted, zero_floor=1e-14 * vnorm)


def fit_exponent(pr: BesovProbe) -> tuple[float, float]:
    """Least-squares slope of log D against log h, and the RMS residual.

    Points with D below 1e-14 |v|_p count as zero and are dropped; at least
    four usable points are required.  The probe is updated in place.
    """
    h, D = np.asarray(pr.h, float), np.asarray(pr.D, float)
    use = D > pr.zero_floor
    if np.count_nonzero(use) < 4:
        raise MeasurementError(
            f"only {int(np.count_nonzero(use))} usable probe points (need 4); refine the grid or widen the window"
        )
    X, Y = np.log(h[use]), np.log(D[use])
    A = np.vstack([X, np.ones_like(X)]).T
    (slope, icept), *_ = np.linalg.lstsq(A, Y, rcond=None)
    resid = float(np.sqrt(np.mean((Y - (slope * X + icept)) ** 2)))
    pr.slope, pr.residual, pr.npoints = float(slope), resid, int(np.count_nonzero(use))
    return pr.slope, resid
