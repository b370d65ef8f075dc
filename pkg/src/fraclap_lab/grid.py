"""Uniform 1-D lattices, parallel-set regions and discrete functions.

Functions are represented by their nodal values on a symmetric window
[-L, L] and interpreted as continuous piecewise-linear interpolants.  The
domain is the open interval (-a, a); every node with |x| >= a belongs to
the exterior, where members of the zero-exterior-trace space vanish.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property

import numpy as np

from .errors import ConfigurationError, GeometryError, NumericError, ParameterError

_SNAP = 1e-9


@dataclass(frozen=True)
class Grid:
    """Uniform lattice x_j = -L + j*dx, j = 0..n_cells, on the window [-L, L]."""

    L: float
    a: float
    n_cells: int

    @property
    def dx(self) -> float:
        return 2.0 * self.L / self.n_cells

    @cached_property
    def x(self) -> np.ndarray:
        # built from signed offsets so that x[n - j] == -x[j] bitwise
        x = self.dx * (np.arange(self.n_cells + 1) - self.n_cells // 2)
        x.flags.writeable = False
        return x

    @property
    def n_nodes(self) -> int:
        return self.n_cells + 1

    @property
    def i_left(self) -> int:
        """Index of the node at x = -a."""
        return int(round((self.L - self.a) / self.dx))

    @property
    def i_right(self) -> int:
        """Index of the node at x = +a."""
        return self.n_cells - self.i_left

    @cached_property
    def interior(self) -> np.ndarray:
        """Boolean mask of the nodes strictly inside (-a, a)."""
        j = np.arange(self.n_nodes)
        mask = (j > self.i_left) & (j < self.i_right)
        mask.flags.writeable = False
        return mask

    def steps(self, h: float) -> int:
        """Convert a length to a signed number of lattice steps; h must be a node multiple."""
        m = h / self.dx
        k = int(round(m))
        if abs(m - k) > _SNAP * max(1.0, abs(m)):
            raise ParameterError(f"h={h!r} is not a multiple of dx={self.dx!r}")
        return k

    def trapezoid_weights(self, lo: int = 0, hi: int | None = None) -> np.ndarray:
        """Full-length weight vector of the trapezoid rule on nodes lo..hi."""
        hi = self.n_cells if hi is None else hi
        w = np.zeros(self.n_nodes)
        if hi > lo:
            w[lo:hi + 1] = self.dx
            w[lo] = w[hi] = 0.5 * self.dx
        return w


def _compatible_sizes(L: float, a: float, n_cells: int) -> tuple[int, int]:
    ratio = (Fraction(a).limit_denominator(10**6) / (2 * Fraction(L).limit_denominator(10**6)))
    step = ratio.denominator * 2 // math.gcd(ratio.denominator, 2)
    nearest = max(step, -(-n_cells // step) * step)
    return step, nearest


def build_grid(L: float, a: float, n_cells: int) -> Grid:
    """Build a grid whose nodes include the domain endpoints +-a.

    Raises ConfigurationError when a/dx is not an integer, naming the
    smallest compatible number of cells (and the nearest one above the
    request).
    """
    if not (L > a > 0):
        raise ConfigurationError(f"need L > a > 0, got L={L!r}, a={a!r}")
    if int(n_cells) != n_cells or n_cells <= 0 or n_cells % 2:
        raise ConfigurationError(f"n_cells must be a positive even integer, got {n_cells!r}")
    n_cells = int(n_cells)
    dx = 2.0 * L / n_cells
    k = a / dx
    if abs(k - round(k)) > _SNAP * max(1.0, k):
        smallest, nearest = _compatible_sizes(L, a, n_cells)
        raise ConfigurationError(
            f"a={a!r} does not fall on a node for L={L!r}, n_cells={n_cells} (dx={dx!r}); "
            f"smallest compatible n_cells is {smallest}, nearest above the request is {nearest}"
        )
    return Grid(float(L), float(a), n_cells)


@dataclass(frozen=True)
class Region:
    """A closed node range lo..hi standing for the interval (left, right)."""

    kind: str
    lam: float
    grid: Grid = field(repr=False)
    lo: int
    hi: int

    @property
    def left(self) -> float:
        return float(self.grid.x[self.lo])

    @property
    def right(self) -> float:
        return float(self.grid.x[self.hi])

    @property
    def indices(self) -> np.ndarray:
        return np.arange(self.lo, self.hi + 1)

    def weights(self) -> np.ndarray:
        return self.grid.trapezoid_weights(self.lo, self.hi)

    def __contains__(self, other: "Region") -> bool:
        return self.lo <= other.lo and other.hi <= self.hi


def inner_region(grid: Grid, lam: float) -> Region:
    """Inner parallel set {x in (-a, a): dist(x, boundary) > lam}, snapped inward to nodes."""
    if lam < 0:
        raise ParameterError(f"lambda must be >= 0, got {lam!r}")
    if lam >= grid.a:
        raise GeometryError(f"inner region with lambda={lam!r} >= a={grid.a!r} is empty")
    shift = math.ceil(lam / grid.dx - _SNAP)
    lo = grid.i_left + shift
    hi = grid.i_right - shift
    if hi <= lo:
        raise GeometryError(f"inner region with lambda={lam!r} contains no cell")
    return Region("interior" if lam == 0 else "inner", float(lam), grid, lo, hi)


def outer_region(grid: Grid, lam: float) -> Region:
    """Dilation {x: dist(x, domain) < lam} intersected with the window, snapped outward."""
    if lam < 0:
        raise ParameterError(f"lambda must be >= 0, got {lam!r}")
    shift = math.ceil(lam / grid.dx - _SNAP)
    lo = max(0, grid.i_left - shift)
    hi = min(grid.n_cells, grid.i_right + shift)
    return Region("interior" if lam == 0 else "dilation", float(lam), grid, lo, hi)


def interval_region(grid: Grid, left: float, right: float) -> Region:
    lo = max(0, math.ceil((left + grid.L) / grid.dx - _SNAP))
    hi = min(grid.n_cells, math.floor((right + grid.L) / grid.dx + _SNAP))
    if hi < lo:
        raise GeometryError(f"interval ({left!r}, {right!r}) contains no node")
    return Region("interval", 0.0, grid, lo, hi)


class DiscreteFunction:
    """Nodal values of a member of the zero-exterior-trace space.

    The values array is copied and frozen on construction.  Arithmetic
    with other discrete functions on the same grid, and scaling by real
    numbers, stays inside the space.
    """

    __slots__ = ("grid", "values")

    def __init__(self, grid: Grid, values):
        vals = np.array(values, dtype=float)
        if vals.shape != (grid.n_nodes,):
            raise ParameterError(f"expected {grid.n_nodes} nodal values, got shape {vals.shape}")
        if not np.all(np.isfinite(vals)):
            bad = int(np.flatnonzero(~np.isfinite(vals))[0])
            raise NumericError(f"non-finite nodal value at index {bad} (x={grid.x[bad]!r})")
        outside = vals[~grid.interior]
        if np.any(outside != 0.0):
            bad = int(np.flatnonzero(~grid.interior)[np.flatnonzero(outside)[0]])
            raise ParameterError(f"nonzero exterior value {vals[bad]!r} at x={grid.x[bad]!r}")
        vals.flags.writeable = False
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", vals)

    def __setattr__(self, name, value):
        raise AttributeError("DiscreteFunction is immutable")

    def __repr__(self):
        return f"DiscreteFunction(n_cells={self.grid.n_cells}, max|v|={np.max(np.abs(self.values)):.6g})"

    def _check(self, other):
        if other.grid != self.grid:
            raise ParameterError("discrete functions live on different grids")

    def __add__(self, other):
        self._check(other)
        return DiscreteFunction(self.grid, self.values + other.values)

    def __sub__(self, other):
        self._check(other)
        return DiscreteFunction(self.grid, self.values - other.values)

    def __mul__(self, c):
        return DiscreteFunction(self.grid, float(c) * self.values)

    __rmul__ = __mul__

    def __neg__(self):
        return DiscreteFunction(self.grid, -self.values)

    @classmethod
    def zeros(cls, grid: Grid) -> "DiscreteFunction":
        return cls(grid, np.zeros(grid.n_nodes))

    @classmethod
    def from_interior(cls, grid: Grid, interior_values) -> "DiscreteFunction":
        vals = np.zeros(grid.n_nodes)
        vals[grid.interior] = interior_values
        return cls(grid, vals)


def sample(f_spec, grid: Grid, enforce_exterior_zero: bool = True):
    """Evaluate a scalar field at the nodes.

    f_spec is a vectorized callable or a constant.  With the flag set the
    exterior nodes are zeroed and a DiscreteFunction is returned;
    otherwise the raw samples come back as an array.
    """
    if callable(f_spec):
        vals = np.asarray(f_spec(grid.x), dtype=float)
        if vals.ndim == 0:
            vals = np.full(grid.n_nodes, float(vals))
    else:
        vals = np.full(grid.n_nodes, float(f_spec))
    if not np.all(np.isfinite(vals)):
        bad = int(np.flatnonzero(~np.isfinite(vals))[0])
        raise NumericError(f"non-finite sample at x={grid.x[bad]!r}")
    if not enforce_exterior_zero:
        return vals
    vals = np.where(grid.interior, vals, 0.0)
    return DiscreteFunction(grid, vals)


def lp_norm(v, p: float, region: Region | None = None) -> float:
    """Trapezoid L^p norm of nodal data over a region (default: the whole window).

    The rule integrates the nodal values of |v|^p, so it is exact only
    when |v|^p is itself piecewise linear; elsewhere the error is O(dx^2).
    """
    if p < 1:
        raise ParameterError(f"p must be >= 1, got {p!r}")
    if isinstance(v, DiscreteFunction):
        grid, vals = v.grid, v.values
    else:
        if region is None:
            raise ParameterError("raw samples need an explicit region")
        grid, vals = region.grid, np.asarray(v, dtype=float)
    if region is None:
        w = grid.trapezoid_weights()
    else:
        if region.grid != grid:
            raise ParameterError("region belongs to a different grid")
        w = region.weights()
    return float(np.dot(w, np.abs(vals) ** p) ** (1.0 / p))


def shift_nodes(values: np.ndarray, m: int) -> np.ndarray:
    """Return out[j] = values[j + m], zero where j + m leaves the window."""
    values = np.asarray(values)
    out = np.zeros_like(values)
    n = values.shape[0]
    if m >= 0:
        out[:n - m] = values[m:]
    else:
        out[-m:] = values[:n + m]
    return out


def write_function_csv(path, grid: Grid, values, comments=()) -> None:
    """Write `x,u` rows for every window node with 17 significant digits."""
    values = values.values if isinstance(values, DiscreteFunction) else np.asarray(values)
    with open(path, "w", newline="") as fh:
        for line in comments:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "u"])
        for xj, uj in zip(grid.x, values):
            w.writerow([f"{xj:.17g}", f"{uj:.17g}"])


def read_function_csv(path):
    """Read an `x,u` CSV; returns (x, u, comment_lines)."""
    comments, rows = [], []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                comments.append(line[1:].strip())
                continue
            rows.append(line)
    if not rows or rows[0].replace(" ", "") != "x,u":
        raise ParameterError(f"{path}: expected header 'x,u'")
    data = np.array([[float(t) for t in r.split(",")] for r in rows[1:]])
    return data[:, 0], data[:, 1], comments


def grid_from_nodes(x: np.ndarray, a: float) -> Grid:
    """Recover the grid of a full-window node list."""
    n_cells = len(x) - 1
    L = float(-x[0])
    grid = build_grid(L, a, n_cells)
    if not np.allclose(grid.x, x, rtol=0, atol=1e-12 * L):
        raise ParameterError("node coordinates do not form a symmetric uniform lattice")
    return grid
