import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fraclap_lab.errors import AdmissibilityError, ParameterError, ResolutionError
from fraclap_lab.fracops import assemble_frac_gradient, mu
from fraclap_lab.grid import DiscreteFunction, build_grid, sample, shift_nodes
from fraclap_lab.translations import (
    QUINTIC_LIPSCHITZ,
    admissible_directions,
    commutator,
    commutator_bound_ratio,
    commutator_constant,
    localized_translate,
    make_cutoff,
    smoothstep5,
    translated_gradient_split,
)

GRID = build_grid(4, 1, 512)


def smooth_v(grid=GRID):
    return sample(lambda x: np.clip(1 - x * x, 0, None) * (1 + 0.3 * x), grid)


class ConstantProfile:
    """Test double for a cut-off: constant value, bypassing the Cutoff invariants."""

    def __init__(self, grid, c):
        self.values = np.full(grid.n_nodes, c)
        self.c = c

    def __call__(self, x):
        return np.full(np.shape(x), self.c)


def test_smoothstep_shape():
    t = np.linspace(0, 1, 100001)
    f = smoothstep5(t)
    assert f[0] == 0 and f[-1] == 1 and np.all(np.diff(f) >= 0)
    assert np.max(np.diff(f) / np.diff(t)) == pytest.approx(QUINTIC_LIPSCHITZ, rel=1e-6)


def test_cutoff_values_and_slope():
    phi = make_cutoff(0.1, 0.25, GRID)
    assert phi(0.1) == 1 and phi(0.1 + 0.5) == 0 and phi(0.1 - 0.5) == 0
    x = GRID.x
    assert np.all(phi.values[np.abs(x - 0.1) <= 0.25] == 1)
    assert np.all(phi.values[np.abs(x - 0.1) >= 0.5] == 0)
    assert np.all((phi.values >= 0) & (phi.values <= 1))
    slope = np.max(np.abs(np.diff(phi.values))) / GRID.dx
    assert slope <= phi.lipschitz * (1 + 1e-12) and slope >= 0.99 * phi.lipschitz
    assert phi.lipschitz == pytest.approx(15 / (8 * 0.25))
    with pytest.raises(ResolutionError):
        make_cutoff(0.0, 3 * GRID.dx, GRID)


def test_directions_interior_and_zero():
    d = admissible_directions(GRID, 0.0, 0.25)
    m = int(round(0.25 / GRID.dx))
    assert len(d.steps) == 2 * (m - 1) + 1
    assert 0.0 in d and d.signs == {-1, 1}
    assert np.all(np.abs(d.steps) < 0.25)


@pytest.mark.parametrize("x0,sign", [(-1.0, -1), (1.0, 1), (0.9, 1)])
def test_directions_at_boundary(x0, sign):
    d = admissible_directions(GRID, x0, 0.1)
    assert 0.0 in d
    assert d.signs == {sign}
    assert (sign * GRID.dx) in d and (-sign * GRID.dx) not in d


def test_directions_resolution():
    with pytest.raises(ResolutionError):
        admissible_directions(GRID, 0.0, GRID.dx)


@given(st.sampled_from([-0.95, -0.6, 0.0, 0.7, 0.97]), st.sampled_from([0.0625, 0.1, 0.2]), st.data())
@settings(max_examples=25, deadline=None)
def test_translation_preserves_trace(x0, rho, data):
    """Every admissible step keeps T_h v inside the zero-trace space."""
    phi = make_cutoff(x0, rho, GRID)
    steps = admissible_directions(GRID, x0, rho).steps
    h = data.draw(st.sampled_from(list(steps)))
    out = localized_translate(smooth_v(), float(h), phi)
    assert isinstance(out, DiscreteFunction)
    assert np.all(out.values[~GRID.interior] == 0)


def test_translation_exact_pieces():
    v = smooth_v()
    phi = make_cutoff(0.0, 0.2, GRID)
    h = 5 * GRID.dx
    out = localized_translate(v, h, phi).values
    x = GRID.x
    inner, outer = np.abs(x) <= 0.2, np.abs(x) >= 0.4
    np.testing.assert_array_equal(out[inner], shift_nodes(v.values, 5)[inner])
    np.testing.assert_array_equal(out[outer], v.values[outer])
    np.testing.assert_array_equal(localized_translate(v, 0.0, phi).values, v.values)


def test_translation_rejects_inadmissible():
    phi = make_cutoff(0.95, 0.1, GRID)
    with pytest.raises(AdmissibilityError):
        localized_translate(smooth_v(), -4 * GRID.dx, phi)
    raw = localized_translate(smooth_v(), -4 * GRID.dx, phi, check_trace=False)
    assert isinstance(raw, np.ndarray) and np.any(raw[~GRID.interior] != 0)


def test_commutator_trivial_cases():
    op = assemble_frac_gradient(GRID, 0.5)
    v = smooth_v()
    assert np.max(np.abs(commutator(ConstantProfile(GRID, 0.7), v, 4 * GRID.dx, 0.5, op))) < 1e-14
    phi = make_cutoff(0.0, 0.2, GRID)
    assert not np.any(commutator(phi, v, 0.0, 0.5, op))
    with pytest.raises(ParameterError):
        commutator(phi, v, GRID.dx, 0.3, op)


@pytest.mark.parametrize("s", [0.25, 0.5, 0.75])
@pytest.mark.parametrize("k", [2, 8, 32])
def test_commutator_identity(s, k):
    op = assemble_frac_gradient(GRID, s)
    phi = make_cutoff(0.2, 0.25, GRID)
    lhs, translated, C = translated_gradient_split(phi, smooth_v(), k * GRID.dx, op)
    assert np.max(np.abs(lhs - translated - C)) <= 1e-10 * np.max(np.abs(lhs))


def test_commutator_matches_defining_integral():
    """C(x) against direct quadrature of mu int (phi(x)-phi(y)) g(y) sgn(x-y)|x-y|^(-1-s) dy."""
    from scipy.integrate import quad

    g = build_grid(4, 1, 256)
    s, h = 0.5, 4 * g.dx
    op = assemble_frac_gradient(g, s)
    phi = make_cutoff(0.0, 0.25, g)
    v = smooth_v(g)
    C = commutator(phi, v, h, s, op)
    gvals = shift_nodes(v.values, 4) - v.values
    phig = lambda y: np.interp(y, g.x, phi.values * gvals)
    gfun = lambda y: np.interp(y, g.x, gvals)
    for r in (op.node_rows[200], op.node_rows[130] + 1):
        x = op.points[r]
        # C = grad_s(phi g) - phi(x) grad_s g, both by quadrature
        def grad(f):
            ig = lambda t: (f(x + t) - f(x - t)) * t ** (-1 - s)
            cuts = sorted({abs(b - x) for b in g.x if 0 < abs(b - x) < 3})
            total, lo = 0.0, 0.0
            for c in cuts:
                total += quad(ig, lo, c, epsabs=0, epsrel=1e-12, limit=200)[0]
                lo = c
            return mu(1, s) * total
        ref = grad(phig) - phi(x) * grad(gfun)
        assert C[r] == pytest.approx(ref, rel=1e-7, abs=1e-10)


@pytest.mark.parametrize("p", [1.5, 2.0, 3.0])
def test_commutator_bound(p):
    op = assemble_frac_gradient(GRID, 0.5)
    phi = make_cutoff(0.2, 0.25, GRID)
    v = smooth_v()
    for h in admissible_directions(GRID, 0.2, 0.25).steps[::8]:
        if h == 0:
            continue
        b = commutator_bound_ratio(phi, v, float(h), 0.5, p, op)
        assert b.holds and b.ratio > 0
    b1 = commutator_bound_ratio(phi, v, 2 * GRID.dx, 0.5, p, op)
    b5 = commutator_bound_ratio(phi, 5 * v, 2 * GRID.dx, 0.5, p, op)
    assert b5.ratio == pytest.approx(b1.ratio, rel=1e-10)
    assert b1.bound == pytest.approx(commutator_constant(0.5, 1.0, phi.lipschitz))
    with pytest.raises(ParameterError):
        commutator_bound_ratio(phi, DiscreteFunction.zeros(GRID), GRID.dx, 0.5, p, op)
