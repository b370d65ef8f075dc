import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fraclap_lab.besov import (
    BesovProbe,
    besov_seminorm,
    dyadic_steps,
    fit_exponent,
    probe,
    second_difference,
    second_difference_norm,
)
from fraclap_lab.errors import MeasurementError, ParameterError
from fraclap_lab.grid import DiscreteFunction, build_grid, sample

# n = 2000 on [-2, 2] puts h = 0.1 on the lattice (dx = 0.002)
G2000 = build_grid(2, 1, 2000)
G2048 = build_grid(2, 1, 2048)


def on_domain(f, grid):
    """Nodal values of f on [-a, a] (boundary trace kept), zero beyond."""
    return np.where(np.abs(grid.x) <= grid.a, f(grid.x), 0.0)


def abs_closed_form(h, p=2):
    # int_{-h}^{h} (2h - 2|x|)^2 dx = 8 h^3 / 3
    return math.sqrt(8 / 3) * h**1.5


def test_zero_function():
    z = DiscreteFunction.zeros(G2048)
    assert second_difference_norm(z, 2, 2**-5) == 0
    assert besov_seminorm(z, 2, math.inf, 1.0, 0.1) == 0
    assert besov_seminorm(z, 2, 2, 1.0, 0.1) == 0


def test_quadratic_identity():
    v = on_domain(lambda x: x**2, G2000)
    h = 0.1
    d2 = second_difference(v, h, G2000)
    m = G2000.steps(h)
    inner = slice(G2000.i_left + m, G2000.i_right - m + 1)
    np.testing.assert_allclose(d2[inner], 2 * h * h, rtol=1e-12)
    val = second_difference_norm(v, 2, h, G2000)
    assert val == pytest.approx(2 * h * h * math.sqrt(2 * (1 - h)), rel=1e-10)
    assert val == pytest.approx(0.0268328, abs=1e-7)


def test_abs_closed_form():
    v = on_domain(np.abs, G2000)
    val = second_difference_norm(v, 2, 0.1, G2000)
    assert val == pytest.approx(abs_closed_form(0.1), rel=0.02)
    assert val == pytest.approx(0.051640, rel=0.02)


def test_abs_brute_force():
    """Cross-check the nodal trapezoid against scipy quad of the same second difference."""
    from scipy.integrate import quad

    h = 0.1
    f = lambda x: abs(x + h) - 2 * abs(x) + abs(x - h)
    ref = math.sqrt(quad(lambda x: f(x) ** 2, -0.9, 0.9, points=[-h, 0, h])[0])
    assert ref == pytest.approx(abs_closed_form(h), rel=1e-10)


def test_step_must_be_node_multiple():
    with pytest.raises(ParameterError):
        second_difference_norm(DiscreteFunction.zeros(G2048), 2, 0.1)
    with pytest.raises(ParameterError):
        second_difference_norm(DiscreteFunction.zeros(G2048), 2, 1.0)


def test_seminorm_abs():
    v = on_domain(np.abs, G2048)
    val = besov_seminorm(v, 2, math.inf, 1.5, 0.25, G2048)
    assert val == pytest.approx(2**1.5 / math.sqrt(3), rel=0.03)
    with pytest.raises(ParameterError):
        besov_seminorm(v, 2, math.inf, 2.0, 0.25, G2048)


def test_seminorm_argmax_ordering():
    """Larger sigma pushes the maximising step down to the smallest h."""
    v = on_domain(np.abs, G2048)
    hs = G2048.dx * np.arange(4, 65)
    D = np.array([second_difference_norm(v, 2, h, G2048) for h in hs])
    r15, r16 = D / hs**1.5, D / hs**1.6
    assert hs[np.argmax(r16)] == hs[0]
    assert hs[np.argmax(r15)] >= hs[np.argmax(r16)]
    assert r16[0] / r16[-1] == pytest.approx((hs[0] / hs[-1]) ** -0.1, rel=0.05)


def test_seminorm_finite_q():
    v = on_domain(np.abs, G2048)
    a = besov_seminorm(v, 2, 2, 1.0, 0.1, G2048)
    b = besov_seminorm(v, 2, 2, 1.0, 0.2, G2048)
    assert 0 < a <= b


@given(st.floats(0.1, 10), st.sampled_from([1.0, 2.0, 3.0]), st.sampled_from([4, 16, 64]))
@settings(max_examples=20, deadline=None)
def test_homogeneity_and_triangle(c, p, k):
    u = sample(lambda x: np.sqrt(np.clip(1 - x * x, 0, None)), G2048)
    w = sample(lambda x: np.cos(5 * x) * (1 - x * x), G2048)
    h = k * G2048.dx
    du, dw = second_difference_norm(u, p, h), second_difference_norm(w, p, h)
    assert second_difference_norm(c * u, p, h) == pytest.approx(c * du, rel=1e-13)
    assert second_difference_norm(u + w, p, h) <= du + dw + 1e-15


def test_dyadic_steps():
    hs = dyadic_steps(G2048, 2**-8, 2**-4)
    np.testing.assert_array_equal(hs, [2**-4, 2**-5, 2**-6, 2**-7])  # 4 dx floor
    assert np.all(hs >= 4 * G2048.dx)


def _synthetic(slope, noise=None):
    h = 2.0 ** -np.arange(3, 12)
    D = 0.7 * h**slope
    if noise is not None:
        D = D * (1 + noise)
    return BesovProbe(2, h, D)


def test_fit_exact_power_law():
    s, r = fit_exponent(_synthetic(1.25))
    assert abs(s - 1.25) <= 1e-12 and r <= 1e-12


def test_fit_perturbed_power_law():
    rng = np.random.default_rng(7)
    for _ in range(20):
        s, _ = fit_exponent(_synthetic(1.25, rng.uniform(-0.01, 0.01, 9)))
        assert 1.23 <= s <= 1.27


def test_fit_rejects_zero_data():
    with pytest.raises(MeasurementError):
        fit_exponent(probe(DiscreteFunction.zeros(G2048), 2))
    with pytest.raises(MeasurementError):
        fit_exponent(BesovProbe(2, np.array([0.1, 0.05, 0.025]), np.array([1.0, 0.5, 0.25])))


def test_closed_form_half_power_slope():
    v = sample(lambda x: np.sqrt(np.clip(1 - x * x, 0, None)), G2048)
    s, _ = fit_exponent(probe(v, 2, 2**-8, 2**-4))
    assert s == pytest.approx(1.0, abs=0.05)


def test_probe_csv(tmp_path):
    v = on_domain(np.abs, G2048)
    pr = probe(v, 2, grid=G2048, predicted=1.5)
    fit_exponent(pr)
    pr.to_csv(tmp_path / "probe.csv")
    lines = (tmp_path / "probe.csv").read_text().splitlines()
    assert lines[0] == "h,D,logh,logD" and lines[-1].startswith("# fit,")
    assert len(lines) == 2 + pr.h.size
    assert abs(pr.slope - 1.5) <= 0.05
