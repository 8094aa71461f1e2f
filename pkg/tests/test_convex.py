import numpy as np
import pytest
from hypothesis import given, strategies as st

from helpers import grid, random_convex
from qcpot.convex import (ConvexError, Subgradient1D, SubgradientWitness, biconjugate, c11_check,
                          conjugate_1d_linear, fenchel_conjugate, grad_conjugate, magic_legendre_check,
                          quasiconvex_index, subdifferential)
from qcpot.grid import NEG_INF, GridSpec, ScalarField, build_field


def test_subdifferential_abs_at_kink():
    spec = grid(1, 21)
    sd = subdifferential(build_field(spec, np.abs), 10)
    assert isinstance(sd, Subgradient1D)
    assert sd.left_slope == pytest.approx(-1) and sd.right_slope == pytest.approx(1)


def test_subdifferential_parabola():
    spec = GridSpec.uniform([-1], [1], 21)   # h = 0.1, node 15 is x = 0.5
    sd = subdifferential(build_field(spec, lambda x: x * x), 15)
    assert sd.left_slope == pytest.approx(0.9) and sd.right_slope == pytest.approx(1.1)
    assert sd.contains(1.0)


def test_subdifferential_concave_empty():
    spec = grid(1, 21)
    assert not subdifferential(build_field(spec, lambda x: -x * x), 10).feasible


def test_subdifferential_neg_inf_error():
    spec = grid(1, 11)
    f = build_field(spec, lambda x: np.where(x > 0.5, NEG_INF, x))
    with pytest.raises(ConvexError, match="undefined"):
        subdifferential(f, 3)


def test_subdifferential_nd_witness():
    spec = grid(2, 9)
    f = build_field(spec, lambda x, y: np.abs(x) + y * y)
    w = subdifferential(f, (4, 6))
    assert isinstance(w, SubgradientWitness) and w.feasible
    g = build_field(spec, lambda x, y: -(x * x) - y * y)
    assert not subdifferential(g, (4, 4)).feasible


def test_subdifferential_monotone():
    spec = grid(2, 7)
    f = random_convex(spec, 3)
    ws = [subdifferential(f, k) for k in [(1, 1), (3, 2), (5, 5), (2, 4), (4, 1)]]
    for a in ws:
        for b in ws:
            assert a.feasible and b.feasible
            d = spec.node(b.point) - spec.node(a.point)
            assert (b.p - a.p) @ d >= -1e-9


def test_subdifferential_sum_with_quadratic_1d():
    # discrete analogue of the sum rule: endpoints shift by D phi(x) up to one cell
    spec = grid(1, 41)
    u = build_field(spec, np.abs)
    phi = build_field(spec, lambda x: 0.5 * x * x)
    for k in [5, 20, 31]:
        a = subdifferential(u, k)
        b = subdifferential(u + phi, k)
        x = spec.node(k)[0]
        h = spec.h[0]
        assert abs(b.left_slope - (a.left_slope + x)) <= h / 2 + 1e-12
        assert abs(b.right_slope - (a.right_slope + x)) <= h / 2 + 1e-12


def test_quasiconvex_index_examples():
    spec = grid(1, 41)
    assert quasiconvex_index(build_field(spec, lambda x: 0.5 * x * x)) == pytest.approx(0, abs=1e-9)
    assert quasiconvex_index(build_field(spec, lambda x: -x * x)) == pytest.approx(2, abs=1e-9)
    s = GridSpec.uniform([0], [2 * np.pi], 201)
    assert abs(quasiconvex_index(build_field(s, np.sin)) - 1) <= 1e-3


@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(-3, 3))
def test_quasiconvex_index_affine_invariant(a, b, c):
    spec = grid(2, 9)
    u = random_convex(spec, 1) - build_field(spec, lambda x, y: 3 * x * x)
    v = u + build_field(spec, lambda x, y: a + b * x + c * y)
    assert quasiconvex_index(v) == pytest.approx(quasiconvex_index(u), abs=1e-9)


def test_c11_examples():
    spec = grid(2, 21)
    r = c11_check(build_field(spec, lambda x, y: 0.5 * (x * x + y * y)), 1.0)
    assert r["qc_plus"] and r["qc_minus"] and r["grad_lip"] == pytest.approx(1.0)
    s = GridSpec.uniform([0], [2 * np.pi], 201)
    r = c11_check(build_field(s, np.sin), 1.0, tol=1e-3)
    assert r["qc_plus"] and r["qc_minus"] and r["grad_lip"] <= 1 + 1e-3
    s1 = grid(1, 21)
    r = c11_check(build_field(s1, np.abs), 2 / s1.h[0] - 1)
    assert r["qc_plus"] and not r["qc_minus"]


def test_conjugate_self_dual_parabola():
    f = build_field(GridSpec.uniform([-3], [3], 121), lambda x: 0.5 * x * x)
    dual = GridSpec.uniform([-2], [2], 81)
    g = fenchel_conjugate(f, dual)
    y = dual.coords()[..., 0]
    assert np.max(np.abs(g.values - 0.5 * y * y)) <= f.spec.h[0] ** 2 / 2 + 1e-12
    assert np.array_equal(fenchel_conjugate(f, dual, method="linear").values, g.values)


def test_conjugate_abs_is_zero():
    spec = GridSpec.uniform([-1], [1], 101)
    g = fenchel_conjugate(build_field(spec, np.abs), GridSpec.uniform([-1], [1], 51))
    assert np.max(np.abs(g.values)) <= spec.h[0] + 1e-12


@pytest.mark.parametrize("seed", range(4))
def test_fenchel_young_all_pairs(seed):
    spec = grid(2, 15)
    f = random_convex(spec, seed)
    dual = GridSpec.uniform([-2, -2], [2, 2], 13)
    g = fenchel_conjugate(f, dual)
    XY = spec.points() @ dual.points().T
    gap = f.flat[:, None] + g.flat[None, :] - XY
    assert gap.min() >= -1e-9 * (1 + np.abs(f.flat).max())
    # equality on the argmax graph
    assert np.allclose(gap.min(axis=0), 0, atol=1e-12)


def test_conjugate_skips_neg_inf():
    spec = grid(1, 21)
    f = build_field(spec, lambda x: np.where(np.abs(x) < 0.5, 0.0, NEG_INF))
    g = fenchel_conjugate(f, GridSpec.uniform([-1], [1], 5))
    assert np.all(np.isfinite(g.values))
    with pytest.raises(ConvexError):
        fenchel_conjugate(ScalarField(spec, np.full(21, NEG_INF)), spec)


def test_conjugate_linear_matches_brute():
    spec = GridSpec.uniform([-2], [1.5], 57)
    f = random_convex(spec, 7)
    y = np.linspace(-3, 3, 97)
    dual = GridSpec.uniform([-3], [3], 97)
    assert np.allclose(conjugate_1d_linear(f, y), fenchel_conjugate(f, dual).values, atol=1e-13)


def test_biconjugate_convex_and_envelope():
    spec = grid(1, 101)
    f = build_field(spec, lambda x: 0.5 * x * x)
    assert np.max(np.abs(biconjugate(f).values - f.values)) <= 2 * spec.h[0] ** 2
    s2 = GridSpec.uniform([-1], [2], 61)
    g = build_field(s2, lambda x: np.minimum(x * x, (x - 1) ** 2))
    env = biconjugate(g).values
    x = s2.coords()[..., 0]
    out = (x <= 0) | (x >= 1)
    assert np.max(np.abs(env[out] - g.values[out])) <= 1e-9
    # the convex envelope of min(x^2, (x-1)^2) vanishes on [0, 1]
    assert np.max(np.abs(env[~out])) <= 1e-9
    c = build_field(spec, lambda x: -x * x)
    assert np.allclose(biconjugate(c).values, -1.0, atol=1e-9)


@pytest.mark.parametrize("seed", range(3))
def test_biconjugate_below_and_idempotent(seed):
    spec = grid(1, 41)
    rng = np.random.default_rng(seed)
    f = ScalarField(spec, rng.normal(size=41))
    b = biconjugate(f)
    assert np.all(b.values <= f.values + 1e-12)
    # a hull edge of length L whose slope sits between dual nodes loses at most
    # L * (half the dual spacing); with refine=2 the spacing is h/2
    bound = spec.box.diameter * spec.h[0] / 4
    assert np.max(np.abs(biconjugate(b).values - b.values)) <= bound


def test_grad_conjugate_examples():
    spec = GridSpec.uniform([-2], [2], 81)
    dual = GridSpec.uniform([-1], [1], 21)
    h = spec.h[0]
    f2 = build_field(spec, lambda x: x * x)
    f1 = build_field(spec, lambda x: 0.5 * x * x)
    fs = build_field(spec, lambda x: 0.5 * x * x + x)
    for k in range(21):
        y = dual.node(k)[0]
        assert abs(grad_conjugate(f2, dual, k)[0] - y / 2) <= h / 2 + 1e-12
        assert abs(grad_conjugate(f1, dual, k)[0] - y) <= h / 2 + 1e-12
        assert abs(grad_conjugate(fs, dual, k)[0] - (y - 1)) <= h / 2 + 1e-12
    with pytest.raises(ConvexError, match="required form"):
        grad_conjugate(build_field(spec, lambda x: -x * x), dual, 10)


def test_magic_legendre_examples():
    spec = grid(1, 201)
    u = build_field(spec, lambda x: 0.5 * x * x)
    r1 = magic_legendre_check(u, 1.0, 0.3)
    assert r1["pass"]
    assert r1["B"][0][0] == pytest.approx(0.5, abs=1e-6) and r1["H"][0][0] == pytest.approx(2, abs=1e-9)
    r2 = magic_legendre_check(u, 2.0, 0.3)
    assert r2["B"][0][0] == pytest.approx(1 / 3, abs=1e-6) and r2["H"][0][0] == pytest.approx(3, abs=1e-9)
    q = build_field(spec, lambda x: x ** 4 / 12)
    r3 = magic_legendre_check(q, 1.0, 0.6)
    assert r3["residual"] <= 5 * spec.h[0]


def test_magic_legendre_critical_and_boundary():
    spec = grid(1, 101)
    flat = build_field(spec, lambda x: -0.5 * x * x)
    with pytest.raises(ConvexError, match="critical|non-interior"):
        magic_legendre_check(flat, 1.0, 0.0)
    u = build_field(spec, lambda x: 0.5 * x * x)
    with pytest.raises(ConvexError, match="non-interior"):
        magic_legendre_check(u, 1.0, 5.0)
