import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from helpers import field, grid, random_convex, random_quasiconvex, random_smooth_convex
from qcpot.grid import Box, GridSpec, ScalarField, numeric_jet
from qcpot.jets import Jet2, lam_min
from qcpot.potential import (NotQuasiConvexError, PotentialError, check_subharmonic_ae,
                             check_subharmonic_viscosity, comparison_run, find_bad_test_jet,
                             is_subaffine, on_sums_witness, strict_comparison_run,
                             strictness_gap, subaffine_probe, subaffine_report,
                             subharmonic_addition_check)
from qcpot.regularize import sup_convolve
from qcpot.subeq import JetSampler, Subequation, dual, standard_library

PCONE = standard_library("pcone")
LAPLACIAN = standard_library("laplacian")
SUBAFFINE = standard_library("subaffine")


def shifted_cone(shift):
    return Subequation(f"pcone-{shift:g}", 2, lambda x, r, p, A: lam_min(A) - shift + 0 * r)


def quadratic(spec, Q, c=0.0):
    Q = np.asarray(Q, float)
    X = spec.coords()
    return ScalarField(spec, 0.5 * np.einsum("...i,ij,...j->...", X, Q, X) + c)


def max_affine(spec, slopes, offsets):
    X = spec.coords()
    return ScalarField(spec, np.max(X @ np.asarray(slopes, float).T + np.asarray(offsets, float), axis=-1))


# AE route

def test_ae_convex_quadratic_passes():
    spec = grid(2, 21)
    rep = check_subharmonic_ae(quadratic(spec, np.eye(2)), PCONE)
    assert rep.pass_fraction == 1.0 and rep.verdict
    assert rep.worst_margin == pytest.approx(1.0)


def test_ae_harmonic_margins_vanish():
    spec = grid(2, 21)
    u = field(spec, lambda x, y: x * x - y * y)
    rep = check_subharmonic_ae(u, LAPLACIAN)
    assert rep.verdict and abs(rep.worst_margin) <= 1e-9


def test_ae_concave_quadratic_fails():
    # kappa h must sit below the margin gap of 1 for the verdict to be meaningful
    spec = grid(2, 101)
    rep = check_subharmonic_ae(quadratic(spec, -np.eye(2)), PCONE)
    assert rep.pass_fraction == 0.0 and not rep.verdict
    assert rep.worst_margin == pytest.approx(-1.0)
    assert json.loads(json.dumps(rep.to_json()))["verdict"] == "not subharmonic"


def test_ae_rejects_concave_kink():
    spec = grid(2, 21)
    with pytest.raises(NotQuasiConvexError, match="quasi-convexity"):
        check_subharmonic_ae(field(spec, lambda x, y: -np.abs(x)), PCONE)


def test_ae_dimension_mismatch():
    with pytest.raises(PotentialError):
        check_subharmonic_ae(quadratic(grid(2, 9), np.eye(2)), standard_library("pcone", n=1))


# viscosity route

def test_bad_jet_concave_quadratic():
    spec = grid(2, 21)
    u = field(spec, lambda x, y: -(x * x + y * y))
    o = spec.nearest_index([0.0, 0.0])
    bj = find_bad_test_jet(u, PCONE, o)
    assert bj is not None
    a_step = (2 * 2 + 1) / 8
    assert -2 < bj.margin_violation <= -2 + a_step
    assert PCONE.margin(spec.node(o), bj.J) == pytest.approx(bj.margin_violation)
    # the jet touches strictly from above over the radius
    X = spec.coords()
    d = X - X[o]
    dist = np.linalg.norm(d, axis=-1)
    near = (dist > 0) & (dist <= bj.radius + 1e-12)
    dd = d[near]
    phi = u.values[o] + dd @ bj.J.p + 0.5 * np.einsum("ki,ij,kj->k", dd, bj.J.A, dd)
    assert np.all(u.values[near] - phi <= -bj.eps_strict * dist[near] ** 2 + 1e-12)
    assert bj.eps_strict > 0


@settings(max_examples=8)
@given(st.integers(0, 10_000))
def test_no_bad_jet_for_convex(seed):
    spec = grid(2, 15)
    u = random_convex(spec, seed)
    for x in ([0.0, 0.0], [0.3, -0.4], [-0.5, 0.2]):
        assert find_bad_test_jet(u, PCONE, spec.nearest_index(x)) is None


def test_no_bad_jet_at_convex_kink():
    spec = grid(2, 21)
    u = field(spec, lambda x, y: np.hypot(x, y))
    o = spec.nearest_index([0.0, 0.0])
    for F in (PCONE, LAPLACIAN, shifted_cone(5.0)):
        assert find_bad_test_jet(u, F, o, a_max=10.0, a_step=0.5) is None


def test_search_ball_must_fit():
    spec = grid(2, 9)
    with pytest.raises(PotentialError):
        find_bad_test_jet(quadratic(spec, np.eye(2)), PCONE, (1, 1))


@settings(max_examples=10)
@given(st.integers(0, 10_000), st.sampled_from([-1.5, -0.8, 0.6, 1.5]))
def test_coherence_on_smooth_fields(seed, low):
    # quadratic with smallest eigenvalue well away from 0 on either side
    rng = np.random.default_rng(seed)
    R, _ = np.linalg.qr(rng.normal(size=(2, 2)))
    Q = R @ np.diag([low, low + rng.uniform(0.2, 1.5)]) @ R.T
    spec = grid(2, 15)
    u = quadratic(spec, Q)
    for x in ([0.0, 0.0], [0.3, 0.1]):
        k = spec.nearest_index(x)
        ae_ok = PCONE.margin(spec.node(k), numeric_jet(u, k)) >= -1e-8
        bad = find_bad_test_jet(u, PCONE, k, a_step=0.25)
        assert (bad is None) == ae_ok


def test_lifted_stage_finds_jet_between_lattice_points():
    # the margin -0.49 sits inside one step of the default lattice; the lifted numeric jet reaches it
    spec = grid(2, 21)
    u = random_quasiconvex(spec, 3, lam=2.0)
    k = (16, 8)
    assert LAPLACIAN.margin(spec.node(k), numeric_jet(u, k)) < -0.4
    bad = find_bad_test_jet(u, LAPLACIAN, k, tol=1e-8)
    assert bad is not None and bad.x == k and bad.margin_violation < 0
    X = spec.coords()
    d = X - X[k]
    dist = np.linalg.norm(d, axis=-1)
    near = (dist > 0) & (dist <= bad.radius + 1e-12)
    phi = u[k] + d[near] @ bad.J.p + 0.5 * np.einsum("ki,ij,kj->k", d[near], bad.J.A, d[near])
    assert np.all(u.values[near] - phi <= -bad.eps_strict * dist[near] ** 2 + 1e-12)
    assert bad.eps_strict > 0


def test_ae_and_viscosity_agree():
    spec = grid(2, 11)
    for Q, F in ((np.diag([1.0, 0.5]), PCONE), (np.diag([-1.0, 0.5]), PCONE),
                 (np.diag([1.0, -1.0]), LAPLACIAN), (np.diag([-1.0, -0.5]), LAPLACIAN)):
        u = quadratic(spec, Q)
        # centered jets are exact on quadratics, so both routes use the analytic tolerance
        ae = check_subharmonic_ae(u, F, tol=1e-8)
        visc = check_subharmonic_viscosity(u, F, tol=1e-8, a_step=0.25)
        assert ae.verdict == visc.verdict
        if not visc.verdict:
            assert visc.bad_jet is not None and visc.worst_margin < 0


def test_viscosity_reports_first_bad_jet():
    spec = grid(2, 11)
    rep = check_subharmonic_viscosity(quadratic(spec, -np.eye(2)), PCONE, tol=1e-8)
    assert rep.pass_fraction == 0.0
    assert rep.to_json()["bad_jet"]["margin_violation"] < 0


# elementary properties

def _passing_pairs(spec):
    X = spec.coords()
    x, y = X[..., 0], X[..., 1]
    yield PCONE, random_smooth_convex(spec, 1), random_smooth_convex(spec, 2)
    yield LAPLACIAN, ScalarField(spec, x * x - y * y), ScalarField(spec, 2 * x * y + x)
    yield SUBAFFINE, ScalarField(spec, x * x - y * y), ScalarField(spec, 0.3 * y * y - x * x + x)
    yield standard_library("qccone", lam=1.0), ScalarField(spec, -0.4 * x * x), ScalarField(spec, -0.4 * y * y + x)
    yield standard_library("q"), ScalarField(spec, x * x - 3), ScalarField(spec, y * y + x - 4)


def test_maximum_property():
    # the max has kinks at grid scale, so it is checked with strict test jets
    spec = grid(2, 15)
    for F, u, v in _passing_pairs(spec):
        assert check_subharmonic_ae(u, F).verdict and check_subharmonic_ae(v, F).verdict, F.name
        w = ScalarField(spec, np.maximum(u.values, v.values))
        assert check_subharmonic_viscosity(w, F).verdict, F.name


def test_sliding():
    spec = grid(2, 21)
    for F, u, _ in _passing_pairs(spec):
        for m in (0.1, 2.0):
            assert check_subharmonic_ae(u - m, F).verdict, F.name


def test_decreasing_ladder_limit():
    spec = grid(2, 41)
    u = field(spec, lambda x, y: np.maximum(0.5 * (x * x + y * y), np.abs(x + 0.5 * y) - 0.2))
    # a box inside every shrunk domain of the ladder, crossing the kink
    core = Box([-0.25, -0.25], [0.25, 0.25])
    prev = None
    for eps in (0.1, 0.05, 0.025):
        sc = sup_convolve(u, eps)
        assert prev is None or np.all(sc.field.values <= prev)
        prev = sc.field.values
        assert sc.delta < 0.75
        assert check_subharmonic_viscosity(sc.field, PCONE, core).verdict
    assert check_subharmonic_viscosity(u, PCONE, core).verdict


# subaffine

def test_subaffine_examples():
    spec = grid(2, 21)
    assert is_subaffine(field(spec, lambda x, y: x * x - y * y))
    rep = subaffine_probe(field(spec, lambda x, y: -(x * x + y * y)))
    assert not rep["pass"] and rep["witness"] is not None
    lo, hi = np.array(rep["witness"]["box"])
    assert np.all(lo <= 1e-12) and np.all(hi >= -1e-12) or rep["worst_excess"] > 0
    assert is_subaffine(field(spec, lambda x, y: np.hypot(x, y)))


@pytest.mark.parametrize("fn,expected", [(lambda x, y: x * x - y * y, True),
                                         (lambda x, y: -(x * x + y * y), False),
                                         (lambda x, y: 0.5 * x * x + y, True),
                                         (lambda x, y: -x * x - 0.8 * y * y, False)])
def test_subaffine_probe_agrees_with_ae(fn, expected):
    spec = grid(2, 21)
    rep = subaffine_report(field(spec, fn))
    assert rep["probe"] is expected
    assert rep["agree"] is True


def test_subaffine_plus_allows_negative_concave():
    spec = grid(2, 21)
    w = field(spec, lambda x, y: -(x * x + y * y) - 1.0)
    assert not is_subaffine(w)
    assert is_subaffine(w, plus=True)


def test_subaffine_strengthening_closed_region():
    spec = grid(2, 21)
    w = field(spec, lambda x, y: x * x - y * y + 0.3 * x)
    assert is_subaffine(w)
    X = spec.coords()
    bd = spec.boundary_mask()
    for slope in ([0.0, 0.0], [1.0, -0.5], [-2.0, 1.0]):
        z = w.values - X @ np.array(slope)
        assert z.max() <= z[bd].max() + 1e-9


# comparison

def test_comparison_laplacian_self_dual():
    spec = grid(2, 21)
    u = field(spec, lambda x, y: x * x - y * y)
    rep = comparison_run(u, LAPLACIAN, ScalarField(spec, -u.values))
    assert rep["verified_u"] and rep["verified_v"]
    assert rep["zmp_gap"] == pytest.approx(0.0, abs=1e-12)
    assert rep["pass"] and rep["subaffine_sum"]


def test_comparison_hypotheses_unmet():
    spec = grid(2, 21)
    rep = comparison_run(quadratic(spec, np.eye(2)), PCONE, quadratic(spec, -np.eye(2), -1.0))
    assert rep["verified_u"] and not rep["verified_v"]
    assert rep["pass"] is None and rep["status"] == "hypotheses unmet"


def test_comparison_piecewise_affine_partner():
    spec = grid(2, 21)
    v = max_affine(spec, [[1, 0], [-1, 0], [0, 1], [0, -1]], [0.0, 0.1, -0.1, 0.2])
    rep = comparison_run(quadratic(spec, np.eye(2)), PCONE, v)
    assert rep["verified_u"] and rep["verified_v"]
    assert rep["zmp_gap"] <= rep["tol"] and rep["pass"]


def test_comparison_gradient_free_uses_plus_variant():
    spec = grid(2, 21)
    q = standard_library("q")
    u = quadratic(spec, np.eye(2), -3.0)
    v = quadratic(spec, np.diag([1.0, -2.0]), 1.0)
    rep = comparison_run(u, q, v)
    assert rep["verified_u"] and rep["verified_v"]
    assert "subaffine_plus_sum" in rep
    assert rep["pass"]


@settings(max_examples=8)
@given(st.integers(0, 10_000), st.floats(0.2, 2.0))
def test_definitional_comparison(seed, c):
    spec = grid(2, 21)
    u = random_smooth_convex(spec, seed)
    v = quadratic(spec, c * np.eye(2) - np.diag([0.0, 2 * c]))
    assert SUBAFFINE.margin(np.zeros(2), numeric_jet(v, (10, 10))) >= c - 1e-9
    rep = comparison_run(u, PCONE, v)
    assert rep["verified_u"] and rep["verified_v"]
    assert rep["zmp_gap"] <= rep["tol"]


# strict comparison

def _strict_grid():
    return GridSpec.uniform([-2, -2], [2, 2], 41)


def test_strictness_gap_and_rejection():
    assert strictness_gap(shifted_cone(0.5), PCONE) >= 0.5 - 1e-9
    spec = _strict_grid()
    with pytest.raises(PotentialError, match="strongly strict"):
        strict_comparison_run(quadratic(spec, np.eye(2)), PCONE, PCONE, quadratic(spec, np.eye(2)))


def test_strict_comparison_qc_route():
    spec = _strict_grid()
    omega = Box([-1, -1], [1, 1])
    u = quadratic(spec, 2 * np.eye(2))
    v = max_affine(spec, [[1, 0], [-1, 0], [0, 1], [0, -1]], [0.0, 0.1, -0.1, 0.2])
    rep = strict_comparison_run(u, shifted_cone(0.5), PCONE, v, omega)
    assert rep["strictness_gap"] >= 0.5 - 1e-9
    assert rep["verified_u"] and rep["verified_v"]
    assert rep["pass"] and not rep["violation_detected"]


def test_strict_comparison_detects_constructed_violation():
    spec = _strict_grid()
    omega = Box([-1, -1], [1, 1])
    u = quadratic(spec, 2 * np.eye(2))
    v = field(spec, lambda x, y: 3 - 4 * (x * x + y * y))
    rep = strict_comparison_run(u, shifted_cone(0.5), PCONE, v, omega, tol=1e-6)
    assert rep["violation_detected"]
    wit = rep["contradiction_witness"]
    # at the interior max the summand jets cannot both be admissible
    assert wit["margin_G_u"] >= 0 and wit["margin_dualF_v"] < 0
    assert not rep["verified_v"] and rep["pass"] is None


def test_strict_comparison_usc_ladder():
    spec = _strict_grid()
    omega = Box([-1, -1], [1, 1])
    u = field(spec, lambda x, y: np.maximum(0.5 * (x * x + y * y),
                                            0.5 * ((x - 0.5) ** 2 + y * y) + 0.1) / 4)
    v = max_affine(spec, [[1, 0], [-1, 0], [0, 1], [0, -1]], [0.0, 0.1, -0.1, 0.2])
    rep = strict_comparison_run(u, shifted_cone(0.05), PCONE, v, omega, route="usc")
    assert [r["eps"] for r in rep["ladder"]] == [0.1, 0.05, 0.025]
    assert all(r["pass"] and r["decreasing"] for r in rep["ladder"])
    assert rep["pass"] and rep["zmp_excess"] <= rep["tol"]


def test_strict_comparison_unknown_route():
    spec = _strict_grid()
    with pytest.raises(PotentialError):
        strict_comparison_run(quadratic(spec, np.eye(2)), shifted_cone(0.5), PCONE,
                              quadratic(spec, np.eye(2)), route="bogus")


# addition

def test_addition_convex_plus_convex():
    spec = grid(2, 21)
    u = quadratic(spec, np.eye(2))
    rep = subharmonic_addition_check(PCONE, PCONE, PCONE, u, u)
    assert rep["jet_addition_ok"] and rep["sum_subharmonic"] and rep["pass"]


def test_addition_convex_plus_subaffine():
    spec = grid(2, 21)
    u = random_smooth_convex(spec, 4)
    v = field(spec, lambda x, y: x * x - 1.5 * y * y + 0.2 * x)
    rep = subharmonic_addition_check(PCONE, dual(PCONE), SUBAFFINE, u, v)
    assert rep["verified_u"] and rep["verified_v"]
    assert rep["jet_addition_ok"] and rep["sum_subharmonic"] and rep["pass"]


def test_addition_harmonic():
    spec = grid(2, 21)
    u = field(spec, lambda x, y: x * x - y * y)
    v = field(spec, lambda x, y: x * y + 2 * y)
    rep = subharmonic_addition_check(LAPLACIAN, LAPLACIAN, LAPLACIAN, u, v)
    assert rep["pass"]
    assert abs(rep["sum_report"]["worst_margin"]) <= 1e-9


def test_addition_without_jet_addition():
    # subaffine + subaffine is not subaffine: x^2 - 2 y^2 plus y^2 - 2 x^2 is concave
    spec = grid(2, 21)
    u = field(spec, lambda x, y: x * x - 2 * y * y)
    v = field(spec, lambda x, y: y * y - 2 * x * x)
    rep = subharmonic_addition_check(SUBAFFINE, SUBAFFINE, SUBAFFINE, u, v)
    assert not rep["jet_addition_ok"] and not rep["sum_subharmonic"]
    assert rep["pass"]


# theorem on sums

def _line(m=201):
    return GridSpec.uniform([-1.0], [1.0], m)


def test_on_sums_zero():
    spec = _line()
    z = ScalarField(spec, np.zeros(spec.shape))
    rep = on_sums_witness(z, z, np.zeros((2, 2)), 0.1)
    assert rep["A1"] == pytest.approx(0.0, abs=1e-6) and rep["A2"] == pytest.approx(0.0, abs=1e-6)
    assert rep["pass"]


def test_on_sums_concave_quadratics():
    spec = _line()
    u = field(spec, lambda x: -x * x)
    A = -1.5 * np.eye(2)
    eps = 0.1
    rep = on_sums_witness(u, u, A, eps)
    upper = -1.5 + eps * 2.25
    assert rep["A1"] <= upper + rep["tol"] and rep["A2"] <= upper + rep["tol"]
    assert rep["A1"] >= -(1 / eps + 1.5) - rep["tol"]
    assert rep["sandwich_upper_ok"] and rep["sandwich_lower_ok"] and rep["transport_ok"]
    assert rep["pass"]


def test_on_sums_kinks():
    spec = _line()
    u = field(spec, lambda x: -np.abs(x))
    eps = 0.1
    rep = on_sums_witness(u, u, np.zeros((2, 2)), eps)
    assert rep["A1"] == pytest.approx(-1 / eps, abs=1e-6)
    assert rep["A2"] == pytest.approx(-1 / eps, abs=1e-6)
    assert rep["pass"]


def test_on_sums_rejects_non_contact_jet():
    spec = _line()
    u = field(spec, lambda x: x * x)
    with pytest.raises(PotentialError, match=r"\[contact\]"):
        on_sums_witness(u, u, np.zeros((2, 2)), 0.1)


def test_on_sums_needs_1d_factors():
    spec = grid(2, 9)
    z = ScalarField(spec, np.zeros(spec.shape))
    with pytest.raises(PotentialError):
        on_sums_witness(z, z, np.zeros((2, 2)), 0.1)
