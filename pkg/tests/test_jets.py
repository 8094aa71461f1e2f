import numpy as np
import pytest
from hypothesis import given, strategies as st

from qcpot.jets import (Jet2, eig_sym, eigh_sym, lam_max, lam_min, loewner_geq, pack_upper, quad_form,
                        spectral_norm, unpack_upper)


def sym_from(entries, n):
    return unpack_upper(np.asarray(entries, dtype=float), n)


sym3 = st.lists(st.floats(-10, 10), min_size=6, max_size=6).map(lambda e: sym_from(e, 3))
sym2 = st.lists(st.floats(-10, 10), min_size=3, max_size=3).map(lambda e: sym_from(e, 2))


def test_eig_examples():
    assert np.allclose(eig_sym(np.eye(2)), [1, 1])
    assert np.allclose(eig_sym(np.array([[0.0, 1], [1, 0]])), [-1, 1])
    assert np.allclose(eig_sym(np.array([[4.0]])), [4])


def _cubic_roots(A):
    # characteristic polynomial via the trigonometric cubic formula
    q = np.trace(A) / 3
    B = A - q * np.eye(3)
    p = np.sqrt(np.trace(B @ B) / 6)
    if p == 0:
        return np.full(3, q)
    phi = np.arccos(np.clip(np.linalg.det(B / p) / 2, -1, 1)) / 3
    e1 = q + 2 * p * np.cos(phi)
    e3 = q + 2 * p * np.cos(phi + 2 * np.pi / 3)
    return np.sort([e1, 3 * q - e1 - e3, e3])


@given(sym3)
def test_eig3_matches_cubic_formula(A):
    w = eig_sym(A)
    assert np.allclose(w, _cubic_roots(A), atol=1e-8 * (1 + np.abs(A).max()))


@given(sym3)
def test_eig3_reconstruction(A):
    w, V = eigh_sym(A)
    assert np.all(np.diff(w) >= 0)
    res = np.abs(A - V @ np.diag(w) @ V.T).max()
    assert res <= 1e-12 * (1 + np.abs(A).max()) * 10


@given(sym2, st.floats(-5, 5))
def test_eig_shift(A, t):
    assert np.allclose(eig_sym(A + t * np.eye(2)), eig_sym(A) + t, atol=1e-9)


def test_loewner_examples():
    Z = np.zeros((2, 2))
    assert loewner_geq(np.eye(2), Z, 0)
    assert not loewner_geq(Z, np.eye(2), 0)
    assert not loewner_geq(np.diag([2.0, 1]), np.diag([1.0, 2]), 0)
    assert loewner_geq(np.diag([2.0, 1]), np.diag([1.0, 2]), 1.5)
    with pytest.raises(ValueError):
        loewner_geq(np.eye(2), np.eye(3), 0)


@given(sym2, sym2, sym2)
def test_loewner_partial_order(A, B, C):
    assert loewner_geq(A, A, 0)
    if loewner_geq(A, B, 0) and loewner_geq(B, C, 0):
        assert loewner_geq(A, C, 1e-9)
    if loewner_geq(A, B, 0) and loewner_geq(B, A, 0):
        assert np.allclose(eig_sym(A - B), 0, atol=1e-9)


@given(sym3, st.lists(st.floats(0, 3), min_size=3, max_size=3))
def test_courant_fischer(A, d):
    P = np.diag(d)
    assert np.all(eig_sym(A + P) >= eig_sym(A) - 1e-9)


def test_quad_form_examples():
    y = np.array([0.3, -2.0])
    assert quad_form(np.eye(2), y) == pytest.approx(0.5 * y @ y)
    assert quad_form(np.zeros((2, 2)), y) == 0
    assert quad_form(np.diag([2.0, -4.0]), np.array([1.0, 1.0])) == pytest.approx(-1.0)
    with pytest.raises(ValueError):
        quad_form(np.eye(2), np.ones(3))


@given(sym3, st.lists(st.floats(-4, 4), min_size=3, max_size=3))
def test_quad_form_double_loop(A, y):
    ref = 0.0
    for i in range(3):
        for j in range(3):
            ref += A[i, j] * y[i] * y[j]
    assert quad_form(A, np.array(y)) == pytest.approx(ref / 2, abs=1e-9)


def test_lam_and_norm():
    A = np.diag([-3.0, 1.0])
    assert lam_min(A) == -3 and lam_max(A) == 1 and spectral_norm(A) == 3


def test_jet_algebra_and_json():
    J = Jet2(1.0, [1.0, 2.0], [[1.0, 2.0], [2.0, 5.0]])
    K = Jet2(-1.0, [0.0, 1.0], np.eye(2))
    S = J + K
    assert S.r == 0 and np.allclose(S.p, [1, 3]) and np.allclose(S.A, [[2, 2], [2, 6]])
    assert (J - J).close_to(Jet2(0.0, [0, 0], np.zeros((2, 2))))
    d = J.to_json()
    assert d["A"] == [1.0, 2.0, 5.0]
    assert Jet2.from_json(d).close_to(J)
    assert np.allclose(pack_upper(J.A), [1, 2, 5])
