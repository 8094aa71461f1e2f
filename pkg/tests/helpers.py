"""Shared field generators for the test-suite."""
import numpy as np

from qcpot.grid import GridSpec, ScalarField, build_field


def grid(n, m, lo=-1.0, hi=1.0):
    return GridSpec.uniform([lo] * n, [hi] * n, m)


def random_convex(spec, seed, kinks=3):
    """Random convex field: positive definite quadratic plus a max of affine pieces."""
    rng = np.random.default_rng(seed)
    n = spec.ndim
    G = rng.normal(size=(n, n))
    Q = G @ G.T / n + 0.3 * np.eye(n)
    P = rng.normal(size=(kinks, n))
    c = rng.normal(scale=0.2, size=kinks)
    X = spec.coords()
    quad = 0.5 * np.einsum("...i,ij,...j->...", X, Q, X)
    aff = np.max(X @ P.T + c, axis=-1)
    return ScalarField(spec, quad + 0.5 * aff)


def random_quasiconvex(spec, seed, lam=1.0):
    """Smooth field with Hessian bounded below by -lam (approximately)."""
    rng = np.random.default_rng(seed)
    n = spec.ndim
    X = spec.coords()
    w = rng.normal(size=n)
    a = rng.uniform(0.2, 1.0)
    vals = a * np.sin(X @ w) / max(1.0, np.linalg.norm(w) ** 2) * lam + 0.5 * np.sum(X ** 2, axis=-1) * rng.uniform(0, 1)
    return ScalarField(spec, vals)


def field(spec, fn):
    return build_field(spec, fn)


def random_smooth_convex(spec, seed, pieces=3):
    """Smooth convex field: positive definite quadratic plus a soft max of affine pieces."""
    rng = np.random.default_rng(seed)
    n = spec.ndim
    G = rng.normal(size=(n, n))
    Q = G @ G.T / n + 0.3 * np.eye(n)
    P = rng.normal(size=(pieces, n))
    c = rng.normal(scale=0.2, size=pieces)
    X = spec.coords()
    quad = 0.5 * np.einsum("...i,ij,...j->...", X, Q, X)
    soft = np.logaddexp.reduce(X @ P.T + c, axis=-1)
    return ScalarField(spec, quad + 0.5 * soft)


def bounded_usc(spec, seed):
    """Bounded upper semicontinuous field: a cone, a ripple and an upward step."""
    rng = np.random.default_rng(seed)
    X = spec.coords()
    n = spec.ndim
    c = rng.uniform(-0.5, 0.5, n)
    base = -np.linalg.norm(X - c, axis=-1) + 0.3 * np.sin(X @ rng.normal(size=n) * 3)
    jump = np.where(X[..., 0] > rng.uniform(-0.5, 0.5), 0.4, 0.0)
    return ScalarField(spec, base + jump)


ACCEPTANCE_LINES = []
