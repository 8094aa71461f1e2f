"""2-jets (r, p, A), symmetric-matrix spectra, Loewner order and quadratic forms.

Symmetric matrices are plain ``(n, n)`` numpy arrays (or stacks ``(..., n, n)``);
the packed upper-triangular form is only used for serialization.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

JACOBI_TOL = 1e-14
JACOBI_SWEEPS = 50


def sym(A) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    return 0.5 * (A + np.swapaxes(A, -1, -2))


def pack_upper(A) -> list:
    A = np.asarray(A, dtype=float)
    i, j = np.triu_indices(A.shape[-1])
    return [float(v) for v in A[i, j]]


def unpack_upper(entries, n: int | None = None) -> np.ndarray:
    entries = np.asarray(entries, dtype=float)
    if n is None:
        n = int(round((np.sqrt(8 * entries.size + 1) - 1) / 2))
    if entries.size != n * (n + 1) // 2:
        raise ValueError("packed length does not match dimension")
    A = np.zeros((n, n))
    i, j = np.triu_indices(n)
    A[i, j] = entries
    A[j, i] = entries
    return A


def _jacobi(A: np.ndarray, vectors: bool):
    """Cyclic Jacobi on a stack of symmetric matrices (..., n, n)."""
    A = np.array(A, dtype=float)
    n = A.shape[-1]
    V = np.broadcast_to(np.eye(n), A.shape).copy() if vectors else None
    scale = np.maximum(np.sqrt((A ** 2).sum(axis=(-1, -2))), 1e-300)
    pairs = [(p, q) for p in range(n) for q in range(p + 1, n)]
    for _ in range(JACOBI_SWEEPS):
        off = np.sqrt(sum(2 * A[..., p, q] ** 2 for p, q in pairs))
        if np.all(off <= JACOBI_TOL * scale):
            break
        for p, q in pairs:
            apq = A[..., p, q]
            active = np.abs(apq) > 1e-300
            if not np.any(active):
                continue
            safe = np.where(active, apq, 1.0)
            tau = (A[..., q, q] - A[..., p, p]) / (2 * safe)
            t = np.where(tau >= 0, 1.0, -1.0) / (np.abs(tau) + np.hypot(1.0, tau))
            t = np.where(active, t, 0.0)
            c = 1 / np.sqrt(1 + t ** 2)
            s = t * c
            # A <- J^T A J with J the (p, q) rotation
            Ap = A[..., :, p].copy()
            Aq = A[..., :, q].copy()
            A[..., :, p] = c[..., None] * Ap - s[..., None] * Aq
            A[..., :, q] = s[..., None] * Ap + c[..., None] * Aq
            Ap = A[..., p, :].copy()
            Aq = A[..., q, :].copy()
            A[..., p, :] = c[..., None] * Ap - s[..., None] * Aq
            A[..., q, :] = s[..., None] * Ap + c[..., None] * Aq
            if vectors:
                Vp = V[..., :, p].copy()
                Vq = V[..., :, q].copy()
                V[..., :, p] = c[..., None] * Vp - s[..., None] * Vq
                V[..., :, q] = s[..., None] * Vp + c[..., None] * Vq
    w = np.diagonal(A, axis1=-2, axis2=-1).copy()
    order = np.argsort(w, axis=-1)
    w = np.take_along_axis(w, order, axis=-1)
    if vectors:
        V = np.take_along_axis(V, order[..., None, :], axis=-1)
    return w, V


def eig_sym(A) -> np.ndarray:
    """Ascending eigenvalues of a symmetric matrix or a stack of them."""
    A = np.asarray(A, dtype=float)
    n = A.shape[-1]
    if n == 1:
        return A[..., 0, :].copy()
    if n == 2:
        a, b, c = A[..., 0, 0], 0.5 * (A[..., 0, 1] + A[..., 1, 0]), A[..., 1, 1]
        m = 0.5 * (a + c)
        d = np.hypot(0.5 * (a - c), b)
        return np.stack([m - d, m + d], axis=-1)
    return _jacobi(sym(A), vectors=False)[0]


def eigh_sym(A):
    """Ascending eigenvalues and orthonormal eigenvectors (columns)."""
    A = sym(A)
    if A.shape[-1] == 1:
        return A[..., 0, :].copy(), np.ones_like(A)
    return _jacobi(A, vectors=True)


def lam_min(A) -> np.ndarray:
    return eig_sym(A)[..., 0]


def lam_max(A) -> np.ndarray:
    return eig_sym(A)[..., -1]


def spectral_norm(A) -> np.ndarray:
    w = eig_sym(A)
    return np.maximum(np.abs(w[..., 0]), np.abs(w[..., -1]))


def loewner_geq(A, B, tol: float = 0.0) -> bool:
    """A >= B - tol*I in the Loewner order."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.shape != B.shape:
        raise ValueError("dimension mismatch")
    return bool(lam_min(A - B) >= -tol)


def quad_form(A, y) -> np.ndarray:
    """Q_A(y) = 1/2 <Ay, y>; broadcasts over leading axes of y."""
    A = np.asarray(A, dtype=float)
    y = np.asarray(y, dtype=float)
    if y.shape[-1] != A.shape[-1]:
        raise ValueError("dimension mismatch")
    return 0.5 * np.einsum("...i,...ij,...j->...", y, A, y)


@dataclass(frozen=True, eq=False)
class Jet2:
    r: float
    p: np.ndarray
    A: np.ndarray

    def __post_init__(self):
        p = np.atleast_1d(np.asarray(self.p, dtype=float)).copy()
        A = np.atleast_2d(np.asarray(self.A, dtype=float)).copy()
        if A.shape != (p.size, p.size):
            raise ValueError("jet dimensions inconsistent")
        if not (np.isfinite(self.r) and np.all(np.isfinite(p)) and np.all(np.isfinite(A))):
            raise ValueError("jet entries must be finite")
        object.__setattr__(self, "r", float(self.r))
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "A", sym(A))

    @property
    def n(self) -> int:
        return self.p.size

    def __add__(self, other: "Jet2") -> "Jet2":
        return Jet2(self.r + other.r, self.p + other.p, self.A + other.A)

    def __neg__(self) -> "Jet2":
        return Jet2(-self.r, -self.p, -self.A)

    def __sub__(self, other: "Jet2") -> "Jet2":
        return self + (-other)

    def __mul__(self, t: float) -> "Jet2":
        return Jet2(t * self.r, t * self.p, t * self.A)

    __rmul__ = __mul__

    def close_to(self, other: "Jet2", tol: float = 1e-12) -> bool:
        return (abs(self.r - other.r) <= tol and np.allclose(self.p, other.p, atol=tol, rtol=0)
                and np.allclose(self.A, other.A, atol=tol, rtol=0))

    def vector(self) -> np.ndarray:
        """Flat coordinates (r, p, packed A) used for distances in jet space."""
        return np.concatenate([[self.r], self.p, pack_upper(self.A)])

    @classmethod
    def from_vector(cls, v, n: int) -> "Jet2":
        v = np.asarray(v, dtype=float)
        return cls(v[0], v[1:1 + n], unpack_upper(v[1 + n:], n))

    def to_json(self) -> dict:
        return {"r": self.r, "p": [float(v) for v in self.p], "A": pack_upper(self.A)}

    @classmethod
    def from_json(cls, d: dict) -> "Jet2":
        p = np.atleast_1d(np.asarray(d["p"], dtype=float))
        return cls(d["r"], p, unpack_upper(d["A"], p.size))

    def __repr__(self):
        return f"Jet2(r={self.r!r}, p={self.p.tolist()!r}, A={self.A.tolist()!r})"


def zero_jet(n: int) -> Jet2:
    return Jet2(0.0, np.zeros(n), np.zeros((n, n)))
