"""Dense two-phase simplex (Bland's rule) for small equality-form LPs.

Used for supporting-hyperplane witnesses: the problems here have n+1 <= 4 rows
and at most a few thousand columns, so a tableau method is plenty.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class LPResult:
    status: str          # "optimal" | "infeasible" | "unbounded"
    x: np.ndarray | None
    value: float
    dual: np.ndarray | None   # y with A^T y >= c and b^T y = value (max problem)
    pivots: int


def _pivot(T, row, col):
    T[row] /= T[row, col]
    piv = T[row]
    for i in range(T.shape[0]):
        if i != row and T[i, col] != 0.0:
            T[i] -= T[i, col] * piv


def _run(T, basis, m, allowed, tol, max_iter):
    """Maximize with reduced costs in row m; Bland's rule on entering and leaving."""
    it = 0
    while it < max_iter:
        d = T[m, :-1]
        cand = np.flatnonzero((d > tol) & allowed)
        if cand.size == 0:
            return "optimal", it
        j = int(cand[0])
        col = T[:m, j]
        pos = col > tol
        if not np.any(pos):
            return "unbounded", it
        ratios = np.full(m, np.inf)
        ratios[pos] = T[:m, -1][pos] / col[pos]
        best = ratios.min()
        ties = np.flatnonzero(ratios <= best + tol * max(1.0, abs(best)))
        row = int(ties[np.argmin([basis[t] for t in ties])])
        _pivot(T, row, j)
        basis[row] = j
        it += 1
    raise RuntimeError("simplex iteration limit reached")


def simplex_max(c, A_eq, b_eq, tol: float = 1e-10, max_iter: int = 100000) -> LPResult:
    """max c^T x  s.t.  A_eq x = b_eq, x >= 0."""
    c = np.asarray(c, dtype=float)
    A = np.array(A_eq, dtype=float, ndmin=2)
    b = np.array(b_eq, dtype=float).reshape(-1)
    m, N = A.shape
    sign = np.where(b < 0, -1.0, 1.0)
    A = A * sign[:, None]
    b = b * sign
    scale = max(1.0, np.abs(A).max(), np.abs(b).max())
    ctol = tol * scale

    # phase 1: artificials N..N+m-1
    T = np.zeros((m + 1, N + m + 1))
    T[:m, :N] = A
    T[:m, N:N + m] = np.eye(m)
    T[:m, -1] = b
    T[m, :N] = A.sum(axis=0)
    T[m, -1] = b.sum()
    basis = list(range(N, N + m))
    allowed = np.ones(N + m, dtype=bool)
    _, it1 = _run(T, basis, m, allowed, ctol, max_iter)
    if T[m, -1] > ctol * max(1, m):
        return LPResult("infeasible", None, np.nan, None, it1)

    # drive remaining artificials out of the basis; drop redundant rows
    keep = np.ones(m, dtype=bool)
    for i in range(m):
        if basis[i] >= N:
            nz = np.flatnonzero(np.abs(T[i, :N]) > ctol)
            if nz.size:
                _pivot(T, i, int(nz[0]))
                basis[i] = int(nz[0])
            else:
                keep[i] = False

    # phase 2
    allowed = np.zeros(N + m, dtype=bool)
    allowed[:N] = True
    cB = np.array([c[j] if j < N else 0.0 for j in basis])
    cB[~keep] = 0.0
    T[m, :] = 0.0
    T[m, :N] = c
    for i in range(m):
        if keep[i]:
            T[m] -= cB[i] * T[i]
    T[m, N:N + m] = 0.0
    status, it2 = _run(T, basis, m, allowed, ctol, max_iter)
    if status != "optimal":
        return LPResult(status, None, np.inf, None, it1 + it2)

    x = np.zeros(N)
    for i in range(m):
        if keep[i] and basis[i] < N:
            x[basis[i]] = T[i, -1]
    rows = np.flatnonzero(keep)
    B = A[np.ix_(rows, [basis[i] for i in rows])]
    y = np.zeros(m)
    y[rows] = np.linalg.solve(B.T, c[[basis[i] for i in rows]])
    y *= sign
    return LPResult("optimal", x, float(c @ x), y, it1 + it2)
