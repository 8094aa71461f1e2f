"""Concave (upper) envelopes of point data with supporting slopes.

Three routes share one contract ``(env, slope)`` evaluated at the data points:

* ``upper_envelope_1d``: monotone chain, exact and O(N) after sorting;
* ``upper_envelope_hull``: upper facets of the convex hull (scipy/Qhull);
* ``upper_envelope_lp``: one small LP per point (own simplex), used as the
  independent oracle and as the fallback on degenerate input.
"""
from __future__ import annotations

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from .lp import simplex_max


def _cross(o, a, b):
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def upper_hull_1d(x, v):
    """Indices (into sorted order) of the upper hull vertices of points (x, v); x ascending."""
    hull = []
    for k in range(len(x)):
        while len(hull) >= 2 and _cross((x[hull[-2]], v[hull[-2]]), (x[hull[-1]], v[hull[-1]]), (x[k], v[k])) >= 0:
            hull.pop()
        hull.append(k)
    return hull


def upper_envelope_1d(x, v):
    """Least concave majorant of (x, v) at the points and a supporting slope at each.

    x must be strictly increasing. For points strictly inside a hull segment the
    slope is that segment's; at hull vertices it is the midpoint of the adjacent
    segment slopes (any value in between supports), one-sided at the ends.
    """
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    if x.size == 1:
        return v.copy(), np.zeros(1)
    hv = upper_hull_1d(x, v)
    hx, hy = x[hv], v[hv]
    env = np.interp(x, hx, hy)
    seg = np.diff(hy) / np.diff(hx)
    k = np.clip(np.searchsorted(hx, x, side="right") - 1, 0, len(seg) - 1)
    slope = seg[k].copy()
    vert = np.zeros(x.size, dtype=bool)
    vert[hv] = True
    pos = np.searchsorted(hx, x)
    for i in np.flatnonzero(vert):
        j = pos[i]
        if 0 < j < len(hx) - 1:
            slope[i] = 0.5 * (seg[j - 1] + seg[j])
        elif j == 0:
            slope[i] = seg[0]
        else:
            slope[i] = seg[-1]
    return env, slope


def upper_envelope_lp(points, values, query=None):
    """Envelope value and supporting slope at each query point via the simplex.

    For query x: max sum l_k v_k s.t. sum l_k (y_k, 1) = (x, 1), l >= 0; the dual
    (p, c) gives the supporting affine function <p, .> + c >= v.
    """
    Y = np.asarray(points, dtype=float)
    v = np.asarray(values, dtype=float)
    Q = Y if query is None else np.atleast_2d(np.asarray(query, dtype=float))
    N, n = Y.shape
    Aeq = np.vstack([Y.T, np.ones(N)])
    env = np.empty(len(Q))
    slope = np.empty((len(Q), n))
    for i, x in enumerate(Q):
        res = simplex_max(v, Aeq, np.append(x, 1.0))
        if res.status != "optimal":
            raise ValueError(f"envelope LP {res.status} at {x}")
        env[i] = res.value
        slope[i] = res.dual[:n]
    return env, slope


def upper_envelope_hull(points, values, tol: float = 1e-12, chunk: int = 2048):
    """Envelope at the data points from the upper facets of the (n+1)-d convex hull.

    A sentinel point far below the data keeps the hull full-dimensional when the
    data are affine. Falls back to the LP route if Qhull still rejects the input
    (for instance when the points themselves lie in a hyperplane of R^n).
    """
    Y = np.asarray(points, dtype=float)
    v = np.asarray(values, dtype=float)
    N, n = Y.shape
    if N < n + 2:
        return upper_envelope_lp(Y, v)
    span = float(v.max() - v.min())
    ext = float(np.ptp(Y, axis=0).max())
    apex = np.append(Y.mean(axis=0), v.min() - 10.0 * (1.0 + span + ext))
    P = np.vstack([np.column_stack([Y, v]), apex])
    try:
        hull = ConvexHull(P)
    except QhullError:
        return upper_envelope_lp(Y, v)
    eq = hull.equations
    up = eq[:, n] > tol
    a, b, c = eq[up, :n], eq[up, n], eq[up, n + 1]
    # facet plane: z = -(a.y + c)/b ; slope -a/b
    fs = -a / b[:, None]
    fc = -c / b
    env = np.empty(N)
    slope = np.empty((N, n))
    for s in range(0, N, chunk):
        z = Y[s:s + chunk] @ fs.T + fc
        zmin = z.min(axis=1)
        env[s:s + chunk] = zmin
        scale = 1e-9 * (1.0 + np.abs(zmin))
        act = z <= (zmin + scale)[:, None]
        slope[s:s + chunk] = (act @ fs) / act.sum(axis=1)[:, None]
    return env, slope
