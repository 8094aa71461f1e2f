"""Subdifferentials, quasi-convexity diagnostics, C^{1,1} checks and discrete Legendre transforms."""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .envelope import upper_envelope_lp
from .grid import Box, GridError, GridSpec, ScalarField, jet_arrays
from .jets import eig_sym


class ConvexError(ValueError):
    pass


@dataclass(frozen=True)
class Subgradient1D:
    left_slope: float
    right_slope: float
    tol: float = 0.0

    @property
    def feasible(self) -> bool:
        return self.left_slope <= self.right_slope + self.tol

    def contains(self, p: float, tol: float | None = None) -> bool:
        t = self.tol if tol is None else tol
        return self.left_slope - t <= p <= self.right_slope + t


@dataclass(frozen=True, eq=False)
class SubgradientWitness:
    point: tuple
    p: np.ndarray
    feasible: bool
    slack: float    # min_y u(y) - u(x) - <p, y-x>


def _require_finite(field: ScalarField, what: str):
    if field.has_neg_inf():
        raise ConvexError(f"{what} undefined on -inf set")


def subdifferential(field: ScalarField, index, tol: float = 1e-10):
    """Global subdifferential at a node: exact slope interval in 1D, an LP witness in nD."""
    _require_finite(field, "subdifferential")
    spec = field.spec
    idx = spec.unravel(index)
    pts = spec.points()
    u = field.flat
    k = spec.ravel(idx)
    x, ux = pts[k], u[k]
    if spec.ndim == 1:
        d = pts[:, 0] - x[0]
        left = d < 0
        right = d > 0
        lo = np.max((ux - u[left]) / (-d[left])) if left.any() else -np.inf
        hi = np.min((u[right] - ux) / d[right]) if right.any() else np.inf
        return Subgradient1D(float(lo), float(hi), tol)
    env, slope = upper_envelope_lp(pts, -u, x[None, :])
    p = -slope[0]
    slack = float(np.min(u - ux - (pts - x) @ p))
    return SubgradientWitness(idx, p, bool(slack >= -tol), slack)


def _directions(n: int) -> list:
    e = np.eye(n, dtype=int)
    dirs = [e[i] for i in range(n)]
    for i, j in itertools.combinations(range(n), 2):
        dirs.append(e[i] + e[j])
        dirs.append(e[i] - e[j])
    return dirs


def directional_second_differences(field: ScalarField) -> np.ndarray:
    """Second differences along axes and face diagonals on interior nodes, unit-normalized.

    Returns shape (ndirs, *interior_shape).
    """
    u = field.values
    h = field.spec.h
    out = []
    core = tuple(slice(1, s - 1) for s in u.shape)
    for e in _directions(field.spec.ndim):
        plus = tuple(slice(1 + o, s - 1 + o) for o, s in zip(e, u.shape))
        minus = tuple(slice(1 - o, s - 1 - o) for o, s in zip(e, u.shape))
        d2 = float(np.sum((e * h) ** 2))
        out.append((u[plus] - 2 * u[core] + u[minus]) / d2)
    return np.stack(out)


def quasiconvex_index(field: ScalarField) -> float:
    """Smallest lambda >= 0 making u + lambda/2 |x|^2 have nonnegative lattice second differences."""
    _require_finite(field, "quasi-convexity index")
    m = directional_second_differences(field).min()
    return float(max(0.0, -m))


def c11_check(field: ScalarField, lam: float, tol: float = 1e-8) -> dict:
    _require_finite(field, "C11 check")
    qp = quasiconvex_index(field)
    qm = quasiconvex_index(-field)
    _, p, _ = jet_arrays(field)
    h = field.spec.h
    lip = 0.0
    for ax in range(field.spec.ndim):
        a = np.take(p, range(0, p.shape[ax] - 1), axis=ax)
        b = np.take(p, range(1, p.shape[ax]), axis=ax)
        if a.size:
            lip = max(lip, float(np.linalg.norm(b - a, axis=-1).max() / h[ax]))
    return {
        "qc_plus": bool(qp <= lam + tol),
        "qc_minus": bool(qm <= lam + tol),
        "index_plus": qp,
        "index_minus": qm,
        "grad_lip": lip,
        "lip_ok": bool(lip <= lam + tol),
    }


# ---- Legendre-Fenchel ----

def _primal_data(field: ScalarField):
    mask = field.finite.reshape(-1)
    if not mask.any():
        raise ConvexError("conjugate of an all -inf field")
    return field.spec.points()[mask], field.flat[mask], np.flatnonzero(mask)


def _scores(Y, Z, f):
    if Z.shape[1] == 1:
        return Y[:, :1] * Z[:, 0][None, :] - f[None, :]
    return Y @ Z.T - f[None, :]


def conjugate_argmax(field: ScalarField, Y: np.ndarray, chunk: int = 512):
    """max_z <y, z> - f(z) and its lowest-index maximizer for each row of Y."""
    Z, f, ids = _primal_data(field)
    vals = np.empty(len(Y))
    arg = np.empty(len(Y), dtype=int)
    for s in range(0, len(Y), chunk):
        S = _scores(Y[s:s + chunk], Z, f)
        k = np.argmax(S, axis=1)
        vals[s:s + chunk] = S[np.arange(len(k)), k]
        arg[s:s + chunk] = ids[k]
    return vals, arg


def _lower_hull_1d(z, f):
    hull = []
    for k in range(len(z)):
        while len(hull) >= 2:
            o, a = hull[-2], hull[-1]
            cr = (z[a] - z[o]) * (f[k] - f[o]) - (f[a] - f[o]) * (z[k] - z[o])
            if cr < 0:
                hull.pop()
            else:
                break
        hull.append(k)
    return np.asarray(hull)


def conjugate_1d_linear(field: ScalarField, y: np.ndarray) -> np.ndarray:
    """Linear-time conjugate in 1D: lower hull of the data, then a slope walk over sorted y.

    Collinear hull points are kept, and every hull point whose chord slope ties
    with y is evaluated, so the result coincides with the brute-force maximum.
    """
    Z, f, _ = _primal_data(field)
    z = Z[:, 0]
    hv = _lower_hull_1d(z, f)
    hz, hf = z[hv], f[hv]
    s = np.diff(hf) / np.diff(hz) if len(hv) > 1 else np.zeros(0)
    y = np.asarray(y, dtype=float)
    order = np.argsort(y, kind="stable")
    out = np.empty(len(y))
    k = 0
    for j in order:
        yj = y[j]
        while k < len(s) and s[k] < yj:
            k += 1
        lo = hi = k
        tie = 1e-9 * (1.0 + abs(yj))
        while lo > 0 and abs(s[lo - 1] - yj) <= tie:
            lo -= 1
        while hi < len(s) and abs(s[hi] - yj) <= tie:
            hi += 1
        lo, hi = max(lo - 1, 0), min(hi + 1, len(hz) - 1)
        cand = yj * hz[lo:hi + 1] - hf[lo:hi + 1]
        out[j] = cand.max()
    return out


def fenchel_conjugate(field: ScalarField, dual_spec: GridSpec, method: str = "brute") -> ScalarField:
    if dual_spec.ndim != field.spec.ndim:
        raise ConvexError("dual grid dimension mismatch")
    Y = dual_spec.points()
    if method == "linear":
        if field.spec.ndim != 1:
            raise ConvexError("linear-time conjugate is 1D only")
        return ScalarField(dual_spec, conjugate_1d_linear(field, Y[:, 0]))
    vals, _ = conjugate_argmax(field, Y)
    return ScalarField(dual_spec, vals)


def slope_dual_spec(field: ScalarField, refine: int = 2) -> GridSpec:
    """Dual grid covering the forward-difference slope range padded by one h, spacing h/refine."""
    u = field.values
    h = field.spec.h
    lo, hi, shape = [], [], []
    for ax in range(field.spec.ndim):
        d = np.diff(u, axis=ax) / h[ax]
        d = d[np.isfinite(d)]
        a = (float(d.min()) if d.size else 0.0) - h[ax]
        b = (float(d.max()) if d.size else 0.0) + h[ax]
        step = h[ax] / refine
        m = max(3, int(np.ceil((b - a) / step)) + 1)
        lo.append(a)
        hi.append(a + (m - 1) * step)
        shape.append(m)
    return GridSpec(Box(lo, hi), shape)


def biconjugate(field: ScalarField, refine: int = 2, dual_spec: GridSpec | None = None) -> ScalarField:
    dual_spec = slope_dual_spec(field, refine) if dual_spec is None else dual_spec
    g = fenchel_conjugate(field, dual_spec)
    return fenchel_conjugate(g, field.spec)


def grad_conjugate(field: ScalarField, dual_spec: GridSpec, y) -> np.ndarray:
    """Node-rounded gradient of the conjugate: the maximizing primal node for dual point y.

    Raises if the map fails the contraction post-check against the other dual nodes.
    """
    yv = _dual_point(dual_spec, y)
    Y = dual_spec.points()
    _, arg = conjugate_argmax(field, np.vstack([yv, Y]))
    P = field.spec.points()
    G = P[arg]
    slack = 2 * float(np.linalg.norm(field.spec.h))
    gap = np.linalg.norm(G[1:] - G[0], axis=1) - np.linalg.norm(Y - yv, axis=1)
    if gap.max() > slack + 1e-12:
        raise ConvexError("input not of the required form (gradient map not contractive)")
    return G[0]


def _dual_point(dual_spec: GridSpec, y) -> np.ndarray:
    if isinstance(y, (tuple, list)) and all(isinstance(i, (int, np.integer)) for i in y):
        return dual_spec.node(y)
    if isinstance(y, (int, np.integer)):
        return dual_spec.node(int(y))
    return np.atleast_1d(np.asarray(y, dtype=float))


def _refined_argmax(field: ScalarField, yv: np.ndarray):
    """Maximizer of <y, .> - f with a one-cell quadratic refinement around the best node."""
    spec = field.spec
    _, arg = conjugate_argmax(field, yv[None, :])
    idx = spec.unravel(int(arg[0]))
    if not spec.is_interior(idx):
        raise ConvexError("non-interior y: maximizer on the primal boundary")
    block = field.values[tuple(slice(i - 1, i + 2) for i in idx)]
    z0 = spec.node(idx)
    sub = ScalarField(GridSpec(Box(np.zeros(spec.ndim), 2 * spec.h), 3), block)
    _, g, H = jet_arrays(sub)
    c = (0,) * spec.ndim
    g = yv - g[c]
    H = -H[c]
    step = np.zeros(spec.ndim)
    if np.all(eig_sym(H) < 0):
        step = -np.linalg.solve(H, g)
        step = np.clip(step, -spec.h, spec.h)
    return z0 + step, idx


def _hessian_at(field: ScalarField, x0: np.ndarray) -> np.ndarray:
    """Multilinear interpolation of the centered-difference Hessian at a point."""
    spec = field.spec
    _, _, H = jet_arrays(field)
    t = (np.asarray(x0) - np.asarray(spec.box.lo)) / spec.h - 1.0  # in interior-index units
    base = np.floor(t).astype(int)
    base = np.clip(base, 0, np.asarray(H.shape[:-2]) - 2)
    w = np.clip(t - base, 0.0, 1.0)
    out = np.zeros((spec.ndim, spec.ndim))
    for corner in itertools.product((0, 1), repeat=spec.ndim):
        wt = np.prod([w[a] if c else 1 - w[a] for a, c in enumerate(corner)])
        out += wt * H[tuple(base + np.asarray(corner))]
    return out


def magic_legendre_check(u: ScalarField, r: float, y, tol: float | None = None,
                         dual_step: float | None = None) -> dict:
    """Compare D^2 f at x0 = G(y) with the inverse of DG(y) for f = r u + |x|^2/2.

    G is evaluated with sub-node refinement of the argmax so that its finite
    differences at dual spacing ``dual_step`` are meaningful.
    """
    if r <= 0:
        raise ConvexError("r must be positive")
    _require_finite(u, "Legendre check")
    spec = u.spec
    X = spec.coords()
    f = ScalarField(spec, r * u.values + 0.5 * np.sum(X ** 2, axis=-1))
    tol = 10 * spec.hmax if tol is None else tol
    yv = np.atleast_1d(np.asarray(y, dtype=float))
    if dual_step is None:
        _, gp, _ = jet_arrays(f)
        spread = np.ptp(gp.reshape(-1, spec.ndim), axis=0)
        dual_step = float(np.max(spread / (np.asarray(spec.shape) - 1)))
    x0, idx = _refined_argmax(f, yv)
    n = spec.ndim
    B = np.empty((n, n))
    for i in range(n):
        e = np.zeros(n)
        e[i] = dual_step
        xp, _ = _refined_argmax(f, yv + e)
        xm, _ = _refined_argmax(f, yv - e)
        B[:, i] = (xp - xm) / (2 * dual_step)
    B = 0.5 * (B + B.T)
    det = float(np.linalg.det(B))
    if abs(det) <= 1e-8:
        raise ConvexError("critical value: lemma hypotheses fail")
    H = _hessian_at(f, x0)
    res = float(np.linalg.norm(H @ B - np.eye(n), 2))
    return {
        "y": yv.tolist(),
        "x0": x0.tolist(),
        "argmax_node": list(idx),
        "B": B.tolist(),
        "H": H.tolist(),
        "det_B": det,
        "residual": res,
        "tol": tol,
        "pass": bool(res <= tol),
    }
