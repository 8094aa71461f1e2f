"""Sup-convolution of grid fields and the jet transport it induces."""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .grid import ScalarField, jet_arrays
from .jets import eig_sym, quad_form


class RegularizeError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class SupConvResult:
    eps: float
    delta: float
    M: float
    field: ScalarField
    argmax: np.ndarray      # flat index of the maximizing node, grid-shaped
    windowed: bool

    def argmax_node(self, index) -> tuple:
        spec = self.field.spec
        return spec.unravel(int(self.argmax[spec.unravel(index)]))

    def inner_mask(self) -> np.ndarray:
        """Nodes of X_delta: at distance > delta from every face of the box."""
        spec = self.field.spec
        X = spec.coords()
        lo, hi = np.asarray(spec.box.lo), np.asarray(spec.box.hi)
        return np.all((X - lo > self.delta) & (hi - X > self.delta), axis=-1)


def _bound(field: ScalarField) -> float:
    fin = field.values[field.finite]
    if fin.size == 0:
        raise RegularizeError("sup-convolution of an all -inf field")
    return float(np.abs(fin).max())


def _window_offsets(h, shape, delta):
    reach = [min(int(np.floor(delta / hi + 1e-9)), s - 1) for hi, s in zip(h, shape)]
    offs = np.array(list(itertools.product(*[range(-k, k + 1) for k in reach])), dtype=int)
    d2 = np.sum((offs * h) ** 2, axis=1)
    keep = d2 <= delta ** 2 * (1 + 1e-12) + 1e-300
    offs, d2 = offs[keep], d2[keep]
    strides = np.array([int(np.prod(shape[a + 1:])) for a in range(len(shape))])
    order = np.argsort(offs @ strides, kind="stable")
    return offs[order], d2[order]


def _sup_window(u, h, eps, delta):
    shape = u.shape
    best = np.full(shape, -np.inf)
    arg = np.zeros(shape, dtype=np.int64)
    flat = np.arange(u.size).reshape(shape)
    offs, d2 = _window_offsets(h, shape, delta)
    for z, dz in zip(offs, d2):
        dst = tuple(slice(max(0, -o), s - max(0, o)) for o, s in zip(z, shape))
        src = tuple(slice(max(0, o), s - max(0, -o)) for o, s in zip(z, shape))
        cand = u[src] - dz / (2 * eps)
        b = best[dst]
        upd = cand > b
        b[upd] = cand[upd]
        a = arg[dst]
        a[upd] = flat[src][upd]
    return best, arg


def _sup_full(u, h, eps, chunk=256):
    shape = u.shape
    n = len(shape)
    idx = np.stack(np.unravel_index(np.arange(u.size), shape), axis=-1)
    uf = u.reshape(-1)
    best = np.empty(u.size)
    arg = np.empty(u.size, dtype=np.int64)
    for s in range(0, u.size, chunk):
        dz = (idx[None, :, :] - idx[s:s + chunk, None, :]) * h
        d2 = np.sum(dz ** 2, axis=-1) if n > 1 else dz[..., 0] ** 2
        S = uf[None, :] - d2 / (2 * eps)
        k = np.argmax(S, axis=1)
        best[s:s + chunk] = S[np.arange(len(k)), k]
        arg[s:s + chunk] = k
    return best.reshape(shape), arg.reshape(shape)


def _refine(u_field: ScalarField, best, arg, eps, smooth_tol=None):
    """Replace the node maximum by the maximum of the local quadratic model (one cell).

    Only applied where the centered Hessian at the maximizing node agrees with its
    axis neighbours within ``smooth_tol`` (default 1/(4 eps)); at kinks the node
    maximum is kept.
    """
    spec = u_field.spec
    _, g, H = jet_arrays(u_field)
    X = spec.coords()
    out = best.copy()
    n = spec.ndim
    smooth_tol = 0.25 / eps if smooth_tol is None else smooth_tol
    inner = np.asarray(H.shape[:-2])
    for k in np.ndindex(spec.shape):
        j = spec.unravel(int(arg[k]))
        if not spec.is_interior(j):
            continue
        jj = tuple(i - 1 for i in j)
        smooth = True
        for ax in range(n):
            for sgn in (-1, 1):
                nb = list(jj)
                nb[ax] += sgn
                if 0 <= nb[ax] < inner[ax]:
                    if not np.max(np.abs(H[tuple(nb)] - H[jj])) <= smooth_tol:
                        smooth = False
        if not smooth:
            continue
        Hm = H[jj] - np.eye(n) / eps
        if not np.all(np.isfinite(Hm)) or eig_sym(Hm)[-1] >= 0:
            continue
        gm = g[jj] - (X[j] - X[k]) / eps
        step = -np.linalg.solve(Hm, gm)
        if np.all(np.abs(step) <= spec.h):
            out[k] = best[k] + gm @ step + quad_form(Hm, step)
    return out


def sup_convolve(field: ScalarField, eps: float, window: bool | None = None,
                 refine: bool = False) -> SupConvResult:
    """u^eps(x) = max over nodes y of u(y) - |y - x|^2 / (2 eps), with argmax per node.

    The window |y - x| <= 2 sqrt(eps M) is exact for bounded fields; fields with
    -inf entries use the full grid. ``refine`` adds a one-cell quadratic
    refinement of each maximum where u is locally smooth (argmax unchanged).
    """
    if not eps > 0:
        raise RegularizeError("eps must be positive")
    M = _bound(field)
    delta = 2.0 * np.sqrt(eps * M)
    u = field.values
    h = field.spec.h
    if window is None:
        window = not field.has_neg_inf()
    if window and field.has_neg_inf():
        raise RegularizeError("window formula needs a bounded field")
    if window:
        best, arg = _sup_window(u, h, eps, delta)
    else:
        best, arg = _sup_full(u, h, eps)
    if refine:
        if field.has_neg_inf():
            raise RegularizeError("refinement needs a finite field")
        best = _refine(field, best, arg, eps)
    return SupConvResult(float(eps), float(delta), M, ScalarField(field.spec, best), arg, bool(window))


def inf_convolve(field: ScalarField, eps: float, **kw) -> ScalarField:
    return -sup_convolve(-field, eps, **kw).field


def _contact_gap(u: ScalarField, center, p, A, radius, mask=None):
    """max over nodes y within radius of u(y) - [u(c) + <p, y-c> + Q_A(y-c)]."""
    spec = u.spec
    c = spec.unravel(center)
    X = spec.coords()
    d = X - X[c]
    near = np.linalg.norm(d, axis=-1) <= radius + 1e-9 * spec.hmax
    if mask is not None:
        near &= mask
    dd = d[near]
    gap = u.values[near] - (u.values[c] + dd @ np.asarray(p) + quad_form(A, dd))
    return float(gap.max())


def magic_transport_check(u: ScalarField, eps: float, x, p, A, tol: float = 1e-9,
                          radius: float | None = None, sc: SupConvResult | None = None) -> dict:
    """Transport an upper contact jet (p, A) of u^eps at x to u at the maximizer.

    The contact inequality at the stored argmax xi* is checked over nodes y with
    y - xi* + x on the grid and |y - xi*| <= radius, which is exactly where the
    discrete transport argument applies.
    """
    spec = u.spec
    sc = sup_convolve(u, eps) if sc is None else sc
    radius = 4 * spec.hmax if radius is None else radius
    p = np.atleast_1d(np.asarray(p, dtype=float))
    A = np.atleast_2d(np.asarray(A, dtype=float))
    xi_idx = spec.unravel(x)
    gap0 = _contact_gap(sc.field, xi_idx, p, A, radius)
    if gap0 > tol:
        raise RegularizeError("input jet is not an upper contact jet for u^eps")
    x0 = spec.node(xi_idx)
    xi = x0 + eps * p
    xi_near = spec.nearest_index(xi)
    star = sc.argmax_node(xi_idx)
    shift = np.asarray(star) - np.asarray(xi_idx)
    # nodes y whose translate y - shift exists on the grid
    ok = np.ones(spec.shape, dtype=bool)
    for ax, s in enumerate(shift):
        sl = [slice(None)] * spec.ndim
        if s > 0:
            sl[ax] = slice(0, s)
            ok[tuple(sl)] = False
        elif s < 0:
            sl[ax] = slice(spec.shape[ax] + s, None)
            ok[tuple(sl)] = False
    gap = _contact_gap(u, star, p, A, radius, mask=ok)
    star_pt = spec.node(star)
    cell = float(np.max(np.abs(star_pt - xi) / spec.h))
    vgap = float(u[xi_near] - sc.field[xi_idx] - 0.5 * eps * float(p @ p))
    return {
        "x": x0.tolist(),
        "xi": xi.tolist(),
        "xi_node": spec.node(xi_near).tolist(),
        "xi_rounding": float(np.linalg.norm(spec.node(xi_near) - xi)),
        "argmax": star_pt.tolist(),
        "cells_from_argmax": cell,
        "within_one_cell": bool(cell <= 1 + 1e-9),
        "contact_gap": gap,
        "contact_ok": bool(gap <= tol),
        "value_gap": vgap,
        "value_ok": bool(abs(vgap) <= tol),
    }
