"""Upper contact sets, vertex maps, the largest-eigenvalue functional, density and
Alexandrov-type inequalities, and summand decomposition of contact jets."""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from math import gamma, pi

import numpy as np

from .envelope import upper_envelope_1d, upper_envelope_hull, upper_envelope_lp
from .grid import (Box, GridMask, ScalarField, ball_mask, jet_arrays, mask_boundary,
                   mask_interior, mask_measure, region_mask)
from .jets import lam_min, quad_form


class ContactError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ContactSet:
    mask: GridMask
    gradients: np.ndarray    # (count, n), aligned with mask.indices()
    type_A: np.ndarray
    region: GridMask
    center: np.ndarray
    tol: float

    def measure(self) -> float:
        return mask_measure(self.mask)

    def gradient_at(self, index) -> np.ndarray:
        k = self.mask.spec.ravel(index)
        pos = np.searchsorted(self.mask.indices(), k)
        ids = self.mask.indices()
        if pos >= ids.size or ids[pos] != k:
            raise ContactError("node is not a contact point")
        return self.gradients[pos]

    def points(self) -> np.ndarray:
        return self.mask.points()


@dataclass(frozen=True, eq=False)
class StrictJetWitness:
    x: tuple
    p: np.ndarray
    A: np.ndarray
    eps_strict: float
    radius: float

    def excess(self, w: ScalarField) -> float:
        """max over nodes y != x within radius of w(y) - phi(y) + eps |y-x|^2 (<= 0 when valid)."""
        spec = w.spec
        X = spec.coords()
        x = spec.unravel(self.x)
        d = X - X[x]
        dist = np.linalg.norm(d, axis=-1)
        near = (dist <= self.radius + 1e-9 * spec.hmax) & (dist > 0)
        dd = d[near]
        phi = w.values[x] + dd @ np.asarray(self.p) + quad_form(np.asarray(self.A), dd)
        return float(np.max(w.values[near] - phi + self.eps_strict * dist[near] ** 2))


def _default_tol(values) -> float:
    return 1e-9 * (1.0 + float(np.abs(values).max()))


def contact_set(u: ScalarField, A=None, region=None, tol: float | None = None,
                method: str = "auto") -> ContactSet:
    """Nodes x of the region where some p gives
    u(y) <= u(x) + <p, y-x> + Q_A(y-x) + tol for every region node y.

    Reduced to a concave-envelope touch test for h = u - Q_A(. - x0).
    ``method``: "auto" (1D chain / nD hull), "hull", or "lp".
    """
    spec = u.spec
    n = spec.ndim
    A = np.zeros((n, n)) if A is None else np.atleast_2d(np.asarray(A, dtype=float))
    reg = region_mask(spec, region)
    ids = reg.indices()
    if ids.size == 0:
        raise ContactError("empty region")
    vals = u.flat[ids]
    if not np.all(np.isfinite(vals)):
        raise ContactError("-inf inside the contact region")
    Y = spec.points()[ids]
    x0 = 0.5 * (Y.min(axis=0) + Y.max(axis=0))
    hv = vals - quad_form(A, Y - x0)
    if method == "auto":
        method = "chain" if n == 1 else "hull"
    if method == "chain":
        env, slope = upper_envelope_1d(Y[:, 0], hv)
        slope = slope[:, None]
    elif method == "hull":
        env, slope = upper_envelope_hull(Y, hv)
    elif method == "lp":
        env, slope = upper_envelope_lp(Y, hv)
    else:
        raise ContactError(f"unknown method {method!r}")
    tol = _default_tol(hv) if tol is None else tol
    hit = hv + tol >= env
    bits = np.zeros(spec.size, dtype=bool)
    bits[ids[hit]] = True
    grads = slope[hit] + (Y[hit] - x0) @ A.T
    return ContactSet(GridMask(spec, bits), grads, A, reg, x0, float(tol))


def contact_violation(u: ScalarField, cs: ContactSet) -> float:
    """Largest failure of the contact inequality over flagged nodes and region nodes."""
    spec = u.spec
    Y = spec.points()[cs.region.indices()]
    uy = u.flat[cs.region.indices()]
    worst = -np.inf
    for k, p in zip(cs.mask.indices(), cs.gradients):
        x = spec.points()[k]
        d = Y - x
        worst = max(worst, float(np.max(uy - u.flat[k] - d @ p - quad_form(cs.type_A, d))))
    return worst


def vertex_map_check(u: ScalarField, r: float, cs: ContactSet, chunk: int = 1024, width: int = 1) -> dict:
    """Pairwise expansion of V(x) = x - r p(x) over a type-(1/r)I contact set.

    Only contact nodes at least ``width`` cells inside the grid are used: on the
    grid boundary the contact slope is one-sided and not determined by u.
    """
    n = u.spec.ndim
    if not np.allclose(cs.type_A, np.eye(n) / r, rtol=1e-12, atol=1e-12):
        raise ContactError("contact set type does not match (1/r) I")
    keep = u.spec.interior_mask(width).ravel()[cs.mask.indices()] if width > 0 else slice(None)
    X = cs.points()[keep]
    V = X - r * cs.gradients[keep]
    h = u.spec.hmax
    worst_ratio, worst_excess, dmin = 0.0, -np.inf, np.inf
    ok = True
    for s in range(0, len(X), chunk):
        dx = np.linalg.norm(X[s:s + chunk, None, :] - X[None, :, :], axis=-1)
        dv = np.linalg.norm(V[s:s + chunk, None, :] - V[None, :, :], axis=-1)
        off = dx > 0
        if not off.any():
            continue
        ratio = dv[off] / dx[off]
        worst_ratio = max(worst_ratio, float(ratio.max()))
        worst_excess = max(worst_excess, float((dv[off] - dx[off]).max()))
        dmin = min(dmin, float(dx[off].min()))
        ok &= bool(np.all(dv[off] <= dx[off] + 4 * h * (1 + 1e-12)))
    return {
        "count": int(len(X)),
        "max_expansion": worst_ratio if len(X) > 1 else 1.0,
        "max_excess": worst_excess if len(X) > 1 else 0.0,
        "min_pair_distance": dmin,
        "pass": bool(ok),
    }


def slod_K(u: ScalarField, x, eps_seq, tol: float | None = None) -> float:
    """Shell estimate of the generalized largest eigenvalue of u at a node.

    Uses the centered gradient when forward and backward slopes agree within
    ``tol`` on every axis (default sqrt(h)), otherwise returns +inf. The value
    is the max over the two smallest radii of max_shell 2 (u(x+d) - u(x) - <p,d>) / |d|^2.
    """
    spec = u.spec
    idx = spec.unravel(x)
    if not spec.is_interior(idx):
        raise ContactError("non-interior node")
    h = spec.h
    tol = float(np.sqrt(spec.hmax)) if tol is None else tol
    U = u.values
    p = np.empty(spec.ndim)
    for ax in range(spec.ndim):
        e = np.zeros(spec.ndim, dtype=int)
        e[ax] = 1
        fw = (U[tuple(np.add(idx, e))] - U[idx]) / h[ax]
        bw = (U[idx] - U[tuple(np.subtract(idx, e))]) / h[ax]
        if not (np.isfinite(fw) and np.isfinite(bw)) or abs(fw - bw) > tol:
            return float("inf")
        p[ax] = 0.5 * (fw + bw)
    X = spec.coords()
    d = X - X[idx]
    dist = np.linalg.norm(d, axis=-1)
    radii = sorted(float(e) for e in eps_seq)[:2]
    best = -np.inf
    hm = spec.hmax
    for eps in radii:
        shell = (dist >= eps - hm / 2) & (dist <= eps + hm / 2) & (dist > 0)
        if not shell.any():
            raise ContactError("grid too coarse for the requested shell")
        lo = np.asarray(idx) * h + np.asarray(spec.box.lo)
        if np.any(lo - eps < np.asarray(spec.box.lo) - 1e-12) or np.any(lo + eps > np.asarray(spec.box.hi) + 1e-12):
            raise ContactError("shell leaves the grid")
        dd = d[shell]
        val = 2 * (U[shell] - U[idx] - dd @ p) / dist[shell] ** 2
        best = max(best, float(val.max()))
    return best


def density_experiment(u: ScalarField, r: float, R: float, rho_list, tol: float = 1e-12) -> list:
    """Contact density of type (1/r)I in balls about the origin versus (1 - sqrt(r/R))^n."""
    if not 0 < r <= R:
        raise ContactError("need 0 < r <= R")
    spec = u.spec
    n = spec.ndim
    o = spec.nearest_index(np.zeros(n))
    if np.linalg.norm(spec.node(o)) > 1e-9 * spec.hmax:
        raise ContactError("origin must be a grid node")
    X = spec.coords()
    r2 = np.sum(X ** 2, axis=-1)
    U = u.values
    others = r2 > 0
    if (abs(U[o]) > tol or np.any(U[others] < -tol)
            or np.any(U[others] > r2[others] / (2 * R) - tol)):
        raise ContactError("density hypotheses violated")
    bound = (1 - np.sqrt(r / R)) ** n
    h = spec.hmax
    rows = []
    for rho in rho_list:
        ball = ball_mask(spec, np.zeros(n), rho, slack=h / 2)
        cs = contact_set(u, np.eye(n) / r, ball)
        ratio = cs.mask.count / ball.count
        rows.append({"rho": float(rho), "ratio": float(ratio), "bound": float(bound),
                     "slack": 5 * h / rho, "pass": bool(ratio >= bound - 5 * h / rho)})
    return rows


def jensen_slodkowski_verify(w: ScalarField, witness: StrictJetWitness, rho0: float,
                             tol: float | None = None) -> dict:
    """Dyadic ladder of contact-set measures in balls about a strict upper contact point."""
    spec = w.spec
    h = spec.hmax
    tol = 1e-9 * (1 + float(np.abs(w.values[w.finite]).max())) if tol is None else tol
    if rho0 > witness.radius + 1e-12:
        raise ContactError("rho0 exceeds the witness radius")
    ex = witness.excess(w)
    if ex > tol:
        raise ContactError(f"witness invalid (excess {ex:.3g})")
    x = spec.node(witness.x)
    rows = []
    rho = float(rho0)
    while rho >= 4 * h:
        ball = ball_mask(spec, x, rho, slack=h / 2)
        cs = contact_set(w, witness.A, ball)
        rows.append({"rho": rho, "measure": cs.measure(), "count": cs.mask.count,
                     "contains_x": bool(cs.mask.bits[spec.unravel(witness.x)])})
        rho /= 2
    used = next((row["rho"] for row in rows if row["measure"] > 0), None)
    return {
        "rho_used": used,
        "measure": next((row["measure"] for row in rows if row["measure"] > 0), 0.0),
        "ladder": rows,
        "all_positive": bool(rows) and all(row["measure"] > 0 for row in rows),
        "pass": used is not None,
    }


def unit_ball_volume(n: int) -> float:
    return pi ** (n / 2) / gamma(n / 2 + 1)


def alexandrov_bound(u: ScalarField, omega: Box | None = None, tol: float | None = None) -> dict:
    """Alexandrov maximum principle and gradient-image area bound on a box."""
    spec = u.spec
    n = spec.ndim
    omega = spec.box if omega is None else omega
    reg = region_mask(spec, omega)
    U = u.values
    if not np.all(np.isfinite(U[reg.bits])):
        raise ContactError("-inf inside the region")
    tol = 10 * spec.hmax if tol is None else tol
    lhs = float(U[reg.bits].max())
    bdry = mask_boundary(reg).bits
    bsup = float(max(0.0, U[bdry].max()))
    cs = contact_set(u, None, reg)
    inner = mask_interior(reg).bits & spec.interior_mask()
    E = cs.mask.bits & inner
    _, grad, H = jet_arrays(u)
    core = tuple(slice(1, s - 1) for s in spec.shape)
    Ei = E[core]
    dets = np.abs(np.linalg.det(H[Ei])) if Ei.any() else np.zeros(0)
    ok = np.isfinite(dets)
    integral = float(dets[ok].sum() * spec.cell_volume)
    rhs = bsup + omega.diameter / unit_ball_volume(n) ** (1 / n) * integral ** (1 / n)
    P = grad[Ei][ok]
    if len(P):
        bins = np.unique(np.floor(P / spec.h).astype(np.int64), axis=0)
        area_lhs = len(bins) * spec.cell_volume
    else:
        area_lhs = 0.0
    coarse = (not E.any()) and lhs > bsup
    return {
        "lhs": lhs,
        "rhs": float(rhs),
        "boundary_sup": bsup,
        "contact_count": int(E.sum()),
        "area_lhs": float(area_lhs),
        "area_rhs": integral,
        "grid_too_coarse": bool(coarse),
        "pass": bool(lhs <= rhs + tol and area_lhs <= integral + tol * (1 + integral) and not coarse),
    }


def _check_upper_jet(w: np.ndarray, X: np.ndarray, idx, p, A, radius, tol):
    d = X - X[idx]
    near = np.linalg.norm(d, axis=-1) <= radius + 1e-12
    dd = d[near]
    gap = w[near] - (w[idx] + dd @ p + quad_form(A, dd))
    return float(gap.max())


def summand_decompose(u: ScalarField, v: ScalarField, x, p, A, search_radius: float,
                      tol: float = 1e-8, jet_tol: float | None = None) -> dict:
    """Nearest node x_j with D^2u + D^2v <= A + tol I and |Du + Dv - p| <= tol."""
    spec = u.spec
    if v.spec != spec:
        raise ContactError("fields on different grids")
    idx = spec.unravel(x)
    p = np.atleast_1d(np.asarray(p, dtype=float))
    A = np.atleast_2d(np.asarray(A, dtype=float))
    X = spec.coords()
    w = u.values + v.values
    jt = tol if jet_tol is None else jet_tol
    gap = _check_upper_jet(w, X, idx, p, A, search_radius, jt)
    if gap > jt:
        raise ContactError(f"(p, A) is not an upper contact jet for u+v (gap {gap:.3g})")
    _, gu, Hu = jet_arrays(u)
    _, gv, Hv = jet_arrays(v)
    dist = np.linalg.norm(X - X[idx], axis=-1)
    inner = spec.interior_mask()
    cand = np.flatnonzero(((dist <= search_radius + 1e-12) & inner).reshape(-1))
    order = cand[np.lexsort((cand, dist.reshape(-1)[cand]))]
    eye = np.eye(spec.ndim)
    for k in order:
        j = spec.unravel(int(k))
        jj = tuple(i - 1 for i in j)
        B, C = Hu[jj], Hv[jj]
        if not (np.all(np.isfinite(B)) and np.all(np.isfinite(C))):
            continue
        g = gu[jj] + gv[jj]
        if np.linalg.norm(g - p) <= tol and lam_min(A + tol * eye - B - C) >= 0:
            return {"x_j": spec.node(j).tolist(), "index": list(j), "distance": float(dist[j]),
                    "B": B.tolist(), "C": C.tolist(), "Du": gu[jj].tolist(), "Dv": gv[jj].tolist()}
    raise ContactError("no summand witness at this resolution")


def vertex_contact_points(u: ScalarField, r: float, v, tol: float = 1e-12) -> np.ndarray:
    """Maximizers of u - |. - v|^2 / (2r) over the grid (node coordinates)."""
    X = u.spec.points()
    s = u.flat - np.sum((X - np.asarray(v)) ** 2, axis=1) / (2 * r)
    return X[s >= s.max() - tol]


def partial_usc_check(u: ScalarField, x, A, tol: float, count: int = 4) -> bool:
    """Some of the nearest interior nodes has a numeric Hessian <= A + tol I."""
    spec = u.spec
    idx = spec.unravel(x)
    _, _, H = jet_arrays(u)
    X = spec.coords()
    dist = np.linalg.norm(X - X[idx], axis=-1)
    inner = np.flatnonzero(spec.interior_mask().reshape(-1))
    near = inner[np.lexsort((inner, dist.reshape(-1)[inner]))][:count]
    A = np.atleast_2d(np.asarray(A, dtype=float))
    for k in near:
        jj = tuple(i - 1 for i in spec.unravel(int(k)))
        if lam_min(A + tol * np.eye(spec.ndim) - H[jj]) >= 0:
            return True
    return False
