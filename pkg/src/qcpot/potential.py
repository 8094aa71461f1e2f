"""F-subharmonicity checks (a.e. jets and viscosity lattice search), subaffine tests,
comparison and strict comparison experiments, subharmonic addition and the
Theorem on Sums pipeline for 1D factors."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field as dc_field

import numpy as np

from .convex import directional_second_differences
from .contact import ContactError, summand_decompose
from .grid import (Box, GridSpec, ScalarField, box_mask, jet_arrays, mask_boundary, numeric_jet,
                   region_mask)
from .jets import Jet2, eig_sym, lam_max, lam_min, quad_form, spectral_norm
from .lp import simplex_max
from .regularize import magic_transport_check, sup_convolve
from .subeq import (GRADIENT_FREE, PURE_SECOND_ORDER, JetSampler, Subequation, _members, dual)

KAPPA = 10.0
ANALYTIC_TOL = 1e-8


class PotentialError(ValueError):
    pass


class NotQuasiConvexError(PotentialError):
    pass


def grid_tol(spec: GridSpec, kappa: float = KAPPA) -> float:
    return kappa * spec.hmax


@dataclass(eq=False)
class SubharmonicReport:
    pass_fraction: float
    worst_margin: float
    worst_node: tuple | None
    mode: str
    tol: float
    nodes: int
    subequation: str
    theorem: str = ""
    bad_jet: "BadJet | None" = None
    extra: dict = dc_field(default_factory=dict)

    @property
    def verdict(self) -> bool:
        return self.nodes > 0 and self.pass_fraction == 1.0

    def to_json(self) -> dict:
        d = {
            "subequation": self.subequation,
            "mode": self.mode,
            "verdict": "subharmonic" if self.verdict else "not subharmonic",
            "pass_fraction": self.pass_fraction,
            "worst_margin": self.worst_margin,
            "worst_node": None if self.worst_node is None else list(self.worst_node),
            "nodes": self.nodes,
            "tol": self.tol,
            "theorem": self.theorem,
        }
        if self.bad_jet is not None:
            d["bad_jet"] = self.bad_jet.to_json()
        d.update(self.extra)
        return d


@dataclass(eq=False)
class BadJet:
    x: tuple
    J: Jet2
    eps_strict: float
    radius: float
    margin_violation: float

    def to_json(self) -> dict:
        return {"x": list(self.x), "J": self.J.to_json(), "eps_strict": self.eps_strict,
                "radius": self.radius, "margin_violation": self.margin_violation}


def local_quasiconvex_index(u: ScalarField, region=None) -> float:
    """max(0, -min lattice second difference) over interior nodes of the region."""
    reg = region_mask(u.spec, region).bits
    core = tuple(slice(1, s - 1) for s in u.spec.shape)
    d2 = directional_second_differences(u)
    sel = reg[core]
    if not sel.any():
        return 0.0
    vals = d2[:, sel]
    if not np.all(np.isfinite(vals)):
        return float("inf")
    return float(max(0.0, -vals.min()))


def check_subharmonic_ae(u: ScalarField, F: Subequation, region=None, tol: float | None = None,
                         qc_limit: float | None = None, step: int = 1) -> SubharmonicReport:
    """Margin of the centered-difference jet at every interior node of the region.

    Requires quasi-convexity on the region: the lattice index must not exceed
    ``qc_limit`` (default 1/(2h), i.e. no concave kinks at grid scale).
    """
    spec = u.spec
    if F.dim != spec.ndim:
        raise PotentialError("subequation dimension does not match the grid")
    tol = grid_tol(spec) if tol is None else tol
    reg = region_mask(spec, region)
    if not np.all(np.isfinite(u.values[reg.bits])):
        raise NotQuasiConvexError("AE route requires local quasi-convexity (-inf in region)")
    qc_limit = 1.0 / (2 * spec.hmax) if qc_limit is None else qc_limit
    lam = local_quasiconvex_index(u, reg)
    if lam > qc_limit:
        raise NotQuasiConvexError(
            f"AE route requires local quasi-convexity (index {lam:.4g} > {qc_limit:.4g})")
    r, p, A = jet_arrays(u, step)
    core = tuple(slice(step, s - step) for s in spec.shape)
    sel = reg.bits[core]
    X = spec.coords()[core]
    m = F.margins(X[sel], r[sel], p[sel], A[sel])
    m = np.broadcast_to(m, r[sel].shape)
    if m.size == 0:
        return SubharmonicReport(0.0, float("nan"), None, "ae", tol, 0, F.name, "almost-everywhere criterion (quasi-convex)")
    k = int(np.argmin(m))
    inner_idx = np.argwhere(sel)[k]
    worst = tuple(int(i + step) for i in inner_idx)
    frac = float(np.mean(m >= -tol))
    return SubharmonicReport(frac, float(m[k]), worst, "ae", tol, int(m.size), F.name,
                             "almost-everywhere criterion (quasi-convex)", extra={"qc_index": lam})


# ---- viscosity route ----

def _sym_lattice(n: int, a_max: float, a_step: float) -> np.ndarray:
    k = int(round(a_max / a_step))
    vals = a_step * np.arange(-k, k + 1)
    iu = np.triu_indices(n)
    entries = np.array(list(itertools.product(vals, repeat=len(iu[0]))))
    A = np.zeros((len(entries), n, n))
    A[:, iu[0], iu[1]] = entries
    A[:, iu[1], iu[0]] = entries
    order = np.argsort(lam_max(A), kind="stable")
    return A[order]


def _p_cube(center, radius: float, step: float) -> np.ndarray:
    n = len(center)
    if radius <= 0 or step <= 0:
        return np.asarray(center, dtype=float)[None, :]
    k = int(round(radius / step))
    offs = step * np.arange(-k, k + 1)
    P = np.array(list(itertools.product(offs, repeat=n))) + center
    order = np.argsort(np.linalg.norm(P, axis=1), kind="stable")
    return P[order]


def find_bad_test_jet(u: ScalarField, F: Subequation, x, radius: float | None = None,
                      a_max: float | None = None, a_step: float | None = None,
                      p_radius: float | None = None, p_step: float | None = None,
                      tol: float | None = None, eps_min: float = 0.0, block: int = 256):
    """First lattice jet (p, A) that touches u strictly from above at x over the
    radius and violates the margin; None when the searched family has none."""
    spec = u.spec
    n = spec.ndim
    idx = spec.unravel(x)
    h = spec.h
    radius = 3 * spec.hmax if radius is None else max(radius, 3 * spec.hmax)
    tol = ANALYTIC_TOL if tol is None else tol
    X = spec.coords()
    d = X - X[idx]
    dist = np.linalg.norm(d, axis=-1)
    near = (dist <= radius + 1e-9 * spec.hmax) & (dist > 0)
    lo = np.asarray(idx) - np.ceil(radius / h - 1e-9).astype(int)
    hi = np.asarray(idx) + np.ceil(radius / h - 1e-9).astype(int)
    if np.any(lo < 0) or np.any(hi >= np.asarray(spec.shape)):
        raise PotentialError("search ball leaves the grid")
    ux = u.values[idx]
    D = d[near]
    du = u.values[near] - ux
    if not (np.isfinite(ux) and np.all(np.isfinite(du))):
        raise PotentialError("-inf near the search node")
    d2 = np.sum(D ** 2, axis=1)
    j0 = numeric_jet(u, idx)
    g0, H0 = j0.p, j0.A
    a_max = 2 * float(np.abs(H0).max()) + 1 if a_max is None else a_max
    if a_step is None:
        a_step = a_max / (8 if n <= 2 else 2)
    slopes = []
    for ax in range(n):
        e = np.zeros(n, dtype=int)
        e[ax] = 1
        slopes.append(abs(u.values[tuple(np.add(idx, e))] - ux) / h[ax])
        slopes.append(abs(ux - u.values[tuple(np.subtract(idx, e))]) / h[ax])
    smax = float(max(slopes))
    p_radius = 2 * smax if p_radius is None else p_radius
    p_step = smax / 8 if p_step is None else p_step
    L = _sym_lattice(n, a_max, a_step)
    P = _p_cube(g0, p_radius, p_step)
    qA = 0.5 * np.einsum("ki,lij,kj->lk", D, L, D)          # (nA, K)
    # p-independent necessary condition from opposite neighbour pairs
    key = {tuple(np.round(v / h).astype(int)): k for k, v in enumerate(D)}
    pairs = [(k, key[tuple(-np.array(kk))]) for kk, k in key.items() if tuple(-np.array(kk)) in key]
    nec = np.ones(len(L), dtype=bool)
    if pairs:
        a_i, b_i = np.array(pairs).T
        slack = qA[:, a_i] + qA[:, b_i] - du[a_i] - du[b_i]
        nec = np.all(slack > eps_min * (d2[a_i] + d2[b_i]), axis=1)
    cand = np.flatnonzero(nec)
    PD = P @ D.T                                              # (nP, K)
    xb = np.broadcast_to(X[idx], (1, len(P), n))
    for s in range(0, len(cand), block):
        ids = cand[s:s + block]
        Ab = L[ids]
        m = F.margins(np.broadcast_to(xb, (len(ids), len(P), n)), np.full((len(ids), len(P)), ux),
                      np.broadcast_to(P, (len(ids), len(P), n)), Ab[:, None, :, :])
        m = np.broadcast_to(m, (len(ids), len(P)))
        bad = m < -tol
        rows = np.flatnonzero(bad.any(axis=1))
        for rr in rows:
            cols = np.flatnonzero(bad[rr])
            gap = (PD[cols] + qA[ids[rr]][None, :] - du[None, :]) / d2[None, :]
            eps = gap.min(axis=1)
            ok = np.flatnonzero(eps > eps_min)
            if ok.size:
                c = cols[ok[0]]
                J = Jet2(ux, P[c], Ab[rr])
                return BadJet(idx, J, float(eps[ok[0]]), float(radius), float(m[rr, c]))
    bj = _lifted_bad_jet(F, X[idx], ux, D, du, g0, H0, a_max, radius, tol, eps_min)
    if bj is not None:
        bj.x = idx
    return bj


def _lifted_bad_jet(F: Subequation, x, ux, D, du, g0, H0, a_max, radius, tol, eps_min):
    """Second stage: the numeric Hessian lifted by the least t I that touches strictly.

    min t over (q, t) with <q, d> + t |d|^2 / 2 >= du - <g0, d> - Q_H0(d) is solved through
    its dual (n + 1 rows, one column per ball node); the dual vector of that LP is (q, t*).
    """
    n = len(g0)
    d2 = np.sum(D ** 2, axis=1)
    c = du - D @ g0 - 0.5 * np.einsum("ki,ij,kj->k", D, H0, D)
    A_eq = np.vstack([D.T, 0.5 * d2[None, :]])
    b_eq = np.zeros(n + 1)
    b_eq[-1] = 1.0
    res = simplex_max(c, A_eq, b_eq)
    if res.status != "optimal":
        return None
    q, t_star = res.dual[:n], float(res.dual[n])
    p = g0 + q
    for delta in a_max * 2.0 ** -np.arange(0, 40):
        A = H0 + (t_star + delta) * np.eye(n)
        gap = (D @ p + 0.5 * np.einsum("ki,ij,kj->k", D, A, D) - du) / d2
        eps = float(gap.min())
        if eps <= eps_min:
            break
        m = float(F.margin(x, Jet2(ux, p, A)))
        if m < -tol:
            return BadJet(None, Jet2(ux, p, A), eps, float(radius), m)
    return None


def check_subharmonic_viscosity(u: ScalarField, F: Subequation, region=None, radius: float | None = None,
                                tol: float | None = None, **lattice) -> SubharmonicReport:
    spec = u.spec
    radius = 3 * spec.hmax if radius is None else radius
    reg = region_mask(spec, region).bits
    w = int(np.ceil(radius / spec.h.min() - 1e-9))
    inner = spec.interior_mask(max(w, 1)) & reg
    nodes = [tuple(int(i) for i in k) for k in np.argwhere(inner)]
    # test jets are judged against grid nodes, so the default is the grid tolerance
    tol = grid_tol(spec) if tol is None else tol
    bad_first, worst, worst_node, nbad = None, 0.0, None, 0
    for k in nodes:
        bj = find_bad_test_jet(u, F, k, radius=radius, tol=tol, **lattice)
        if bj is not None:
            nbad += 1
            if bad_first is None:
                bad_first = bj
            if bj.margin_violation < worst:
                worst, worst_node = bj.margin_violation, k
    frac = 1.0 - nbad / len(nodes) if nodes else 0.0
    return SubharmonicReport(frac, worst, worst_node, "viscosity", tol, len(nodes), F.name,
                             "viscosity criterion (strict test jets)", bad_jet=bad_first)


# ---- subaffine functions ----

def _region_box(spec: GridSpec, region) -> Box:
    if region is None:
        return spec.box
    if isinstance(region, Box):
        return region
    pts = region_mask(spec, region).points()
    return Box(pts.min(axis=0), pts.max(axis=0))


def _dyadic_boxes(box: Box, spec: GridSpec, levels: int):
    lo, hi = np.asarray(box.lo), np.asarray(box.hi)
    for lev in range(levels + 1):
        k = 2 ** lev
        w = (hi - lo) / k
        if np.any(w < 2 * spec.h - 1e-12):
            break
        for cell in itertools.product(range(k), repeat=spec.ndim):
            c = np.asarray(cell)
            yield Box(lo + c * w, lo + (c + 1) * w)


def subaffine_probe(w: ScalarField, region=None, plus: bool = False, tol: float | None = None,
                    levels: int = 3, slopes: int = 9) -> dict:
    """Affine probes on a dyadic box family: max_Omega(w - a) <= max_dOmega(w - a) + tol."""
    spec = w.spec
    tol = 1e-9 * (1 + float(np.abs(w.values).max())) if tol is None else tol
    box = _region_box(spec, region)
    reg = box_mask(spec, box).bits
    S = 0.0
    for ax in range(spec.ndim):
        dv = np.diff(np.where(reg, w.values, np.nan), axis=ax) / spec.h[ax]
        if np.isfinite(dv).any():
            S = max(S, float(np.nanmax(np.abs(dv))))
    grid1 = np.linspace(-S, S, slopes) if S > 0 else np.zeros(1)
    Pset = np.array(list(itertools.product(grid1, repeat=spec.ndim)))
    X = spec.coords()
    worst = -np.inf
    witness = None
    for om in _dyadic_boxes(box, spec, levels):
        m = box_mask(spec, om)
        if m.count == 0:
            continue
        bd = mask_boundary(m).bits
        if not bd.any() or bd.sum() == m.count:
            continue
        Xin = X[m.bits]
        z = w.values[m.bits][None, :] - Pset @ Xin.T
        zb = w.values[bd][None, :] - Pset @ X[bd].T
        top = z.max(axis=1)
        cap = zb.max(axis=1)
        if plus:
            cap = np.maximum(cap, -(Pset @ Xin.T).min(axis=1))
        exc = top - cap
        j = int(np.argmax(exc))
        if exc[j] > worst:
            worst = float(exc[j])
            witness = {"box": [list(om.lo), list(om.hi)], "slope": Pset[j].tolist(), "excess": worst}
    return {"pass": bool(worst <= tol), "worst_excess": worst, "witness": witness, "tol": tol}


def is_subaffine(w: ScalarField, region=None, plus: bool = False, tol: float | None = None, **kw) -> bool:
    return subaffine_probe(w, region, plus, tol, **kw)["pass"]


def subaffine_report(w: ScalarField, region=None, plus: bool = False, tol: float | None = None,
                     ae_tol: float | None = None, **kw) -> dict:
    """Probe verdict cross-validated with the a.e. check for the subaffine(-plus) subequation."""
    from .subeq import standard_library
    probe = subaffine_probe(w, region, plus, tol, **kw)
    F = standard_library("subaffineplus" if plus else "subaffine", w.spec.ndim)
    try:
        ae = check_subharmonic_ae(w, F, _region_box(w.spec, region), tol=ae_tol)
        ae_verdict = ae.verdict
    except NotQuasiConvexError:
        ae_verdict = None
    return {"probe": probe["pass"], "ae": ae_verdict,
            "agree": None if ae_verdict is None else bool(ae_verdict == probe["pass"]),
            "witness": probe["witness"], "worst_excess": probe["worst_excess"]}


# ---- comparison ----

def _zmp(z: ScalarField, region) -> tuple:
    reg = region_mask(z.spec, region)
    bd = mask_boundary(reg).bits
    top = float(z.values[reg.bits].max())
    bmax = float(z.values[bd].max())
    return top - bmax, top - max(bmax, 0.0), top, bmax


def _safe_ae(u, F, region, tol, qc_limit=None):
    try:
        rep = check_subharmonic_ae(u, F, region, tol, qc_limit=qc_limit)
        return rep.verdict, rep
    except NotQuasiConvexError as exc:
        return False, str(exc)


def comparison_run(u: ScalarField, F: Subequation, v: ScalarField, omega=None,
                   tol: float | None = None) -> dict:
    """Verify u in F, v in dual(F) on the region, then test the zero maximum principle for u + v.

    zmp_gap = max over the closed region minus max over its boundary; zmp_excess
    compares with max(boundary max, 0), which is the zero maximum principle proper.
    Pure second-order F is judged on zmp_gap, every other F on zmp_excess.
    """
    spec = u.spec
    tol = grid_tol(spec) if tol is None else tol
    region = spec.box if omega is None else omega
    ok_u, rep_u = _safe_ae(u, F, region, tol)
    ok_v, rep_v = _safe_ae(v, dual(F), region, tol)
    z = u + v
    gap, excess, top, bmax = _zmp(z, region)
    out = {
        "subequation": F.name,
        "verified_u": bool(ok_u),
        "verified_v": bool(ok_v),
        "zmp_gap": gap,
        "zmp_excess": excess,
        "interior_max": top,
        "boundary_max": bmax,
        "tol": tol,
        "theorem": "comparison by zero maximum principle",
    }
    for key, rep in (("u_report", rep_u), ("v_report", rep_v)):
        out[key] = rep.to_json() if isinstance(rep, SubharmonicReport) else {"error": rep}
    if not (ok_u and ok_v):
        out["status"] = "hypotheses unmet"
        out["pass"] = None
        return out
    pure = F.order == PURE_SECOND_ORDER and F.coefficient_kind == "constant"
    holds = (gap if pure else excess) <= tol
    if pure:
        out["subaffine_sum"] = is_subaffine(z, region, plus=False, tol=tol)
        holds &= out["subaffine_sum"]
    elif F.order == GRADIENT_FREE:
        out["subaffine_plus_sum"] = is_subaffine(z, region, plus=True, tol=tol)
        holds &= out["subaffine_plus_sum"]
    out["status"] = "pass" if holds else "violation"
    out["pass"] = bool(holds)
    return out


def strictness_gap(G: Subequation, F: Subequation, sampler: JetSampler | None = None,
                   points=None) -> float:
    """min of margin_F over sampled members of G and over boundary jets of G found by
    bisecting member/non-member segments (positive when G sits strictly inside F)."""
    sampler = JetSampler(count=2000) if sampler is None else sampler
    n = G.dim
    pts = sampler.points(n) if points is None else np.atleast_2d(points)
    gap = np.inf
    for i, x in enumerate(pts):
        r, p, A, _ = _members(G, x, sampler, salt=200 + i)
        if not len(r):
            continue
        xb = np.broadcast_to(x, p.shape)
        gap = min(gap, float(F.margins(xb, r, p, A).min()))
        rn, pn, An, _ = _members(G, x, sampler, salt=220 + i, want_inside=False)
        k = min(len(r), len(rn))
        if k == 0:
            continue
        lo, hi = np.zeros(k), np.ones(k)
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            inside = G.margins(xb[:k], rn[:k] + mid * (r[:k] - rn[:k]),
                               pn[:k] + mid[:, None] * (p[:k] - pn[:k]),
                               An[:k] + mid[:, None, None] * (A[:k] - An[:k])) >= 0
            hi = np.where(inside, mid, hi)
            lo = np.where(inside, lo, mid)
        rb = rn[:k] + hi * (r[:k] - rn[:k])
        pb = pn[:k] + hi[:, None] * (p[:k] - pn[:k])
        Ab = An[:k] + hi[:, None, None] * (A[:k] - An[:k])
        gap = min(gap, float(F.margins(xb[:k], rb, pb, Ab).min()))
    return gap


def _quadratic_subharmonic(G: Subequation, spec: GridSpec, region):
    """A quadratic c|x|^2/2 - m strictly G-subharmonic at every region node, if one exists."""
    X = spec.coords()[region_mask(spec, region).bits]
    n = spec.ndim
    for c in (0.0, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0):
        for m in (0.0, 1.0, 4.0, 16.0):
            r = 0.5 * c * np.sum(X ** 2, axis=1) - m
            p = c * X
            A = np.broadcast_to(c * np.eye(n), (len(X), n, n))
            if np.all(G.margins(X, r, p, A) > 0):
                return c, m
    raise PotentialError("no strictly subharmonic quadratic found for the truncation")


def _truncate(u: ScalarField, G: Subequation, region):
    c, m = _quadratic_subharmonic(G, u.spec, region)
    X = u.spec.coords()
    phi = 0.5 * c * np.sum(X ** 2, axis=-1) - m
    fin = u.values[np.isfinite(u.values)]
    shift = float(phi.max() - fin.min() + 1.0) if fin.size else 0.0
    low = phi - shift
    return ScalarField(u.spec, np.maximum(u.values, low)), bool(np.any(low > u.values)), (c, m + shift)


def _inner_region(region: Box, delta: float, spec: GridSpec) -> Box:
    """Region intersected with the grid box shrunk by delta."""
    lo = np.maximum(np.asarray(region.lo, dtype=float), np.asarray(spec.box.lo) + delta)
    hi = np.minimum(np.asarray(region.hi, dtype=float), np.asarray(spec.box.hi) - delta)
    if np.any(hi - lo < 4 * spec.h):
        raise PotentialError("shrunk domain too small for the grid")
    return Box(lo, hi)


def _zmp_witness(u, v, region, tol):
    z = u + v
    reg = region_mask(u.spec, region)
    inner = reg.bits & ~mask_boundary(reg).bits & u.spec.interior_mask()
    vals = np.where(inner, z.values, -np.inf)
    k = np.unravel_index(int(np.argmax(vals)), vals.shape)
    spec = u.spec
    rad = 3 * spec.hmax
    try:
        wit = summand_decompose(u, v, k, np.zeros(spec.ndim), np.zeros((spec.ndim, spec.ndim)),
                                rad, tol=tol)
    except ContactError as exc:
        return {"node": list(map(int, k)), "error": str(exc)}
    wit["node"] = list(map(int, k))
    return wit


def strict_comparison_run(u: ScalarField, G: Subequation, F: Subequation, v: ScalarField,
                          omega=None, tol: float | None = None, route: str = "qc",
                          eps_ladder=(0.1, 0.05, 0.025), sampler: JetSampler | None = None,
                          refine: bool = False) -> dict:
    """Strict comparison: u in G with G strictly inside F, v in dual(F), then ZMP for u + v.

    route "qc" checks u, v directly; route "usc" first sup-convolves both along
    the eps ladder and re-verifies each rung on the shrunk box. The node maximum
    is the default there: refining next to kinks mixes exact and node values and
    leaves O(1/eps) artifacts in the centered Hessian.
    """
    spec = u.spec
    tol = grid_tol(spec) if tol is None else tol
    region = spec.box if omega is None else omega
    gap0 = strictness_gap(G, F, sampler)
    if not gap0 > 0:
        raise PotentialError("G not strongly strict in F")
    Fd = dual(F)
    out = {"G": G.name, "F": F.name, "strictness_gap": gap0, "route": route, "tol": tol,
           "theorem": "strict comparison"}
    if route == "qc":
        ok_u, rep_u = _safe_ae(u, G, region, tol)
        ok_v, rep_v = _safe_ae(v, Fd, region, tol)
        out["verified_u"], out["verified_v"] = bool(ok_u), bool(ok_v)
        for key, rep in (("u_report", rep_u), ("v_report", rep_v)):
            out[key] = rep.to_json() if isinstance(rep, SubharmonicReport) else {"error": rep}
    elif route == "usc":
        ut, act_u, _ = _truncate(u, G, region)
        vt, act_v, _ = _truncate(v, Fd, region)
        out["truncation_active"] = bool(act_u or act_v)
        rungs = []
        ok_all = True
        prev_u = prev_v = None
        for eps in eps_ladder:
            su = sup_convolve(ut, eps, refine=refine)
            sv = sup_convolve(vt, eps, refine=refine)
            delta = max(su.delta, sv.delta)
            sub = _inner_region(_region_box(spec, region), delta, spec)
            ql = 1.0 / eps + 10 * spec.hmax / eps ** 2
            okr_u, ru = _safe_ae(su.field, G, sub, tol, qc_limit=ql)
            okr_v, rv = _safe_ae(sv.field, Fd, sub, tol, qc_limit=ql)
            zg, ze, _, _ = _zmp(su.field + sv.field, sub)
            # monotonicity is exact for the node maximum, so test it unrefined
            nu_ = sup_convolve(ut, eps).field.values if refine else su.field.values
            nv_ = sup_convolve(vt, eps).field.values if refine else sv.field.values
            decreasing = (prev_u is None or bool(np.all(nu_ <= prev_u))) and \
                         (prev_v is None or bool(np.all(nv_ <= prev_v)))
            prev_u, prev_v = nu_, nv_
            rung = {"eps": eps, "delta": delta, "box": [list(sub.lo), list(sub.hi)],
                    "verified_u": bool(okr_u), "verified_v": bool(okr_v),
                    "worst_margin_u": ru.worst_margin if isinstance(ru, SubharmonicReport) else None,
                    "worst_margin_v": rv.worst_margin if isinstance(rv, SubharmonicReport) else None,
                    "zmp_gap": zg, "zmp_excess": ze, "decreasing": decreasing}
            rung["pass"] = bool(okr_u and okr_v and ze <= tol)
            ok_all &= rung["pass"]
            rungs.append(rung)
        out["ladder"] = rungs
        out["verified_u"] = out["verified_v"] = bool(all(r["verified_u"] and r["verified_v"] for r in rungs))
        ok_u = ok_v = out["verified_u"]
    else:
        raise PotentialError(f"unknown route {route!r}")
    gap, excess, top, bmax = _zmp(u + v, region)
    out.update({"zmp_gap": gap, "zmp_excess": excess, "interior_max": top, "boundary_max": bmax})
    violated = excess > tol
    out["violation_detected"] = bool(violated)
    if violated:
        out["contradiction_witness"] = _zmp_witness(u, v, region, tol)
        wj = out["contradiction_witness"]
        if "index" in wj:
            k = tuple(wj["index"])
            x = spec.node(k)
            ju = Jet2(u[k], wj["Du"], wj["B"])
            jv = Jet2(v[k], wj["Dv"], wj["C"])
            wj["margin_G_u"] = G.margin(x, ju)
            wj["margin_dualF_v"] = Fd.margin(x, jv)
    if not (ok_u and ok_v):
        out["status"] = "hypotheses unmet"
        out["pass"] = None
    else:
        out["status"] = "violation" if violated else "pass"
        out["pass"] = not violated
    return out


def subharmonic_addition_check(F: Subequation, G: Subequation, H: Subequation, u: ScalarField,
                               v: ScalarField, region=None, sampler: JetSampler | None = None,
                               tol: float | None = None) -> dict:
    spec = u.spec
    tol = grid_tol(spec) if tol is None else tol
    sampler = JetSampler(count=2000) if sampler is None else sampler
    ok_u, _ = _safe_ae(u, F, region, tol)
    ok_v, _ = _safe_ae(v, G, region, tol)
    box = _region_box(spec, region)
    pts = np.asarray(box.lo) + (np.asarray(box.hi) - np.asarray(box.lo)) * \
        sampler.rng(300).uniform(0, 1, (sampler.n_points, spec.ndim))
    jet_ok = True
    worst = np.inf
    for i, x in enumerate(pts):
        r1, p1, A1, _ = _members(F, x, sampler, salt=310 + i)
        r2, p2, A2, _ = _members(G, x, sampler, salt=330 + i)
        k = min(len(r1), len(r2))
        if k == 0:
            continue
        m = H.margins(np.broadcast_to(x, (k, spec.ndim)), r1[:k] + r2[:k], p1[:k] + p2[:k], A1[:k] + A2[:k])
        worst = min(worst, float(m.min()))
    jet_ok = worst >= -ANALYTIC_TOL
    ok_sum, rep = _safe_ae(u + v, H, region, tol)
    out = {"F": F.name, "G": G.name, "H": H.name, "verified_u": bool(ok_u), "verified_v": bool(ok_v),
           "jet_addition_ok": bool(jet_ok), "jet_addition_worst": worst,
           "sum_subharmonic": bool(ok_sum),
           "sum_report": rep.to_json() if isinstance(rep, SubharmonicReport) else {"error": rep},
           "theorem": "subharmonic addition"}
    if not (ok_u and ok_v):
        out["status"] = "hypotheses unmet"
        out["pass"] = None
    else:
        out["pass"] = bool((not jet_ok) or ok_sum)
        out["status"] = "pass" if out["pass"] else "violation"
    return out


# ---- Theorem on Sums, 1D factors ----

def _origin(spec: GridSpec) -> tuple:
    k = spec.nearest_index(np.zeros(spec.ndim))
    if np.linalg.norm(spec.node(k)) > 1e-9 * spec.hmax:
        raise PotentialError("origin must be a grid node")
    return k


def _product(a: ScalarField, b: ScalarField, which: int) -> ScalarField:
    spec = GridSpec(Box([a.spec.box.lo[0], b.spec.box.lo[0]], [a.spec.box.hi[0], b.spec.box.hi[0]]),
                    (a.spec.shape[0], b.spec.shape[0]))
    vals = np.broadcast_to(a.values[:, None], spec.shape) if which == 0 else \
        np.broadcast_to(b.values[None, :], spec.shape)
    return ScalarField(spec, vals)


def on_sums_witness(u: ScalarField, v: ScalarField, A, eps: float, tol: float | None = None,
                    radius: float | None = None, search_radius: float | None = None,
                    refine: bool = True) -> dict:
    """Theorem on Sums pipeline for w(x, y) = u(x) + v(y) with 1D factors.

    Stages: validate (0, A) at the origin; sup-convolve at 1/lam with
    lam = 1/eps + |A|; decompose the regularized jet into summands; transport
    the summand jets back to u and v; check the two-sided matrix sandwich.
    """
    if u.spec.ndim != 1 or v.spec.ndim != 1:
        raise PotentialError("on-sums pipeline takes 1D factors")
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.shape != (2, 2):
        raise PotentialError("A must be 2x2")
    hmax = max(u.spec.hmax, v.spec.hmax)
    tol = grid_tol(u.spec) if tol is None else tol
    ou, ov = _origin(u.spec), _origin(v.spec)
    u0 = u - u[ou]
    v0 = v - v[ov]
    stage = "contact"
    U = _product(u0, v0, 0)
    V = _product(u0, v0, 1)
    spec2 = U.spec
    X = spec2.coords()
    o2 = (ou[0], ov[0])
    d = X - X[o2]
    near = np.ones(spec2.shape, dtype=bool) if radius is None else np.linalg.norm(d, axis=-1) <= radius
    w = U.values + V.values
    g = float(np.max(w[near] - quad_form(A, d[near])))
    if g > ANALYTIC_TOL * (1 + np.abs(w).max()):
        raise PotentialError(f"[{stage}] (0, A) is not an upper contact jet for u(x)+v(y) (gap {g:.3g})")
    stage = "regularize"
    normA = float(spectral_norm(A))
    lam = 1.0 / eps + normA
    s = 1.0 / lam
    su = sup_convolve(u0, s, refine=refine)
    sv = sup_convolve(v0, s, refine=refine)
    A_lam = A @ np.linalg.inv(np.eye(2) - A / lam)
    A_lam = 0.5 * (A_lam + A_lam.T)
    Ue = _product(su.field, sv.field, 0)
    Ve = _product(su.field, sv.field, 1)
    stage = "decompose"
    sr = 4 * hmax if search_radius is None else search_radius
    jet_tol = tol
    try:
        wit = summand_decompose(Ue, Ve, o2, np.zeros(2), A_lam + tol * np.eye(2), sr, tol=tol,
                                jet_tol=jet_tol)
    except ContactError as exc:
        raise PotentialError(f"[{stage}] {exc}") from exc
    j = tuple(wit["index"])
    A1 = float(wit["B"][0][0])
    A2 = float(wit["C"][1][1])
    p1 = float(wit["Du"][0])
    p2 = float(wit["Dv"][1])
    stage = "transport"
    rad = 1.0 * hmax
    try:
        tu = magic_transport_check(u0, s, (j[0],), [p1], [[A1 + tol]], tol=tol, radius=rad, sc=su)
        tv = magic_transport_check(v0, s, (j[1],), [p2], [[A2 + tol]], tol=tol, radius=rad, sc=sv)
    except ValueError as exc:
        raise PotentialError(f"[{stage}] {exc}") from exc
    stage = "sandwich"
    D = np.diag([A1, A2])
    upper = A + eps * A @ A
    up_ok = bool(lam_min(upper + tol * np.eye(2) - D) >= 0)
    lo_ok = bool(lam_min(D + (1 / eps + normA + tol) * np.eye(2)) >= 0)
    return {
        "A1": A1, "A2": A2, "lam": lam, "A_lam": A_lam.tolist(),
        "witness_node": [float(c) for c in spec2.node(j)],
        "contact_points": {"u": tu["argmax"], "v": tv["argmax"]},
        "transport_ok": bool(tu["contact_ok"] and tv["contact_ok"]),
        "upper_bound": upper.tolist(),
        "sandwich_upper_ok": up_ok,
        "sandwich_lower_ok": lo_ok,
        "tol": tol,
        "pass": bool(up_ok and lo_ok and tu["contact_ok"] and tv["contact_ok"]),
        "theorem": "theorem on sums (1D factors)",
    }
