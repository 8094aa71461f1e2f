"""Subequations given by margin functions, Dirichlet duality, a library of standard
constraint sets, and sampled structural checks.

A margin is a function ``fn(x, r, p, A)`` broadcasting over leading axes:
x (..., n), r (...), p (..., n), A (..., n, n). Membership of J = (r, p, A) in the
fiber over x means margin >= 0; margin > 0 marks the interior.
"""
from __future__ import annotations

from dataclasses import dataclass, field as dc_field, replace
from typing import Callable

import numpy as np

from .grid import ScalarField, read_field
from .jets import Jet2, lam_max, lam_min, sym

PURE_SECOND_ORDER = "pure-second-order"
GRADIENT_FREE = "gradient-free"
GENERAL = "general"


class SubequationError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Subequation:
    name: str
    dim: int
    fn: Callable
    coefficient_kind: str = "constant"
    order: str = GENERAL
    proper: bool = True               # False for sets with empty interior (no property (T))
    member_sampler: Callable | None = dc_field(default=None, repr=False)

    def margins(self, x, r, p, A) -> np.ndarray:
        return np.asarray(self.fn(np.asarray(x, float), np.asarray(r, float),
                                  np.asarray(p, float), np.asarray(A, float)), dtype=float)

    def margin(self, x, jet: Jet2) -> float:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return float(self.margins(x, jet.r, jet.p, jet.A))

    def contains(self, x, jet: Jet2, tol: float = 0.0) -> bool:
        return self.margin(x, jet) >= -tol


def dual(F: Subequation) -> Subequation:
    """Dirichlet dual: margin(x, J) -> -margin(x, -J). Involutive exactly."""
    fn = F.fn

    def dual_fn(x, r, p, A):
        return -fn(x, -r, -p, -A)

    name = F.name[5:-1] if F.name.startswith("dual(") and F.name.endswith(")") else f"dual({F.name})"
    return Subequation(name, F.dim, dual_fn, F.coefficient_kind, F.order, F.proper)


def translate(F: Subequation, jet: Jet2) -> Subequation:
    """F + J: K is a member iff K - J is a member of F."""
    fn = F.fn
    r0, p0, A0 = jet.r, jet.p, jet.A

    def shifted(x, r, p, A):
        return fn(x, r - r0, p - p0, A - A0)

    return Subequation(f"{F.name}+J", F.dim, shifted, F.coefficient_kind, GENERAL, F.proper)


def _norm(p):
    return np.sqrt(np.sum(np.asarray(p) ** 2, axis=-1))


def _nearest_values(f: ScalarField, x):
    spec = f.spec
    x = np.asarray(x, dtype=float)
    k = np.rint((x - np.asarray(spec.box.lo)) / spec.h).astype(int)
    k = np.clip(k, 0, np.asarray(spec.shape) - 1)
    return f.values[tuple(np.moveaxis(k, -1, 0))]


def _m0_members(rng, count, n, scale):
    G = rng.uniform(-scale, scale, (count, n, n))
    return (-np.abs(rng.uniform(-scale, scale, count)), np.zeros((count, n)),
            np.einsum("kji,kjl->kil", G, G))


LIBRARY_NAMES = ("laplacian", "pcone", "qccone", "q", "subaffine", "subaffineplus",
                 "mgamma", "mr", "md", "ma", "m0")

_ALIASES = {"convexity": "pcone", "p": "pcone", "qc-cone": "qccone", "subaffine-plus": "subaffineplus",
            "monge-ampere": "ma", "qtilde": "subaffineplus", "m_0": "m0"}


def standard_library(name: str, n: int = 2, **params) -> Subequation:
    """Named library subequation.

    laplacian      tr A
    pcone          lambda_min(A)
    qccone         lambda_min(A) + lam                       (lam >= 0)
    q              min(-r, lambda_min(A))
    subaffine      lambda_max(A)
    subaffineplus  max(-r, lambda_max(A))                    (dual of q)
    mgamma         -r - gamma |p|                            (gamma > 0)
    mr             lambda_min(A) - |p| / R                   (R > 0)
    md             min_i <n_i, p>                            (normals: unit vectors)
    ma             min(lambda_min(A), det A - f(x))          (f: float or ScalarField)
    m0             min(-r, lambda_min(A), -|p|)              (empty interior)
    """
    key = _ALIASES.get(name.lower(), name.lower())
    if not 1 <= n <= 3:
        raise SubequationError("dimension must be 1..3")
    if key == "laplacian":
        return Subequation("laplacian", n, lambda x, r, p, A: np.trace(A, axis1=-2, axis2=-1) + 0 * r,
                           order=PURE_SECOND_ORDER)
    if key == "pcone":
        return Subequation("pcone", n, lambda x, r, p, A: lam_min(sym(A)) + 0 * r, order=PURE_SECOND_ORDER)
    if key == "qccone":
        lam = float(params.get("lam", params.get("lambda", 0.0)))
        if lam < 0:
            raise SubequationError("lambda must be >= 0")
        return Subequation(f"qccone:{lam:g}", n, lambda x, r, p, A: lam_min(sym(A)) + lam + 0 * r,
                           order=PURE_SECOND_ORDER)
    if key == "q":
        return Subequation("q", n, lambda x, r, p, A: np.minimum(-r, lam_min(sym(A))), order=GRADIENT_FREE)
    if key == "subaffine":
        return Subequation("subaffine", n, lambda x, r, p, A: lam_max(sym(A)) + 0 * r, order=PURE_SECOND_ORDER)
    if key == "subaffineplus":
        return Subequation("subaffineplus", n, lambda x, r, p, A: np.maximum(-r, lam_max(sym(A))),
                           order=GRADIENT_FREE)
    if key == "mgamma":
        g = float(params.get("gamma", 1.0))
        if g <= 0:
            raise SubequationError("gamma must be positive")
        return Subequation(f"mgamma:{g:g}", n, lambda x, r, p, A: -r - g * _norm(p) + 0 * A[..., 0, 0])
    if key == "mr":
        R = float(params.get("R", 1.0))
        if R <= 0:
            raise SubequationError("R must be positive")
        return Subequation(f"mr:{R:g}", n, lambda x, r, p, A: lam_min(sym(A)) - _norm(p) / R + 0 * r)
    if key == "md":
        N = np.atleast_2d(np.asarray(params.get("normals", np.eye(n)[:1]), dtype=float))
        if N.shape[1] != n or np.any(np.linalg.norm(N, axis=1) == 0):
            raise SubequationError("normals must be nonzero vectors of length n")
        N = N / np.linalg.norm(N, axis=1, keepdims=True)
        return Subequation("md", n, lambda x, r, p, A: np.min(np.asarray(p)[..., None, :] @ N.T, axis=-1)[..., 0]
                           + 0 * r + 0 * A[..., 0, 0])
    if key == "ma":
        f = params.get("f", 1.0)
        if isinstance(f, ScalarField):
            if f.spec.ndim != n:
                raise SubequationError("coefficient field dimension mismatch")
            fld = f

            def ma_var(x, r, p, A):
                return np.minimum(lam_min(sym(A)), np.linalg.det(A) - _nearest_values(fld, x)) + 0 * r

            return Subequation("ma", n, ma_var, coefficient_kind="variable", order=GENERAL)
        c = float(f)
        return Subequation(f"ma:{c:g}", n, lambda x, r, p, A: np.minimum(lam_min(sym(A)), np.linalg.det(A) - c) + 0 * r,
                           order=PURE_SECOND_ORDER)
    if key == "m0":
        return Subequation("m0", n, lambda x, r, p, A: np.minimum(np.minimum(-r, lam_min(sym(A))), -_norm(p)),
                           proper=False, member_sampler=_m0_members)
    raise SubequationError(f"unknown subequation {name!r}")


def parse_subeq(text: str, n: int) -> Subequation:
    """CLI form: laplacian | pcone | qccone:L | q | subaffine | subaffineplus | mgamma:G | mr:R | md:FILE | ma:FIELD."""
    key, _, arg = text.partition(":")
    key = _ALIASES.get(key.lower(), key.lower())
    if key == "qccone":
        return standard_library(key, n, lam=float(arg or 0.0))
    if key == "mgamma":
        return standard_library(key, n, gamma=float(arg or 1.0))
    if key == "mr":
        return standard_library(key, n, R=float(arg or 1.0))
    if key == "md":
        if not arg:
            raise SubequationError("md needs a normals file")
        return standard_library(key, n, normals=np.loadtxt(arg, ndmin=2))
    if key == "ma":
        if not arg:
            return standard_library(key, n, f=1.0)
        try:
            return standard_library(key, n, f=float(arg))
        except ValueError:
            return standard_library(key, n, f=read_field(arg))
    if arg:
        raise SubequationError(f"{key} takes no parameter")
    return standard_library(key, n)


# ---- sampling ----

@dataclass(frozen=True)
class JetSampler:
    seed: int = 0
    count: int = 1000
    scale: float = 2.0
    n_points: int = 4

    def rng(self, salt: int = 0) -> np.random.Generator:
        return np.random.default_rng([self.seed, salt])

    def points(self, n: int) -> np.ndarray:
        return self.rng(1).uniform(-self.scale, self.scale, (self.n_points, n))

    def jets(self, n: int, count: int | None = None, salt: int = 2):
        count = self.count if count is None else count
        g = self.rng(salt)
        s = self.scale
        r = g.uniform(-s, s, count)
        p = g.uniform(-s, s, (count, n))
        A = sym(g.uniform(-s, s, (count, n, n)))
        return r, p, A

    def psd(self, n: int, count: int | None = None, salt: int = 3) -> np.ndarray:
        count = self.count if count is None else count
        G = self.rng(salt).uniform(-self.scale, self.scale, (count, n, n))
        return np.einsum("kji,kjl->kil", G, G)


def _push(r, p, A, t):
    n = p.shape[-1]
    return r - t, p, A + t[..., None, None] * np.eye(n)


def _members(F: Subequation, x, sampler: JetSampler, salt: int, want_inside=True):
    """Members (or non-members) at x: raw samples plus samples pushed along (-1, 0, I)."""
    n = F.dim
    r, p, A = sampler.jets(n, salt=salt)
    if F.member_sampler is not None and want_inside:
        r2, p2, A2 = F.member_sampler(sampler.rng(salt + 7), sampler.count, n, sampler.scale)
        r, p, A = np.concatenate([r, r2]), np.concatenate([p, p2]), np.concatenate([A, A2])
    t = np.repeat(sampler.scale * np.array([0.0, 1.0, 4.0]), len(r))
    t = t if want_inside else -t
    r, p, A = np.tile(r, 3), np.tile(p, (3, 1)), np.tile(A, (3, 1, 1))
    r, p, A = _push(r, p, A, t)
    m = F.margins(np.broadcast_to(x, p.shape), r, p, A)
    keep = m >= 0 if want_inside else m < 0
    return r[keep], p[keep], A[keep], m[keep]


def _jet_vec(r, p, A):
    n = p.shape[-1]
    return np.concatenate([r[..., None], p, A.reshape(A.shape[:-2] + (n * n,))], axis=-1)


def _vec_jet(v, n):
    A = v[..., 1 + n:].reshape(v.shape[:-1] + (n, n))
    return v[..., 0], v[..., 1:1 + n], sym(A)


def check_structure(F: Subequation, sampler: JetSampler | None = None, tol: float = 1e-9) -> dict:
    """Sampled positivity (P), negativity (N), a (T) proxy and properness of fibers."""
    sampler = JetSampler() if sampler is None else sampler
    n = F.dim
    xs = sampler.points(n)
    P_ok = N_ok = T_ok = proper = True
    worst_P = worst_N = np.inf
    n_boundary = 0
    t_fail = 0
    probes_rng = sampler.rng(11)
    for i, x in enumerate(xs):
        r, p, A, _ = _members(F, x, sampler, salt=20 + i)
        rn, pn, An, _ = _members(F, x, sampler, salt=40 + i, want_inside=False)
        proper &= len(r) > 0 and len(rn) > 0
        if len(r):
            P = sampler.psd(n, len(r), salt=60 + i)
            for scale in (1.0, 1e-3):
                m = F.margins(np.broadcast_to(x, p.shape), r, p, A + scale * P)
                worst_P = min(worst_P, float(m.min()))
            s = -np.abs(sampler.rng(80 + i).uniform(0, sampler.scale, len(r)))
            for scale in (1.0, 1e-3):
                m = F.margins(np.broadcast_to(x, p.shape), r + scale * s, p, A)
                worst_N = min(worst_N, float(m.min()))
        # (T) proxy: boundary jets by bisection between member/non-member pairs
        k = min(len(r), len(rn), 64)
        if k == 0:
            if len(r):
                # boundary-only members (margin exactly 0) still get probed
                zero = np.abs(F.margins(np.broadcast_to(x, p.shape), r, p, A)) <= tol
                bvec = _jet_vec(r[zero], p[zero], A[zero])[:64]
            else:
                bvec = np.zeros((0, 1 + n + n * n))
            seg = np.zeros_like(bvec)
        else:
            a = _jet_vec(rn[:k], pn[:k], An[:k])
            b = _jet_vec(r[:k], p[:k], A[:k])
            lo = np.zeros(k)
            hi = np.ones(k)
            for _ in range(80):
                mid = 0.5 * (lo + hi)
                jm = a + mid[:, None] * (b - a)
                m = F.margins(np.broadcast_to(x, (k, n)), *_vec_jet(jm, n))
                inside = m >= 0
                hi = np.where(inside, mid, hi)
                lo = np.where(inside, lo, mid)
            bvec = a + hi[:, None] * (b - a)
            seg = b - a
            seg = seg / np.maximum(np.linalg.norm(seg, axis=1, keepdims=True), 1e-300)
        if len(bvec):
            n_boundary += len(bvec)
            pn_dir = _jet_vec(np.array(-1.0), np.zeros(n), np.eye(n))
            pn_dir = pn_dir / np.linalg.norm(pn_dir)
            rand = probes_rng.normal(size=(32, bvec.shape[1]))
            # keep random directions symmetric in A so probes stay in jet space
            rr, rp, rA = _vec_jet(rand, n)
            rand = _jet_vec(rr, rp, rA)
            rand /= np.linalg.norm(rand, axis=1, keepdims=True)
            dirs = np.concatenate([np.broadcast_to(pn_dir, (1,) + pn_dir.shape), -pn_dir[None], rand])
            for j, bv in enumerate(bvec):
                cand = [bv + step * d for d in np.concatenate([seg[j:j + 1], -seg[j:j + 1], dirs]) for step in (tol, 10 * tol)]
                cand = np.array(cand)
                m = F.margins(np.broadcast_to(x, (len(cand), n)), *_vec_jet(cand, n))
                if not (np.any(m > 0) and np.any(m < 0)):
                    t_fail += 1
        P_ok &= worst_P >= -tol
        N_ok &= worst_N >= -tol
    T_ok = t_fail == 0 and n_boundary > 0
    return {
        "name": F.name,
        "P_ok": bool(P_ok),
        "N_ok": bool(N_ok),
        "T_proxy_ok": bool(T_ok),
        "fibers_proper": bool(proper),
        "worst_P_margin": worst_P,
        "worst_N_margin": worst_N,
        "boundary_jets": int(n_boundary),
        "T_failures": int(t_fail),
        "note": "property (T) checked only by sampled line probes",
    }


def _cone_members(M: Subequation, sampler: JetSampler, salt: int):
    n = M.dim
    x0 = np.zeros(n)
    if M.member_sampler is not None:
        r, p, A = M.member_sampler(sampler.rng(salt), sampler.count, n, sampler.scale)
        keep = M.margins(np.broadcast_to(x0, p.shape), r, p, A) >= 0
        return r[keep], p[keep], A[keep]
    r, p, A, _ = _members(M, x0, sampler, salt)
    return r, p, A


def check_monotone(F: Subequation, M: Subequation, sampler: JetSampler | None = None,
                   tol: float = 1e-9, return_witness: bool = False):
    """Sampled test of F_x + M ⊂ F_x."""
    sampler = JetSampler() if sampler is None else sampler
    if M.coefficient_kind != "constant":
        raise SubequationError("monotonicity cone must be constant-coefficient")
    n = F.dim
    rm, pm, Am = _cone_members(M, sampler, salt=100)
    if len(rm) == 0:
        raise SubequationError("no members of the cone were sampled")
    for i, x in enumerate(sampler.points(n)):
        r, p, A, _ = _members(F, x, sampler, salt=120 + i)
        if len(r) == 0:
            continue
        k = max(len(r), len(rm))
        ia = np.arange(k) % len(r)
        ib = sampler.rng(140 + i).permutation(k) % len(rm)
        m = F.margins(np.broadcast_to(x, (k, n)), r[ia] + rm[ib], p[ia] + pm[ib], A[ia] + Am[ib])
        bad = np.flatnonzero(m < -tol)
        if bad.size:
            j = bad[0]
            if return_witness:
                return False, {"x": x.tolist(), "J": Jet2(r[ia[j]], p[ia[j]], A[ia[j]]).to_json(),
                               "J_cone": Jet2(rm[ib[j]], pm[ib[j]], Am[ib[j]]).to_json(),
                               "margin": float(m[j])}
            return False
    return (True, None) if return_witness else True
