"""Uniform grids on boxes, sampled fields, finite-difference jets and cell-count measure."""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .jets import Jet2

NEG_INF = -np.inf
FIELD_HEADER = "qcpot-field v1"
MASK_HEADER = "qcpot-mask v1"


class GridError(ValueError):
    pass


@dataclass(frozen=True)
class Box:
    lo: tuple
    hi: tuple

    def __init__(self, lo, hi):
        lo = tuple(float(v) for v in np.atleast_1d(lo))
        hi = tuple(float(v) for v in np.atleast_1d(hi))
        if len(lo) != len(hi) or not 1 <= len(lo) <= 3:
            raise GridError("box needs matching lo/hi of length 1..3")
        if any(not (a < b) for a, b in zip(lo, hi)):
            raise GridError("box needs lo < hi on every axis")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def ndim(self) -> int:
        return len(self.lo)

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(np.subtract(self.hi, self.lo)))

    def contains(self, x, pad: float = 0.0) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        lo = np.asarray(self.lo) - pad
        hi = np.asarray(self.hi) + pad
        return np.all((x >= lo) & (x <= hi), axis=-1)


@dataclass(frozen=True)
class GridSpec:
    box: Box
    shape: tuple

    def __init__(self, box: Box, shape):
        shape = tuple(int(s) for s in np.atleast_1d(shape))
        if len(shape) == 1 and box.ndim > 1:
            shape = shape * box.ndim
        if len(shape) != box.ndim:
            raise GridError("shape length must match box dimension")
        if any(s < 3 for s in shape):
            raise GridError("every axis needs at least 3 nodes")
        object.__setattr__(self, "box", box)
        object.__setattr__(self, "shape", shape)

    @classmethod
    def uniform(cls, lo, hi, shape) -> "GridSpec":
        return cls(Box(lo, hi), shape)

    @property
    def ndim(self) -> int:
        return self.box.ndim

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def h(self) -> np.ndarray:
        lo, hi = np.asarray(self.box.lo), np.asarray(self.box.hi)
        return (hi - lo) / (np.asarray(self.shape) - 1)

    @property
    def hmax(self) -> float:
        return float(self.h.max())

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.h))

    def axes(self) -> list:
        lo, h = np.asarray(self.box.lo), self.h
        return [lo[i] + np.arange(self.shape[i]) * h[i] for i in range(self.ndim)]

    def coords(self) -> np.ndarray:
        """Node coordinates, shape (*shape, n)."""
        return np.stack(np.meshgrid(*self.axes(), indexing="ij"), axis=-1)

    def points(self) -> np.ndarray:
        """Node coordinates in row-major order, shape (size, n)."""
        return self.coords().reshape(-1, self.ndim)

    def node(self, index) -> np.ndarray:
        idx = self.unravel(index)
        return np.asarray(self.box.lo) + np.asarray(idx) * self.h

    def unravel(self, index) -> tuple:
        if np.isscalar(index) or np.ndim(index) == 0:
            return tuple(int(i) for i in np.unravel_index(int(index), self.shape))
        idx = tuple(int(i) for i in index)
        if len(idx) != self.ndim or any(not 0 <= i < s for i, s in zip(idx, self.shape)):
            raise GridError(f"index {idx} outside grid")
        return idx

    def ravel(self, index) -> int:
        return int(np.ravel_multi_index(self.unravel(index), self.shape))

    def nearest_index(self, x) -> tuple:
        x = np.asarray(x, dtype=float)
        k = np.rint((x - np.asarray(self.box.lo)) / self.h).astype(int)
        k = np.clip(k, 0, np.asarray(self.shape) - 1)
        return tuple(int(i) for i in k)

    def is_interior(self, index, width: int = 1) -> bool:
        idx = self.unravel(index)
        return all(width <= i < s - width for i, s in zip(idx, self.shape))

    def interior_mask(self, width: int = 1) -> np.ndarray:
        bits = np.zeros(self.shape, dtype=bool)
        bits[tuple(slice(width, s - width) for s in self.shape)] = True
        return bits

    def boundary_mask(self) -> np.ndarray:
        return ~self.interior_mask(1)

    def __eq__(self, other):
        return isinstance(other, GridSpec) and self.box == other.box and self.shape == other.shape

    def __hash__(self):
        return hash((self.box, self.shape))


@dataclass(frozen=True, eq=False)
class ScalarField:
    spec: GridSpec
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float).reshape(self.spec.shape)
        if np.any(np.isnan(v)) or np.any(v == np.inf):
            raise GridError("field values must be finite reals or NEG_INF")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def flat(self) -> np.ndarray:
        return self.values.reshape(-1)

    @property
    def finite(self) -> np.ndarray:
        return np.isfinite(self.values)

    def has_neg_inf(self) -> bool:
        return bool(np.any(self.values == NEG_INF))

    def __getitem__(self, index) -> float:
        return float(self.values[self.spec.unravel(index)])

    def with_values(self, values) -> "ScalarField":
        return ScalarField(self.spec, values)

    def __add__(self, other):
        if isinstance(other, ScalarField):
            _same_grid(self, other)
            other = other.values
        return ScalarField(self.spec, self.values + other)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, ScalarField):
            _same_grid(self, other)
            other = other.values
        return ScalarField(self.spec, self.values - other)

    def __neg__(self):
        return ScalarField(self.spec, -self.values)

    def __mul__(self, c):
        return ScalarField(self.spec, self.values * float(c))

    __rmul__ = __mul__


@dataclass(frozen=True, eq=False)
class GridMask:
    spec: GridSpec
    bits: np.ndarray

    def __post_init__(self):
        b = np.array(self.bits, dtype=bool).reshape(self.spec.shape)
        b.setflags(write=False)
        object.__setattr__(self, "bits", b)

    @property
    def count(self) -> int:
        return int(self.bits.sum())

    def indices(self) -> np.ndarray:
        """Flat indices of set nodes, ascending (row-major)."""
        return np.flatnonzero(self.bits.reshape(-1))

    def points(self) -> np.ndarray:
        return self.spec.points()[self.indices()]

    def __and__(self, other: "GridMask") -> "GridMask":
        return GridMask(self.spec, self.bits & other.bits)

    def __or__(self, other: "GridMask") -> "GridMask":
        return GridMask(self.spec, self.bits | other.bits)

    def __invert__(self) -> "GridMask":
        return GridMask(self.spec, ~self.bits)


def _same_grid(a, b):
    if a.spec != b.spec:
        raise GridError("fields live on different grids")


def build_field(spec: GridSpec, generator: Callable) -> ScalarField:
    """Sample ``generator`` at every node; vectorized generators receive coordinate arrays.

    The generator is first tried on the coordinate arrays ``(x0, x1, ...)``
    each of grid shape; if that fails or returns the wrong shape it is called
    node by node with a coordinate vector.
    """
    comps = [spec.coords()[..., i] for i in range(spec.ndim)]
    try:
        with np.errstate(all="ignore"):
            out = np.asarray(generator(*comps), dtype=float)
        if out.shape != spec.shape:
            out = np.broadcast_to(out, spec.shape).copy()
    except Exception:
        pts = spec.points()
        out = np.array([float(generator(*p)) for p in pts]).reshape(spec.shape)
    return ScalarField(spec, out)


def jet_arrays(field: ScalarField, step: int = 1):
    """Centered-difference (r, p, A) on all nodes at distance >= step from the faces.

    Returns arrays with leading shape ``tuple(s - 2*step)``; A is exactly symmetric.
    """
    u = field.values
    n = field.spec.ndim
    h = field.spec.h * step
    inner = tuple(slice(step, s - step) for s in u.shape)

    def sh(off):
        return u[tuple(slice(step + o * step, s - step + o * step) for o, s in zip(off, u.shape))]

    r = u[inner]
    lead = r.shape
    p = np.empty(lead + (n,))
    A = np.empty(lead + (n, n))
    e = np.eye(n, dtype=int)
    with np.errstate(invalid="ignore"):
        for i in range(n):
            up, dn = sh(e[i]), sh(-e[i])
            p[..., i] = (up - dn) / (2 * h[i])
            A[..., i, i] = (up - 2 * r + dn) / h[i] ** 2
            for j in range(i + 1, n):
                c = (sh(e[i] + e[j]) - sh(e[i] - e[j]) - sh(-e[i] + e[j]) + sh(-e[i] - e[j])) / (4 * h[i] * h[j])
                A[..., i, j] = c
                A[..., j, i] = c
    return r, p, A


def stencil_offsets(n: int, step: int = 1) -> np.ndarray:
    return np.array(list(itertools.product((-step, 0, step), repeat=n)), dtype=int)


def numeric_jet(field: ScalarField, index) -> Jet2:
    spec = field.spec
    idx = spec.unravel(index)
    if not spec.is_interior(idx):
        raise GridError("non-interior node")
    block = field.values[tuple(slice(i - 1, i + 2) for i in idx)]
    if not np.all(np.isfinite(block)):
        raise GridError("undefined jet")
    sub = ScalarField(GridSpec(Box(np.zeros(spec.ndim), 2 * spec.h), 3), block)
    r, p, A = jet_arrays(sub)
    c = (0,) * spec.ndim
    return Jet2(float(r[c]), p[c], A[c])


def mask_measure(mask: GridMask) -> float:
    return mask.count * mask.spec.cell_volume


def box_mask(spec: GridSpec, box: Box, pad: float | None = None) -> GridMask:
    """Nodes inside ``box`` (closed), with a half-ulp-of-cell slack."""
    pad = 1e-9 * spec.hmax if pad is None else pad
    return GridMask(spec, spec.box.contains(spec.coords(), 0) & box.contains(spec.coords(), pad))


def ball_mask(spec: GridSpec, center, radius: float, slack: float | None = None) -> GridMask:
    """Nodes with |y - center| <= radius (+ tiny slack)."""
    slack = 1e-9 * spec.hmax if slack is None else slack
    d = np.linalg.norm(spec.coords() - np.asarray(center, dtype=float), axis=-1)
    return GridMask(spec, d <= radius + slack)


def region_mask(spec: GridSpec, region=None) -> GridMask:
    """Normalize a region argument (None, Box, GridMask or boolean array) to a GridMask."""
    if region is None:
        return GridMask(spec, np.ones(spec.shape, dtype=bool))
    if isinstance(region, GridMask):
        if region.spec != spec:
            raise GridError("mask lives on a different grid")
        return region
    if isinstance(region, Box):
        return box_mask(spec, region)
    return GridMask(spec, np.asarray(region, dtype=bool))


def mask_boundary(mask: GridMask) -> GridMask:
    """Nodes of the mask with an axis neighbour outside it (or on the grid face)."""
    b = mask.bits
    pad = np.pad(b, 1, constant_values=False)
    inner = np.ones_like(b)
    n = b.ndim
    for ax in range(n):
        for o in (-1, 1):
            sl = [slice(1, -1)] * n
            sl[ax] = slice(1 + o, pad.shape[ax] - 1 + o)
            inner &= pad[tuple(sl)]
    return GridMask(mask.spec, b & ~inner)


def mask_interior(mask: GridMask, width: int = 1) -> GridMask:
    """Nodes whose full (2*width+1)^n stencil lies in the mask."""
    b = mask.bits
    n = b.ndim
    pad = np.pad(b, width, constant_values=False)
    out = np.ones_like(b)
    for off in itertools.product(range(-width, width + 1), repeat=n):
        sl = tuple(slice(width + o, pad.shape[a] - width + o) for a, o in enumerate(off))
        out &= pad[sl]
    return GridMask(mask.spec, out)


# ---- file formats ----

def _fmt(v: float) -> str:
    if v == NEG_INF:
        return "-inf"
    return "%.17g" % v


def _header(spec: GridSpec, tag: str) -> list:
    return [
        tag,
        f"dim {spec.ndim}",
        "lo " + " ".join("%.17g" % v for v in spec.box.lo),
        "hi " + " ".join("%.17g" % v for v in spec.box.hi),
        "shape " + " ".join(str(s) for s in spec.shape),
    ]


def format_field(f: ScalarField) -> str:
    lines = _header(f.spec, FIELD_HEADER)
    vals = [_fmt(v) for v in f.flat]
    row = f.spec.shape[-1]
    lines += [" ".join(vals[k:k + row]) for k in range(0, len(vals), row)]
    return "\n".join(lines) + "\n"


def _parse_header(lines: list, tag: str):
    if not lines or lines[0].strip() != tag:
        raise GridError(f"missing '{tag}' header")
    try:
        key, n = lines[1].split()
        assert key == "dim"
        n = int(n)
        lo = lines[2].split()
        hi = lines[3].split()
        shp = lines[4].split()
        assert lo[0] == "lo" and hi[0] == "hi" and shp[0] == "shape"
        spec = GridSpec(Box([float(v) for v in lo[1:]], [float(v) for v in hi[1:]]), [int(v) for v in shp[1:]])
    except (ValueError, AssertionError, IndexError) as exc:
        raise GridError("malformed grid header") from exc
    if spec.ndim != n:
        raise GridError("dim does not match lo/hi/shape")
    return spec


def parse_field(text: str) -> ScalarField:
    lines = text.splitlines()
    spec = _parse_header(lines, FIELD_HEADER)
    toks = " ".join(lines[5:]).split()
    if len(toks) != spec.size:
        raise GridError(f"expected {spec.size} values, found {len(toks)}")
    vals = np.array([NEG_INF if t == "-inf" else float(t) for t in toks])
    return ScalarField(spec, vals)


def write_field(f: ScalarField, path) -> None:
    with open(path, "w") as fh:
        fh.write(format_field(f))


def read_field(path) -> ScalarField:
    with open(path) as fh:
        return parse_field(fh.read())


def format_mask(m: GridMask) -> str:
    lines = _header(m.spec, MASK_HEADER)
    bits = m.bits.reshape(-1).astype(int).astype(str)
    row = m.spec.shape[-1]
    lines += [" ".join(bits[k:k + row]) for k in range(0, len(bits), row)]
    return "\n".join(lines) + "\n"


def parse_mask(text: str) -> GridMask:
    lines = text.splitlines()
    spec = _parse_header(lines, MASK_HEADER)
    toks = " ".join(lines[5:]).split()
    if len(toks) != spec.size or any(t not in ("0", "1") for t in toks):
        raise GridError("malformed mask body")
    return GridMask(spec, np.array([t == "1" for t in toks]))


def write_mask(m: GridMask, path) -> None:
    with open(path, "w") as fh:
        fh.write(format_mask(m))


def read_mask(path) -> GridMask:
    with open(path) as fh:
        return parse_mask(fh.read())
