"""Uniform Cartesian scalar-field kernel.

Everything downstream (level sets, torsion potentials, capillarity
potentials) lives as node samples on an isotropic grid: one spacing h for
all axes, values indexed [i, j] or [i, j, k] with axis 0 = x. This module
owns storage plus the operators the rest of the package composes: central
difference gradient/Hessian, compact-kernel mollification, multilinear
interpolation, face-adjacency connected components, and the CSV snapshot
format used by the CLI dump flags.

Operators are pure functions of their inputs and never mutate fields, so
repeated calls are bit-identical.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage, signal

from .errors import MollifierTooNarrow

# Direct convolution up to this kernel half-width; FFT beyond it. The direct
# path is exactly shift equivariant, the FFT path only up to roundoff, so
# small kernels (the common case) take the stricter route.
_DIRECT_KERNEL_MAX_HALFWIDTH = 3


@dataclass(frozen=True)
class Grid:
    """Isotropic node lattice: origin + h * index, extents nodes per axis."""

    origin: tuple[float, ...]
    extents: tuple[int, ...]
    h: float

    def __post_init__(self):
        if len(self.origin) != len(self.extents):
            raise ValueError("origin and extents disagree on dimension")
        if len(self.extents) not in (2, 3):
            raise ValueError(f"dimension must be 2 or 3, got {len(self.extents)}")
        if any(n < 8 for n in self.extents):
            raise ValueError(f"need at least 8 nodes per axis, got {self.extents}")
        if not self.h > 0:
            raise ValueError("spacing h must be positive")
        object.__setattr__(self, "origin", tuple(float(x) for x in self.origin))
        object.__setattr__(self, "extents", tuple(int(n) for n in self.extents))

    @property
    def d(self) -> int:
        return len(self.extents)

    @property
    def upper(self) -> tuple[float, ...]:
        return tuple(o + (n - 1) * self.h for o, n in zip(self.origin, self.extents))

    def axis_coords(self, axis: int) -> np.ndarray:
        return self.origin[axis] + self.h * np.arange(self.extents[axis])

    def node_coords(self) -> np.ndarray:
        """All node positions, shape (*extents, d). Allocates; use sparingly."""
        axes = [self.axis_coords(k) for k in range(self.d)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack(mesh, axis=-1)


@dataclass(frozen=True)
class ScalarField:
    """Node samples of a scalar function on a Grid."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != self.grid.extents:
            raise ValueError(f"values shape {v.shape} != extents {self.grid.extents}")
        if not np.all(np.isfinite(v)):
            raise ValueError("field contains non-finite values")
        object.__setattr__(self, "values", v)


@dataclass(frozen=True)
class MollifierSpec:
    """Convolution kernel choice: compact polynomial or truncated Gaussian."""

    eps: float
    kernel: str = "compact-polynomial"

    def __post_init__(self):
        if self.kernel not in ("compact-polynomial", "gaussian"):
            raise ValueError(f"unknown kernel {self.kernel!r}")


def _axslice(ndim: int, axis: int, s) -> tuple:
    idx = [slice(None)] * ndim
    idx[axis] = s
    return tuple(idx)


def gradient(field: ScalarField) -> np.ndarray:
    """Componentwise first derivatives, shape (*extents, d).

    Central differences at interior nodes, second-order one-sided at the box
    faces. Exact on polynomials of degree <= 2 sampled on the grid.
    """
    parts = np.gradient(field.values, field.grid.h, edge_order=2)
    if field.grid.d == 1:
        parts = [parts]
    return np.stack(parts, axis=-1)


def hessian(field: ScalarField) -> np.ndarray:
    """Second derivatives, shape (*extents, d, d), exactly symmetric.

    Standard central stencils: (1, -2, 1)/h^2 on the diagonal, the four
    point cross stencil for mixed terms. Face layers are filled by copying
    the nearest interior layer; callers evaluate at nodes >= 2h from the box
    faces, where the stencils are genuine.
    """
    nd = field.grid.d
    out = np.empty(field.values.shape + (nd, nd))
    for a in range(nd):
        out[..., a, a] = hessian_component(field, a, a)
    for a in range(nd):
        for b in range(a + 1, nd):
            tmp = hessian_component(field, a, b)
            out[..., a, b] = tmp
            out[..., b, a] = tmp
    return out


def hessian_component(field: ScalarField, a: int, b: int) -> np.ndarray:
    """One entry of the Hessian as a full node array.

    Lets callers that only sample a handful of points avoid materializing
    all d*d components at once.
    """
    v = field.values
    h = field.grid.h
    nd = field.grid.d
    inner = slice(1, -1)
    buf = np.empty_like(v)
    if a == b:
        buf[_axslice(nd, a, inner)] = (
            v[_axslice(nd, a, slice(2, None))]
            - 2.0 * v[_axslice(nd, a, inner)]
            + v[_axslice(nd, a, slice(0, -2))]
        ) / (h * h)
        buf[_axslice(nd, a, 0)] = buf[_axslice(nd, a, 1)]
        buf[_axslice(nd, a, -1)] = buf[_axslice(nd, a, -2)]
        return buf
    if a > b:
        a, b = b, a
    pp = v[_pair(nd, a, slice(2, None), b, slice(2, None))]
    mm = v[_pair(nd, a, slice(0, -2), b, slice(0, -2))]
    pm = v[_pair(nd, a, slice(2, None), b, slice(0, -2))]
    mp = v[_pair(nd, a, slice(0, -2), b, slice(2, None))]
    buf[_pair(nd, a, inner, b, inner)] = (pp + mm - pm - mp) / (4.0 * h * h)
    for ax in (a, b):
        buf[_axslice(nd, ax, 0)] = buf[_axslice(nd, ax, 1)]
        buf[_axslice(nd, ax, -1)] = buf[_axslice(nd, ax, -2)]
    return buf


def _pair(ndim: int, a: int, sa, b: int, sb) -> tuple:
    idx = [slice(None)] * ndim
    idx[a] = sa
    idx[b] = sb
    return tuple(idx)


def _kernel_from_offsets(spec: MollifierSpec, mesh) -> np.ndarray:
    r2 = sum(m * m for m in mesh)
    if spec.kernel == "compact-polynomial":
        t = 1.0 - r2 / (spec.eps * spec.eps)
        w = np.where(t > 0.0, t, 0.0) ** 4
    else:
        sigma = spec.eps / 3.0
        w = np.exp(-0.5 * r2 / (sigma * sigma))
        w[r2 > spec.eps * spec.eps] = 0.0
    total = w.sum()
    if total <= 0.0:
        raise MollifierTooNarrow("kernel support contains no nodes")
    return w / total


def _kernel_for_grid(spec: MollifierSpec, grid: Grid) -> np.ndarray:
    if spec.eps < 2.0 * grid.h:
        raise MollifierTooNarrow(f"eps={spec.eps} < 2h={2 * grid.h}")
    half = int(np.ceil(spec.eps / grid.h))
    offs = np.arange(-half, half + 1) * grid.h
    mesh = np.meshgrid(*([offs] * grid.d), indexing="ij")
    return _kernel_from_offsets(spec, mesh)


def mollify(field: ScalarField, spec: MollifierSpec) -> ScalarField:
    """Convolve with the normalized even kernel, zero extension outside.

    Sup-norm non-expansive and mean preserving (for compactly supported
    fields) up to roundoff, since the weights are nonnegative and sum to 1.
    """
    kernel = _kernel_for_grid(spec, field.grid)
    half = (kernel.shape[0] - 1) // 2
    if half <= _DIRECT_KERNEL_MAX_HALFWIDTH:
        out = ndimage.convolve(field.values, kernel, mode="constant", cval=0.0)
    else:
        out = signal.fftconvolve(field.values, kernel, mode="same")
    return ScalarField(field.grid, out)


def connected_components(mask: np.ndarray, grid: Grid) -> list[np.ndarray]:
    """Face-adjacency components of a boolean node mask.

    Returns flat node index arrays (C order, each sorted ascending), listed
    in order of their smallest member. Vertex adjacency is deliberately not
    used: it would merge components that touch only at a corner, which is
    the failure mode thresholded level sets need to avoid.
    """
    m = np.asarray(mask, dtype=bool)
    if m.shape != grid.extents:
        raise ValueError("mask shape does not match grid extents")
    structure = ndimage.generate_binary_structure(grid.d, 1)
    labels, count = ndimage.label(m, structure=structure)
    flat = labels.ravel()
    comps = []
    for lab in range(1, count + 1):
        comps.append(np.flatnonzero(flat == lab))
    # ndimage.label assigns labels in raster order already, but the public
    # contract is ours: order by smallest linear index, explicitly.
    comps.sort(key=lambda ix: ix[0])
    return comps


def interpolate(field: ScalarField, points: np.ndarray) -> np.ndarray:
    """Multilinear interpolation at arbitrary points, clamped to the box."""
    return interpolate_values(field.grid, field.values, points)


def interpolate_values(grid: Grid, values: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Multilinear interpolation of node data with trailing sample shape.

    values may be (*extents,) or (*extents, m); points is (k, d). Returns
    (k,) or (k, m). Points outside the box are clamped to the last cell.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    d = grid.d
    t = (pts - np.asarray(grid.origin)) / grid.h
    i0 = np.floor(t).astype(np.int64)
    for ax in range(d):
        np.clip(i0[:, ax], 0, grid.extents[ax] - 2, out=i0[:, ax])
    frac = np.clip(t - i0, 0.0, 1.0)
    trailing = values.shape[d:]
    out = np.zeros((pts.shape[0],) + trailing)
    for corner in range(1 << d):
        w = np.ones(pts.shape[0])
        idx = []
        for ax in range(d):
            if corner >> ax & 1:
                idx.append(i0[:, ax] + 1)
                w = w * frac[:, ax]
            else:
                idx.append(i0[:, ax])
                w = w * (1.0 - frac[:, ax])
        vals = values[tuple(idx)]
        out += vals * w.reshape((-1,) + (1,) * len(trailing))
    return out


def write_snapshot(field: ScalarField, path: str) -> None:
    """Dump a field as CSV rows i,j(,k),value with a grid header line."""
    g = field.grid
    origin = ",".join(f"{x:.17g}" for x in g.origin)
    extents = ",".join(str(n) for n in g.extents)
    header = f"# grid d={g.d} h={g.h:.17g} origin={origin} extents={extents}"
    idx = np.indices(g.extents).reshape(g.d, -1)
    with open(path, "w") as fh:
        fh.write(header + "\n")
        fh.write(",".join("ijk"[: g.d]) + ",value\n")
        vals = field.values.ravel()
        for row in range(vals.size):
            ints = ",".join(str(idx[a, row]) for a in range(g.d))
            fh.write(f"{ints},{vals[row]:.17g}\n")


def read_snapshot(path: str) -> ScalarField:
    """Inverse of write_snapshot."""
    with open(path) as fh:
        header = fh.readline().strip()
        if not header.startswith("# grid"):
            raise ValueError("missing grid header line")
        meta = dict(tok.split("=", 1) for tok in header[2:].split()[1:])
        d = int(meta["d"])
        h = float(meta["h"])
        origin = tuple(float(x) for x in meta["origin"].split(","))
        extents = tuple(int(x) for x in meta["extents"].split(","))
        fh.readline()  # column header
        data = np.loadtxt(fh, delimiter=",")
    grid = Grid(origin, extents, h)
    values = np.zeros(extents)
    ints = data[:, :d].astype(np.int64)
    values[tuple(ints[:, a] for a in range(d))] = data[:, d]
    return ScalarField(grid, values)
