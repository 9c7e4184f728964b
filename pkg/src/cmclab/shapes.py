"""Implicitly defined test domains on a node grid.

Every constructor returns an ImplicitDomain: a level-set field phi whose
negative set is the domain, a flag saying whether phi is an exact signed
distance function, and a provenance tag. Curvature extraction downstream
differentiates phi directly, so each constructor keeps phi as smooth as the
geometry allows and never runs it through the redistancer. Distance
queries go through distance_field(), which redistances lazily when phi is
not already a distance.

Sign convention: phi < 0 inside. For the unit ball phi = |x| - 1 and every
curvature the pipeline derives from it is positive.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import fsm
from .errors import (
    AmplitudeTooLarge,
    DegenerateAxis,
    EmptySurface,
    NeckUnresolved,
    OutOfBox,
)
from .grid import Grid, ScalarField, interpolate_values

_MARGIN_CELLS = 4


@dataclass(frozen=True)
class ImplicitDomain:
    """A bounded open set given as the negative region of a grid field."""

    phi: ScalarField
    exact_sdf: bool
    provenance: str
    dist_cache: Optional[ScalarField] = field(default=None, repr=False, compare=False)

    @property
    def grid(self) -> Grid:
        return self.phi.grid

    @property
    def d(self) -> int:
        return self.phi.grid.d


def distance_field(dom: ImplicitDomain) -> ScalarField:
    """Signed distance to the boundary, computed once and cached.

    When phi is already a distance (exact or the ellipsoid's projected
    one) it is returned as is; otherwise a fast-sweeping pass rebuilds it.
    """
    if dom.exact_sdf:
        return dom.phi
    if dom.dist_cache is not None:
        return dom.dist_cache
    dist = fsm.redistance(dom.phi)
    object.__setattr__(dom, "dist_cache", dist)
    return dist


def _finish(
    phi: ScalarField,
    exact_sdf: bool,
    provenance: str,
    dist: Optional[ScalarField] = None,
) -> ImplicitDomain:
    values = phi.values
    neg = values < 0
    if not neg.any():
        raise EmptySurface(f"{provenance}: no interior nodes on this grid")
    # the body must keep clear of the box faces so stencils never clip it
    for ax in range(values.ndim):
        sl_lo = [slice(None)] * values.ndim
        sl_hi = [slice(None)] * values.ndim
        sl_lo[ax] = slice(0, _MARGIN_CELLS)
        sl_hi[ax] = slice(-_MARGIN_CELLS, None)
        if neg[tuple(sl_lo)].any() or neg[tuple(sl_hi)].any():
            raise OutOfBox(f"{provenance}: interior reaches within 4 cells of a face")
    return ImplicitDomain(phi=phi, exact_sdf=exact_sdf, provenance=provenance, dist_cache=dist)


def make_ball(grid: Grid, center, radius: float) -> ImplicitDomain:
    """Exact signed distance ball."""
    if radius <= 0:
        raise ValueError("radius must be positive")
    c = np.asarray(center, dtype=float)
    r = np.linalg.norm(grid.node_coords() - c, axis=-1)
    return _finish(ScalarField(grid, r - radius), True, "ball")


def _ellipsoid_distance(x: np.ndarray, semiaxes: np.ndarray) -> np.ndarray:
    """Signed distance to an axis-aligned ellipsoid, vectorized bisection.

    Nearest-point projection p_i = a_i^2 x_i / (a_i^2 + t) with the unique
    root t of g(t) = sum (a_i x_i / (a_i^2 + t))^2 - 1 on the branch
    t > -min(a_i)^2, where g is strictly decreasing. Exact zeros in x are
    nudged off the symmetry planes so the same branch also resolves the
    ring-shaped nearest points inside the evolute.
    """
    a = semiaxes
    a_max = a.max()
    xs = np.abs(x)
    xs = np.maximum(xs, 1e-9 * a_max)
    level_sq = np.sum((xs / a) ** 2, axis=-1)
    inside = level_sq < 1.0

    t_lo = np.full(xs.shape[:-1], -(a.min() ** 2) * (1.0 - 1e-14))
    norm = np.linalg.norm(xs, axis=-1)
    t_hi = np.sqrt(xs.shape[-1]) * a_max * (norm + a_max)

    aa = a * a
    ax_sq = (a * xs) ** 2
    for _ in range(90):
        t_mid = 0.5 * (t_lo + t_hi)
        g = np.sum(ax_sq / (aa + t_mid[..., None]) ** 2, axis=-1) - 1.0
        pos = g > 0
        t_lo = np.where(pos, t_mid, t_lo)
        t_hi = np.where(pos, t_hi, t_mid)
    t = 0.5 * (t_lo + t_hi)
    p = aa * xs / (aa + t[..., None])
    dist = np.linalg.norm(xs - p, axis=-1)
    return np.where(inside, -dist, dist)


def make_ellipsoid(grid: Grid, semiaxes, center=None) -> ImplicitDomain:
    a = np.asarray(semiaxes, dtype=float)
    if a.shape != (grid.d,):
        raise ValueError("one semiaxis per dimension")
    if np.any(a < 8 * grid.h):
        raise DegenerateAxis("semiaxis below 8h cannot be resolved")
    c = np.zeros(grid.d) if center is None else np.asarray(center, dtype=float)
    x = grid.node_coords() - c
    vals = _ellipsoid_distance(x, a)
    phi = ScalarField(grid, vals)
    # the projected distance doubles as the distance cache
    return _finish(phi, False, "ellipsoid", dist=phi)


def _legendre_sup_normalized(ell: int, m: int, ct: np.ndarray, az: np.ndarray) -> np.ndarray:
    """Real angular mode with sup norm 1."""
    from scipy.special import lpmv

    base = lpmv(m, ell, ct)
    # sup over a fine latitude sample; deterministic and cheap
    sup = np.abs(lpmv(m, ell, np.linspace(-1.0, 1.0, 20001))).max()
    mode = base / sup
    if m > 0:
        mode = mode * np.cos(m * az)
    return mode


def make_perturbed_sphere(
    grid: Grid,
    radius: float,
    modes,
    center=None,
) -> ImplicitDomain:
    """Radial graph over the sphere: phi = |x| - R (1 + sum amp * Y).

    modes is a sequence of (ell, m, amp) with amp relative to R and each
    angular profile normalized to sup 1; the combined amplitude must stay
    below 1/10 so the surface remains a starshaped C^2 graph.
    """
    c = np.zeros(grid.d) if center is None else np.asarray(center, dtype=float)
    modes = list(modes)
    total = sum(abs(amp) for _, _, amp in modes)
    if total > 0.1 + 1e-12:
        raise AmplitudeTooLarge(f"combined relative amplitude {total:.3f} exceeds 0.1")
    x = grid.node_coords() - c
    r = np.linalg.norm(x, axis=-1)
    safe_r = np.maximum(r, 1e-12)
    if grid.d == 3:
        ct = np.clip(x[..., 2] / safe_r, -1.0, 1.0)
        az = np.arctan2(x[..., 1], x[..., 0])
        angular = np.zeros_like(r)
        for ell, m, amp in modes:
            angular += amp * _legendre_sup_normalized(ell, m, ct, az)
    else:
        ang = np.arctan2(x[..., 1], x[..., 0])
        angular = np.zeros_like(r)
        for ell, m, amp in modes:
            # in the plane the mode index is the wave number
            angular += amp * np.cos(ell * ang + (np.pi / (2 * ell) if m else 0.0))
    vals = r - radius * (1.0 + angular)
    return _finish(ScalarField(grid, vals), False, "perturbed_sphere")


def random_modes(seed: int, count: int = 3, max_ell: int = 4, total_amp: float = 0.05):
    """Seeded multi-mode perturbation, for robustness sweeps."""
    rng = np.random.default_rng(seed)
    weights = rng.dirichlet(np.ones(count)) * total_amp
    out = []
    for k in range(count):
        ell = int(rng.integers(2, max_ell + 1))
        m = int(rng.choice([0, ell]))
        out.append((ell, m, float(weights[k])))
    return out


@dataclass(frozen=True)
class NeckCompoundSpec:
    """Union of balls with optional smooth necks between named pairs."""

    centers: tuple
    radii: tuple
    neck_pairs: tuple = ()
    waists: tuple = ()
    profile: str = "catenoid"

    def __post_init__(self):
        if len(self.centers) != len(self.radii):
            raise ValueError("one radius per center")
        if len(self.neck_pairs) != len(self.waists):
            raise ValueError("one waist per neck pair")
        if any(r <= 0 for r in self.radii):
            raise ValueError("radii must be positive")
        if self.profile not in ("catenoid", "smoothmin"):
            raise ValueError(f"unknown profile {self.profile!r}")


def _union_of_balls_phi(grid: Grid, centers: np.ndarray, radii: np.ndarray) -> np.ndarray:
    x = grid.node_coords()
    vals = np.full(grid.extents, np.inf)
    for c, r in zip(centers, radii):
        vals = np.minimum(vals, np.linalg.norm(x - c, axis=-1) - r)
    return vals


def _blend_quintic(mu, m, s_left_center, r_left, s_right_center, r_right):
    """Quintic W(s) matching value, slope and curvature of both sphere
    profiles W_j = R^2 - (s - c)^2 at the window edges mu -/+ m."""
    rows = []
    rhs = []
    for xx, cc, rr in ((-m, s_left_center, r_left), (m, s_right_center, r_right)):
        s_abs = mu + xx
        rows.append([1, xx, xx**2, xx**3, xx**4, xx**5])
        rhs.append(rr**2 - (s_abs - cc) ** 2)
        rows.append([0, 1, 2 * xx, 3 * xx**2, 4 * xx**3, 5 * xx**4])
        rhs.append(-2 * (s_abs - cc))
        rows.append([0, 0, 2, 6 * xx, 12 * xx**2, 20 * xx**3])
        rhs.append(-2.0)
    return np.linalg.solve(np.array(rows, dtype=float), np.array(rhs, dtype=float))


def _solve_neck_window(gap_half, s_lc, r_l, s_rc, r_r, mu, waist, h):
    """Half-width m of the blend window that hits the target waist."""
    m_min = gap_half * 1.05 + 2 * h
    m_max = 0.9 * min(mu - s_lc, s_rc - mu)
    if m_min >= m_max:
        raise NeckUnresolved("no room for a blend window between the balls")
    target = waist * waist

    def waist_sq(m):
        return _blend_quintic(mu, m, s_lc, r_l, s_rc, r_r)[0]

    grid_m = np.linspace(m_min, m_max, 33)
    vals = np.array([waist_sq(m) - target for m in grid_m])
    sign_change = np.nonzero(np.diff(np.signbit(vals)))[0]
    if vals[0] >= 0:
        # even the narrowest window is already too fat; take it
        return grid_m[0]
    if sign_change.size == 0:
        raise NeckUnresolved("target waist unreachable for this pair")
    k = int(sign_change[0])
    lo, hi = grid_m[k], grid_m[k + 1]
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if waist_sq(mid) - target < 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def make_neck_compound(grid: Grid, spec: NeckCompoundSpec) -> ImplicitDomain:
    centers = np.asarray(spec.centers, dtype=float)
    radii = np.asarray(spec.radii, dtype=float)
    if centers.shape[1] != grid.d:
        raise ValueError("center dimension mismatch")

    if not spec.neck_pairs:
        vals = _union_of_balls_phi(grid, centers, radii)
        # min of ball distances is the exact union distance as long as the
        # interiors stay disjoint
        exact = True
        for j in range(len(radii)):
            for l in range(j + 1, len(radii)):
                if np.linalg.norm(centers[j] - centers[l]) < radii[j] + radii[l] - 1e-12:
                    exact = False
        return _finish(ScalarField(grid, vals), exact, "ball_union")

    if spec.profile == "smoothmin":
        return _make_smoothmin(grid, spec, centers, radii)

    if min(spec.waists) < 4 * grid.h:
        raise NeckUnresolved("waist below 4h cannot be resolved on this grid")

    # necked compounds line up on a common axis
    axis = centers[-1] - centers[0]
    length = np.linalg.norm(axis)
    if length == 0:
        raise ValueError("coincident end centers")
    u = axis / length
    rel = centers - centers[0]
    off_axis = rel - np.outer(rel @ u, u)
    if np.abs(off_axis).max() > 1e-9 * max(1.0, length):
        raise ValueError("necked compounds require collinear centers")
    s_centers = rel @ u

    x = grid.node_coords() - centers[0]
    s = x @ u
    rho_sq = np.maximum(np.einsum("...i,...i->...", x, x) - s * s, 0.0)

    # sphere envelope, then overwrite each blend window with its quintic
    w_profile = np.full(grid.extents, -np.inf)
    for sc, r in zip(s_centers, radii):
        np.maximum(w_profile, r * r - (s - sc) ** 2, out=w_profile)

    for (j, l), waist in zip(spec.neck_pairs, spec.waists):
        j, l = (j, l) if s_centers[j] < s_centers[l] else (l, j)
        e_l = s_centers[j] + radii[j]
        e_r = s_centers[l] - radii[l]
        gap = e_r - e_l
        if gap <= 0:
            raise ValueError("necked pair overlaps; no gap to bridge")
        mu = 0.5 * (e_l + e_r)
        m = _solve_neck_window(
            gap / 2, s_centers[j], radii[j], s_centers[l], radii[l], mu, waist, grid.h
        )
        coeff = _blend_quintic(mu, m, s_centers[j], radii[j], s_centers[l], radii[l])
        probe = np.linspace(-m, m, 257)
        q_vals = np.polyval(coeff[::-1], probe)
        if q_vals.min() < 0.25 * waist * waist:
            raise NeckUnresolved("blend dips far below the target waist")
        window = (s >= mu - m) & (s <= mu + m)
        w_profile[window] = np.polyval(coeff[::-1], s[window] - mu)

    vals = rho_sq - w_profile
    return _finish(ScalarField(grid, vals), False, "neck_compound")


def _make_smoothmin(grid, spec, centers, radii) -> ImplicitDomain:
    k = float(min(spec.waists))
    if k <= 0:
        raise ValueError("smoothmin profile needs a positive waist scale")
    x = grid.node_coords()
    acc = np.zeros(grid.extents)
    for c, r in zip(centers, radii):
        acc += np.exp(-(np.linalg.norm(x - c, axis=-1) - r) / k)
    vals = -k * np.log(acc)
    phi = ScalarField(grid, vals)
    dom = _finish(phi, False, "smoothmin_compound")
    dist = fsm.redistance(phi)
    object.__setattr__(dom, "dist_cache", dist)
    return dom


def two_ball_neck(grid: Grid, waist: float, radius: float = 1.0) -> ImplicitDomain:
    """Two unit-ish balls bridged by a neck; separation tracks the waist."""
    half = radius + waist / 2
    c1 = np.zeros(grid.d)
    c2 = np.zeros(grid.d)
    c1[0] = -half
    c2[0] = half
    spec = NeckCompoundSpec(
        centers=(tuple(c1), tuple(c2)),
        radii=(radius, radius),
        neck_pairs=((0, 1),),
        waists=(waist,),
    )
    return make_neck_compound(grid, spec)


def three_ball_chain(grid: Grid, waist: float, radius: float = 1.0) -> ImplicitDomain:
    sep = 2 * radius + waist
    c = []
    for k in (-1, 0, 1):
        v = np.zeros(grid.d)
        v[0] = k * sep
        c.append(tuple(v))
    spec = NeckCompoundSpec(
        centers=tuple(c),
        radii=(radius,) * 3,
        neck_pairs=((0, 1), (1, 2)),
        waists=(waist, waist),
    )
    return make_neck_compound(grid, spec)


def rigid_move(dom: ImplicitDomain, rotation=None, translation=None) -> ImplicitDomain:
    """Resample phi under the rigid motion y -> R y + t.

    Lattice translations and quarter-turn rotations land on nodes, so they
    reproduce the field exactly; generic motions are trilinear and cost
    O(h^2) near the surface.
    """
    d = dom.d
    rot = np.eye(d) if rotation is None else np.asarray(rotation, dtype=float)
    t = np.zeros(d) if translation is None else np.asarray(translation, dtype=float)
    if rot.shape != (d, d):
        raise ValueError("rotation shape mismatch")
    if not np.allclose(rot @ rot.T, np.eye(d), atol=1e-12):
        raise ValueError("rotation must be orthogonal")
    x = dom.grid.node_coords()
    pre = (x - t) @ rot  # row-vector form of R^T (x - t)
    vals = interpolate_values(dom.grid, dom.phi.values, pre.reshape(-1, d))
    vals = vals.reshape(dom.grid.extents)
    moved = _finish(
        ScalarField(dom.grid, vals), dom.exact_sdf, dom.provenance + "+moved"
    )
    if dom.dist_cache is not None:
        dvals = interpolate_values(dom.grid, dom.dist_cache.values, pre.reshape(-1, d))
        object.__setattr__(
            moved, "dist_cache", ScalarField(dom.grid, dvals.reshape(dom.grid.extents))
        )
    return moved


def domain_from_snapshot(phi: ScalarField, exact_sdf: bool = False) -> ImplicitDomain:
    """Wrap an externally supplied field, validating the box margins."""
    return _finish(phi, exact_sdf, "snapshot")
