"""Extraction of a tangent unit-ball compound from a near-critical domain.

The pipeline turns one implicit domain into a finite set of unit balls
plus a report of how well their union matches the domain:

  1. rescale lengths so the mean curvature baseline becomes n, which
     makes the candidate balls unit balls,
  2. mollify the torsion potential and threshold a deep sublevel set,
  3. fit an inscribed ball to each connected component of that set,
  4. keep components whose radius is close to one, inflate them to
     exactly one, and push centers apart until the balls are disjoint,
  5. measure closeness: symmetric difference, Hausdorff distances,
     tangency gaps, and a normal graph of the boundary over the union.

Everything downstream of the rescale works in normalized units; the
recorded scale factor undoes the change of units when callers need
original coordinates.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from typing import Optional, Union

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from . import measures, torsion
from .errors import EmptyThresholdSet, NoBallsSurvive, NonpositiveMeanCurvature
from .grid import (
    Grid,
    MollifierSpec,
    ScalarField,
    connected_components,
    interpolate_values,
    mollify,
)
from .measures import DeficitReport, SurfaceSampleSet, unit_ball_volume
from .miniball import _fixed_directions
from .shapes import ImplicitDomain, distance_field
from .torsion import TorsionSolution

_DENSITY_SEED = 12345
_DENSITY_SAMPLES = 50
_DENSITY_RADII = (0.1, 0.2, 0.4)
_BISECT_ITERS = 40
_CHUNK = 1 << 16


@dataclass(frozen=True)
class DecompositionConfig:
    """Knobs for the extraction; defaults follow the dimensional estimates.

    alpha and beta default to 1/(2(n+2)) and alpha/(2(n+1)) once the
    dimension is known. c0 is the Lipschitz bound used for the threshold
    depth: "empirical" reads it off the solved potential, a number fixes
    it. c1 widens the admissible radius window, c3 sets the neck cap
    radius. The overrides exist for degenerate-input tests.
    """

    alpha: Optional[float] = None
    beta: Optional[float] = None
    c0: Union[str, float] = "empirical"
    c1: float = 2.0
    c3: float = 1.0
    epsilon_override: Optional[float] = None
    rho_override: Optional[float] = None

    def exponents(self, d: int) -> tuple[float, float]:
        alpha = self.alpha if self.alpha is not None else 1.0 / (2 * (d + 1))
        beta = self.beta if self.beta is not None else alpha / (2 * d)
        if not 0.0 < beta < alpha < 0.5:
            raise ValueError(f"need 0 < beta < alpha < 1/2, got {alpha=}, {beta=}")
        return alpha, beta

    def lipschitz_bound(self, sol: TorsionSolution) -> float:
        if isinstance(self.c0, str):
            if self.c0 != "empirical":
                raise ValueError(f"c0 must be 'empirical' or a number, got {self.c0!r}")
            return torsion.lipschitz_check(sol)["grad_sup"]
        value = float(self.c0)
        if not value > 0:
            raise ValueError("fixed c0 must be positive")
        return value


@dataclass(frozen=True)
class NormalizedDomain:
    domain: ImplicitDomain
    surface: SurfaceSampleSet
    scale: float


@dataclass(frozen=True)
class ThresholdResult:
    """Deep sublevel set of the mollified potential, with the knobs used."""

    mask: np.ndarray
    f_eps: ScalarField
    epsilon: float
    rho: float
    eta_used: float
    c0: float
    clamped: bool


@dataclass(frozen=True)
class ComponentFit:
    center: np.ndarray
    r1: float  # inscribed radius of the component at the center
    r2: float  # max node distance, catches stretched components
    node_count: int


@dataclass(frozen=True)
class BallSystem:
    """Disjoint unit balls in normalized coordinates."""

    centers: np.ndarray
    radii: np.ndarray
    scale: float
    discarded_count: int = 0
    discarded_volume: float = 0.0

    @property
    def k(self) -> int:
        return self.centers.shape[0]

    def min_gap(self) -> float:
        """Smallest surface-to-surface distance; +inf for a single ball."""
        if self.k < 2:
            return float("inf")
        dd = np.linalg.norm(self.centers[:, None, :] - self.centers[None, :, :], axis=2)
        iu = np.triu_indices(self.k, 1)
        return float((dd[iu] - self.radii[iu[0]] - self.radii[iu[1]]).min())

    def sdf(self, points: np.ndarray) -> np.ndarray:
        """Signed distance to the union of balls, negative inside."""
        pts = np.atleast_2d(points)
        best = np.full(pts.shape[0], np.inf)
        for z, r in zip(self.centers, self.radii):
            np.minimum(best, np.linalg.norm(pts - z, axis=1) - r, out=best)
        return best

    def in_original_units(self) -> tuple[np.ndarray, np.ndarray]:
        return self.centers / self.scale, self.radii / self.scale


@dataclass(frozen=True)
class StabilityMetrics:
    """How far the domain sits from the extracted compound.

    Lengths are divided by the domain diameter so the numbers mean the
    same thing across shapes; psi statistics cover only rays that found
    the boundary (ray_missed counts the rest).
    """

    sym_diff_rel: float
    perim_quant: float
    onesided: float
    hausdorff: float
    tangency_gaps: tuple[float, ...]
    psi_sup: float
    psi_grad_sup: float
    uncovered_area: float
    density_kappa: float
    ray_missed: int
    sigma_samples: int
    cap_count: int
    lam: float
    sigma_points: np.ndarray = field(repr=False, compare=False, default=None)
    psi_values: np.ndarray = field(repr=False, compare=False, default=None)

    @property
    def tangency(self) -> float:
        return max(self.tangency_gaps) if self.tangency_gaps else 0.0


@dataclass(frozen=True)
class DecompositionResult:
    normalized: NormalizedDomain
    solution: TorsionSolution
    deficit: DeficitReport
    eta_report: Optional[torsion.EtaReport]
    threshold: ThresholdResult
    fits: tuple[ComponentFit, ...]
    balls: BallSystem
    metrics: StabilityMetrics


def normalize_domain(dom: ImplicitDomain, surf: SurfaceSampleSet) -> NormalizedDomain:
    """Rescale so the volumetric mean curvature baseline equals n.

    Pure change of units: grid origin and spacing are multiplied by the
    factor, no field is resampled. Level values scale with it too, which
    keeps exact distance fields exact.
    """
    g = dom.grid
    d = g.d
    per = float(surf.weights.sum())
    vol = measures.volume(dom)
    lam = per / (d * vol)  # H0 / n
    grid2 = Grid(tuple(o * lam for o in g.origin), g.extents, g.h * lam)
    phi2 = ScalarField(grid2, dom.phi.values * lam)
    cache = dom.dist_cache
    cache2 = None if cache is None else ScalarField(grid2, cache.values * lam)
    dom2 = ImplicitDomain(
        phi=phi2,
        exact_sdf=dom.exact_sdf,
        provenance=dom.provenance + "+normalized",
        dist_cache=cache2,
    )
    surf2 = SurfaceSampleSet(
        points=surf.points * lam,
        normals=surf.normals,
        weights=surf.weights * lam ** (d - 1),
        H=surf.H / lam,
        kappas=surf.kappas / lam,
    )
    per2 = per * lam ** (d - 1)
    vol2 = vol * lam**d
    if abs(per2 - d * vol2) / per2 > 0.03:
        raise ValueError("perimeter and volume disagree after normalization")
    return NormalizedDomain(domain=dom2, surface=surf2, scale=lam)


def rescale_solution(sol: TorsionSolution, norm: NormalizedDomain) -> TorsionSolution:
    """Transplant a potential solved in original units onto the rescaled grid.

    Cut fractions are scale invariant, so the potential scales by the
    factor squared and the normal derivative by the factor; nothing is
    re-solved.
    """
    s = norm.scale
    f2 = ScalarField(norm.domain.grid, sol.f.values * (s * s))
    dnu = None if sol.boundary_dnu is None else sol.boundary_dnu * s
    return TorsionSolution(
        domain=norm.domain,
        f=f2,
        interior_mask=sol.interior_mask,
        cuts=sol.cuts,
        diag=sol.diag / (s * s),
        solver_stats=sol.solver_stats,
        boundary_dnu=dnu,
    )


def rescale_deficit_report(rep: DeficitReport, s: float, d: int) -> DeficitReport:
    """Report in rescaled units; dimensionless entries are untouched."""
    return replace(
        rep,
        volume=rep.volume * s**d,
        perimeter=rep.perimeter * s ** (d - 1),
        H0=rep.H0 / s,
        diam=rep.diam * s,
        r_in=rep.r_in * s,
        r_out=rep.r_out * s,
        topping_rhs=rep.topping_rhs * s,
    )


def threshold_set(
    sol: TorsionSolution,
    deficit: DeficitReport,
    cfg: Optional[DecompositionConfig] = None,
    eta: Optional[float] = None,
) -> ThresholdResult:
    """Mollify the potential and keep the nodes far below the threshold.

    The mollifier radius grows from the smallest resolvable kernel as
    eta^alpha: eps = 2h (eta_eff / eta_floor)^alpha, where eta is floored
    at eta_floor = (h/r_in)^2, the level below which the measured eta is
    grid noise. At the floor the kernel is exactly 2h, so a domain whose
    eta is unmeasurably small gets the sharpest threshold the grid
    supports and the fitted radii converge to the true ones as h -> 0.
    The radius is capped at diam/4; a potential too shallow for the cut
    at depth 3 c0 eps surfaces as EmptyThresholdSet with the knobs in
    the message. When eta is unavailable (necks with H <= 0 on the
    boundary) the floor alone drives the radius.
    """
    cfg = cfg or DecompositionConfig()
    g = sol.domain.grid
    h = g.h
    alpha, _ = cfg.exponents(g.d)
    f_sup = float(-sol.f.values.min())
    c0 = cfg.lipschitz_bound(sol)
    eta_floor = (h / deficit.r_in) ** 2
    eta_eff = max(eta if eta is not None else 0.0, eta_floor)
    eps_raw = 2.0 * h * (eta_eff / eta_floor) ** alpha
    if cfg.epsilon_override is not None:
        eps = float(cfg.epsilon_override)
        clamped = False
    else:
        eps = min(eps_raw, deficit.diam / 4.0)  # eps_raw >= 2h by construction
        clamped = eps != eps_raw
    rho = c0 * eps if cfg.rho_override is None else float(cfg.rho_override)
    f_eps = mollify(sol.f, MollifierSpec(eps))
    mask = f_eps.values < -3.0 * rho
    if not mask.any():
        raise EmptyThresholdSet(
            f"threshold 3*rho = {3 * rho:.4g} exceeds mollified depth "
            f"{-f_eps.values.min():.4g} (potential depth {f_sup:.4g})"
        )
    return ThresholdResult(
        mask=mask,
        f_eps=f_eps,
        epsilon=eps,
        rho=rho,
        eta_used=eta_eff,
        c0=c0,
        clamped=clamped,
    )


def fit_component_balls(thr: ThresholdResult) -> tuple[ComponentFit, ...]:
    """One candidate ball per connected component of the sublevel set.

    The center is the component's deepest node (ties resolved toward the
    smallest linear index, which the argmin does on the sorted component),
    r1 the distance transform there, r2 the farthest component node.
    """
    g = thr.f_eps.grid
    d = g.d
    coords = g.node_coords().reshape(-1, d)
    vals = thr.f_eps.values.ravel()
    fits = []
    for comp in connected_components(thr.mask, g):
        center_flat = int(comp[np.argmin(vals[comp])])
        center = coords[center_flat]
        comp_mask = np.zeros(vals.shape[0], dtype=bool)
        comp_mask[comp] = True
        edt = ndimage.distance_transform_edt(
            comp_mask.reshape(g.extents), sampling=g.h
        )
        r1 = float(edt.ravel()[center_flat])
        r2 = float(np.linalg.norm(coords[comp] - center, axis=1).max())
        fits.append(
            ComponentFit(center=center, r1=r1, r2=r2, node_count=int(comp.size))
        )
    return tuple(fits)


def filter_and_normalize(
    fits: tuple[ComponentFit, ...],
    delta: float,
    cfg: Optional[DecompositionConfig] = None,
    h: float = 0.0,
    scale: float = 1.0,
) -> BallSystem:
    """Keep near-unit components, inflate to radius one, push apart.

    Components with r1 below 1/2 are spurious fragments and are dropped
    (their node volume is reported); above 1 + c1 delta^alpha the fit
    contradicts the radius estimate and is dropped too. Each surviving
    ball is inflated to radius one; to keep the system disjoint, every
    other center recedes radially by the inflation amount. Balls closest
    to radius one are processed first so the large corrections act on
    already-settled centers.
    """
    if not fits:
        raise NoBallsSurvive("no components were fitted")
    cfg = cfg or DecompositionConfig()
    d = fits[0].center.size
    alpha, _ = cfg.exponents(d)
    upper = 1.0 + cfg.c1 * delta**alpha
    kept = [f for f in fits if 0.5 <= f.r1 <= upper]
    dropped = [f for f in fits if not 0.5 <= f.r1 <= upper]
    if not kept:
        radii = sorted(round(f.r1, 4) for f in fits)
        raise NoBallsSurvive(f"all fitted radii {radii} fall outside [0.5, {upper:.4g}]")
    centers = np.array([f.center for f in kept], dtype=float)
    s = np.minimum(np.array([f.r1 for f in kept]), 1.0)
    for j0 in np.argsort(-s, kind="stable"):
        gap = 1.0 - s[j0]
        if gap <= 0.0:
            continue
        for j in range(len(kept)):
            if j == j0:
                continue
            v = centers[j] - centers[j0]
            nv = np.linalg.norm(v)
            if nv < 1e-12:  # coincident centers cannot happen for disjoint components
                raise NoBallsSurvive("two components share a center")
            centers[j] += gap * (v / nv)
        s[j0] = 1.0
    return BallSystem(
        centers=centers,
        radii=np.ones(len(kept)),
        scale=scale,
        discarded_count=len(dropped),
        discarded_volume=float(sum(f.node_count for f in dropped)) * h**d,
    )


def _xor_volume(phi_a: np.ndarray, phi_b: np.ndarray, grid: Grid) -> float:
    """Volume where exactly one field is negative, with sub-cell resolution.

    Cells uniform in both fields contribute 0 or a full cell; cells cut
    by either interface are subsampled with the multilinear weights the
    volume measure uses.
    """
    d = grid.d
    slices = [
        tuple(slice(1, None) if b else slice(None, -1) for b in bits)
        for bits in np.ndindex(*(2,) * d)
    ]
    in_a = [phi_a[s] < 0 for s in slices]
    in_b = [phi_b[s] < 0 for s in slices]
    a_all, a_any = in_a[0].copy(), in_a[0].copy()
    b_all, b_any = in_b[0].copy(), in_b[0].copy()
    for arr_all, arr_any, parts in ((a_all, a_any, in_a), (b_all, b_any, in_b)):
        for part in parts[1:]:
            arr_all &= part
            arr_any |= part
    mixed = (a_any & ~a_all) | (b_any & ~b_all)
    total = float(((a_all != b_all) & ~mixed).sum()) * grid.h**d
    if mixed.any():
        ca = np.stack([phi_a[s][mixed] for s in slices], axis=1)
        cb = np.stack([phi_b[s][mixed] for s in slices], axis=1)
        w = measures._subsample_weights(d)
        frac_sum = 0.0
        for k0 in range(0, ca.shape[0], _CHUNK):
            sa = ca[k0 : k0 + _CHUNK] @ w.T < 0
            sb = cb[k0 : k0 + _CHUNK] @ w.T < 0
            frac_sum += float(np.mean(sa != sb, axis=1).sum())
        total += frac_sum * grid.h**d
    return total


def _union_boundary_samples(balls: BallSystem, h: float):
    """Deterministic samples of the union boundary at grid density.

    Each sphere gets an equal-area point set; points inside another ball
    are not on the union boundary and are dropped.
    """
    d = balls.centers.shape[1]
    area = d * unit_ball_volume(d)
    count = int(np.ceil(area / h ** (d - 1)))
    pts, nrm, ids = [], [], []
    for j, z in enumerate(balls.centers):
        dirs = _fixed_directions(d, count)
        p = z + dirs
        keep = np.ones(count, dtype=bool)
        for l, zl in enumerate(balls.centers):
            if l != j:
                keep &= np.linalg.norm(p - zl, axis=1) >= balls.radii[l]
        pts.append(p[keep])
        nrm.append(dirs[keep])
        ids.append(np.full(int(keep.sum()), j))
    return np.concatenate(pts), np.concatenate(nrm), np.concatenate(ids)


def _ray_graph(dist: ScalarField, pts, nrm, span: float, h: float):
    """Signed offsets along each normal where the boundary is crossed.

    Marches in half-cell steps over [-span, span], keeps the sign change
    nearest the sphere, then bisects the interpolated distance field.
    Returns offsets (nan where no crossing was bracketed).
    """
    m = pts.shape[0]
    steps = np.arange(-span, span + 0.25 * h, 0.5 * h)
    lo = np.full(m, np.nan)
    hi = np.full(m, np.nan)
    vlo = np.zeros(m)
    best = np.full(m, np.inf)
    prev_t = steps[0]
    prev_v = interpolate_values(dist.grid, dist.values, pts + prev_t * nrm)
    for t in steps[1:]:
        v = interpolate_values(dist.grid, dist.values, pts + t * nrm)
        mid = abs(0.5 * (prev_t + t))
        better = ((prev_v < 0) != (v < 0)) & (mid < best)
        if better.any():
            lo[better] = prev_t
            hi[better] = t
            vlo[better] = prev_v[better]
            best[better] = mid
        prev_t, prev_v = t, v
    found = np.isfinite(lo)
    if found.any():
        flo, fhi, fvlo = lo[found], hi[found], vlo[found]
        fp, fn = pts[found], nrm[found]
        for _ in range(_BISECT_ITERS):
            mid = 0.5 * (flo + fhi)
            vm = interpolate_values(dist.grid, dist.values, fp + mid[:, None] * fn)
            same = (vm < 0) == (fvlo < 0)
            flo = np.where(same, mid, flo)
            fvlo = np.where(same, vm, fvlo)
            fhi = np.where(same, fhi, mid)
        out = np.full(m, np.nan)
        out[found] = 0.5 * (flo + fhi)
        return out
    return np.full(m, np.nan)


def _density_floor(
    dom: ImplicitDomain, surf: SurfaceSampleSet, seed: int = _DENSITY_SEED
) -> float:
    """Worst exterior volume fraction of small balls on the boundary.

    Node counting only: the quantity is a diagnostic for cusps, not an
    integral anything downstream consumes.
    """
    g = dom.grid
    d = g.d
    rng = np.random.default_rng(seed)
    take = min(_DENSITY_SAMPLES, surf.m)
    picks = rng.choice(surf.m, size=take, replace=False)
    axes = [np.asarray(g.origin)[ax] + g.h * np.arange(g.extents[ax]) for ax in range(d)]
    best = np.inf
    for i in picks:
        x = surf.points[i]
        for r in _DENSITY_RADII:
            win = []
            for ax in range(d):
                lo = max(int(np.floor((x[ax] - r - g.origin[ax]) / g.h)) - 1, 0)
                hi = min(int(np.ceil((x[ax] + r - g.origin[ax]) / g.h)) + 2, g.extents[ax])
                win.append((lo, hi))
            sub = dom.phi.values[tuple(slice(lo, hi) for lo, hi in win)]
            dist2 = np.zeros(sub.shape)
            for ax in range(d):
                delta = axes[ax][win[ax][0] : win[ax][1]] - x[ax]
                shape = [1] * d
                shape[ax] = delta.size
                dist2 = dist2 + (delta**2).reshape(shape)
            outside = (sub > 0) & (dist2 < r * r)
            ratio = outside.sum() * g.h**d / (unit_ball_volume(d) * r**d)
            best = min(best, float(ratio))
    return best


def stability_metrics(
    dom: ImplicitDomain,
    surf: SurfaceSampleSet,
    balls: BallSystem,
    deficit: DeficitReport,
    cfg: Optional[DecompositionConfig] = None,
    seed: int = _DENSITY_SEED,
) -> StabilityMetrics:
    """Distance of the normalized domain from the union of its balls."""
    cfg = cfg or DecompositionConfig()
    g = dom.grid
    d = g.d
    h = g.h
    _, beta = cfg.exponents(d)
    diam = deficit.diam
    per = float(surf.weights.sum())
    vol = deficit.volume

    phi_g = balls.sdf(g.node_coords().reshape(-1, d)).reshape(g.extents)
    sym_diff = _xor_volume(dom.phi.values, phi_g, g) / vol
    perim_quant = abs(per - balls.k * d * unit_ball_volume(d)) / per

    pts, nrm, ids = _union_boundary_samples(balls, h)
    dist = distance_field(dom)
    to_domain = np.abs(interpolate_values(dist.grid, dist.values, pts))
    onesided_abs = float(to_domain.max())
    to_union = np.abs(balls.sdf(surf.points))
    hausdorff_abs = max(onesided_abs, float(to_union.max()))

    gaps = []
    for j in range(balls.k):
        others = np.delete(np.arange(balls.k), j)
        if others.size == 0:
            gaps.append(0.0)
            continue
        dd = np.linalg.norm(balls.centers[others] - balls.centers[j], axis=1)
        gaps.append(float((dd - balls.radii[others] - balls.radii[j]).min() / diam))

    lam = cfg.c3 * deficit.delta ** (0.5 * beta) if deficit.delta > 0 else 0.0
    sigma_keep = np.ones(pts.shape[0], dtype=bool)
    cap_count = 0
    for j in range(balls.k):
        for l in range(j + 1, balls.k):
            mid = 0.5 * (balls.centers[j] + balls.centers[l])
            near = np.linalg.norm(pts - mid, axis=1) < lam
            if near.any():
                cap_count += 1
                sigma_keep &= ~near
    spts, snrm = pts[sigma_keep], nrm[sigma_keep]

    span = max(4.0 * onesided_abs, 4.0 * h)
    psi = _ray_graph(dist, spts, snrm, span, h)
    valid = np.isfinite(psi)
    ray_missed = int((~valid).sum())
    psi_v = psi[valid]
    vpts, vnrm = spts[valid], snrm[valid]
    psi_sup = float(np.abs(psi_v).max()) if psi_v.size else float("nan")

    psi_grad_sup = 0.0
    if psi_v.size > 1:
        tree = cKDTree(vpts)
        kq = min(7, psi_v.size)
        dists, idx = tree.query(vpts, k=kq)
        neighbor_d = dists[:, 1:]
        neighbor_psi = psi_v[idx[:, 1:]]
        ok = neighbor_d > 1e-12
        ratios = np.abs(neighbor_psi - psi_v[:, None])[ok] / neighbor_d[ok]
        if ratios.size:
            psi_grad_sup = float(ratios.max())

    covered = np.zeros(surf.m, dtype=bool)
    if psi_v.size:
        hits = vpts + psi_v[:, None] * vnrm
        surf_tree = cKDTree(surf.points)
        matched = surf_tree.query_ball_point(hits, r=h)
        for hit in matched:
            covered[hit] = True
    uncovered = float(surf.weights[~covered].sum() / per)

    return StabilityMetrics(
        sym_diff_rel=float(sym_diff),
        perim_quant=float(perim_quant),
        onesided=onesided_abs / diam,
        hausdorff=hausdorff_abs / diam,
        tangency_gaps=tuple(gaps),
        psi_sup=psi_sup,
        psi_grad_sup=psi_grad_sup,
        uncovered_area=uncovered,
        density_kappa=_density_floor(dom, surf, seed),
        ray_missed=ray_missed,
        sigma_samples=int(sigma_keep.sum()),
        cap_count=cap_count,
        lam=lam,
        sigma_points=spts,
        psi_values=psi,
    )


def allard_table(
    surf: SurfaceSampleSet, balls: BallSystem, radius: float = 0.25
) -> list[dict]:
    """Area-ratio diagnostic at the boundary point nearest each ball."""
    rows = []
    for j, z in enumerate(balls.centers):
        i = int(np.argmin(np.linalg.norm(surf.points - z, axis=1)))
        sigma = measures.allard_ratio(surf, surf.points[i], radius)
        rows.append({"ball": j, "point": surf.points[i], "radius": radius, "sigma": sigma})
    return rows


def write_balls_csv(balls: BallSystem, path) -> None:
    d = balls.centers.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["j"] + [f"z{ax}" for ax in "xyz"[:d]] + ["s"])
        for j in range(balls.k):
            w.writerow(
                [j]
                + [f"{c:.12g}" for c in balls.centers[j]]
                + [f"{balls.radii[j]:.12g}"]
            )


_METRIC_COLUMNS = (
    "sym_diff_rel",
    "perim_quant",
    "onesided",
    "hausdorff",
    "tangency",
    "psi_sup",
    "psi_grad_sup",
    "uncovered_area",
    "density_kappa",
    "ray_missed",
    "sigma_samples",
    "cap_count",
    "lam",
)


def write_metrics_csv(metrics: StabilityMetrics, path) -> None:
    """One row of scalars; the per-ball gap list is folded into its max."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(_METRIC_COLUMNS)
        row = []
        for name in _METRIC_COLUMNS:
            v = getattr(metrics, name)
            row.append(str(v) if isinstance(v, int) else f"{v:.12g}")
        w.writerow(row)


def write_psi_csv(metrics: StabilityMetrics, path) -> None:
    """Graph offsets at the retained samples, nan where the ray missed."""
    d = metrics.sigma_points.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(list("xyz"[:d]) + ["psi"])
        for p, v in zip(metrics.sigma_points, metrics.psi_values):
            w.writerow([f"{c:.12g}" for c in p] + [f"{v:.12g}"])


def decompose(
    dom: ImplicitDomain,
    surf: Optional[SurfaceSampleSet] = None,
    sol: Optional[TorsionSolution] = None,
    cfg: Optional[DecompositionConfig] = None,
    deficit: Optional[DeficitReport] = None,
    seed: int = _DENSITY_SEED,
) -> DecompositionResult:
    """Run the whole pipeline on one domain.

    A potential solved in original units is rescaled rather than
    re-solved. The curvature deficit gate is deliberately absent: the
    extraction is most interesting exactly on domains that violate it.
    """
    cfg = cfg or DecompositionConfig()
    if surf is None:
        surf = measures.extract_surface(dom)
    if deficit is None:
        deficit = measures.deficits(dom, surf)
    norm = normalize_domain(dom, surf)
    deficit2 = rescale_deficit_report(deficit, norm.scale, dom.grid.d)
    sol2 = rescale_solution(sol, norm) if sol is not None else torsion.solve_torsion(norm.domain, norm.surface)
    eta_rep = None
    try:
        eta_rep = torsion.eta_deficit(norm.domain, norm.surface)
    except NonpositiveMeanCurvature:
        pass
    thr = threshold_set(sol2, deficit2, cfg, eta=None if eta_rep is None else eta_rep.eta)
    fits = fit_component_balls(thr)
    balls = filter_and_normalize(
        fits, deficit2.delta, cfg, h=norm.domain.grid.h, scale=norm.scale
    )
    metrics = stability_metrics(norm.domain, norm.surface, balls, deficit2, cfg, seed=seed)
    return DecompositionResult(
        normalized=norm,
        solution=sol2,
        deficit=deficit2,
        eta_report=eta_rep,
        threshold=thr,
        fits=fits,
        balls=balls,
        metrics=metrics,
    )
