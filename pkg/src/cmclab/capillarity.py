"""Checks for domains stationary under a potential energy density.

For a body held at fixed volume inside a potential g, stationarity of
perimeter + potential energy forces H + g to be constant on the wall;
the constant is the Lagrange multiplier lambda, recoverable from volume
data alone.  This module computes lambda two independent ways, measures
how far a given wall is from satisfying H + g = lambda, and evaluates
the resulting bound on the mean-curvature deficit for walls that are
near-stationary.  Nothing here synthesizes stationary shapes; inputs
are taken as they come and non-applicability is reported, not hidden.
"""

from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np

from .errors import ConfigError
from .grid import ScalarField, gradient, interpolate_values
from .measures import SurfaceSampleSet, perimeter, unit_ball_volume, volume
from .shapes import ImplicitDomain

_TINY = 1e-30

# Stationarity gate for the deficit bound: residual above this fraction
# of H0 means the hypothesis fails and the bound is reported, not fitted.
_APPLICABLE_FRAC = 0.05


@dataclass(frozen=True)
class PotentialSpec:
    """A potential g with its C1 size over the bounding ball B_R0.

    The node field always exists; `fn` is kept when g came in analytic
    form so off-node evaluations skip the interpolation error.
    """

    field: ScalarField
    R0: float
    g_c1_norm: float
    fn: Optional[Callable] = None

    def at(self, points: np.ndarray) -> np.ndarray:
        if self.fn is not None:
            return np.asarray(self.fn(points), dtype=float)
        return interpolate_values(self.field.grid, self.field.values, points)


def potential_from_string(expr: str) -> Callable:
    """Analytic potential closure from a short expression.

    Accepts a numeric constant, "x3" (third coordinate), or "x3^2".
    """
    text = expr.strip()
    try:
        c = float(text)
    except ValueError:
        pass
    else:
        return lambda pts: np.full(np.asarray(pts).shape[:-1], c, dtype=float)
    if text in ("x3", "x3^2"):

        def fn(pts):
            pts = np.asarray(pts, dtype=float)
            if pts.shape[-1] < 3:
                raise ConfigError(f"potential {text!r} needs a 3-d domain")
            x3 = pts[..., 2]
            return x3 * x3 if text == "x3^2" else x3

        return fn
    raise ConfigError(f"unknown potential expression {text!r}")


def make_potential(
    dom: ImplicitDomain,
    g: Union[ScalarField, Callable, float],
    R0: Optional[float] = None,
) -> PotentialSpec:
    """Sample g on the domain's grid and compute its C1 norm over B_R0.

    R0 defaults to a ball that covers every interior node plus a cut-cell
    margin.  The C1 norm is max(sup|g|, sup|grad g|) over grid nodes
    inside B_R0, with the gradient taken by grid differencing even for
    analytic g, so field and closure inputs are treated alike.
    """
    grid = dom.phi.grid
    fn: Optional[Callable] = None
    if isinstance(g, ScalarField):
        if g.grid != grid:
            raise ValueError("potential field lives on a different grid")
        field = g
    elif callable(g):
        fn = g
        field = ScalarField(grid, np.asarray(g(grid.node_coords()), dtype=float))
    else:
        c = float(g)

        def fn(pts, _c=c):
            return np.full(np.asarray(pts).shape[:-1], _c, dtype=float)

        field = ScalarField(grid, np.full(grid.extents, c, dtype=float))

    coords = grid.node_coords()
    norms = np.sqrt((coords**2).sum(axis=-1))
    if R0 is None:
        inside = dom.phi.values < 0.0
        if not inside.any():
            raise ValueError("domain has no interior nodes")
        R0 = float(norms[inside].max() + grid.h * np.sqrt(grid.d))
    R0 = float(R0)
    mask = norms <= R0
    if not mask.any():
        raise ValueError(f"B_R0 with R0={R0:g} contains no grid node")
    grad = gradient(field)
    grad_mag = np.sqrt((grad**2).sum(axis=-1))
    gc1 = max(float(np.abs(field.values[mask]).max()), float(grad_mag[mask].max()))
    return PotentialSpec(field=field, R0=R0, g_c1_norm=gc1, fn=fn)


@dataclass(frozen=True)
class MultiplierReport:
    lam: float
    lam_boundary: float
    cross_rel: float
    h0: float


def multiplier_report(
    dom: ImplicitDomain, surf: SurfaceSampleSet, pot: PotentialSpec
) -> MultiplierReport:
    """Lagrange multiplier by the volume route and the wall route.

    Volume route: (n+1)|Omega| lam = n P + integral of div(x g) over the
    body, the divergence taken by grid differencing of the product field
    and integrated as interior-node mean times the corrected volume.
    That normalization is what makes a constant shift of g move lam by
    exactly that constant.  Wall route: the divergence integral replaced
    by its flux form, sum of w * g * (x . nu) over surface samples.  The
    relative gap between the two is the quadrature cross-check.
    """
    grid = pot.field.grid
    d = grid.d
    n = d - 1
    vol = volume(dom)
    per = perimeter(surf)
    coords = grid.node_coords()

    div = np.zeros(grid.extents)
    for a in range(d):
        prod = ScalarField(grid, coords[..., a] * pot.field.values)
        div += gradient(prod)[..., a]
    inside = dom.phi.values < 0.0
    if not inside.any():
        raise ValueError("domain has no interior nodes")
    integral = float(div[inside].mean()) * vol
    lam = (n * per + integral) / (d * vol)

    g_wall = pot.at(surf.points)
    flux = float(np.sum(surf.weights * g_wall * np.sum(surf.points * surf.normals, axis=1)))
    lam_b = (n * per + flux) / (d * vol)

    h0 = n * per / (d * vol)
    cross = abs(lam - lam_b) / max(abs(lam), abs(lam_b), _TINY)
    return MultiplierReport(lam=float(lam), lam_boundary=float(lam_b), cross_rel=float(cross), h0=float(h0))


def lagrange_multiplier(dom: ImplicitDomain, surf: SurfaceSampleSet, pot: PotentialSpec) -> float:
    return multiplier_report(dom, surf, pot).lam


def stationarity_residual(
    dom: ImplicitDomain, surf: SurfaceSampleSet, pot: PotentialSpec
) -> dict:
    """Sup of |H + g - lam| over wall samples, raw and relative to H0."""
    rep = multiplier_report(dom, surf, pot)
    g_wall = pot.at(surf.points)
    residual = float(np.abs(surf.H + g_wall - rep.lam).max())
    return {
        "residual": residual,
        "normalized": residual / rep.h0,
        "lam": rep.lam,
        "lam_boundary": rep.lam_boundary,
        "cross_rel": rep.cross_rel,
    }


def deficit_bound_check(
    dom: ImplicitDomain, surf: SurfaceSampleSet, pot: PotentialSpec
) -> dict:
    """Deficit against the bound shape ||g||_C1 * m^(1/(n+1)).

    The bound only claims anything for near-stationary walls, so the
    constant is fitted only when the normalized stationarity residual is
    below the gate; otherwise the pieces are reported and `applicable`
    is False.  The isoperimetric floor on H0 rides along since the bound
    rests on it.
    """
    d = dom.phi.grid.d
    n = d - 1
    stat = stationarity_residual(dom, surf, pot)
    vol = volume(dom)
    per = perimeter(surf)
    h0 = n * per / (d * vol)
    delta = float(np.abs(surf.H - h0).max() / h0)
    bound_rhs = pot.g_c1_norm * vol ** (1.0 / d)
    applicable = stat["normalized"] <= _APPLICABLE_FRAC
    fitted = delta / bound_rhs if applicable and bound_rhs > 0 else float("nan")
    return {
        "delta": delta,
        "bound_rhs": float(bound_rhs),
        "fitted_cstar": float(fitted),
        "applicable": bool(applicable),
        "residual_normalized": stat["normalized"],
        "lam": stat["lam"],
        "mass": float(vol),
        "h0": float(h0),
        "h0_floor": float(n * (unit_ball_volume(d) / vol) ** (1.0 / d)),
    }
