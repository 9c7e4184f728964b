"""Integral identities and estimates linking the torsion potential,
the wall geometry, and the isoperimetric deficits.

Each check produces an entry holding both sides, a symmetric relative
residual, and, for inequalities, the signed slack and the empirical
constant that would make the two sides equal.  Bulk integrals of
Hessian quantities extend values from the nearest node with a full
stencil into the cut band, where the raw stencils reach across the
wall; the bias is one order below the integrand there.

Checks whose hypotheses fail (nonpositive mean curvature, deficit
above one half) are reported as skipped entries rather than numbers
that mean nothing.
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import DeficitTooLarge, NonpositiveMeanCurvature
from .measures import deficits, volume
from .torsion import eta_deficit

_EQUALITY_FLOOR = 1e-8


@dataclass
class IdentityEntry:
    name: str
    lhs: float = np.nan
    rhs: float = np.nan
    residual_rel: float = np.nan
    slack: float = np.nan
    fitted_constant: float = np.nan
    note: str = ""


@dataclass
class IdentityReport:
    entries: list = field(default_factory=list)

    def entry(self, name):
        for e in self.entries:
            if e.name == name:
                return e
        raise KeyError(name)

    def names(self):
        return [e.name for e in self.entries]


def _residual(lhs, rhs):
    return abs(lhs - rhs) / (abs(lhs) + abs(rhs) + 1e-30)


def _bulk(sol, values):
    """Integral over the interior of a node field valid on deep nodes."""
    ext = values[tuple(sol.deep_nearest)]
    return float(ext[sol.interior_mask].sum()) * sol.grid.h**sol.grid.d


def reilly(dom, surf, sol):
    """Wall energy of the normal derivative against the Hessian defect.

    integral_wall H |grad f|^2 = integral (1 - |hess f|^2), using that
    the source term is identically one.
    """
    lhs = float(np.sum(surf.weights * surf.H * sol.boundary_dnu**2))
    rhs = volume(dom) - _bulk(sol, sol.hessian_sq_norm())
    return IdentityEntry("reilly", lhs, rhs, _residual(lhs, rhs))


def pohozaev(dom, surf, sol):
    """(n+3) integral(-f) against the first wall moment of |grad f|^2.

    Both sides are evaluated about the interior centroid; the identity
    is frame-invariant, centering just keeps the moment arm small.
    """
    g = sol.grid
    d = g.d
    coords = g.node_coords()
    centroid = coords[sol.interior_mask].mean(axis=0)
    lhs = (d + 2) * float(-sol.f.values[sol.interior_mask].sum()) * g.h**d
    arm = np.sum((surf.points - centroid) * surf.normals, axis=1)
    rhs = float(np.sum(surf.weights * arm * sol.boundary_dnu**2))
    return IdentityEntry("pohozaev", lhs, rhs, _residual(lhs, rhs))


def ros_identity(dom, surf, sol, eta_rep):
    """Exact remainder decomposition of the Heintze-Karcher slack.

    |O|/(n+1) * slack equals the traceless Hessian energy weighted by
    integral(1/H), plus the Cauchy-Schwarz gap between the wall energy
    and the squared flux.
    """
    d = dom.grid.d
    lhs = eta_rep.volume / d * eta_rep.hk_slack
    inv_h = float(np.sum(surf.weights / surf.H))
    hess_gap = _bulk(sol, sol.hessian_sq_norm() - 1.0 / d)
    wall_energy = float(np.sum(surf.weights * surf.H * sol.boundary_dnu**2))
    flux = float(np.sum(surf.weights * sol.boundary_dnu))
    rhs = inv_h * hess_gap + inv_h * wall_energy - flux**2
    return IdentityEntry("ros", lhs, rhs, _residual(lhs, rhs))


def hessian_l1_estimate(dom, sol, eta):
    """L1 distance of the Hessian from Id/(n+1), scaled by |O| sqrt(eta).

    Zero for balls; the fitted constant is the empirical C(n) making
    the bound an equality.
    """
    d = dom.grid.d
    eta = max(float(eta), 0.0)
    lhs = _bulk(sol, sol.hessian_deviation_norm(1.0 / d))
    rhs = volume(dom) * np.sqrt(eta)
    ent = IdentityEntry("hessian_l1", lhs, rhs, _residual(lhs, rhs))
    if eta > _EQUALITY_FLOOR:
        ent.fitted_constant = lhs / rhs
    else:
        ent.note = "equality-case: eta at quadrature floor"
    return ent


def normal_derivative_l2_estimate(dom, surf, sol, deficit):
    """Wall L2 distance of |grad f| from its constant-curvature value.

    Bounded by C(n) (n/H0)^2 P delta; requires delta <= 1/2.
    """
    if deficit.delta > 0.5:
        raise DeficitTooLarge(f"delta = {deficit.delta:.3g} > 1/2")
    d = dom.grid.d
    n = d - 1
    target = n / (deficit.H0 * d)
    lhs = float(np.sum(surf.weights * (target - sol.boundary_dnu) ** 2))
    rhs = (n / deficit.H0) ** 2 * deficit.perimeter * deficit.delta
    ent = IdentityEntry("normal_derivative_l2", lhs, rhs, _residual(lhs, rhs))
    if deficit.delta > _EQUALITY_FLOOR:
        ent.fitted_constant = lhs / rhs
    else:
        ent.note = "equality-case: delta at quadrature floor"
    return ent


def _surface_lp(weights, values, p):
    if np.isinf(p):
        return float(values.max())
    return float(np.sum(weights * values**p)) ** (1.0 / p)


def montiel_ros(surf, eta, delta, p):
    """Umbilicality estimate: traceless L^p norm of the shape operator
    against (P eta)^(1/(n+1)) times the full norm in the dual exponent
    p* = (n+1)p/(n+1-p), sup norm at p = n+1.
    """
    if delta > 0.5:
        raise DeficitTooLarge(f"delta = {delta:.3g} > 1/2")
    if surf.H.min() <= 0.0:
        raise NonpositiveMeanCurvature(f"min H = {surf.H.min():.4g}")
    n = surf.points.shape[1] - 1
    if not 1 <= p <= n + 1:
        raise ValueError(f"p = {p} outside [1, {n + 1}]")
    p_star = np.inf if p == n + 1 else (n + 1) * p / (n + 1 - p)
    eta = max(float(eta), 0.0)
    perim = float(surf.weights.sum())
    lhs = _surface_lp(surf.weights, surf.traceless_norms(), p)
    scale = (perim * eta) ** (1.0 / (n + 1))
    rhs = scale * _surface_lp(surf.weights, surf.shape_norms(), p_star)
    ent = IdentityEntry(f"montiel_ros_p{p:g}", lhs, rhs, _residual(lhs, rhs))
    if eta > _EQUALITY_FLOOR and rhs > 0:
        ent.fitted_constant = lhs / rhs
    else:
        ent.note = "equality-case: eta at quadrature floor"
    return ent


def curvature_pinch(surf, eta, delta):
    """Largest-curvature pinch budget.

    integral (n/H) (1 - H/(n kappa_max))^(n+1) <= eta * integral (n/H):
    the deviation of the top curvature from the mean is paid for by the
    Heintze-Karcher deficit.  Slack is rhs - lhs, nonnegative up to
    quadrature on every admissible domain.
    """
    if delta > 0.5:
        raise DeficitTooLarge(f"delta = {delta:.3g} > 1/2")
    if surf.H.min() <= 0.0:
        raise NonpositiveMeanCurvature(f"min H = {surf.H.min():.4g}")
    n = surf.points.shape[1] - 1
    kappa_top = surf.kappas[:, 0]
    pinch = (1.0 - surf.H / (n * kappa_top)) ** (n + 1)
    weight = surf.weights * n / surf.H
    lhs = float(np.sum(weight * pinch))
    rhs = float(eta) * float(np.sum(weight))
    ent = IdentityEntry("curvature_pinch", lhs, rhs, _residual(lhs, rhs))
    ent.slack = rhs - lhs
    return ent


def cauchy_schwarz_nodes(sol):
    """Nodewise (tr M)^2 <= d |M|^2 for the discrete Hessian.

    Pure algebra, so any violation beyond roundoff flags a stencil
    bug.  lhs is the worst violation over deep nodes.
    """
    d = sol.grid.d
    tr = np.zeros(sol.f.values.shape)
    for a in range(d):
        tr += sol.hessian_entry(a, a)
    gap = tr**2 - d * sol.hessian_sq_norm()
    worst = float(gap[sol.deep_mask].max())
    ent = IdentityEntry("cauchy_schwarz", worst, 0.0, np.nan)
    ent.slack = -worst
    return ent


def _skipped(name, exc):
    return IdentityEntry(name, note=f"skipped: {exc}")


def identity_report(dom, surf, sol, deficit=None, eta_rep=None, ps=None):
    """All identity and estimate entries for one domain.

    Entries are always present; those whose hypotheses fail carry a
    note instead of numbers.
    """
    if sol.boundary_dnu is None:
        raise ValueError("solution lacks boundary gradient samples")
    if deficit is None:
        deficit = deficits(dom, surf)
    d = dom.grid.d
    if ps is None:
        ps = sorted({1, 2, d})
    entries = [
        reilly(dom, surf, sol),
        pohozaev(dom, surf, sol),
        cauchy_schwarz_nodes(sol),
    ]
    eta_exc = None
    if eta_rep is None:
        try:
            eta_rep = eta_deficit(dom, surf)
        except NonpositiveMeanCurvature as exc:
            eta_exc = exc
    if eta_rep is None:
        entries.append(_skipped("ros", eta_exc))
        entries.append(_skipped("hessian_l1", eta_exc))
    else:
        entries.append(ros_identity(dom, surf, sol, eta_rep))
        entries.append(hessian_l1_estimate(dom, sol, eta_rep.eta))
    try:
        entries.append(normal_derivative_l2_estimate(dom, surf, sol, deficit))
    except DeficitTooLarge as exc:
        entries.append(_skipped("normal_derivative_l2", exc))
    eta_val = eta_rep.eta if eta_rep is not None else np.nan
    for p in ps:
        name = f"montiel_ros_p{p:g}"
        if eta_rep is None:
            entries.append(_skipped(name, eta_exc))
            continue
        try:
            entries.append(montiel_ros(surf, eta_val, deficit.delta, p))
        except DeficitTooLarge as exc:
            entries.append(_skipped(name, exc))
    if eta_rep is None:
        entries.append(_skipped("curvature_pinch", eta_exc))
    else:
        try:
            entries.append(curvature_pinch(surf, eta_val, deficit.delta))
        except DeficitTooLarge as exc:
            entries.append(_skipped("curvature_pinch", exc))
    return IdentityReport(entries)


def write_identity_csv(report, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(
            ["identity", "lhs", "rhs", "residual_rel", "slack",
             "fitted_constant"]
        )
        for e in report.entries:
            w.writerow(
                [e.name] + [f"{v:.12g}" for v in
                            (e.lhs, e.rhs, e.residual_rel, e.slack,
                             e.fitted_constant)]
            )
