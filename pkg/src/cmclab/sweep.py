"""Family orchestration: shapes through the pipeline, rows to CSV, fits.

One StabilityReport row per family member, always written, with an error
column instead of a crashed sweep when a member fails.  After the rows,
each quality metric is fitted as a power of the deficit delta and
compared against the exponent the theory guarantees as an upper bound:
a fitted slope at or above the theoretical exponent is consistent; a
smaller slope is only flagged when the ratio metric/delta^theory also
grows by an order of magnitude toward small delta, since constants are
allowed to be lazy but unbounded growth is not.

Workers run members independently (processes when workers > 1); the
shared CSV files are written by this module in family order afterward,
so reruns of the same config and seed are byte-identical.  Per-member
artifacts (identity tables, snapshots, ball lists) go to disjoint
param-tagged files and are written where they are produced.
"""

import csv
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from multiprocessing import get_context
from typing import Optional

import numpy as np

from . import decompose as dec
from . import measures, svgplot, torsion
from .capillarity import (
    deficit_bound_check,
    make_potential,
    multiplier_report,
    potential_from_string,
    stationarity_residual,
)
from .config import ExperimentConfig
from .errors import ConfigError, InsufficientPoints, NonpositiveMeanCurvature
from .grid import read_snapshot, write_snapshot
from .identities import identity_report, write_identity_csv
from .shapes import distance_field

SWEEP_HEADER = (
    "param",
    "delta",
    "eta",
    "Q",
    "J",
    "sym_diff_rel",
    "perim_quant",
    "onesided",
    "hausdorff",
    "tangency",
    "psi_sup",
    "psi_grad",
    "uncovered",
    "clamped",
    "error",
)

FITS_HEADER = (
    "metric",
    "slope",
    "intercept",
    "r2",
    "points",
    "theory_exponent",
    "max_ratio",
    "ratio_trend",
    "flagged",
)

CAPILLARITY_HEADER = (
    "param",
    "lam",
    "lam_boundary",
    "cross_rel",
    "residual",
    "normalized",
    "delta",
    "bound_rhs",
    "fitted_cstar",
    "applicable",
    "error",
)

ANALYZE_HEADER = (
    "param",
    "volume",
    "perimeter",
    "H0",
    "delta",
    "delta_err",
    "eta",
    "Q",
    "diam",
    "r_in",
    "r_out",
    "error",
)

TORSION_HEADER = (
    "param",
    "f_min",
    "grad_sup",
    "lipschitz_ratio",
    "iterations",
    "residual",
    "eta",
    "error",
)

_FIT_METRICS = (
    "sym_diff_rel",
    "perim_quant",
    "onesided",
    "hausdorff",
    "tangency",
    "psi_sup",
    "psi_grad",
    "uncovered",
)

_DUMPABLE = ("phi", "dist", "f", "f_eps")


def theory_exponents(d: int) -> dict:
    """Guaranteed upper-bound exponents of delta, keyed by metric column."""
    n = d - 1
    alpha = 1.0 / (2 * (n + 2))
    return {
        "sym_diff_rel": alpha,
        "onesided": alpha,
        "tangency": alpha / (4 * (n + 1)),
        "psi_sup": alpha / (4 * n * n * (n + 1)),
        "psi_grad": alpha / (8 * n * (n + 1)),
    }


@dataclass
class StabilityReport:
    """Everything one family member produced, flat for CSV projection."""

    param: float
    volume: float = np.nan
    perimeter: float = np.nan
    H0: float = np.nan
    delta: float = np.nan
    delta_err: float = np.nan
    eta: Optional[float] = None
    Q: float = np.nan
    diam: float = np.nan
    r_in: float = np.nan
    r_out: float = np.nan
    f_min: float = np.nan
    grad_sup: float = np.nan
    lipschitz_ratio: float = np.nan
    iterations: Optional[int] = None
    residual: float = np.nan
    J: Optional[int] = None
    sym_diff_rel: float = np.nan
    perim_quant: float = np.nan
    onesided: float = np.nan
    hausdorff: float = np.nan
    tangency: float = np.nan
    psi_sup: float = np.nan
    psi_grad: float = np.nan
    uncovered: float = np.nan
    clamped: Optional[bool] = None
    error: str = ""


@dataclass
class FitResult:
    metric: str
    slope: float
    intercept: float
    r2: float
    points: int
    theory: float = np.nan
    max_ratio: float = np.nan
    ratio_trend: float = np.nan
    flagged: bool = False


@dataclass
class MemberOutcome:
    row: StabilityReport
    identity: object = None
    capillarity: Optional[dict] = None


@dataclass
class SweepResult:
    rows: list
    fits: dict
    files: tuple = ()


def _param_tag(param: float) -> str:
    return ("%g" % param).replace("-", "m").replace(".", "p")


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, str):
        return v
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return "%.12g" % float(v)


def _build_potential(cfg: ExperimentConfig, dom):
    g = cfg.potential
    if g is None:
        raise ConfigError("capillarity stage needs [capillarity] g")
    if os.path.isfile(g):
        return make_potential(dom, read_snapshot(g), R0=cfg.potential_r0)
    return make_potential(dom, potential_from_string(g), R0=cfg.potential_r0)


def run_member(
    cfg: ExperimentConfig,
    param: float,
    dump_fields: tuple = (),
    dump_surface: bool = False,
    member_files: bool = False,
) -> MemberOutcome:
    """One family member through every toggled stage; failures become rows."""
    row = StabilityReport(param=param)
    identity = None
    caprow = None
    tag = _param_tag(param)
    try:
        dom = cfg.build_domain(param)
        surf = measures.extract_surface(dom)
        rep = measures.deficits(dom, surf)
        row.volume, row.perimeter, row.H0 = rep.volume, rep.perimeter, rep.H0
        row.delta, row.delta_err, row.Q = rep.delta, rep.delta_err, rep.Q
        row.diam, row.r_in, row.r_out = rep.diam, rep.r_in, rep.r_out

        sol = None
        eta_rep = None
        if cfg.toggles.torsion:
            sol = torsion.solve_torsion(dom, surf)
            lip = torsion.lipschitz_check(sol)
            row.f_min = float(sol.f.values.min())
            row.grad_sup = lip["grad_sup"]
            row.lipschitz_ratio = lip["ratio"]
            row.iterations = sol.solver_stats.iterations
            row.residual = sol.solver_stats.final_relative_residual
            try:
                eta_rep = torsion.eta_deficit(dom, surf)
                row.eta = eta_rep.eta
            except NonpositiveMeanCurvature:
                row.eta = None

        if cfg.toggles.identities and sol is not None:
            ps = cfg.toggles.montiel_ros_ps if cfg.toggles.montiel_ros else ()
            identity = identity_report(dom, surf, sol, deficit=rep, eta_rep=eta_rep, ps=ps)
            write_identity_csv(
                identity, os.path.join(cfg.outdir, f"identities_{tag}.csv")
            )

        res = None
        if cfg.toggles.decompose:
            res = dec.decompose(
                dom, surf, sol=sol, cfg=cfg.decomp, deficit=rep, seed=cfg.seed
            )
            m = res.metrics
            row.J = res.balls.k
            row.sym_diff_rel = m.sym_diff_rel
            row.perim_quant = m.perim_quant
            row.onesided = m.onesided
            row.hausdorff = m.hausdorff
            row.tangency = m.tangency
            row.psi_sup = m.psi_sup
            row.psi_grad = m.psi_grad_sup
            row.uncovered = m.uncovered_area
            row.clamped = res.threshold.clamped
            if member_files:
                dec.write_balls_csv(
                    res.balls, os.path.join(cfg.outdir, f"balls_{tag}.csv")
                )
                dec.write_metrics_csv(
                    m, os.path.join(cfg.outdir, f"metrics_{tag}.csv")
                )
                dec.write_psi_csv(
                    m, os.path.join(cfg.outdir, f"psi_{tag}.csv")
                )

        if cfg.toggles.capillarity:
            pot = _build_potential(cfg, dom)
            mult = multiplier_report(dom, surf, pot)
            stat = stationarity_residual(dom, surf, pot)
            chk = deficit_bound_check(dom, surf, pot)
            caprow = {
                "param": param,
                "lam": mult.lam,
                "lam_boundary": mult.lam_boundary,
                "cross_rel": mult.cross_rel,
                "residual": stat["residual"],
                "normalized": stat["normalized"],
                "delta": chk["delta"],
                "bound_rhs": chk["bound_rhs"],
                "fitted_cstar": chk["fitted_cstar"],
                "applicable": chk["applicable"],
                "error": "",
            }

        for name in dump_fields:
            if name == "phi":
                fld = dom.phi
            elif name == "dist":
                fld = distance_field(dom)
            elif name == "f":
                fld = sol.f
            else:
                fld = res.threshold.f_eps
            write_snapshot(fld, os.path.join(cfg.outdir, f"{name}_{tag}.csv"))
        if dump_surface:
            _write_surface_csv(
                surf, os.path.join(cfg.outdir, f"surface_{tag}.csv")
            )
    except Exception as exc:  # per-member isolation: the sweep must go on
        row.error = f"{type(exc).__name__}: {exc}"
        if caprow is not None:
            caprow["error"] = row.error
    return MemberOutcome(row=row, identity=identity, capillarity=caprow)


def _write_surface_csv(surf, path: str) -> None:
    d = surf.points.shape[1]
    cols = ["x", "y", "z"][:d] + ["n" + c for c in ["x", "y", "z"][:d]] + ["w", "H"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for i in range(surf.m):
            w.writerow(
                [_cell(v) for v in surf.points[i]]
                + [_cell(v) for v in surf.normals[i]]
                + [_cell(surf.weights[i]), _cell(surf.H[i])]
            )


def _preamble(cfg: ExperimentConfig) -> list:
    return [
        f"# config {cfg.config_hash}",
        "# h %.12g" % cfg.h,
        f"# seed {cfg.seed}",
    ]


def _write_rows_csv(path, cfg, header, dict_rows) -> None:
    with open(path, "w", newline="") as fh:
        for line in _preamble(cfg):
            fh.write(line + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in dict_rows:
            w.writerow([_cell(row[k]) for k in header])


def write_sweep_csv(path: str, cfg: ExperimentConfig, rows) -> None:
    _write_rows_csv(path, cfg, SWEEP_HEADER, [vars(r) for r in rows])


def write_projection_csv(path: str, cfg: ExperimentConfig, rows, header) -> None:
    """Stage-specific view of the same rows (analyze and torsion files)."""
    _write_rows_csv(path, cfg, header, [vars(r) for r in rows])


def _fit_metric(deltas: np.ndarray, vals: np.ndarray) -> tuple:
    lx, ly = np.log10(deltas), np.log10(vals)
    slope, intercept = np.polyfit(lx, ly, 1)
    pred = slope * lx + intercept
    ss_res = float(((ly - pred) ** 2).sum())
    ss_tot = float(((ly - ly.mean()) ** 2).sum())
    if ss_tot > 1e-30:
        r2 = 1.0 - ss_res / ss_tot
    else:
        r2 = 1.0 if ss_res < 1e-24 else 0.0
    return float(slope), float(intercept), r2


def fit_exponents(rows, d: int) -> dict:
    """Power-law fits of each metric against delta over clean rows.

    Rows that errored, were clamped, or carry no positive finite value
    for the metric are excluded; a metric needs three surviving points.
    """
    theory = theory_exponents(d)
    fits = {}
    base = [
        r
        for r in rows
        if r.error == "" and r.clamped is False and np.isfinite(r.delta) and r.delta > 0
    ]
    for metric in _FIT_METRICS:
        pts = [
            (r.delta, getattr(r, metric))
            for r in base
            if np.isfinite(getattr(r, metric)) and getattr(r, metric) > 0
        ]
        if len(pts) < 3:
            continue
        deltas = np.array([p[0] for p in pts])
        vals = np.array([p[1] for p in pts])
        slope, intercept, r2 = _fit_metric(deltas, vals)
        fit = FitResult(metric, slope, intercept, r2, len(pts))
        if metric in theory:
            th = theory[metric]
            ratios = vals / deltas**th
            order = np.argsort(deltas)
            fit.theory = th
            fit.max_ratio = float(ratios.max())
            # trend toward the asymptotic end: ratio at the smallest delta
            # over ratio at the largest
            fit.ratio_trend = float(ratios[order[0]] / ratios[order[-1]])
            fit.flagged = bool(slope < th and fit.ratio_trend >= 10.0)
        fits[metric] = fit
    return fits


def run_experiment(
    cfg: ExperimentConfig,
    dump_fields: tuple = (),
    dump_surface: bool = False,
    member_files: bool = False,
    fit_outputs: bool = True,
) -> SweepResult:
    """Run every family member, collect rows, emit sweep artifacts."""
    for name in dump_fields:
        if name not in _DUMPABLE:
            raise ConfigError(f"unknown dump field {name!r} (have {_DUMPABLE})")
        if name == "f" and not cfg.toggles.torsion:
            raise ConfigError("dump field 'f' needs the torsion stage on")
        if name == "f_eps" and not cfg.toggles.decompose:
            raise ConfigError("dump field 'f_eps' needs the decompose stage on")
    os.makedirs(cfg.outdir, exist_ok=True)

    members = cfg.members()
    worker = partial(
        run_member,
        cfg,
        dump_fields=tuple(dump_fields),
        dump_surface=dump_surface,
        member_files=member_files,
    )
    if cfg.workers > 1 and len(members) > 1:
        with ProcessPoolExecutor(
            max_workers=min(cfg.workers, len(members)),
            mp_context=get_context("spawn"),
        ) as pool:
            outcomes = list(pool.map(worker, members))
    else:
        outcomes = [worker(p) for p in members]

    rows = [o.row for o in outcomes]
    files = []
    sweep_path = os.path.join(cfg.outdir, "sweep.csv")
    write_sweep_csv(sweep_path, cfg, rows)
    files.append(sweep_path)

    fits = {}
    if fit_outputs:
        fits = fit_exponents(rows, len(cfg.extents))
        fits_path = os.path.join(cfg.outdir, "fits.csv")
        dict_rows = [vars(f) | {"theory_exponent": f.theory} for f in fits.values()]
        _write_rows_csv(fits_path, cfg, FITS_HEADER, dict_rows)
        files.append(fits_path)
        for metric, fit in sorted(fits.items()):
            svg_path = os.path.join(cfg.outdir, f"sweep_{metric}.svg")
            pts = [
                (r.delta, getattr(r, metric))
                for r in rows
                if r.error == "" and np.isfinite(getattr(r, metric))
            ]
            svgplot.log_log_scatter(
                svg_path,
                [p[0] for p in pts],
                [p[1] for p in pts],
                slope=fit.slope,
                intercept=fit.intercept,
                title=f"{metric} vs delta",
                xlabel="delta",
                ylabel=metric,
            )
            files.append(svg_path)

    if cfg.toggles.capillarity:
        cap_path = os.path.join(cfg.outdir, "capillarity.csv")
        cap_rows = [o.capillarity for o in outcomes if o.capillarity is not None]
        # errored members still get a capillarity row so the file is complete
        done = {r["param"] for r in cap_rows}
        for o in outcomes:
            if o.row.param not in done:
                cap_rows.append(
                    {k: None for k in CAPILLARITY_HEADER}
                    | {"param": o.row.param, "error": o.row.error}
                )
        cap_rows.sort(key=lambda r: r["param"])
        _write_rows_csv(cap_path, cfg, CAPILLARITY_HEADER, cap_rows)
        files.append(cap_path)

    return SweepResult(rows=rows, fits=fits, files=tuple(files))


def exponent_report(result: SweepResult) -> list:
    """Fit table rows: slope vs theory exponent and the boundedness ratio."""
    if not result.fits:
        raise InsufficientPoints("exponent report needs at least 3 clean rows")
    table = []
    for metric in sorted(result.fits):
        f = result.fits[metric]
        table.append(
            {
                "metric": metric,
                "slope": f.slope,
                "r2": f.r2,
                "points": f.points,
                "theory": f.theory,
                "max_ratio": f.max_ratio,
                "ratio_trend": f.ratio_trend,
                "flagged": f.flagged,
            }
        )
    return table


def format_exponent_table(table: list) -> str:
    cols = ("metric", "slope", "r2", "points", "theory", "max_ratio", "ratio_trend", "flagged")
    lines = ["  ".join(f"{c:>12}" for c in cols)]
    for row in table:
        cells = []
        for c in cols:
            v = row[c]
            if isinstance(v, str):
                cells.append(f"{v:>12}")
            elif isinstance(v, bool):
                cells.append(f"{'YES' if v else 'no':>12}")
            elif isinstance(v, (int, np.integer)):
                cells.append(f"{v:>12d}")
            elif v is None or (isinstance(v, float) and not np.isfinite(v)):
                cells.append(f"{'-':>12}")
            else:
                cells.append(f"{v:>12.4g}")
        lines.append("  ".join(cells))
    return "\n".join(lines)
