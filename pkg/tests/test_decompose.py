"""Ball-compound extraction: thresholding, fitting, push-apart, metrics.

Analytic oracles: the sublevel set of the exact ball potential
(r^2 - 1)/6 < -t is concentric with radius sqrt(1 - 6t), so the fitted
radius is checkable in closed form; the symmetric difference of two
offset unit balls has the lens formula; the push-apart procedure is
small enough to execute by hand.
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cmclab import decompose, measures, shapes, torsion
from cmclab.decompose import (
    BallSystem,
    ComponentFit,
    DecompositionConfig,
    _xor_volume,
    fit_component_balls,
    filter_and_normalize,
    normalize_domain,
    rescale_solution,
    threshold_set,
)
from cmclab.errors import EmptyThresholdSet, MollifierTooNarrow, NoBallsSurvive
from cmclab.grid import Grid, ScalarField


def _cube_grid(half, h):
    return Grid(origin=(-half,) * 3, extents=(int(round(2 * half / h)) + 1,) * 3, h=h)


class TestNormalize:
    def test_half_ball_scale(self):
        dom = shapes.make_ball(_cube_grid(0.75, 1 / 24), (0.0,) * 3, 0.5)
        surf = measures.extract_surface(dom)
        norm = normalize_domain(dom, surf)
        assert norm.scale == pytest.approx(2.0, rel=0.01)
        # mean curvature baseline n = 2 after the rescale
        rep = measures.deficits(norm.domain, norm.surface)
        assert rep.H0 == pytest.approx(2.0, rel=0.02)

    def test_unit_ball_scale_one(self, ball32_aligned):
        dom, surf = ball32_aligned
        norm = normalize_domain(dom, surf)
        assert norm.scale == pytest.approx(1.0, rel=0.01)

    def test_no_resampling(self, ball32_aligned):
        dom, surf = ball32_aligned
        norm = normalize_domain(dom, surf)
        assert norm.domain.grid.extents == dom.grid.extents
        assert norm.domain.grid.h == pytest.approx(dom.grid.h * norm.scale)
        ratio = norm.domain.phi.values / np.where(dom.phi.values == 0, 1, dom.phi.values)
        assert np.allclose(ratio[dom.phi.values != 0], norm.scale)

    def test_ellipsoid_postcheck(self):
        g = _cube_grid(0.85, 1 / 32)
        dom = shapes.make_ellipsoid(g, (0.5, 0.5, 0.6))
        surf = measures.extract_surface(dom)
        norm = normalize_domain(dom, surf)  # raises if the check fails
        per = float(norm.surface.weights.sum())
        vol = measures.volume(norm.domain)
        assert abs(per - 3 * vol) / per <= 0.03


class TestRescaleSolution:
    def test_matches_direct_solve(self):
        dom = shapes.make_ball(_cube_grid(0.75, 1 / 24), (0.0,) * 3, 0.5)
        surf = measures.extract_surface(dom)
        sol = torsion.solve_torsion(dom, surf)
        norm = normalize_domain(dom, surf)
        moved = rescale_solution(sol, norm)
        direct = torsion.solve_torsion(norm.domain, norm.surface)
        assert np.allclose(moved.f.values, direct.f.values, atol=1e-8)
        assert np.allclose(moved.boundary_dnu, direct.boundary_dnu, atol=1e-6)

    def test_potential_scaling(self):
        dom = shapes.make_ball(_cube_grid(0.75, 1 / 24), (0.0,) * 3, 0.5)
        surf = measures.extract_surface(dom)
        sol = torsion.solve_torsion(dom, surf)
        norm = normalize_domain(dom, surf)
        moved = rescale_solution(sol, norm)
        assert moved.f.values.min() == pytest.approx(
            sol.f.values.min() * norm.scale**2
        )


class TestThreshold:
    def test_ball_epsilon_at_floor(self, ball32_decomp):
        thr = ball32_decomp.threshold
        h = ball32_decomp.normalized.domain.grid.h
        # measured eta is below the (h/r_in)^2 noise floor, so the kernel
        # sits at its smallest resolvable width
        assert thr.epsilon == pytest.approx(2 * h, rel=1e-9)
        assert not thr.clamped
        assert thr.c0 == pytest.approx(1 / 3, abs=0.02)
        assert thr.rho == pytest.approx(thr.c0 * thr.epsilon)

    def test_ball_sublevel_radius_oracle(self, ball32_decomp):
        thr = ball32_decomp.threshold
        h = ball32_decomp.normalized.domain.grid.h
        fit = ball32_decomp.fits[0]
        r_exact = np.sqrt(1.0 - 18.0 * thr.rho)
        assert fit.r1 == pytest.approx(r_exact, abs=1.5 * h)
        assert fit.r2 == pytest.approx(fit.r1, abs=3 * h)
        assert np.linalg.norm(fit.center) <= 2 * h

    def test_rho_to_zero_recovers_unit_radius(self, ball32_aligned):
        dom, surf = ball32_aligned
        rep = measures.deficits(dom, surf)
        norm = normalize_domain(dom, surf)
        rep2 = decompose.rescale_deficit_report(rep, norm.scale, 3)
        sol = torsion.solve_torsion(norm.domain, norm.surface)
        h = norm.domain.grid.h
        cfg = DecompositionConfig(rho_override=1e-9)
        thr = threshold_set(sol, rep2, cfg, eta=None)
        fit = fit_component_balls(thr)[0]
        assert fit.r1 >= 1.0 - 3 * h

    def test_neck_two_components(self, neck15_decomp):
        assert len(neck15_decomp.fits) == 2

    def test_forced_empty(self, ball32_aligned):
        dom, surf = ball32_aligned
        rep = measures.deficits(dom, surf)
        norm = normalize_domain(dom, surf)
        rep2 = decompose.rescale_deficit_report(rep, norm.scale, 3)
        sol = torsion.solve_torsion(norm.domain, norm.surface)
        f_sup = float(-sol.f.values.min())
        cfg = DecompositionConfig(rho_override=f_sup / 3)
        with pytest.raises(EmptyThresholdSet):
            threshold_set(sol, rep2, cfg, eta=None)

    def test_sub_resolution_override(self, ball32_aligned):
        dom, surf = ball32_aligned
        rep = measures.deficits(dom, surf)
        norm = normalize_domain(dom, surf)
        rep2 = decompose.rescale_deficit_report(rep, norm.scale, 3)
        sol = torsion.solve_torsion(norm.domain, norm.surface)
        cfg = DecompositionConfig(epsilon_override=norm.domain.grid.h)
        with pytest.raises(MollifierTooNarrow):
            threshold_set(sol, rep2, cfg, eta=None)

    def test_exponent_validation(self):
        with pytest.raises(ValueError):
            DecompositionConfig(alpha=0.6).exponents(3)
        with pytest.raises(ValueError):
            DecompositionConfig(alpha=0.1, beta=0.2).exponents(3)
        alpha, beta = DecompositionConfig().exponents(3)
        assert alpha == pytest.approx(1 / 8)
        assert beta == pytest.approx(1 / 48)


def _fit(center, r1, count=1000):
    return ComponentFit(center=np.asarray(center, float), r1=r1, r2=r1, node_count=count)


class TestFilterAndNormalize:
    def test_hand_executed_push_apart(self):
        # two cores at distance 2.1 with radii 0.97 and 0.95: processing the
        # deeper-radius core first moves the other by 0.03, then the second
        # round moves the first back by 0.05
        fits = (_fit((0, 0, 0), 0.97), _fit((2.1, 0, 0), 0.95))
        balls = filter_and_normalize(fits, delta=0.1, h=1 / 32)
        assert balls.k == 2
        assert balls.centers[0] == pytest.approx([-0.05, 0, 0])
        assert balls.centers[1] == pytest.approx([2.13, 0, 0])
        dist = np.linalg.norm(balls.centers[1] - balls.centers[0])
        assert dist == pytest.approx(2.18)
        assert dist >= 2 - 2 / 32
        assert np.all(balls.radii == 1.0)

    def test_single_ball_untouched(self):
        balls = filter_and_normalize((_fit((0.5, 0, 0), 0.98),), delta=0.0, h=1 / 32)
        assert balls.k == 1
        assert balls.centers[0] == pytest.approx([0.5, 0, 0])

    def test_spurious_discard(self):
        fits = (_fit((0, 0, 0), 0.9), _fit((3, 0, 0), 0.3, count=200))
        balls = filter_and_normalize(fits, delta=0.1, h=0.1)
        assert balls.k == 1
        assert balls.discarded_count == 1
        assert balls.discarded_volume == pytest.approx(200 * 0.1**3)

    def test_oversized_discard(self):
        # upper cut is 1 + 2 delta^alpha
        delta = 0.01
        upper = 1 + 2 * delta ** (1 / 8)
        fits = (_fit((0, 0, 0), upper + 0.05), _fit((3, 0, 0), 0.95))
        balls = filter_and_normalize(fits, delta=delta, h=0.1)
        assert balls.k == 1
        assert balls.centers[0] == pytest.approx([3, 0, 0])

    def test_none_survive(self):
        with pytest.raises(NoBallsSurvive):
            filter_and_normalize((_fit((0, 0, 0), 0.3),), delta=0.1, h=0.1)

    @settings(max_examples=25, deadline=None)
    @given(
        s1=st.floats(0.5, 1.0),
        s2=st.floats(0.5, 1.0),
        extra=st.floats(0.0, 1.0),
        seed=st.integers(0, 2**31),
    )
    def test_pair_always_disjoint(self, s1, s2, extra, seed):
        # for two balls each round pushes the other directly away, so the
        # final distance is the initial one plus both inflation amounts
        rng = np.random.default_rng(seed)
        u = rng.normal(size=3)
        u /= np.linalg.norm(u)
        dist0 = s1 + s2 + extra
        fits = (_fit((0, 0, 0), s1), _fit(dist0 * u, s2))
        balls = filter_and_normalize(fits, delta=0.3, h=1 / 32)
        dist = np.linalg.norm(balls.centers[1] - balls.centers[0])
        assert dist == pytest.approx(dist0 + (1 - s1) + (1 - s2))
        assert balls.min_gap() >= -1e-12


class TestXorVolume:
    def test_offset_balls_lens_oracle(self):
        g = _cube_grid(1.45, 1 / 32)
        x = g.node_coords()
        phi_a = np.linalg.norm(x, axis=-1) - 1.0
        t = 0.3
        off = x.copy()
        off[..., 0] -= t
        phi_b = np.linalg.norm(off, axis=-1) - 1.0
        lens = np.pi * (4 + t) * (2 - t) ** 2 / 12
        exact = 2 * (4 * np.pi / 3 - lens)
        assert _xor_volume(phi_a, phi_b, g) == pytest.approx(exact, rel=0.02)

    def test_identical_fields_zero(self):
        g = _cube_grid(1.2, 1 / 16)
        phi = np.linalg.norm(g.node_coords(), axis=-1) - 1.0
        assert _xor_volume(phi, phi.copy(), g) == 0.0


class TestBallMetrics:
    def test_single_unit_ball_recovered(self, ball32_decomp):
        res = ball32_decomp
        h = res.normalized.domain.grid.h
        m = res.metrics
        assert res.balls.k == 1
        assert np.linalg.norm(res.balls.centers[0]) <= 2 * h
        assert m.sym_diff_rel <= 0.03
        assert m.hausdorff <= 2 * h
        assert m.psi_sup <= 2 * h
        assert m.ray_missed == 0
        assert m.uncovered_area <= 0.01
        assert m.tangency_gaps == (0.0,)
        assert m.perim_quant <= 0.02
        assert m.cap_count == 0

    def test_hausdorff_dominates_onesided(self, ball32_decomp, neck15_decomp):
        for res in (ball32_decomp, neck15_decomp):
            assert res.metrics.hausdorff >= res.metrics.onesided - 1e-15

    def test_density_floor_near_half(self, ball32_decomp):
        # flat boundary gives 1/2; curvature pulls it below
        assert 0.3 <= ball32_decomp.metrics.density_kappa <= 0.52

    def test_ball_system_sdf(self):
        balls = BallSystem(
            centers=np.array([[0.0, 0.0, 0.0], [3.0, 0.0, 0.0]]),
            radii=np.array([1.0, 1.0]),
            scale=1.0,
        )
        q = np.array([[0.0, 0.0, 0.0], [1.5, 0.0, 0.0], [3.0, 2.0, 0.0]])
        assert balls.sdf(q) == pytest.approx([-1.0, 0.5, 1.0])
        assert balls.min_gap() == pytest.approx(1.0)

    def test_unscaling(self):
        balls = BallSystem(
            centers=np.array([[2.0, 0.0, 0.0]]), radii=np.array([1.0]), scale=2.0
        )
        centers, radii = balls.in_original_units()
        assert centers[0] == pytest.approx([1.0, 0, 0])
        assert radii[0] == pytest.approx(0.5)


class TestNeckMetrics:
    def test_two_balls(self, neck15_decomp):
        res = neck15_decomp
        assert res.balls.k == 2
        assert res.balls.min_gap() >= -res.normalized.domain.grid.h
        # centers stay on the symmetry axis
        assert np.abs(res.balls.centers[:, 1:]).max() <= 2 * res.normalized.domain.grid.h

    def test_eta_unavailable_floor_used(self, neck15_decomp):
        # neck has H <= 0 samples, so eta falls back to the grid-noise floor
        assert neck15_decomp.eta_report is None
        h = neck15_decomp.normalized.domain.grid.h
        r_in = neck15_decomp.deficit.r_in
        assert neck15_decomp.threshold.eta_used == pytest.approx((h / r_in) ** 2)

    def test_neck_cap_excluded(self, neck15_decomp):
        m = neck15_decomp.metrics
        assert m.cap_count == 1
        assert m.sigma_samples > 0
        assert m.ray_missed == 0

    def test_metrics_finite(self, neck15_decomp):
        m = neck15_decomp.metrics
        for name in ("sym_diff_rel", "perim_quant", "onesided", "hausdorff",
                     "psi_sup", "psi_grad_sup", "uncovered_area", "density_kappa"):
            assert np.isfinite(getattr(m, name)), name


@pytest.fixture(scope="module")
def ellipsoid_pair():
    out = []
    for c in (1.02, 1.2):
        g = Grid(origin=(-1.45,) * 3, extents=(70,) * 3, h=1 / 24)
        dom = shapes.make_ellipsoid(g, (1.0, 1.0, c))
        out.append(decompose.decompose(dom))
    return out


class TestEllipsoidMonotone:
    def test_both_single_ball(self, ellipsoid_pair):
        pair = ellipsoid_pair
        assert pair[0].balls.k == 1
        assert pair[1].balls.k == 1

    def test_rounder_is_closer(self, ellipsoid_pair):
        pair = ellipsoid_pair
        near, far = pair[0].metrics, pair[1].metrics
        assert near.sym_diff_rel < far.sym_diff_rel
        assert near.hausdorff < far.hausdorff
        assert near.psi_sup < far.psi_sup


class TestDeterminism:
    def test_identical_reruns(self, ball32_aligned):
        dom, surf = ball32_aligned
        a = decompose.decompose(dom, surf)
        b = decompose.decompose(dom, surf)
        assert a.balls.centers.tobytes() == b.balls.centers.tobytes()
        assert a.metrics.sym_diff_rel == b.metrics.sym_diff_rel
        assert a.metrics.psi_sup == b.metrics.psi_sup
        assert a.metrics.psi_grad_sup == b.metrics.psi_grad_sup


class TestSerialization:
    def test_balls_csv(self, ball32_decomp, tmp_path):
        path = tmp_path / "balls.csv"
        decompose.write_balls_csv(ball32_decomp.balls, path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "j,zx,zy,zz,s"
        assert len(lines) == 2
        parts = lines[1].split(",")
        assert float(parts[-1]) == 1.0

    def test_metrics_csv(self, ball32_decomp, tmp_path):
        path = tmp_path / "metrics.csv"
        decompose.write_metrics_csv(ball32_decomp.metrics, path)
        lines = path.read_text().strip().splitlines()
        header = lines[0].split(",")
        assert header[:5] == ["sym_diff_rel", "perim_quant", "onesided", "hausdorff", "tangency"]
        values = lines[1].split(",")
        assert len(values) == len(header)
        assert float(values[0]) == pytest.approx(ball32_decomp.metrics.sym_diff_rel)

    def test_psi_csv(self, ball32_decomp, tmp_path):
        path = tmp_path / "psi.csv"
        decompose.write_psi_csv(ball32_decomp.metrics, path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "x,y,z,psi"
        assert len(lines) == 1 + ball32_decomp.metrics.sigma_samples


class TestAllardTable:
    def test_ball_row(self, ball32_aligned, ball32_decomp):
        _, surf = ball32_aligned
        rows = decompose.allard_table(
            ball32_decomp.normalized.surface, ball32_decomp.balls
        )
        assert len(rows) == 1
        assert rows[0]["ball"] == 0
        assert np.isfinite(rows[0]["sigma"]) and rows[0]["sigma"] > 0
