"""Lagrange multiplier, stationarity residual, and the deficit bound."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cmclab import capillarity as cap
from cmclab import measures, shapes
from cmclab.errors import ConfigError
from cmclab.grid import Grid, ScalarField


@pytest.fixture(scope="module")
def aligned_deficits(ball32_aligned):
    dom, surf = ball32_aligned
    return measures.deficits(dom, surf)


@pytest.fixture(scope="module")
def zero_report(ball32_aligned):
    dom, surf = ball32_aligned
    return cap.multiplier_report(dom, surf, cap.make_potential(dom, 0.0))


class TestPotentialSpec:
    def test_constant_expression(self):
        fn = cap.potential_from_string(" 2.5 ")
        pts = np.zeros((4, 3))
        assert np.all(fn(pts) == 2.5)

    def test_height_expressions(self):
        pts = np.array([[0.0, 0.0, 0.3], [1.0, -1.0, -0.5]])
        assert cap.potential_from_string("x3")(pts) == pytest.approx([0.3, -0.5])
        assert cap.potential_from_string("x3^2")(pts) == pytest.approx([0.09, 0.25])

    def test_unknown_expression_raises(self):
        with pytest.raises(ConfigError):
            cap.potential_from_string("sin(x)")

    def test_height_needs_three_axes(self):
        g2 = Grid(origin=(-1.25, -1.25), extents=(81, 81), h=1 / 32)
        disk = shapes.make_ball(g2, (0.0, 0.0), 1.0)
        with pytest.raises(ConfigError):
            cap.make_potential(disk, cap.potential_from_string("x3"))

    def test_field_input_is_used_verbatim(self, ball32_aligned):
        dom, _ = ball32_aligned
        grid = dom.phi.grid
        vals = grid.node_coords()[..., 2] ** 2
        pot = cap.make_potential(dom, ScalarField(grid, vals))
        assert pot.fn is None
        node = np.array([grid.origin]) + grid.h * 3
        assert pot.at(node)[0] == pytest.approx(vals[3, 3, 3])

    def test_field_on_other_grid_raises(self, ball32_aligned):
        dom, _ = ball32_aligned
        other = Grid(origin=(-1.0,) * 3, extents=(9,) * 3, h=0.25)
        with pytest.raises(ValueError):
            cap.make_potential(dom, ScalarField(other, np.zeros((9, 9, 9))))

    def test_c1_norm_of_height(self, ball32_aligned):
        # sup|x3| over B_R0 sits between the ball radius and R0, sup|grad| = 1
        dom, _ = ball32_aligned
        pot = cap.make_potential(dom, cap.potential_from_string("x3"))
        assert pot.R0 == pytest.approx(1.0, abs=0.08)
        assert 1.0 <= pot.g_c1_norm <= pot.R0 + 1e-12

    def test_r0_override_shrinks_the_norm(self, ball32_aligned):
        dom, _ = ball32_aligned
        pot = cap.make_potential(dom, cap.potential_from_string("x3"), R0=0.5)
        assert pot.R0 == 0.5
        assert pot.g_c1_norm == pytest.approx(1.0)  # gradient term dominates

    def test_r0_without_nodes_raises(self, ball32_aligned):
        dom, _ = ball32_aligned
        with pytest.raises(ValueError):
            cap.make_potential(dom, 1.0, R0=-1.0)


class TestMultiplier:
    def test_zero_potential_gives_h0(self, zero_report, aligned_deficits):
        assert zero_report.lam == pytest.approx(aligned_deficits.H0, rel=1e-12)
        assert zero_report.cross_rel <= 1e-12

    def test_constant_shifts_exactly(self, ball32_aligned, zero_report):
        dom, surf = ball32_aligned
        lam5 = cap.lagrange_multiplier(dom, surf, cap.make_potential(dom, 5.0))
        assert lam5 - zero_report.lam == pytest.approx(5.0, abs=1e-10)

    def test_height_integral_vanishes_by_symmetry(self, ball32_aligned, zero_report):
        dom, surf = ball32_aligned
        pot = cap.make_potential(dom, cap.potential_from_string("x3"))
        lam = cap.lagrange_multiplier(dom, surf, pot)
        assert lam == pytest.approx(zero_report.lam, abs=1e-8)

    def test_height_squared_oracle(self, ball32_aligned, zero_report):
        # div(x*x3^2) = 5 x3^2, integral over the unit ball 5*(4pi/15) = |B|
        dom, surf = ball32_aligned
        pot = cap.make_potential(dom, cap.potential_from_string("x3^2"))
        lam = cap.lagrange_multiplier(dom, surf, pot)
        assert lam - zero_report.lam == pytest.approx(1.0 / 3.0, abs=1e-3)

    def test_volume_and_wall_routes_agree(self, ball32_aligned):
        dom, surf = ball32_aligned
        for g in (0.0, 5.0, cap.potential_from_string("x3")):
            rep = cap.multiplier_report(dom, surf, cap.make_potential(dom, g))
            assert rep.cross_rel <= 0.03

    def test_cross_check_on_ellipsoid(self, ellipsoid32):
        dom, surf = ellipsoid32
        pot = cap.make_potential(dom, cap.potential_from_string("x3"))
        rep = cap.multiplier_report(dom, surf, pot)
        assert rep.cross_rel <= 0.03

    @settings(max_examples=20, deadline=None)
    @given(c=st.floats(min_value=-5.0, max_value=5.0, allow_nan=False))
    def test_constant_shift_property(self, ball32_aligned, zero_report, c):
        dom, surf = ball32_aligned
        lam = cap.lagrange_multiplier(dom, surf, cap.make_potential(dom, c))
        assert lam - zero_report.lam == pytest.approx(c, abs=1e-10)


class TestStationarity:
    def test_cmc_residual_is_the_sup_deficit(self, ball32_aligned, aligned_deficits):
        dom, surf = ball32_aligned
        stat = cap.stationarity_residual(dom, surf, cap.make_potential(dom, 0.0))
        assert stat["residual"] == pytest.approx(
            aligned_deficits.delta * aligned_deficits.H0, rel=1e-9
        )
        assert stat["normalized"] <= 0.06

    def test_constant_leaves_residual_unchanged(self, ball32_aligned):
        dom, surf = ball32_aligned
        r0 = cap.stationarity_residual(dom, surf, cap.make_potential(dom, 0.0))
        r5 = cap.stationarity_residual(dom, surf, cap.make_potential(dom, 5.0))
        assert r5["residual"] == pytest.approx(r0["residual"], abs=1e-10)

    def test_gravity_residual_is_the_height_sup(self, ball32_aligned):
        # the ball is not stationary under gravity; sup|x3| on the sphere is 1
        dom, surf = ball32_aligned
        pot = cap.make_potential(dom, cap.potential_from_string("x3"))
        stat = cap.stationarity_residual(dom, surf, pot)
        assert stat["residual"] == pytest.approx(1.0, rel=0.03)


class TestDeficitBound:
    def test_exactly_stationary_ball(self, ball32_aligned, aligned_deficits):
        dom, surf = ball32_aligned
        chk = cap.deficit_bound_check(dom, surf, cap.make_potential(dom, 0.0))
        assert chk["applicable"]
        assert chk["delta"] == pytest.approx(aligned_deficits.delta, rel=1e-9)
        assert chk["bound_rhs"] == 0.0
        assert np.isnan(chk["fitted_cstar"])

    def test_constant_potential_fits_cstar(self, ball32_aligned, aligned_deficits):
        dom, surf = ball32_aligned
        chk = cap.deficit_bound_check(dom, surf, cap.make_potential(dom, 5.0))
        assert chk["applicable"]
        rhs = 5.0 * aligned_deficits.volume ** (1.0 / 3.0)
        assert chk["bound_rhs"] == pytest.approx(rhs, rel=1e-6)
        assert chk["fitted_cstar"] == pytest.approx(chk["delta"] / rhs, rel=1e-9)

    def test_gravity_reported_not_asserted(self, ball32_aligned):
        dom, surf = ball32_aligned
        pot = cap.make_potential(dom, cap.potential_from_string("x3"))
        chk = cap.deficit_bound_check(dom, surf, pot)
        assert not chk["applicable"]
        assert np.isnan(chk["fitted_cstar"])
        assert chk["residual_normalized"] > 0.05

    def test_h0_isoperimetric_floor(self, ball32_aligned, ellipsoid32):
        for dom, surf in (ball32_aligned, ellipsoid32):
            chk = cap.deficit_bound_check(dom, surf, cap.make_potential(dom, 0.0))
            assert chk["h0"] >= chk["h0_floor"] - 1e-3
