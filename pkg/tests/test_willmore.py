"""Willmore energy, residual forms, the first-variation check and the descent flow."""

import math

import numpy as np
import pytest

from willmore_lab.errors import FlowUnstableError, GridError, SupportError
from willmore_lab.estimates import smooth_cutoff
from willmore_lab.field import Grid, ScalarField, core_mask, disk_mask, interior_mask
from willmore_lab.geometry import build_bundle
from willmore_lab.surfaces import CatenoidPiece, GaussianBump, Plane, SphereCap, TrigSurface, sample
from willmore_lab.symbolic import ConversionFactor
from willmore_lab.willmore import (
    DESCENT_SIGN,
    TRIM_FOURTH_ORDER,
    StopCriteria,
    cfl_timestep,
    div_residual,
    el_residual,
    energy,
    flow_step,
    gradient_check,
    initial_state,
    residual_equivalence,
    residual_report,
    run_flow,
    vote_gradient_sign,
)

UNIT_FACTOR = ConversionFactor(prefactor=1.0, v_exponent=0.0, max_rel_residual=0.0, n_points=0)


def _bundle(surface, grid):
    return build_bundle(sample(surface, grid))


### Fixtures


@pytest.fixture
def small_bump():
    return sample(GaussianBump(A=1.0), Grid.centered(33, 3.0))


class TestEnergy:
    def test_plane(self, plane_bundle):
        assert energy(plane_bundle) == 0.0

    def test_spherical_zone(self):
        # H = -2 on the unit sphere, so W equals the zone area 2π·0.2
        g = Grid.centered(261, 0.65)
        b = _bundle(SphereCap(R=1.0), g)
        assert energy(b, disk_mask(g, 0.6)) == pytest.approx(2 * math.pi * 0.2, rel=1e-2)

    def test_nonnegative(self, bump_bundle):
        assert energy(bump_bundle) > 0.0


class TestResiduals:
    def test_plane(self, plane_bundle):
        assert el_residual(plane_bundle).sup() == 0.0
        assert div_residual(plane_bundle).sup() == 0.0

    def test_needs_enough_points(self):
        b = _bundle(Plane(), Grid.centered(16, 1.0))
        with pytest.raises(GridError, match="fourth-order"):
            el_residual(b)
        with pytest.raises(GridError):
            div_residual(b)

    def test_margin_is_zeroed(self, bump_bundle):
        outside = ~interior_mask(bump_bundle.grid, TRIM_FOURTH_ORDER)
        assert el_residual(bump_bundle).sup(outside) == 0.0
        assert div_residual(bump_bundle).sup(outside) == 0.0

    @pytest.mark.parametrize(
        "surface, grid",
        [
            (SphereCap(R=2.0), Grid.centered(33, 1.0)),
            (CatenoidPiece(), Grid(nx=33, ny=33, h=1 / 32, x0=1.2, y0=1.2)),
        ],
        ids=["sphere_cap", "catenoid"],
    )
    def test_critical_surfaces_converge_to_zero(self, surface, grid):
        for residual in (el_residual, div_residual):
            coarse = residual(_bundle(surface, grid)).sup(core_mask(grid, 0.5))
            fine_grid = grid.refine()
            fine = residual(_bundle(surface, fine_grid)).sup(core_mask(fine_grid, 0.5))
            assert fine < 0.35 * coarse

    def test_report_ratio(self, bump_bundle):
        report = residual_report(bump_bundle)
        assert report.sup_norm_el == pytest.approx(report.el.sup())
        strong = np.abs(report.el.values) > 0.2 * report.sup_norm_el
        np.testing.assert_allclose(report.ratio_field.values[strong], 1.0, atol=0.1)


class TestEquivalence:
    def test_forms_agree_on_periodic_trig(self):
        deviations = []
        for n in (32, 64):
            b = _bundle(TrigSurface(A=0.1), Grid.periodic_square(n))
            report = residual_equivalence(b, UNIT_FACTOR, relative_threshold=0.1)
            deviations.append(report.sup_deviation)
            assert report.sign_agreement >= 0.95
            assert report.fitted.field_values(np.median(b.v.values)) == pytest.approx(1.0, abs=0.1)
        assert math.log2(deviations[0] / deviations[1]) >= 1.5

    def test_deviation_is_small_relative_to_residual(self):
        b = _bundle(TrigSurface(A=0.2), Grid.periodic_square(64))
        report = residual_equivalence(b, UNIT_FACTOR)
        assert report.sup_deviation < 0.05 * report.sup_norm_el
        assert report.zero_set_agreement > 0.9
        assert set(report.as_dict()) >= {"factor", "fitted", "sup_deviation"}


class TestGradientCheck:
    def test_descent_sign(self):
        assert DESCENT_SIGN == 1

    def test_bump(self):
        g = Grid.centered(97, 3.0)
        u = sample(GaussianBump(A=0.5), g)
        phi = smooth_cutoff(g, 1.5, (0.3, -0.2))
        report = gradient_check(u, phi)
        assert report.sign == DESCENT_SIGN
        assert report.mismatch < 0.05
        assert report.mismatch_other_sign > 1.0
        assert not report.rounding_dominated

    def test_plane_is_critical(self):
        g = Grid.centered(33, 2.0)
        u = sample(Plane(), g)
        report = gradient_check(u, smooth_cutoff(g, 1.0))
        assert report.mismatch == 0.0
        assert report.sign == DESCENT_SIGN

    def test_direction_must_vanish_on_margin(self, small_bump):
        with pytest.raises(SupportError):
            gradient_check(small_bump, ScalarField.constant(small_bump.grid, 1.0))

    def test_vote_is_unanimous(self):
        g = Grid.centered(97, 3.0)
        u = sample(GaussianBump(A=0.5), g)
        pairs = [(u, smooth_cutoff(g, 1.5, (0.3, -0.2))), (u, smooth_cutoff(g, 1.2, (-0.5, 0.4)))]
        sign, unanimous, reports = vote_gradient_sign(pairs)
        assert sign == 1
        assert unanimous
        assert len(reports) == 2


class TestFlow:
    def test_plane_is_stationary(self):
        u0 = sample(Plane(), Grid.centered(33, 2.0))
        state, summary = run_flow(u0, stop=StopCriteria(max_steps=10))
        assert summary.steps == 0
        assert summary.converged
        assert state.u is u0

    def test_bump_energy_decreases(self, small_bump):
        state, summary = run_flow(small_bump, stop=StopCriteria(max_steps=50, grad_tol=0.0))
        assert summary.steps == 50
        assert summary.energy_monotone
        assert summary.final_energy <= summary.initial_energy
        assert len(state.energy_history) == 51
        assert len(state.sup_residual_history) == 51
        assert summary.tau_initial == pytest.approx(cfl_timestep(small_bump.grid.h))

    def test_clamped_margin_never_moves(self, small_bump):
        state, _ = run_flow(small_bump, stop=StopCriteria(max_steps=20, grad_tol=0.0))
        margin = ~interior_mask(small_bump.grid, TRIM_FOURTH_ORDER)
        assert np.array_equal(state.u.values[margin], small_bump.values[margin])

    def test_periodic_flow(self):
        u0 = sample(TrigSurface(A=0.1), Grid.periodic_square(32))
        _, summary = run_flow(u0, bc="periodic", stop=StopCriteria(max_steps=20, grad_tol=0.0))
        assert summary.energy_monotone
        assert summary.final_energy < summary.initial_energy

    def test_oversized_step_is_halved(self, small_bump):
        state = initial_state(small_bump, tau=1e4 * small_bump.grid.h**4)
        after = flow_step(state)
        assert after.halvings >= 1
        assert after.tau < state.tau
        assert after.energy_history[-1][1] <= state.energy_history[-1][1]

    def test_unstable_without_halvings(self, small_bump):
        state = initial_state(small_bump, tau=1e4 * small_bump.grid.h**4)
        with pytest.raises(FlowUnstableError, match="flow unstable"):
            flow_step(state, max_halvings=0)

    def test_periodic_bc_needs_periodic_grid(self, small_bump):
        with pytest.raises(GridError):
            flow_step(initial_state(small_bump), bc="periodic")

    def test_step_leaves_input_untouched(self, small_bump):
        state = initial_state(small_bump)
        after = flow_step(state)
        assert state.step_count == 0
        assert len(state.energy_history) == 1
        assert after.step_count == 1
        assert after.time == pytest.approx(after.tau)

    def test_checkpoints(self, small_bump):
        seen = []
        run_flow(
            small_bump,
            stop=StopCriteria(max_steps=10, grad_tol=0.0),
            checkpoint_every=5,
            on_checkpoint=lambda s: seen.append(s.step_count),
        )
        assert seen == [5, 10]

    def test_half_bump_relaxes(self):
        u0 = sample(GaussianBump(A=0.5), Grid.centered(33, 3.0))
        state, summary = run_flow(u0, stop=StopCriteria(max_steps=1000, grad_tol=0.0))
        energies = [w for _, w in state.energy_history]
        assert summary.steps == 1000
        assert all(later < earlier for earlier, later in zip(energies, energies[1:]))
        assert summary.final_sup_u < 0.8 * summary.initial_sup_u
        assert summary.final_energy < 0.5 * summary.initial_energy

    def test_small_bumps_reach_the_same_plane(self):
        g = Grid.centered(25, 4.0)
        stop = StopCriteria(max_steps=40000, grad_tol=1e-5)
        finals = []
        for surface in (GaussianBump(A=0.5), GaussianBump(A=0.3, cx=0.4, cy=-0.3)):
            u0 = sample(surface, g)
            state, summary = run_flow(u0, stop=stop)
            assert summary.energy_monotone
            assert summary.final_sup_u < 0.1 * summary.initial_sup_u
            assert summary.final_energy < 0.05 * summary.initial_energy
            finals.append(state.u)
        core = interior_mask(g, TRIM_FOURTH_ORDER)
        assert np.max(np.abs(finals[0].values - finals[1].values)[core]) < 0.05
