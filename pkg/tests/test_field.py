"""Grid calculus: stencils, quadrature, masks and refinement orders."""

import math

import numpy as np
import pytest

from willmore_lab.errors import GridError, NonFiniteFieldError
from willmore_lab.field import (
    EmptyMaskWarning,
    Grid,
    ScalarField,
    VectorField,
    convergence_order,
    core_mask,
    disk_mask,
    divergence,
    gradient,
    hessian,
    integrate,
    interior_mask,
    laplacian_wide,
)


class TestGrid:
    def test_rejects_small_grids(self):
        with pytest.raises(GridError):
            Grid(nx=4, ny=10, h=0.1)

    @pytest.mark.parametrize("h", [0.0, -1.0, math.inf])
    def test_rejects_bad_spacing(self, h):
        with pytest.raises(GridError):
            Grid(nx=8, ny=8, h=h)

    def test_centered_extent(self):
        g = Grid.centered(41, 2.0)
        assert g.extent == pytest.approx((-2.0, 2.0, -2.0, 2.0))
        assert g.shape == (41, 41)

    def test_refine_keeps_window(self):
        g = Grid.centered(17, 1.0)
        fine = g.refine()
        assert (fine.nx, fine.ny) == (33, 33)
        assert fine.h == pytest.approx(g.h / 2)
        assert fine.extent == pytest.approx(g.extent)

    def test_refine_keeps_period(self):
        g = Grid.periodic_square(16)
        fine = g.refine()
        assert fine.nx == 32
        assert fine.nx * fine.h == pytest.approx(2 * math.pi)

    def test_contains_disk(self):
        g = Grid.centered(41, 2.0)
        assert g.contains_disk(1.9)
        assert not g.contains_disk(1.9, margin=2)
        assert not g.contains_disk(2.1)

    def test_layout_is_y_outer(self):
        g = Grid(nx=6, ny=5, h=1.0)
        f = ScalarField.from_function(g, lambda x, y: x + 10 * y)
        assert f.values.shape == (5, 6)
        assert f.values[2, 3] == 23.0


class TestScalarField:
    def test_non_finite_values_rejected(self, unit_square):
        values = np.zeros(unit_square.shape)
        values[3, 4] = np.nan
        with pytest.raises(NonFiniteFieldError, match="j=3, i=4"):
            ScalarField(unit_square, values)

    def test_values_are_read_only(self, unit_square):
        f = ScalarField.constant(unit_square, 1.0)
        with pytest.raises(ValueError):
            f.values[0, 0] = 2.0

    def test_mismatched_grids(self, unit_square):
        other = Grid(nx=12, ny=11, h=0.1)
        with pytest.raises(GridError):
            ScalarField.constant(unit_square) + ScalarField.constant(other)

    def test_arithmetic(self, unit_square):
        f = ScalarField.constant(unit_square, 2.0)
        g = 1.0 - f * 3.0 + f / 2.0
        assert np.all(g.values == -4.0)
        assert (-f).min() == -2.0
        assert (f**2).sup() == 4.0


class TestGradient:
    def test_constant(self):
        f = ScalarField.constant(Grid.centered(9, 1.0), 3.5)
        grad = gradient(f)
        assert np.all(grad.x.values == 0.0)
        assert np.all(grad.y.values == 0.0)

    def test_linear_is_exact(self):
        f = ScalarField.from_function(Grid.centered(9, 1.0), lambda x, y: 3 * x - 2 * y)
        grad = gradient(f)
        np.testing.assert_allclose(grad.x.values, 3.0, atol=1e-12)
        np.testing.assert_allclose(grad.y.values, -2.0, atol=1e-12)

    def test_sine_taylor_remainder(self, at_center):
        g = Grid.centered(41, 2.0)
        f = ScalarField.from_function(g, lambda x, y: np.sin(x))
        assert abs(at_center(gradient(f).x) - 1.0) <= g.h**2 / 6 + 1e-15

    def test_second_order_convergence(self):
        errors = []
        for n in (32, 64, 128):
            g = Grid.periodic_square(n)
            X, Y = g.coords()
            f = ScalarField(g, np.sin(X) * np.cos(2 * Y))
            grad = gradient(f)
            errors.append(np.max(np.abs(grad.y.values + 2 * np.sin(X) * np.sin(2 * Y))))
        assert min(convergence_order(errors)) >= 1.9

    def test_one_sided_edges_are_second_order(self):
        errors = []
        for n in (21, 41, 81):
            g = Grid.centered(n, 1.0)
            f = ScalarField.from_function(g, lambda x, y: np.exp(x))
            errors.append(np.max(np.abs(gradient(f).x.values - np.exp(g.coords()[0]))))
        assert min(convergence_order(errors)) >= 1.9

    def test_linearity(self, periodic_grid, rng):
        f = ScalarField(periodic_grid, rng.normal(size=periodic_grid.shape))
        g = ScalarField(periodic_grid, rng.normal(size=periodic_grid.shape))
        combined = gradient(2.0 * f - 3.0 * g)
        expected = gradient(f).scale(2.0) - gradient(g).scale(3.0)
        np.testing.assert_allclose(combined.x.values, expected.x.values, atol=1e-12)
        np.testing.assert_allclose(combined.y.values, expected.y.values, atol=1e-12)


class TestHessian:
    def test_quadratic(self):
        f = ScalarField.from_function(Grid.centered(9, 1.0), lambda x, y: x**2 / 2)
        fxx, fxy, fyy = hessian(f)
        np.testing.assert_allclose(fxx.values, 1.0, atol=1e-12)
        np.testing.assert_allclose(fxy.values, 0.0, atol=1e-12)
        np.testing.assert_allclose(fyy.values, 0.0, atol=1e-12)

    def test_mixed_term(self):
        f = ScalarField.from_function(Grid.centered(9, 1.0), lambda x, y: x * y)
        _, fxy, _ = hessian(f)
        np.testing.assert_allclose(fxy.values, 1.0, atol=1e-12)

    def test_cosine(self, at_center):
        g = Grid.centered(41, 2.0)
        f = ScalarField.from_function(g, lambda x, y: np.cos(x))
        fxx, _, _ = hessian(f)
        assert at_center(fxx) == pytest.approx(-1.0, abs=g.h**2 / 12 + 1e-12)


class TestDivergence:
    def test_radial_field(self):
        g = Grid.centered(9, 1.0)
        X, Y = g.coords()
        div = divergence(VectorField(ScalarField(g, X), ScalarField(g, Y)))
        np.testing.assert_allclose(div.values, 2.0, atol=1e-12)

    def test_rotational_field(self):
        g = Grid.centered(9, 1.0)
        X, Y = g.coords()
        div = divergence(VectorField(ScalarField(g, -Y), ScalarField(g, X)))
        np.testing.assert_allclose(div.values, 0.0, atol=1e-12)

    def test_sine(self, at_center):
        g = Grid.centered(41, 2.0)
        X, _ = g.coords()
        div = divergence(VectorField(ScalarField(g, np.sin(X)), ScalarField.constant(g)))
        assert at_center(div) == pytest.approx(1.0, abs=g.h**2 / 6 + 1e-15)

    def test_div_grad_is_wide_laplacian_on_periodic_grids(self, periodic_grid, rng):
        f = ScalarField(periodic_grid, rng.normal(size=periodic_grid.shape))
        np.testing.assert_allclose(
            divergence(gradient(f)).values, laplacian_wide(f).values, atol=1e-10
        )


class TestIntegrate:
    def test_constant(self, unit_square):
        assert integrate(ScalarField.constant(unit_square, 1.0)) == pytest.approx(1.0, rel=1e-14)

    def test_linear_is_exact(self, unit_square):
        f = ScalarField.from_function(unit_square, lambda x, y: x)
        assert integrate(f) == pytest.approx(0.5, rel=1e-14)

    def test_gaussian(self):
        g = Grid.centered(12 * 64 + 1, 6.0)
        f = ScalarField.from_function(g, lambda x, y: np.exp(-(x**2) - y**2))
        assert integrate(f) == pytest.approx(math.pi * (1 - math.exp(-36)), abs=1e-6)

    def test_mask_excludes_points(self, unit_square):
        f = ScalarField.constant(unit_square, 1.0)
        half = integrate(f, lambda x, y: x <= 0.5 + 1e-9)
        assert 0.5 < half < 0.6

    def test_empty_mask_warns_and_returns_zero(self, unit_square):
        f = ScalarField.constant(unit_square, 1.0)
        with pytest.warns(EmptyMaskWarning):
            assert integrate(f, np.zeros(unit_square.shape, dtype=bool)) == 0.0

    def test_monotone(self, periodic_grid, rng):
        f = ScalarField(periodic_grid, rng.normal(size=periodic_grid.shape))
        g = f + ScalarField(periodic_grid, rng.uniform(0, 1, size=periodic_grid.shape))
        assert integrate(f) <= integrate(g)

    def test_periodic_weights_are_uniform(self):
        g = Grid.periodic_square(16)
        f = ScalarField.from_function(g, lambda x, y: np.sin(x) ** 2)
        assert integrate(f) == pytest.approx(2 * math.pi**2, rel=1e-12)


class TestMasks:
    def test_interior_mask(self):
        g = Grid.centered(9, 1.0)
        mask = interior_mask(g, 2)
        assert mask.sum() == 25
        assert not mask[1, 4]

    def test_interior_mask_periodic_is_everything(self, periodic_grid):
        assert interior_mask(periodic_grid, 4).all()

    def test_interior_mask_too_wide(self):
        with pytest.raises(GridError):
            interior_mask(Grid.centered(9, 1.0), 5)

    def test_core_mask_is_fixed_under_refinement(self):
        g = Grid.centered(21, 1.0)
        coarse = core_mask(g, 0.5)
        fine = core_mask(g.refine(), 0.5)
        assert np.array_equal(coarse, fine[::2, ::2])

    def test_disk_mask(self):
        g = Grid.centered(5, 1.0)
        assert disk_mask(g, 0.5).sum() == 5


class TestConvergenceOrder:
    def test_orders(self):
        assert convergence_order([4.0, 1.0, 0.25]) == pytest.approx([2.0, 2.0])

    def test_zero_errors(self):
        orders = convergence_order([1.0, 0.0, 0.0])
        assert orders[0] == math.inf
        assert math.isnan(orders[1])
