import numpy as np
import pytest

from packcool.core.errors import InvalidArgumentError
from packcool.modules.grid import (
    GridState,
    SpatialGrid,
    fourier_initial_u,
    gradient_w,
    laplacian_matrix,
    laplacian_u,
)


class TestSpatialGrid:
    def test_nodes_start_one_step_from_the_wall(self):
        grid = SpatialGrid.uniform(4)
        assert np.allclose(grid.nodes, [0.25, 0.5, 0.75, 1.0])

    def test_spacing_must_cover_unit_domain(self):
        with pytest.raises(InvalidArgumentError):
            SpatialGrid(n_x=10, dx=0.2)

    def test_state_halves_must_match(self):
        with pytest.raises(InvalidArgumentError):
            GridState(u=np.zeros(3), w=np.zeros(4))

    def test_concat_round_trip(self):
        state = GridState(u=np.arange(3.0), w=-np.arange(3.0), t=0.5, step=2)
        back = GridState.from_concat(state.concat(), t=0.5, step=2)
        assert np.array_equal(back.u, state.u) and np.array_equal(back.w, state.w)
        assert back.is_finite()


class TestLaplacian:
    def test_constant_is_annihilated(self):
        assert np.array_equal(laplacian_u(np.full(4, 3.7), 0.3), np.zeros(4))

    def test_quadratic_profile_gives_two_inside(self):
        grid = SpatialGrid.uniform(20)
        result = laplacian_u(grid.nodes ** 2, grid.dx)
        assert np.allclose(result[1:-1], 2.0, atol=1e-8)

    def test_hand_expanded_ghosts(self):
        assert np.allclose(laplacian_u([1.0, 2.0, 4.0], 1.0), [1.0, 1.0, -2.0])

    def test_too_short(self):
        with pytest.raises(InvalidArgumentError):
            laplacian_u([1.0], 1.0)

    @pytest.mark.parametrize("closure", ["mirror", "quadratic"])
    def test_matrix_matches_function(self, closure, rng):
        u = rng.normal(size=12)
        dense = laplacian_matrix(12, 0.25, closure) @ u
        assert np.allclose(dense, laplacian_u(u, 0.25, closure), atol=1e-12)

    def test_quadratic_closure_ghosts(self):
        u = np.array([1.0, 4.0, 2.0])
        left = (4.0 * 1.0 - 4.0) / 3.0
        expected = [(4.0 - 2.0 + left), (2.0 - 8.0 + 1.0), (4.0 - 4.0 + 4.0)]
        assert np.allclose(laplacian_u(u, 1.0, "quadratic"), expected)

    @pytest.mark.parametrize("closure", ["mirror", "quadratic"])
    def test_linear_in_u(self, closure, rng):
        u, v = rng.normal(size=(2, 16))
        a, b = 1.7, -0.4
        lhs = laplacian_u(a * u + b * v, 1 / 16, closure)
        rhs = a * laplacian_u(u, 1 / 16, closure) + b * laplacian_u(v, 1 / 16, closure)
        assert np.allclose(lhs, rhs, rtol=0.0, atol=1e-12 * np.abs(rhs).max())

    def test_second_order_on_interior_rows(self):
        errors = []
        for n in (20, 40):
            grid = SpatialGrid.uniform(n)
            exact = -9.0 * np.sin(3.0 * grid.nodes)
            result = laplacian_u(np.sin(3.0 * grid.nodes), grid.dx)
            errors.append(np.abs(result - exact)[1:-1].max())
        assert 3.0 <= errors[0] / errors[1] <= 5.0

    def test_batched_rows(self, rng):
        u = rng.normal(size=(3, 6))
        batched = laplacian_u(u, 0.5)
        for row, out in zip(u, batched):
            assert np.allclose(laplacian_u(row, 0.5), out)


class TestGradient:
    def test_constant_with_matching_inflow(self):
        assert np.allclose(gradient_w([2.0, 2.0, 2.0], 2.0, 0.1), 0.0)

    def test_affine_profile_is_exact(self):
        grid = SpatialGrid.uniform(10)
        assert np.allclose(gradient_w(grid.nodes, 0.0, grid.dx), 1.0)

    def test_hand_computation(self):
        assert np.allclose(gradient_w([0.0, 2.0, 3.0], -1.0, 1.0), [1.5, 1.5, 1.0])

    def test_batched_inflow(self):
        w = np.array([[0.0, 2.0, 3.0], [1.0, 1.0, 1.0]])
        out = gradient_w(w, -1.0, 1.0)
        assert np.allclose(out[0], [1.5, 1.5, 1.0])
        assert np.allclose(out[1], [1.0, 0.0, 0.0])

    def test_affine_in_inflow(self, rng):
        w = rng.normal(size=12)
        shift = gradient_w(w, 2.5, 1 / 12) - gradient_w(w, 0.0, 1 / 12)
        assert np.allclose(shift, gradient_w(np.zeros(12), 2.5, 1 / 12), rtol=0.0, atol=1e-12)

    def test_linear_in_w_without_inflow(self, rng):
        w, v = rng.normal(size=(2, 12))
        lhs = gradient_w(3.0 * w - 0.5 * v, 0.0, 1 / 12)
        rhs = 3.0 * gradient_w(w, 0.0, 1 / 12) - 0.5 * gradient_w(v, 0.0, 1 / 12)
        assert np.allclose(lhs, rhs, rtol=0.0, atol=1e-12 * np.abs(rhs).max())

    def test_second_order_away_from_the_outlet(self):
        errors = []
        for n in (20, 40):
            grid = SpatialGrid.uniform(n)
            exact = 3.0 * np.cos(3.0 * grid.nodes)
            result = gradient_w(np.sin(3.0 * grid.nodes), np.sin(0.0), grid.dx)
            errors.append(np.abs(result - exact)[:-1].max())
        assert 3.0 <= errors[0] / errors[1] <= 5.0

    def test_too_short(self):
        with pytest.raises(InvalidArgumentError):
            gradient_w([1.0], 0.0, 1.0)


class TestFourierInitial:
    def test_constant_mode(self):
        grid = SpatialGrid.uniform(8)
        assert np.allclose(fourier_initial_u([1.5, 0.0, 0.0], grid), 1.5)

    def test_single_cosine(self):
        grid = SpatialGrid.uniform(8)
        assert np.allclose(fourier_initial_u([0.0, 1.0, 0.0], grid), np.cos(np.pi * grid.nodes))

    def test_wall_slopes_vanish_with_refinement(self):
        coeffs = [0.0, 1.0, 0.5]
        slopes = []
        for n in (50, 100):
            grid = SpatialGrid.uniform(n)
            u = fourier_initial_u(coeffs, grid)
            slopes.append((abs((u[1] - u[0]) / grid.dx), abs((u[-1] - u[-2]) / grid.dx)))
        for coarse, fine in zip(*slopes):
            assert 1.5 < coarse / fine < 2.5
