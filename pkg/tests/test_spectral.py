"""
Tests for the periodic grid, transforms and Fourier multipliers.
"""

import numpy as np
import pytest
from pydantic import ValidationError

from core.errors import ParameterError, StructuralError, SymmetryError
from core.field import band_limited_noise
from core.spectral import (
    DealiasPolicy,
    FourierField,
    NodalField,
    SpectralGrid,
    dealias,
    dealias_mask,
    dealiased_product,
    divergence,
    forward_transform,
    fractional_laplacian,
    gradient,
    hermitian_defect,
    inverse_transform,
    refine,
    resample,
    riesz_transform,
    spectral_seminorm,
)


def _nodal(grid, f):
    return NodalField(grid, f)


class TestSpectralGrid:
    """Grid construction and validation"""

    def test_create_broadcasts_scalars(self):
        grid = SpectralGrid.create(3, 16, 4.0)
        assert grid.dims == (16, 16, 16)
        assert grid.box_lengths == (4.0, 4.0, 4.0)
        assert grid.num_nodes == 16 ** 3
        assert grid.volume == pytest.approx(64.0)

    def test_rejects_odd_dims(self):
        with pytest.raises(ValidationError, match="even"):
            SpectralGrid.create(1, 33)

    def test_rejects_dimension_four(self):
        with pytest.raises(ValidationError, match="1, 2 or 3"):
            SpectralGrid(n=4, dims=(8,) * 4, box_lengths=(1.0,) * 4)

    def test_rejects_axis_count_mismatch(self):
        with pytest.raises(ValidationError, match="need 2 dims"):
            SpectralGrid(n=2, dims=(8,), box_lengths=(1.0, 1.0))

    def test_grid_is_frozen(self, grid1):
        with pytest.raises(ValidationError):
            grid1.n = 2

    def test_wavevector_convention(self):
        grid = SpectralGrid.create(1, 8, 4 * np.pi)
        assert list(grid.mode_indices[0]) == [0, 1, 2, 3, -4, -3, -2, -1]
        np.testing.assert_allclose(grid.wavevector[0], 0.5 * grid.mode_indices[0])
        assert grid.nyquist_masks[0][4]

    def test_refined_keeps_box(self, grid2):
        fine = grid2.refined(2)
        assert fine.dims == (64, 64)
        assert fine.box_lengths == grid2.box_lengths


class TestTransforms:
    """Forward/inverse transforms and Hermitian symmetry"""

    def test_roundtrip(self, grid2):
        rng = np.random.default_rng(0)
        f = _nodal(grid2, rng.standard_normal((3,) + grid2.shape))
        back = inverse_transform(forward_transform(f))
        np.testing.assert_allclose(back.values, f.values, atol=1e-13)

    def test_coefficient_is_mode_amplitude(self, grid1):
        x = grid1.coordinates()[0]
        F = forward_transform(_nodal(grid1, np.cos(3 * x)))
        assert F.coeffs[0, 3] == pytest.approx(0.5)
        assert F.coeffs[0, -3] == pytest.approx(0.5)

    def test_real_field_is_hermitian(self, grid2):
        rng = np.random.default_rng(1)
        F = forward_transform(_nodal(grid2, rng.standard_normal(grid2.shape)))
        assert hermitian_defect(F) < 1e-14

    def test_non_hermitian_rejected(self, grid1):
        coeffs = np.zeros(grid1.shape, dtype=complex)
        coeffs[1] = 1.0
        with pytest.raises(SymmetryError) as info:
            inverse_transform(FourierField(grid1, coeffs))
        assert info.value.violation == pytest.approx(1.0)

    def test_shape_mismatch(self, grid1):
        with pytest.raises(StructuralError):
            NodalField(grid1, np.zeros((3, 32)))


class TestMultipliers:
    """Half-Laplacian, Riesz transforms and derivatives on exact modes"""

    @pytest.mark.parametrize("k", [1, 3, 7])
    def test_half_laplacian_eigenvalue(self, grid1, k):
        x = grid1.coordinates()[0]
        F = forward_transform(_nodal(grid1, np.cos(k * x)))
        out = inverse_transform(fractional_laplacian(F, 0.5)).values[0]
        np.testing.assert_allclose(out, k * np.cos(k * x), atol=1e-12 * k)

    def test_eigenvalue_scales_with_box(self):
        grid = SpectralGrid.create(1, 64, 4 * np.pi)
        x = grid.coordinates()[0]
        F = forward_transform(_nodal(grid, np.sin(3 * 2 * np.pi * x / grid.box_lengths[0])))
        out = inverse_transform(fractional_laplacian(F, 0.5)).values[0]
        np.testing.assert_allclose(out, 1.5 * np.sin(1.5 * x), atol=1e-12)

    def test_hilbert_transform_of_cosine(self, grid1):
        x = grid1.coordinates()[0]
        F = forward_transform(_nodal(grid1, np.cos(5 * x)))
        out = inverse_transform(riesz_transform(F, 0)).values[0]
        np.testing.assert_allclose(out, np.sin(5 * x), atol=1e-13)

    def test_riesz_axis_out_of_range(self, grid1):
        F = forward_transform(_nodal(grid1, np.zeros(grid1.shape)))
        with pytest.raises(ParameterError):
            riesz_transform(F, 1)

    def test_half_laplacian_factorizes_through_riesz(self, grid2):
        """(-Delta)^(1/2) = sum_j R_j d_j on band-limited fields"""
        rng = np.random.default_rng(2)
        for _ in range(100):
            F = forward_transform(band_limited_noise(grid2, 1, 6, rng))
            direct = fractional_laplacian(F, 0.5).coeffs
            composed = sum(riesz_transform(g, j).coeffs for j, g in enumerate(gradient(F)))
            scale = np.max(np.abs(direct))
            assert np.max(np.abs(direct - composed)) <= 1e-12 * scale

    def test_divergence_of_gradient_is_laplacian(self, grid2):
        rng = np.random.default_rng(3)
        F = forward_transform(band_limited_noise(grid2, 2, 5, rng))
        lap = divergence(gradient(F))
        expected = fractional_laplacian(F, 1.0).scale(-1.0)
        np.testing.assert_allclose(lap.coeffs, expected.coeffs, atol=1e-12)

    def test_divergence_needs_one_field_per_axis(self, grid2):
        F = forward_transform(_nodal(grid2, np.zeros(grid2.shape)))
        with pytest.raises(StructuralError):
            divergence([F])

    def test_semigroup(self, grid2):
        """(-Delta)^s1 (-Delta)^s2 = (-Delta)^(s1 + s2)"""
        rng = np.random.default_rng(6)
        F = forward_transform(band_limited_noise(grid2, 1, 6, rng))
        for s1, s2 in [(0.5, 0.5), (0.25, 0.75), (0.5, 1.0)]:
            composed = fractional_laplacian(fractional_laplacian(F, s1), s2).coeffs
            direct = fractional_laplacian(F, s1 + s2).coeffs
            assert np.max(np.abs(composed - direct)) <= 1e-12 * np.max(np.abs(direct))

    def test_riesz_squares_sum_to_minus_identity(self, grid2):
        rng = np.random.default_rng(7)
        F = forward_transform(band_limited_noise(grid2, 1, 6, rng))
        total = sum(riesz_transform(riesz_transform(F, j), j).coeffs for j in range(2))
        assert np.max(np.abs(total + F.coeffs)) <= 1e-12 * np.max(np.abs(F.coeffs))

    def test_multipliers_are_linear(self, grid2):
        rng = np.random.default_rng(8)
        F = forward_transform(band_limited_noise(grid2, 1, 6, rng))
        G = forward_transform(band_limited_noise(grid2, 1, 6, rng))
        combined = F.scale(0.3) + G.scale(-1.7)
        operators = [
            lambda H: fractional_laplacian(H, 0.5),
            lambda H: fractional_laplacian(H, 1.5),
            lambda H: riesz_transform(H, 0),
            lambda H: riesz_transform(H, 1),
            lambda H: gradient(H)[1],
        ]
        for op in operators:
            expected = 0.3 * op(F).coeffs - 1.7 * op(G).coeffs
            out = op(combined).coeffs
            assert np.max(np.abs(out - expected)) <= 1e-12 * np.max(np.abs(expected))

    def test_adjoints(self, grid2):
        """(-Delta)^s is self-adjoint and R_j skew-adjoint in the nodal inner product"""
        rng = np.random.default_rng(9)
        f = band_limited_noise(grid2, 1, 6, rng)
        g = band_limited_noise(grid2, 1, 6, rng)
        F, G = forward_transform(f), forward_transform(g)

        def inner(a, B):
            values = inverse_transform(B).values
            return float(np.sum(a.values * values)), float(np.linalg.norm(a.values) * np.linalg.norm(values))

        for s in (0.25, 0.5, 1.0):
            lhs, scale = inner(f, fractional_laplacian(G, s))
            rhs, _ = inner(g, fractional_laplacian(F, s))
            assert abs(lhs - rhs) <= 1e-12 * scale
        for j in range(2):
            lhs, scale = inner(f, riesz_transform(G, j))
            rhs, _ = inner(g, riesz_transform(F, j))
            assert abs(lhs + rhs) <= 1e-12 * scale

    def test_nonpositive_order_rejected(self, grid1):
        F = forward_transform(_nodal(grid1, np.zeros(grid1.shape)))
        with pytest.raises(ParameterError):
            fractional_laplacian(F, 0.0)

    def test_seminorm_of_single_mode(self, grid1):
        """|cos kx|^2_{H^s} = pi k^(2s) on [0, 2 pi)"""
        x = grid1.coordinates()[0]
        F = forward_transform(_nodal(grid1, np.cos(3 * x)))
        assert spectral_seminorm(F, 0.5) == pytest.approx(np.sqrt(3 * np.pi), rel=1e-13)
        assert spectral_seminorm(F, 0.0) == pytest.approx(np.sqrt(np.pi), rel=1e-13)

    def test_seminorm_ignores_mean(self, grid1):
        F = forward_transform(_nodal(grid1, np.full(grid1.shape, 5.0)))
        assert spectral_seminorm(F, 1.0) == 0.0


class TestDealiasing:
    """Truncation masks and refinement"""

    def test_cubic_cutoff(self):
        grid = SpectralGrid.create(1, 32)
        mask = dealias_mask(grid, DealiasPolicy.CUBIC)
        assert mask[7] and not mask[8]
        assert mask[-7] and not mask[-8]

    def test_quadratic_cutoff(self):
        grid = SpectralGrid.create(1, 32)
        mask = dealias_mask(grid, DealiasPolicy.QUADRATIC)
        assert mask[10] and not mask[11]

    def test_none_is_identity(self, grid1):
        rng = np.random.default_rng(4)
        F = forward_transform(_nodal(grid1, rng.standard_normal(grid1.shape)))
        assert dealias_mask(grid1, DealiasPolicy.NONE) is None
        assert dealias(F, DealiasPolicy.NONE) is F

    def test_dealias_zeroes_high_modes(self, grid1):
        x = grid1.coordinates()[0]
        F = forward_transform(_nodal(grid1, np.cos(2 * x) + np.cos(20 * x)))
        out = inverse_transform(dealias(F)).values[0]
        np.testing.assert_allclose(out, np.cos(2 * x), atol=1e-13)

    def test_refine_preserves_polynomial(self):
        coarse = SpectralGrid.create(1, 16)
        x = coarse.coordinates()[0]
        F = refine(forward_transform(_nodal(coarse, np.cos(3 * x) + 0.5 * np.sin(5 * x))))
        fine_x = F.grid.coordinates()[0]
        np.testing.assert_allclose(inverse_transform(F).values[0],
                                   np.cos(3 * fine_x) + 0.5 * np.sin(5 * fine_x), atol=1e-13)

    def test_refine_splits_nyquist(self):
        coarse = SpectralGrid.create(1, 16)
        x = coarse.coordinates()[0]
        F = refine(forward_transform(_nodal(coarse, np.cos(8 * x))))
        fine_x = F.grid.coordinates()[0]
        np.testing.assert_allclose(inverse_transform(F).values[0], np.cos(8 * fine_x), atol=1e-13)

    def test_refine_keeps_seminorm(self, grid2):
        rng = np.random.default_rng(5)
        F = forward_transform(band_limited_noise(grid2, 1, 4, rng))
        assert spectral_seminorm(refine(F), 0.5) == pytest.approx(spectral_seminorm(F, 0.5), rel=1e-12)

    @pytest.mark.parametrize("dims, policy, expected", [
        (32, DealiasPolicy.QUADRATIC, 48),
        (32, DealiasPolicy.CUBIC, 64),
        (30, DealiasPolicy.QUADRATIC, 46),
        (32, DealiasPolicy.NONE, 32),
    ])
    def test_padded_grid(self, dims, policy, expected):
        grid = SpectralGrid.create(2, dims, 3.0)
        padded = grid.padded(policy)
        assert padded.dims == (expected, expected)
        assert padded.box_lengths == grid.box_lengths

    def test_cubic_product_is_alias_free(self):
        """cos^3 = 3/4 cos + 1/4 cos 3; the tripled mode is beyond the grid"""
        grid = SpectralGrid.create(1, 32)
        x = grid.coordinates()[0]
        F = forward_transform(_nodal(grid, np.cos(12 * x)))
        cube = dealiased_product(lambda f: f ** 3, [F], DealiasPolicy.CUBIC)
        np.testing.assert_allclose(inverse_transform(cube).values[0], 0.75 * np.cos(12 * x), atol=1e-12)
        assert abs(cube.coeffs[0, 4]) < 1e-12
        assert abs(cube.coeffs[0, -4]) < 1e-12

    def test_unpadded_cube_aliases(self):
        grid = SpectralGrid.create(1, 32)
        x = grid.coordinates()[0]
        F = forward_transform(_nodal(grid, np.cos(12 * x)))
        cube = dealiased_product(lambda f: f ** 3, [F], DealiasPolicy.NONE)
        # cos 36x folds onto k = 4 on 32 nodes
        assert abs(cube.coeffs[0, 4]) == pytest.approx(0.125, abs=1e-12)

    def test_quadratic_product_is_alias_free(self):
        grid = SpectralGrid.create(1, 32)
        x = grid.coordinates()[0]
        F = forward_transform(_nodal(grid, np.cos(10 * x)))
        G = forward_transform(_nodal(grid, np.sin(10 * x)))
        square = dealiased_product(np.multiply, [F, F], DealiasPolicy.QUADRATIC)
        np.testing.assert_allclose(inverse_transform(square).values[0], 0.5, atol=1e-12)
        mixed = dealiased_product(np.multiply, [F, G], DealiasPolicy.QUADRATIC)
        np.testing.assert_allclose(inverse_transform(mixed).values[0], 0.0, atol=1e-12)

    def test_product_of_vector_components(self, grid1):
        rng = np.random.default_rng(10)
        A = forward_transform(band_limited_noise(grid1, 3, 4, rng))
        B = forward_transform(band_limited_noise(grid1, 3, 4, rng))
        exact = dealiased_product(lambda a, b: np.cross(a, b, axis=0), [A, B], DealiasPolicy.NONE)
        padded = dealiased_product(lambda a, b: np.cross(a, b, axis=0), [A, B], DealiasPolicy.CUBIC)
        # resolved inputs: padding changes nothing
        np.testing.assert_allclose(padded.coeffs, exact.coeffs, atol=1e-13)

    def test_resample_truncates_back(self, grid2):
        rng = np.random.default_rng(11)
        F = forward_transform(band_limited_noise(grid2, 2, 6, rng))
        back = resample(refine(F), grid2)
        np.testing.assert_allclose(back.coeffs, F.coeffs, atol=1e-15)

    def test_resample_drops_nyquist(self):
        grid = SpectralGrid.create(1, 16)
        x = grid.coordinates()[0]
        fine = refine(forward_transform(_nodal(grid, np.cos(8 * x) + np.cos(3 * x))))
        back = resample(fine, grid)
        np.testing.assert_allclose(inverse_transform(back).values[0], np.cos(3 * x), atol=1e-13)

    def test_resample_needs_same_box(self, grid1):
        F = forward_transform(_nodal(grid1, np.zeros(grid1.shape)))
        with pytest.raises(StructuralError):
            resample(F, SpectralGrid.create(1, 128, 1.0))
