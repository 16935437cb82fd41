"""
Tests for norms, energies and commutators.
"""

import numpy as np
import pytest

from core.errors import ParameterError, StructuralError, UnsupportedTargetError
from core.field import (
    band_limited_noise,
    constant_field,
    cross,
    dot,
    make_great_circle,
    make_perturbation,
    rotate,
)
from core.norms import (
    bmo_norm,
    commutator_quarter,
    commutator_riesz,
    distance_from_base,
    energy,
    energy_eps,
    fractional_commutator,
    grad_seminorm,
    gradient_lp_norm,
    hessian_lp_norm,
    lp_norm,
    riesz_commutator,
    sobolev_norm,
    sobolev_seminorm,
)
from core.spectral import (
    DealiasPolicy,
    NodalField,
    dealiased_product,
    forward_transform,
    fractional_laplacian,
    inverse_transform,
)

from .conftest import NORTH


class TestNorms:
    """Lebesgue, Sobolev and BMO norms on explicit functions"""

    def test_rotation_map_energy(self, rotation_map):
        assert energy(rotation_map) == pytest.approx(np.pi, rel=1e-13)
        assert sobolev_seminorm(rotation_map, 0.5) ** 2 == pytest.approx(2 * np.pi, rel=1e-13)

    def test_constant_has_no_energy(self, grid1):
        u = constant_field(grid1, NORTH)
        assert energy(u) == 0.0
        assert grad_seminorm(u) == 0.0
        assert distance_from_base(u) == 0.0

    def test_lp_norms_of_constant(self, grid1):
        u = constant_field(grid1, NORTH)
        assert lp_norm(u, 1) == pytest.approx(2 * np.pi)
        assert lp_norm(u, 2) == pytest.approx(np.sqrt(2 * np.pi))
        assert lp_norm(u, np.inf) == 1.0

    def test_lp_exponent_below_one(self, grid1):
        with pytest.raises(ParameterError, match="p=0.5"):
            lp_norm(constant_field(grid1, NORTH), 0.5)

    def test_derivative_norms_of_sine(self, grid1):
        x = grid1.coordinates()[0]
        f = NodalField(grid1, np.sin(x))
        assert gradient_lp_norm(f, 2) == pytest.approx(np.sqrt(np.pi), rel=1e-12)
        assert hessian_lp_norm(f, 2) == pytest.approx(np.sqrt(np.pi), rel=1e-12)
        assert gradient_lp_norm(f, np.inf) == pytest.approx(1.0, rel=1e-12)

    def test_sobolev_norm_adds_l2(self, grid1):
        x = grid1.coordinates()[0]
        f = NodalField(grid1, np.cos(2 * x))
        # |f|_L2^2 = pi, |f|_H1-dot^2 = 4 pi
        assert sobolev_norm(f, 1.0) == pytest.approx(np.sqrt(5 * np.pi), rel=1e-12)

    def test_grad_seminorm_of_rotation_map(self, rotation_map):
        assert grad_seminorm(rotation_map) == pytest.approx(np.sqrt(2 * np.pi), rel=1e-12)

    def test_bmo_of_step(self, grid1):
        values = np.where(np.arange(64) < 32, 1.0, -1.0)
        assert bmo_norm(NodalField(grid1, values)) == pytest.approx(1.0)

    def test_bmo_of_constant(self, grid2):
        assert bmo_norm(NodalField(grid2, np.full(grid2.shape, 3.0))) == pytest.approx(0.0, abs=1e-15)

    def test_bmo_bounded_by_sup(self, grid2):
        rng = np.random.default_rng(0)
        f = NodalField(grid2, rng.uniform(-1.0, 1.0, grid2.shape))
        assert 0.0 < bmo_norm(f) <= 2.0

    def test_bmo_needs_scalar(self, small_u):
        with pytest.raises(StructuralError):
            bmo_norm(small_u)

    @pytest.mark.parametrize("fixture", ["grid1", "grid2"])
    def test_bmo_invariant_under_node_shifts(self, request, fixture):
        grid = request.getfixturevalue(fixture)
        rng = np.random.default_rng(12)
        values = rng.uniform(-1.0, 1.0, grid.shape)
        reference = bmo_norm(NodalField(grid, values))
        for shift in (1, 3):
            shifted = np.roll(values, shift, axis=0)
            assert bmo_norm(NodalField(grid, shifted)) == pytest.approx(reference, rel=1e-12)


class TestEnergy:
    """Half-Dirichlet energy and its regularization"""

    def test_zero_regularization_is_energy(self, small_u):
        assert energy_eps(small_u, 0.0, 1) == energy(small_u)

    def test_regularization_adds_dirichlet_term(self, rotation_map):
        # |grad u|_L2^2 = 2 pi for the rotation map
        assert energy_eps(rotation_map, 0.1, 1) == pytest.approx(np.pi + 0.1 * np.pi, rel=1e-12)

    @pytest.mark.parametrize("nu", [0, 3])
    def test_order_out_of_range(self, small_u, nu):
        with pytest.raises(ParameterError, match="nu="):
            energy_eps(small_u, 0.1, nu)

    def test_negative_regularization(self, small_u):
        with pytest.raises(ParameterError):
            energy_eps(small_u, -1.0, 1)

    def test_great_circle_energy(self, grid1):
        """E ~ a^2 pi / 2 for theta = a sin x"""
        x = grid1.coordinates()[0]
        u = make_great_circle(grid1, 0.1 * np.sin(x))
        assert energy(u) == pytest.approx(0.01 * np.pi / 2, rel=0.02)

    def test_great_circle_regularization_term(self, grid1):
        """eps/2 |grad u|^2 = eps/2 a^2 pi since |u'| = |theta'|"""
        x = grid1.coordinates()[0]
        a = 0.01
        u = make_great_circle(grid1, a * np.sin(x))
        for eps in (1e-3, 2e-3, 4e-3):
            assert energy_eps(u, eps, 1) - energy(u) == pytest.approx(0.5 * eps * a ** 2 * np.pi, rel=1e-10)

    def test_energy_invariant_under_rotation(self, small_u2):
        c, s = np.cos(1.1), np.sin(1.1)
        rotation = np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])
        assert energy(rotate(small_u2, rotation)) == pytest.approx(energy(small_u2), rel=1e-12)

    def test_perturbation_norm_is_linear_in_amplitude(self, grid1):
        slopes = [make_perturbation(grid1, NORTH, a, 2, seed=5)[1] / a for a in (0.01, 0.02, 0.04)]
        assert max(slopes) / min(slopes) < 1.05


class TestCommutators:
    """Riesz and fractional commutators"""

    def test_riesz_commutator_with_constant(self, grid1):
        rng = np.random.default_rng(1)
        b = NodalField(grid1, np.full(grid1.shape, 2.5))
        g = NodalField(grid1, rng.standard_normal(grid1.shape))
        assert np.max(np.abs(riesz_commutator(b, g, 0).values)) < 1e-13

    def test_fractional_commutator_with_constant(self, small_u):
        a = NodalField(small_u.grid, np.full(small_u.grid.shape, -1.5))
        out = fractional_commutator(a, small_u)
        assert np.max(np.abs(out.values)) < 1e-13

    def test_fractional_commutator_needs_scalar(self, small_u):
        with pytest.raises(StructuralError):
            fractional_commutator(small_u, small_u)

    def test_quarter_commutator_needs_three_components(self, grid1):
        a = NodalField(grid1, np.ones((2,) + grid1.shape))
        with pytest.raises(UnsupportedTargetError):
            commutator_quarter(a, a)

    def test_quarter_commutator_with_constant(self, small_u):
        a = constant_field(small_u.grid, (0.6, 0.0, 0.8))
        out = commutator_quarter(a, small_u)
        assert np.max(np.abs(out.values)) < 1e-13

    def test_per_pair_sums_to_total(self, small_u2):
        pairs = commutator_riesz(small_u2, small_u2, per_pair=True)
        assert sorted(pairs) == [(j, k) for j in range(2) for k in range(3)]
        total = commutator_riesz(small_u2, small_u2)
        summed = sum(p.values for p in pairs.values())
        np.testing.assert_allclose(total.values, summed, atol=1e-14)

    def test_component_mismatch(self, small_u):
        b = NodalField(small_u.grid, np.ones((2,) + small_u.grid.shape))
        with pytest.raises(StructuralError):
            commutator_riesz(b, small_u)

    @pytest.mark.parametrize("fixture", ["small_u", "small_u2"])
    def test_structure_identity(self, request, fixture, exact_products):
        """u . (-Delta)^(1/2) u = -[R, u] grad u for sphere-valued u"""
        u = request.getfixturevalue(fixture)
        lhs = dot(u, inverse_transform(fractional_laplacian(forward_transform(u), 0.5))).values
        rhs = -commutator_riesz(u, u, policy=exact_products).values
        assert np.max(np.abs(lhs - rhs)) < 1e-8

    @pytest.mark.parametrize("kb, expected", [(1, lambda x: 0.0 * x), (2, np.sin)])
    def test_hilbert_commutator_two_modes(self, grid1, kb, expected):
        """[H, cos(kb x)] d/dx sin x; the commutator vanishes unless kb > 1"""
        x = grid1.coordinates()[0]
        b = NodalField(grid1, np.cos(kb * x))
        f = NodalField(grid1, np.sin(x))
        out = commutator_riesz(b, f).values[0]
        np.testing.assert_allclose(out, expected(x), atol=1e-10)

    def test_riesz_commutator_is_bilinear(self, grid2):
        rng = np.random.default_rng(13)
        b1, b2 = (band_limited_noise(grid2, 1, 4, rng) for _ in range(2))
        f = band_limited_noise(grid2, 3, 4, rng)
        combined = NodalField(grid2, 2.0 * b1.values - 0.5 * b2.values)
        expected = 2.0 * commutator_riesz(b1, f).values - 0.5 * commutator_riesz(b2, f).values
        np.testing.assert_allclose(commutator_riesz(combined, f).values, expected, atol=1e-10)

    def test_quarter_commutator_two_modes(self, grid1):
        """a = cos x e3, f = cos 2x e1: only the e2 component survives"""
        x = grid1.coordinates()[0]
        zero = np.zeros_like(x)
        a = NodalField(grid1, np.stack([zero, zero, np.cos(x)]))
        f = NodalField(grid1, np.stack([np.cos(2 * x), zero, zero]))
        out = commutator_quarter(a, f).values
        expected = 0.5 * (1 - np.sqrt(2)) * np.cos(x) + 0.5 * (np.sqrt(3) - np.sqrt(2)) * np.cos(3 * x)
        np.testing.assert_allclose(out[1], expected, atol=1e-10)
        np.testing.assert_allclose(out[0], 0.0, atol=1e-10)
        np.testing.assert_allclose(out[2], 0.0, atol=1e-10)

    def test_skew_structure(self, grid1):
        """a x (-Delta)^(1/2) v = (-Delta)^(1/4)(a x (-Delta)^(1/4) v) - [(-Delta)^(1/4), Omega_a] (-Delta)^(1/4) v"""
        rng = np.random.default_rng(14)
        a = band_limited_noise(grid1, 3, 4, rng)
        V = forward_transform(band_limited_noise(grid1, 3, 4, rng))
        quarter_v = fractional_laplacian(V, 0.25)
        lhs = cross(a, inverse_transform(fractional_laplacian(V, 0.5))).values

        def cross_values(p, q):
            return np.cross(p, q, axis=0)

        product = dealiased_product(cross_values, [forward_transform(a), quarter_v], DealiasPolicy.CUBIC)
        first = inverse_transform(fractional_laplacian(product, 0.25)).values
        rhs = first - commutator_quarter(a, inverse_transform(quarter_v)).values
        assert np.max(np.abs(lhs - rhs)) <= 1e-10 * np.max(np.abs(lhs))
