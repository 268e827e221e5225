import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from svpinn.norms import (
    GridMismatchError,
    ResidualField,
    SpectralCoefficients,
    UndefinedRatioError,
    boundary_penalty,
    correction_factor,
    corrected_phi_loss,
    discrete_inner,
    dual_norm_sq,
    empirical_phi_loss,
    empirical_phi_loss_variance,
    equivalence_constants,
    equivalence_ratio_bounds,
    expected_empirical_phi_loss,
    grid_phi_norm_sq,
    phi_norm_sq_exact,
    quadratic_form_loss,
)
from svpinn.sampler import sample_wm_batch
from svpinn.spectral import EigenBasis, GridSpec, eigenfunctions

PI2 = math.pi**2


def one(lam, a=1.0):
    return SpectralCoefficients([lam], [a])


class TestDualNorm:
    def test_single_pair(self):
        assert dual_norm_sq(one(PI2), 1.0) == pytest.approx(0.1013212, rel=1e-6)

    def test_zero_coefficients(self):
        assert dual_norm_sq(SpectralCoefficients([1.0, 2.0], [0.0, 0.0]), 1.0) == 0.0

    def test_s_zero_is_parseval(self):
        a = np.array([0.3, -1.2, 2.0])
        assert dual_norm_sq(SpectralCoefficients([1.0, 5.0, 9.0], a), 0.0) == pytest.approx(np.sum(a**2))

    def test_invalid(self):
        with pytest.raises(ValueError):
            SpectralCoefficients([0.0], [1.0])
        with pytest.raises(ValueError):
            SpectralCoefficients([1.0, 2.0], [1.0])


class TestPhiNorm:
    def test_single_pair(self):
        # 1/(1+pi^2) = 0.0919997...
        assert phi_norm_sq_exact(one(PI2), 1.0) == pytest.approx(1 / (1 + PI2), rel=1e-14)
        assert phi_norm_sq_exact(one(PI2), 1.0) == pytest.approx(0.0919997, abs=1e-7)

    def test_tau_scaling(self):
        c = SpectralCoefficients([PI2, 4 * PI2], [1.0, -0.5])
        assert phi_norm_sq_exact(c, 3.0) == pytest.approx(9 * phi_norm_sq_exact(c, 1.0), rel=1e-14)

    def test_rejects_nonpositive_tau(self):
        with pytest.raises(ValueError):
            phi_norm_sq_exact(one(PI2), 0.0)

    def test_monte_carlo_oracle(self):
        basis = EigenBasis.lowest(2, 5)
        a = np.array([1.0, -0.5, 0.3, 2.0, -1.1])
        tau = 1.5
        w = np.random.default_rng(0).standard_normal((1_000_000, 5))
        draws = (tau * (w * a / np.sqrt(1 + basis.eigenvalues)).sum(axis=1)) ** 2
        exact = phi_norm_sq_exact(SpectralCoefficients(basis.eigenvalues, a), tau)
        assert abs(draws.mean() / exact - 1) < 0.01


class TestEquivalence:
    def test_first_mode_constant(self):
        c, C = equivalence_constants([PI2], 1.0)
        assert C == pytest.approx(1.1013, abs=1e-4)

    def test_lower_constant_tends_to_inverse_tau_sq(self):
        lam = EigenBasis.lowest(1, 5000, max_component=5000).eigenvalues
        c, _ = equivalence_constants(lam, 1.0)
        assert 1.0 < c < 1.0 + 1e-6

    def test_single_mode_ratio_exact(self):
        lam = 13 * PI2
        ratio, c, C = equivalence_ratio_bounds(one(lam, 0.7), 2.0)
        assert ratio == pytest.approx((1 + lam) / (4 * lam), rel=1e-14)
        assert c == C == pytest.approx(ratio)

    def test_random_draws_contained(self):
        basis = EigenBasis.lowest(2, 100)
        rng = np.random.default_rng(5)
        for _ in range(1000):
            ratio, c, C = equivalence_ratio_bounds(SpectralCoefficients(basis.eigenvalues, rng.standard_normal(100)), 1.0)
            assert c * (1 - 1e-12) <= ratio <= C * (1 + 1e-12)

    def test_zero_coefficients_error(self):
        with pytest.raises(UndefinedRatioError):
            equivalence_ratio_bounds(SpectralCoefficients([1.0, 2.0], [0.0, 0.0]), 1.0)

    @settings(max_examples=50, deadline=None)
    @given(
        st.lists(st.floats(0.1, 1e5), min_size=1, max_size=20),
        st.floats(0.1, 10),
        st.integers(0, 2**32 - 1),
    )
    def test_containment_property(self, lam, tau, seed):
        a = np.random.default_rng(seed).standard_normal(len(lam))
        ratio, c, C = equivalence_ratio_bounds(SpectralCoefficients(lam, a), tau)
        assert c * (1 - 1e-9) <= ratio <= C * (1 + 1e-9)


class TestDiscreteInner:
    def test_first_eigenfunction_norm(self):
        g = GridSpec(1, 63)
        phi = eigenfunctions([(1,)], g.points())[:, 0]
        assert abs(discrete_inner(phi, phi, g) - 1) < 2e-3

    def test_zero(self):
        g = GridSpec(2, 5)
        assert discrete_inner(np.zeros(25), np.arange(25.0), g) == 0.0

    def test_discrete_orthonormality_of_in_band_modes(self):
        g = GridSpec(2, 7)
        phi = eigenfunctions(g.mode_indices(), g.points())
        gram = g.h**2 * phi.T @ phi
        np.testing.assert_allclose(gram, np.eye(g.size), atol=1e-12)

    def test_size_mismatch(self):
        with pytest.raises(ValueError):
            discrete_inner(np.zeros(3), np.zeros(4), GridSpec(1, 3))


def _residual(g, fn):
    return ResidualField(g, fn(g.points()))


def _smooth(x):
    return np.prod(np.sin(math.pi * x) * np.exp(x), axis=1)


class TestEmpiricalLoss:
    def test_zero_residual(self):
        g = GridSpec(1, 15)
        b = sample_wm_batch(g, 1.0, 10, 0)
        assert empirical_phi_loss(ResidualField(g, np.zeros(15)), b) == 0.0
        assert corrected_phi_loss(np.zeros(15), b) == 0.0

    def test_correction_factor(self):
        assert correction_factor(GridSpec(1, 3)) == pytest.approx(2.25)

    def test_grid_mismatch(self):
        b = sample_wm_batch(GridSpec(1, 15), 1.0, 4, 0)
        with pytest.raises(GridMismatchError):
            empirical_phi_loss(ResidualField(GridSpec(1, 7), np.ones(7)), b)
        with pytest.raises(GridMismatchError):
            empirical_phi_loss(np.ones(7), b)

    def test_residual_field_validation(self):
        with pytest.raises(ValueError):
            ResidualField(GridSpec(1, 3), np.ones(4))
        with pytest.raises(ValueError):
            ResidualField(GridSpec(1, 3), [1.0, np.nan, 0.0])

    @pytest.mark.parametrize("d, n", [(1, 9), (2, 5)])
    def test_matches_quadratic_form(self, d, n):
        g = GridSpec(d, n)
        r = _residual(g, _smooth)
        b = sample_wm_batch(g, 1.3, 40, 3)
        q = quadratic_form_loss(r, b)
        assert abs(empirical_phi_loss(r, b) - q) <= 1e-10 * q

    @pytest.mark.parametrize("d, n", [(1, 31), (2, 11)])
    def test_unbiased(self, d, n):
        g = GridSpec(d, n)
        r = _residual(g, _smooth)
        tau, N, batches = 1.0, 4, 10_000
        b = sample_wm_batch(g, tau, N * batches, 17)
        pair = b.values @ r.r / g.size
        per_batch = (pair**2).reshape(batches, N).mean(axis=1)
        expected = expected_empirical_phi_loss(r, g, tau)
        se = math.sqrt(empirical_phi_loss_variance(r, g, tau, N) / batches)
        assert abs(per_batch.mean() - expected) / se < 4
        # the closed form uses the correction factor consistently
        assert grid_phi_norm_sq(r, g, tau) == pytest.approx(correction_factor(g) * expected)

    def test_corrected_loss_approaches_phi_norm(self):
        # single eigenfunction residual: exact Phi-norm is 1/(1+lambda)
        fn = lambda x: eigenfunctions([(2,)], x)[:, 0]  # noqa: E731
        exact = 1.0 / (1.0 + 4 * PI2)
        errs = []
        for n in (15, 63):
            g = GridSpec(1, n)
            b = sample_wm_batch(g, 1.0, 200_000, n)
            errs.append(abs(corrected_phi_loss(_residual(g, fn), b) - exact) / exact)
        assert errs[1] < 0.02
        assert errs[1] < errs[0]


class TestBoundaryPenalty:
    def test_examples(self):
        assert boundary_penalty([1.0, 2.0], [1.0, 2.0]) == 0.0
        assert boundary_penalty([3.0, 3.0, 3.0], [1.0, 1.0, 1.0]) == 4.0
        assert boundary_penalty([1, -1, 2, 0], [0, 0, 0, 0]) == 1.5

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            boundary_penalty([1.0], [1.0, 2.0])

    def test_empty(self):
        assert boundary_penalty([], []) == 0.0
