import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from svpinn.spectral import (
    EigenBasis,
    GridSpec,
    InvalidIndexError,
    OutOfBandError,
    discrete_eigenvalue,
    discrete_eigenvalues,
    eigenfunctions,
    eigenvalue,
    evaluate_eigenfunction,
    fit_weyl_constants,
    grid_eigenvalues,
    select_daff_indices,
)

PI2 = math.pi**2


class TestEigenvalue:
    @pytest.mark.parametrize(
        "k, expected",
        [((1,), PI2), ((1, 1), 2 * PI2), ((1, 2, 3), 14 * PI2)],
    )
    def test_closed_form(self, k, expected):
        assert eigenvalue(k) == pytest.approx(expected, rel=1e-14)
        assert EigenBasis(len(k), [k]).eigenvalue(k) == pytest.approx(expected, rel=1e-14)

    def test_examples_numeric(self):
        assert eigenvalue((1,)) == pytest.approx(9.8696044, abs=1e-7)
        assert eigenvalue((1, 1)) == pytest.approx(19.7392088, abs=1e-7)
        assert eigenvalue((1, 2, 3)) == pytest.approx(138.1744, abs=1e-4)

    @pytest.mark.parametrize("k", [(0,), (1, 0), (-1, 2), (2, 3, -4)])
    def test_invalid_index(self, k):
        with pytest.raises(InvalidIndexError):
            eigenvalue(k)

    def test_dimension_above_three_rejected(self):
        with pytest.raises(ValueError):
            eigenvalue((1, 1, 1, 1))


class TestEigenfunction:
    def test_examples(self):
        assert evaluate_eigenfunction((1,), 0.5) == pytest.approx(math.sqrt(2), rel=1e-15)
        assert evaluate_eigenfunction((3, 7), (0.0, 0.4)) == 0.0
        assert evaluate_eigenfunction((1, 1), (0.5, 0.5)) == pytest.approx(2.0, rel=1e-15)

    def test_basis_evaluate_matches_function(self):
        b = EigenBasis.lowest(2, 5)
        x = np.array([[0.2, 0.7], [0.9, 0.1]])
        for k in b.indices:
            np.testing.assert_allclose(b.evaluate(k, x), eigenfunctions([k], x)[:, 0])
        assert b.evaluate_all(x).shape == (2, 5)

    @pytest.mark.parametrize("d", [1, 2, 3])
    def test_vanishes_on_boundary(self, d):
        rng = np.random.default_rng(d)
        x = rng.uniform(size=(200, d))
        axis = rng.integers(0, d, 200)
        x[np.arange(200), axis] = rng.integers(0, 2, 200)
        vals = EigenBasis.lowest(d, 10).evaluate_all(x)
        assert np.max(np.abs(vals)) <= 1e-13

    def test_orthonormal_1d(self):
        g = GridSpec(1, 4095)
        phi = EigenBasis.lowest(1, 10).evaluate_all(g.points())
        gram = g.h * phi.T @ phi
        np.testing.assert_allclose(gram, np.eye(10), atol=1e-6)

    def test_orthonormal_2d(self):
        g = GridSpec(2, 511)
        phi = EigenBasis.lowest(2, 10).evaluate_all(g.points())
        gram = g.h**2 * phi.T @ phi
        np.testing.assert_allclose(gram, np.eye(10), atol=1e-4)


class TestDiscreteEigenvalue:
    def test_examples(self):
        assert discrete_eigenvalue(GridSpec(1, 1), (1,)) == pytest.approx(8.0, rel=1e-14)
        assert discrete_eigenvalue(GridSpec(1, 3), (1,)) == pytest.approx(64 * math.sin(math.pi / 8) ** 2, rel=1e-14)
        assert discrete_eigenvalue(GridSpec(1, 3), (1,)) == pytest.approx(9.3726, abs=1e-4)

    def test_gap_matches_leading_term(self):
        g = GridSpec(1, 3)
        gap = PI2 - discrete_eigenvalue(g, (1,))
        assert gap == pytest.approx(0.497, abs=1e-3)
        assert gap == pytest.approx(g.h**2 / 12 * PI2**2, rel=0.05)

    def test_out_of_band(self):
        with pytest.raises(OutOfBandError):
            discrete_eigenvalue(GridSpec(2, 4), (5, 1))

    def test_converges_with_slope_two(self):
        ns = [15, 31, 63, 127, 255]
        for k in [(1,), (3,), (2, 5)]:
            hs = [GridSpec(len(k), n).h for n in ns]
            errs = [eigenvalue(k) - discrete_eigenvalue(GridSpec(len(k), n), k) for n in ns]
            slope = np.polyfit(np.log(hs), np.log(errs), 1)[0]
            assert abs(slope - 2.0) <= 0.1

    @settings(max_examples=60, deadline=None)
    @given(st.integers(1, 3), st.integers(1, 40), st.data())
    def test_below_continuum(self, d, n, data):
        k = tuple(data.draw(st.integers(1, n)) for _ in range(d))
        assert discrete_eigenvalue(GridSpec(d, n), k) <= eigenvalue(k)

    def test_grid_eigenvalues_layout(self):
        g = GridSpec(2, 5)
        lam = grid_eigenvalues(g)
        assert lam.shape == (5, 5)
        np.testing.assert_allclose(lam.ravel(), discrete_eigenvalues(g, g.mode_indices()))


class TestGridSpec:
    def test_basic(self):
        g = GridSpec(2, 3)
        assert g.h == 0.25
        assert g.size == 9
        pts = g.points()
        assert pts.shape == (9, 2)
        # row-major: second coordinate runs fastest
        np.testing.assert_allclose(pts[:3], [[0.25, 0.25], [0.25, 0.5], [0.25, 0.75]])

    def test_invalid(self):
        with pytest.raises(ValueError):
            GridSpec(1, 0)
        with pytest.raises(ValueError):
            GridSpec(4, 3)

    def test_refined_contains_original_nodes(self):
        g = GridSpec(1, 511)
        fine = g.refined(2)
        assert fine.n == 1023
        assert set(np.round(g.axis() * 1024).astype(int)) <= set(np.round(fine.axis() * 1024).astype(int))


class TestDaffSelection:
    def test_examples(self):
        np.testing.assert_array_equal(select_daff_indices(1, 3, 64), [[1], [2], [3]])
        np.testing.assert_array_equal(select_daff_indices(2, 4, 64), [[1, 1], [1, 2], [2, 1], [2, 2]])
        np.testing.assert_array_equal(select_daff_indices(2, 1, 1), [[1, 1]])

    def test_too_many(self):
        with pytest.raises(ValueError):
            select_daff_indices(2, 5, 2)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(1, 3), st.integers(1, 60), st.integers(2, 8))
    def test_smallest_eigenvalues_in_box(self, d, m, cap):
        m = min(m, cap**d)
        idx = select_daff_indices(d, m, cap)
        assert idx.shape == (m, d)
        assert idx.max() <= cap and idx.min() >= 1
        sq = (idx**2).sum(1)
        assert np.all(np.diff(sq) >= 0)
        everything = np.array(np.meshgrid(*[np.arange(1, cap + 1)] * d, indexing="ij")).reshape(d, -1).T
        all_sq = np.sort((everything**2).sum(1))
        np.testing.assert_array_equal(np.sort(sq), all_sq[:m])

    def test_basis_is_sorted_and_immutable(self):
        b = EigenBasis(2, [[3, 1], [1, 1], [1, 3], [2, 2]])
        np.testing.assert_array_equal(b.indices, [[1, 1], [2, 2], [1, 3], [3, 1]])
        assert np.all(np.diff(b.eigenvalues) >= 0)
        with pytest.raises(ValueError):
            b.indices[0, 0] = 5


class TestWeyl:
    @pytest.mark.parametrize("d", [1, 2, 3])
    def test_constants_bracket_eigenvalues(self, d):
        c, C = fit_weyl_constants(d, 500)
        assert 0 < c <= C < np.inf
        b = EigenBasis.box(d, int(np.ceil(500 ** (1 / d))) + 1)
        lam = np.sort(b.eigenvalues)[:500]
        k = np.arange(1, 501) ** (2.0 / d)
        assert np.all(c * k <= lam * (1 + 1e-12))
        assert np.all(lam <= C * k * (1 + 1e-12))
