"""Spectral dual norms, the Phi-norm and its empirical grid estimator."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .sampler import TestFunctionBatch, dst1
from .spectral import GridSpec, grid_eigenvalues


class UndefinedRatioError(ValueError):
    """Norm ratio requested for an all-zero coefficient set."""


class GridMismatchError(ValueError):
    """Residual and test functions live on different grids."""


@dataclass(frozen=True)
class SpectralCoefficients:
    """Pairs ``(lambda_k, a_k)`` with ``a_k = R(phi_k)``."""

    eigenvalues: np.ndarray
    coefficients: np.ndarray

    def __post_init__(self):
        lam = np.asarray(self.eigenvalues, dtype=float).ravel()
        a = np.asarray(self.coefficients, dtype=float).ravel()
        if lam.shape != a.shape:
            raise ValueError("eigenvalues and coefficients must have the same length")
        if np.any(lam <= 0) or not np.all(np.isfinite(lam)):
            raise ValueError("eigenvalues must be finite and strictly positive")
        object.__setattr__(self, "eigenvalues", lam)
        object.__setattr__(self, "coefficients", a)


def dual_norm_sq(coeffs: SpectralCoefficients, s: float = 1.0) -> float:
    """Truncated ``||R||_{-s}^2 = sum_k lambda_k^{-s} a_k^2``."""
    return float(np.sum(coeffs.eigenvalues ** (-s) * coeffs.coefficients**2))


def phi_norm_sq_exact(coeffs: SpectralCoefficients, tau: float) -> float:
    """Truncated ``||R||_Phi^2 = tau^2 sum_k (1+lambda_k)^{-1} a_k^2``."""
    if not tau > 0:
        raise ValueError("tau must be positive")
    return float(tau**2 * np.sum(coeffs.coefficients**2 / (1.0 + coeffs.eigenvalues)))


def equivalence_constants(eigenvalues, tau: float) -> tuple[float, float]:
    """``inf`` and ``sup`` over the given modes of ``(1 + lambda)/(tau^2 lambda)``."""
    lam = np.asarray(eigenvalues, dtype=float)
    w = (1.0 + lam) / (tau**2 * lam)
    return float(w.min()), float(w.max())


def equivalence_ratio_bounds(coeffs: SpectralCoefficients, tau: float) -> tuple[float, float, float]:
    """Return ``(ratio, c, C)`` with ``ratio = ||R||_{-1}^2 / ||R||_Phi^2``.

    The ratio is a weighted mean of ``(1+lambda)/(tau^2 lambda)`` over the active
    modes, so ``c <= ratio <= C`` holds whenever some coefficient is nonzero.
    """
    if not np.any(coeffs.coefficients != 0):
        raise UndefinedRatioError("all coefficients are zero")
    c, C = equivalence_constants(coeffs.eigenvalues, tau)
    ratio = dual_norm_sq(coeffs, 1.0) / phi_norm_sq_exact(coeffs, tau)
    return ratio, c, C


@dataclass(frozen=True)
class ResidualField:
    """``L u - f`` sampled at the ``n^d`` interior nodes of ``grid``."""

    grid: GridSpec
    r: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.r, dtype=float).ravel()
        if r.size != self.grid.size:
            raise ValueError(f"residual has {r.size} entries, grid has {self.grid.size}")
        if not np.all(np.isfinite(r)):
            raise ValueError("residual contains non-finite values")
        object.__setattr__(self, "r", r)


def discrete_inner(u, v, grid: GridSpec) -> float:
    """Grid inner product ``h^d sum u v`` (pairwise summation)."""
    u = np.asarray(u, dtype=float).ravel()
    v = np.asarray(v, dtype=float).ravel()
    if u.size != grid.size or v.size != grid.size:
        raise ValueError(f"both inputs need {grid.size} entries, got {u.size} and {v.size}")
    return float(grid.h**grid.d * np.sum(u * v))


def _residual_vector(residual, batch: TestFunctionBatch) -> np.ndarray:
    if isinstance(residual, ResidualField):
        if residual.grid != batch.grid:
            raise GridMismatchError(f"residual grid {residual.grid} != batch grid {batch.grid}")
        return residual.r
    r = np.asarray(residual, dtype=float).ravel()
    if r.size != batch.grid.size:
        raise GridMismatchError(f"residual has {r.size} entries, batch grid has {batch.grid.size}")
    return r


def residual_pairings(residual, batch: TestFunctionBatch) -> np.ndarray:
    """Per-draw pairings ``(1/N_c) sum_i R(x_i) phi_j(x_i)``."""
    r = _residual_vector(residual, batch)
    return batch.values @ r / batch.grid.size


def empirical_phi_loss(residual, batch: TestFunctionBatch) -> float:
    """Mean over test functions of the squared residual pairing."""
    p = residual_pairings(residual, batch)
    return float(np.mean(p**2))


def correction_factor(grid: GridSpec) -> float:
    """``(n^2 h)^d``, mapping the grid loss onto the Phi-norm scale."""
    return (grid.n**2 * grid.h) ** grid.d


def corrected_phi_loss(residual, batch: TestFunctionBatch) -> float:
    return correction_factor(batch.grid) * empirical_phi_loss(residual, batch)


def quadratic_form_loss(residual, batch: TestFunctionBatch) -> float:
    """Same loss written as ``r^T (sum_j phi_j phi_j^T) r / (N N_c^2)``; dense, small grids only."""
    r = _residual_vector(residual, batch)
    weights = batch.values.T @ batch.values
    return float(r @ weights @ r / (batch.N * batch.grid.size**2))


def grid_phi_norm_sq(residual, grid: GridSpec, tau: float) -> float:
    """``tau^2 sum_k (1+lambda_h)^{-1} <R, phi_k>_h^2`` over every in-band mode.

    This is the expectation of :func:`corrected_phi_loss` over fresh batches.
    """
    r = residual.r if isinstance(residual, ResidualField) else np.asarray(residual, dtype=float).ravel()
    # <R, phi_k>_h = h^{d/2} DST(R)_k
    pair = grid.h ** (grid.d / 2.0) * dst1(r, grid)
    lam = grid_eigenvalues(grid).ravel()
    return float(tau**2 * np.sum(pair**2 / (1.0 + lam)))


def expected_empirical_phi_loss(residual, grid: GridSpec, tau: float) -> float:
    """Closed-form mean of :func:`empirical_phi_loss` (no correction factor)."""
    return grid_phi_norm_sq(residual, grid, tau) / correction_factor(grid)


def empirical_phi_loss_variance(residual, grid: GridSpec, tau: float, N: int) -> float:
    """Variance of :func:`empirical_phi_loss` for ``N`` Gaussian test functions.

    Each pairing is a centred Gaussian, so its square has variance ``2 sigma^4``.
    """
    sigma2 = expected_empirical_phi_loss(residual, grid, tau)
    return 2.0 * sigma2**2 / N


def boundary_penalty(u_boundary, g_boundary) -> float:
    """Mean squared mismatch ``(1/N_b) sum (u - g)^2``."""
    u = np.asarray(u_boundary, dtype=float).ravel()
    g = np.asarray(g_boundary, dtype=float).ravel()
    if u.shape != g.shape:
        raise ValueError(f"length mismatch: {u.size} boundary values vs {g.size} targets")
    if u.size == 0:
        return 0.0
    return float(np.mean((u - g) ** 2))
