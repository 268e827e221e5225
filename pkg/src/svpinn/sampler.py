"""Rough random test functions from the discretised Whittle-Matern equation.

On the interior grid the field solves ``(1 - Delta_h)^{1/2} Phi = tau W`` with
white noise ``W``. Because the orthonormal DST-I diagonalises ``-Delta_h``,
a draw costs two transforms::

    Phi = tau * DST[(1 + lambda_h)^{-1/2} * DST(W)]
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.fft

from .spectral import EigenBasis, GridSpec, eigenfunctions, grid_eigenvalues

# rows drawn from one counter-based stream; fixed so results do not depend on chunking
_ROW_BLOCK = 256
_DIRECT_BELOW = 64
_HEADER = struct.Struct("<qqqdQ")


def _grid_view(u, grid: GridSpec) -> tuple[np.ndarray, bool]:
    """Reshape ``u`` to ``(..., *grid.shape)``; flag whether the input was flat."""
    u = np.asarray(u, dtype=float)
    if u.shape[-grid.d :] == grid.shape:
        return u, False
    if u.shape[-1:] == (grid.size,):
        return u.reshape(u.shape[:-1] + grid.shape), True
    raise ValueError(f"expected trailing size {grid.size} or shape {grid.shape}, got {u.shape}")


def sine_matrix(n: int) -> np.ndarray:
    """One-axis orthonormal DST-I matrix ``sqrt(2h) sin(pi k k' h)``."""
    h = 1.0 / (n + 1)
    i = np.arange(1, n + 1)
    k = np.arange(1, n + 1)
    return np.sqrt(2.0 * h) * np.sin(np.pi * np.outer(i, k) * h)


def _apply_separable(u: np.ndarray, mat: np.ndarray, d: int) -> np.ndarray:
    for axis in range(u.ndim - d, u.ndim):
        u = np.moveaxis(np.tensordot(u, mat, axes=([axis], [1])), -1, axis)
    return u


def dst1(u, grid: GridSpec, method: str = "auto") -> np.ndarray:
    """Orthonormal, self-inverse DST-I along the last ``grid.d`` axes.

    ``u`` may be flat (trailing size ``n^d``, canonical row-major ordering) or
    shaped ``(..., n, ..., n)``; the output has the same layout. Leading axes
    are treated as a batch.

    ``method`` is ``"fft"``, ``"direct"`` (dense ``O(n^2)`` per axis) or
    ``"auto"``, which picks the dense path for ``n < 64``.
    """
    v, flat = _grid_view(u, grid)
    if method == "auto":
        method = "direct" if grid.n < _DIRECT_BELOW else "fft"
    if method == "fft":
        axes = tuple(range(v.ndim - grid.d, v.ndim))
        out = scipy.fft.dstn(v, type=1, axes=axes, norm="ortho")
    elif method == "direct":
        out = _apply_separable(v, sine_matrix(grid.n), grid.d)
    else:
        raise ValueError(f"unknown DST method {method!r}")
    return out.reshape(out.shape[: out.ndim - grid.d] + (grid.size,)) if flat else out


def negative_laplacian_fd(u, grid: GridSpec) -> np.ndarray:
    """Second-difference ``-Delta_h u`` with zero extension outside the grid."""
    v, flat = _grid_view(u, grid)
    h2 = grid.h**2
    out = np.zeros_like(v)
    for axis in range(v.ndim - grid.d, v.ndim):
        pad = [(0, 0)] * v.ndim
        pad[axis] = (1, 1)
        p = np.pad(v, pad)
        n = grid.n
        lo = np.take(p, np.arange(0, n), axis=axis)
        hi = np.take(p, np.arange(2, n + 2), axis=axis)
        out += (2.0 * v - lo - hi) / h2
    return out.reshape(out.shape[: out.ndim - grid.d] + (grid.size,)) if flat else out


def _check_seed(seed) -> int:
    seed = int(seed)
    if not 0 <= seed < 2**64:
        raise ValueError("seed must be a 64-bit unsigned integer")
    return seed


def standard_normal_rows(seed: int, N: int, width: int) -> np.ndarray:
    """``N x width`` standard normals; row block ``b`` uses its own Philox stream.

    Blocks are independent streams keyed by ``(seed, b)``, so any subset of rows
    can be regenerated or drawn in parallel without changing the result.
    """
    return _rows(seed, 0, int(N), int(width))


@dataclass(frozen=True, eq=False)
class TestFunctionBatch:
    """``N`` fixed test-function draws sampled on the collocation grid.

    ``values[j]`` holds draw ``j`` at the ``n^d`` interior nodes (row-major).
    """

    __test__ = False  # keep pytest from collecting this class

    grid: GridSpec
    tau: float
    seed: int
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.ndim != 2 or vals.shape[0] < 1 or vals.shape[1] != self.grid.size:
            raise ValueError(f"values must be N x {self.grid.size} with N >= 1, got {vals.shape}")
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        vals = vals.copy() if vals is self.values and vals.flags.writeable else vals
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "seed", _check_seed(self.seed))
        object.__setattr__(self, "tau", float(self.tau))

    @property
    def N(self) -> int:
        return self.values.shape[0]

    def points(self) -> np.ndarray:
        return self.grid.points()

    def with_tau(self, tau: float) -> "TestFunctionBatch":
        """Same draws at a different scale (the field is linear in ``tau``)."""
        return TestFunctionBatch(self.grid, tau, self.seed, self.values * (tau / self.tau))

    def __eq__(self, other) -> bool:
        if not isinstance(other, TestFunctionBatch):
            return NotImplemented
        return (
            self.grid == other.grid
            and self.tau == other.tau
            and self.seed == other.seed
            and np.array_equal(self.values, other.values)
        )

    __hash__ = None

    def save(self, path) -> Path:
        """Write the flat binary format: ``<i8 d, n, N; <f8 tau; <u8 seed`` then row-major ``<f8``."""
        path = Path(path)
        with path.open("wb") as fh:
            fh.write(_HEADER.pack(self.grid.d, self.grid.n, self.N, self.tau, self.seed))
            fh.write(np.ascontiguousarray(self.values, dtype="<f8").tobytes())
        return path

    @classmethod
    def load(cls, path) -> "TestFunctionBatch":
        raw = Path(path).read_bytes()
        if len(raw) < _HEADER.size:
            raise ValueError("file too short for a batch header")
        d, n, N, tau, seed = _HEADER.unpack_from(raw)
        grid = GridSpec(d, n)
        payload = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
        if payload.size != N * grid.size:
            raise ValueError(f"payload has {payload.size} values, header implies {N * grid.size}")
        return cls(grid, tau, seed, payload.reshape(N, grid.size).astype(np.float64))


def sample_wm_batch(
    grid: GridSpec,
    tau: float,
    N: int,
    seed: int,
    *,
    chunk: int = 2048,
    method: str = "auto",
) -> TestFunctionBatch:
    """Draw ``N`` independent realisations of the discretised Matern field.

    Parameters
    ----------
    grid : GridSpec
    tau : float
        Positive amplitude; the draws are exactly linear in it.
    N : int
        Number of test functions.
    seed : int
        Unsigned 64-bit seed; the same ``(grid, tau, N, seed)`` gives bit-identical values.
    chunk : int
        Rows transformed at once; only affects peak memory.
    """
    if not tau > 0:
        raise ValueError("tau must be positive")
    N = int(N)
    if N < 1:
        raise ValueError("N must be >= 1")
    scale = (1.0 + grid_eigenvalues(grid)) ** -0.5
    out = np.empty((N, grid.size))
    for start in range(0, N, max(1, int(chunk))):
        stop = min(start + chunk, N)
        w = _rows(seed, start, stop, grid.size)
        w_hat = dst1(w.reshape((-1,) + grid.shape), grid, method)
        coef = w_hat * scale
        field_vals = dst1(coef, grid, method)
        out[start:stop] = tau * field_vals.reshape(stop - start, grid.size)
    out.setflags(write=False)
    return TestFunctionBatch(grid, tau, seed, out)


def _rows(seed: int, start: int, stop: int, width: int) -> np.ndarray:
    """Rows ``start:stop`` of :func:`standard_normal_rows` without drawing the rest."""
    seed = _check_seed(seed)
    out = np.empty((stop - start, width))
    b0, b1 = start // _ROW_BLOCK, (stop - 1) // _ROW_BLOCK
    for b in range(b0, b1 + 1):
        ss = np.random.SeedSequence(entropy=seed, spawn_key=(b,))
        rng = np.random.Generator(np.random.Philox(ss))
        lo = b * _ROW_BLOCK
        hi = min(lo + _ROW_BLOCK, stop)
        # a block always draws in full-row order, so skipping rows means discarding them
        block = rng.standard_normal((hi - lo, width))
        a = max(start, lo)
        out[a - start : hi - start] = block[a - lo :]
    return out


def sample_spectral_coefficients(
    eigenvalues, tau: float, N: int, seed: int, weights=None
) -> np.ndarray:
    """Coefficients ``tau (1 + lambda_k)^{-1/2} w_{j,k}`` for ``N`` draws.

    ``weights`` (shape ``N x m``) replaces the Gaussian draws when given.
    """
    lam = np.asarray(eigenvalues, dtype=float).ravel()
    if lam.size == 0:
        raise ValueError("at least one mode is required")
    if weights is None:
        weights = standard_normal_rows(seed, N, lam.size)
    else:
        weights = np.asarray(weights, dtype=float).reshape(int(N), lam.size)
    return tau * weights / np.sqrt(1.0 + lam)


def sample_truncated_spectral(
    basis: EigenBasis,
    tau: float,
    points,
    N: int,
    seed: int,
    *,
    indices=None,
    eigenvalues=None,
    weights=None,
) -> np.ndarray:
    """Truncated expansion ``tau sum_k (1+lambda_k)^{-1/2} w_k phi_k(x)`` at ``points``.

    Parameters
    ----------
    basis : EigenBasis
        Supplies the modes unless ``indices`` narrows them.
    points : array_like, shape (P, d)
    eigenvalues : array_like, optional
        Replaces the continuum eigenvalues (e.g. by their grid counterparts).
    weights : array_like, optional
        Fixed ``N x m`` noise instead of Gaussian draws.

    Returns
    -------
    ndarray, shape (N, P)
    """
    idx = basis.indices if indices is None else np.atleast_2d(np.asarray(indices, dtype=np.int64))
    if idx.size == 0:
        raise ValueError("indices must be nonempty")
    lam = basis.__class__(basis.d, idx).eigenvalues if eigenvalues is None else eigenvalues
    if eigenvalues is not None and len(np.ravel(eigenvalues)) != idx.shape[0]:
        raise ValueError("eigenvalues must match the number of indices")
    coef = sample_spectral_coefficients(lam, tau, N, seed, weights)
    phi = eigenfunctions(idx, np.reshape(points, (-1, basis.d)))
    return coef @ phi.T


def partial_sum_sobolev_norm(coefficients, eigenvalues, t: float) -> np.ndarray:
    """``sum_k lambda_k^t |c_k|^2`` for each row of ``coefficients``."""
    c = np.atleast_2d(np.asarray(coefficients, dtype=float))
    lam = np.asarray(eigenvalues, dtype=float).ravel()
    if c.shape[1] != lam.size:
        raise ValueError("coefficient rows must match the eigenvalue count")
    out = (c**2) @ (lam**t)
    return out if np.ndim(coefficients) > 1 else float(out[0])


def pointwise_variance(grid: GridSpec, tau: float, x) -> np.ndarray:
    """Closed-form variance ``tau^2 h^d sum_k (1+lambda_h)^{-1} phi_k(x)^2``."""
    return pointwise_covariance(grid, tau, x, x)


def pointwise_covariance(grid: GridSpec, tau: float, x, y) -> np.ndarray:
    x = np.reshape(x, (-1, grid.d))
    y = np.reshape(y, (-1, grid.d))
    idx = grid.mode_indices()
    w = 1.0 / (1.0 + grid_eigenvalues(grid).ravel())
    px = eigenfunctions(idx, x)
    py = eigenfunctions(idx, y)
    return tau**2 * grid.h**grid.d * np.sum(px * py * w, axis=1)
