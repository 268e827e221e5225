"""Dirichlet-Laplacian eigenpairs on the unit hypercube (0, 1)^d.

Eigenfunctions are products of sines, ``phi_k(x) = 2^{d/2} prod_j sin(k_j pi x_j)``,
with eigenvalues ``lambda_k = pi^2 sum_j k_j^2``. The finite-difference
counterpart on an ``n^d`` interior grid has eigenvalues
``(4/h^2) sum_j sin^2(pi k_j h / 2)`` with ``h = 1/(n+1)``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

MAX_DIM = 3


class InvalidIndexError(ValueError):
    """An eigen-index has a non-positive component or the wrong length."""


class OutOfBandError(ValueError):
    """An eigen-index is not resolved by the grid (some ``k_j > n``)."""


def _check_dim(d: int) -> int:
    d = int(d)
    if not 1 <= d <= MAX_DIM:
        raise ValueError(f"dimension must be in 1..{MAX_DIM}, got {d}")
    return d


def as_index(k, d: int | None = None) -> tuple[int, ...]:
    """Validate a multi-index and return it as a tuple of ints."""
    if np.isscalar(k):
        k = (k,)
    k = tuple(int(v) for v in k)
    if d is not None and len(k) != d:
        raise InvalidIndexError(f"index {k} has length {len(k)}, expected {d}")
    if not k or any(v < 1 for v in k):
        raise InvalidIndexError(f"index components must be >= 1, got {k}")
    _check_dim(len(k))
    return k


def _index_array(indices, d: int) -> np.ndarray:
    arr = np.atleast_2d(np.asarray(indices, dtype=np.int64))
    if arr.shape[1] != d:
        raise InvalidIndexError(f"indices must have {d} columns, got shape {arr.shape}")
    if np.any(arr < 1):
        raise InvalidIndexError("index components must be >= 1")
    return arr


@dataclass(frozen=True)
class GridSpec:
    """Uniform interior grid of ``n^d`` nodes ``x = (k_1 h, ..., k_d h)``."""

    d: int
    n: int

    def __post_init__(self):
        _check_dim(self.d)
        if int(self.n) < 1:
            raise ValueError(f"grid needs n >= 1 interior points per axis, got {self.n}")

    @property
    def h(self) -> float:
        return 1.0 / (self.n + 1)

    @property
    def size(self) -> int:
        return self.n**self.d

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.d

    def axis(self) -> np.ndarray:
        return np.arange(1, self.n + 1) * self.h

    def points(self) -> np.ndarray:
        """Interior nodes as an ``(n^d, d)`` array, row-major over ``(k_1, ..., k_d)``."""
        axes = np.meshgrid(*([self.axis()] * self.d), indexing="ij")
        return np.stack([a.ravel() for a in axes], axis=-1)

    def mode_indices(self) -> np.ndarray:
        """All in-band multi-indices in the same row-major order as :meth:`points`."""
        k = np.arange(1, self.n + 1)
        axes = np.meshgrid(*([k] * self.d), indexing="ij")
        return np.stack([a.ravel() for a in axes], axis=-1)

    def refined(self, factor: int = 2) -> "GridSpec":
        """Grid whose spacing is ``h / factor`` (shares every node of ``self``)."""
        return GridSpec(self.d, factor * (self.n + 1) - 1)


def eigenvalues(indices, d: int | None = None) -> np.ndarray:
    """Continuum eigenvalues ``pi^2 |k|^2`` for an ``(m, d)`` array of indices."""
    arr = np.atleast_2d(np.asarray(indices, dtype=np.int64))
    arr = _index_array(arr, arr.shape[1] if d is None else d)
    return np.pi**2 * np.sum(arr.astype(float) ** 2, axis=1)


def discrete_eigenvalues(grid: GridSpec, indices) -> np.ndarray:
    """Eigenvalues of the second-difference Laplacian ``-Delta_h`` on ``grid``."""
    arr = _index_array(indices, grid.d)
    if np.any(arr > grid.n):
        raise OutOfBandError(f"index component exceeds n={grid.n}")
    h = grid.h
    return (4.0 / h**2) * np.sum(np.sin(np.pi * arr * h / 2.0) ** 2, axis=1)


def discrete_eigenvalue(grid: GridSpec, k) -> float:
    return float(discrete_eigenvalues(grid, [as_index(k, grid.d)])[0])


def grid_eigenvalues(grid: GridSpec) -> np.ndarray:
    """Discrete eigenvalues over the whole band, shaped ``grid.shape``."""
    h = grid.h
    one_d = (4.0 / h**2) * np.sin(np.pi * np.arange(1, grid.n + 1) * h / 2.0) ** 2
    lam = np.zeros(grid.shape)
    for j in range(grid.d):
        shape = [1] * grid.d
        shape[j] = grid.n
        lam = lam + one_d.reshape(shape)
    return lam


def eigenfunctions(indices, x) -> np.ndarray:
    """Evaluate ``phi_k`` for every index at every point.

    Parameters
    ----------
    indices : array_like, shape (m, d)
    x : array_like, shape (P, d)

    Returns
    -------
    ndarray, shape (P, m)
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    d = x.shape[1]
    arr = _index_array(indices, d).astype(float)
    out = np.full((x.shape[0], arr.shape[0]), 2.0 ** (d / 2.0))
    for j in range(d):
        out *= np.sin(np.pi * np.outer(x[:, j], arr[:, j]))
    return out


def select_daff_indices(d: int, m: int, max_component: int = 64) -> np.ndarray:
    """The ``m`` indices with the smallest eigenvalue among ``{k : k_j <= max_component}``.

    Ties in eigenvalue are broken by lexicographic order of ``k``.
    """
    d = _check_dim(d)
    if m < 1:
        raise ValueError("m must be >= 1")
    if m > max_component**d:
        raise ValueError(f"only {max_component**d} indices available, asked for {m}")
    # the m smallest |k|^2 all satisfy k_j <= m, so the search box can be clipped
    side = min(max_component, m)
    ks = np.array(list(itertools.product(range(1, side + 1), repeat=d)), dtype=np.int64)
    sq = np.sum(ks**2, axis=1)
    # lexsort uses the last key as primary: eigenvalue first, then k_1, k_2, ...
    order = np.lexsort(tuple(ks[:, j] for j in reversed(range(d))) + (sq,))
    return ks[order[:m]]


@dataclass(frozen=True)
class EigenBasis:
    """An ordered set of Dirichlet eigenpairs on ``(0, 1)^d``.

    Indices are kept sorted by eigenvalue (lexicographic tie-break), so the
    stored ordering is nondecreasing in ``lambda``.
    """

    d: int
    indices: np.ndarray = field(repr=False)

    def __post_init__(self):
        d = _check_dim(self.d)
        arr = _index_array(self.indices, d)
        sq = np.sum(arr**2, axis=1)
        order = np.lexsort(tuple(arr[:, j] for j in reversed(range(d))) + (sq,))
        arr = arr[order]
        arr.setflags(write=False)
        object.__setattr__(self, "indices", arr)

    @classmethod
    def lowest(cls, d: int, m: int, max_component: int = 64) -> "EigenBasis":
        return cls(d, select_daff_indices(d, m, max_component))

    @classmethod
    def box(cls, d: int, kmax: int) -> "EigenBasis":
        """All indices with ``1 <= k_j <= kmax``."""
        ks = np.array(list(itertools.product(range(1, kmax + 1), repeat=d)), dtype=np.int64)
        return cls(d, ks)

    def __len__(self) -> int:
        return self.indices.shape[0]

    @property
    def eigenvalues(self) -> np.ndarray:
        return eigenvalues(self.indices, self.d)

    def eigenvalue(self, k) -> float:
        return float(np.pi**2 * sum(v * v for v in as_index(k, self.d)))

    def evaluate(self, k, x) -> np.ndarray:
        """``phi_k`` at a point (returns a float) or at a ``(P, d)`` array of points."""
        k = as_index(k, self.d)
        x = np.asarray(x, dtype=float)
        scalar = x.ndim <= 1
        pts = x.reshape(1, self.d) if scalar else x
        val = eigenfunctions([k], pts)[:, 0]
        return float(val[0]) if scalar else val

    def evaluate_all(self, x) -> np.ndarray:
        """Every basis function at every point, shape ``(P, len(self))``."""
        return eigenfunctions(self.indices, np.reshape(x, (-1, self.d)))


def eigenvalue(k, d: int | None = None) -> float:
    k = as_index(k, d)
    return float(np.pi**2 * sum(v * v for v in k))


def evaluate_eigenfunction(k, x) -> float:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    k = as_index(k, x.size)
    return float(eigenfunctions([k], x.reshape(1, -1))[0, 0])


def fit_weyl_constants(d: int, count: int) -> tuple[float, float]:
    """Tightest ``c, C`` with ``c k^{2/d} <= lambda_(k) <= C k^{2/d}`` for the first ``count`` eigenvalues."""
    d = _check_dim(d)
    side = int(np.ceil(count ** (1.0 / d))) + 1
    lam = np.sort(EigenBasis.box(d, side).eigenvalues)[:count]
    ratio = lam / np.arange(1, count + 1) ** (2.0 / d)
    return float(ratio.min()), float(ratio.max())
