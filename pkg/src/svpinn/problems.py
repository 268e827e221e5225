"""Manufactured elliptic benchmark problems on the unit hypercube.

Every source term is written out in closed form from the chosen exact solution.
"""

from __future__ import annotations

import inspect
import shlex
from dataclasses import dataclass, field
from typing import Callable

import jax
import jax.numpy as jnp
import numpy as np

from .net import EvalJet
from .operators import Operator, apply_operator
from .spectral import GridSpec

PI = jnp.pi

DEFAULT_GRID_N = {1: 511, 2: 96, 3: 24}


def _cols(x):
    x = jnp.asarray(x, dtype=jnp.float64)
    return [x[..., j] for j in range(x.shape[-1])]


def perimeter_points(count: int) -> np.ndarray:
    """``count`` points equispaced (by arc length) along the boundary of the unit square."""
    if count < 4:
        raise ValueError("need at least 4 perimeter points")
    s = np.arange(count) * (4.0 / count)
    side = np.floor(s).astype(int)
    t = s - side
    pts = np.empty((count, 2))
    pts[side == 0] = np.stack([t[side == 0], np.zeros((side == 0).sum())], -1)
    pts[side == 1] = np.stack([np.ones((side == 1).sum()), t[side == 1]], -1)
    pts[side == 2] = np.stack([1.0 - t[side == 2], np.ones((side == 2).sum())], -1)
    pts[side == 3] = np.stack([np.zeros((side == 3).sum()), 1.0 - t[side == 3]], -1)
    return pts


def boundary_sample(d: int, count: int, seed: int = 0) -> np.ndarray:
    """Random points on the boundary of ``(0,1)^d``: one coordinate pinned to 0 or 1."""
    rng = np.random.Generator(np.random.Philox(seed))
    x = rng.uniform(0.0, 1.0, (count, d))
    axis = rng.integers(0, d, count)
    x[np.arange(count), axis] = rng.integers(0, 2, count).astype(float)
    return x


def default_boundary_points(d: int) -> np.ndarray:
    if d == 1:
        return np.array([[0.0], [1.0]])
    if d == 2:
        return perimeter_points(604)
    return boundary_sample(d, 6 * 24 * 24)


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    """A manufactured boundary value problem ``L u = f`` in ``(0,1)^d``, ``u = g`` on the boundary.

    ``boundary`` is ``None`` for homogeneous data. Callables take ``(P, d)``
    arrays and return ``(P,)`` arrays; they are written with ``jax.numpy``.
    """

    name: str
    d: int
    operator: Operator
    source: Callable
    exact: Callable
    grid: GridSpec
    boundary: Callable | None = None
    boundary_points: np.ndarray = field(default=None, repr=False)
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.grid.d != self.d:
            raise ValueError("grid dimension does not match the problem")
        if self.boundary_points is None:
            object.__setattr__(self, "boundary_points", default_boundary_points(self.d))

    @property
    def homogeneous(self) -> bool:
        return self.boundary is None

    @property
    def test_grid(self) -> GridSpec:
        return self.grid.refined(2)

    def test_points(self) -> np.ndarray:
        return self.test_grid.points()

    def g(self, x) -> jax.Array:
        x = jnp.asarray(x, dtype=jnp.float64).reshape(-1, self.d)
        return jnp.zeros(x.shape[0]) if self.boundary is None else self.boundary(x)

    def with_grid(self, n: int) -> "ProblemSpec":
        return ProblemSpec(
            self.name, self.d, self.operator, self.source, self.exact, GridSpec(self.d, n),
            self.boundary, self.boundary_points, dict(self.params),
        )

    def exact_jet(self, x) -> EvalJet:
        """Jet of the exact solution from automatic differentiation (a consistency oracle)."""
        x = jnp.asarray(x, dtype=jnp.float64).reshape(-1, self.d)

        def scalar(p):
            return self.exact(p[None, :])[0]

        val = self.exact(x)
        grad = jax.vmap(jax.grad(scalar))(x)
        hess = jax.vmap(jax.hessian(scalar))(x)
        return EvalJet(val, grad, jnp.diagonal(hess, axis1=1, axis2=2))

    def residual_of_exact(self, x) -> jax.Array:
        x = jnp.asarray(x, dtype=jnp.float64).reshape(-1, self.d)
        return apply_operator(self.operator, self.exact_jet(x), x) - self.source(x)

    def describe(self) -> str:
        args = " ".join(f"{k}={v:g}" for k, v in self.params.items())
        return f"{self.name} {args}".strip()


def _grid(d: int, n: int | None) -> GridSpec:
    return GridSpec(d, DEFAULT_GRID_N[d] if n is None else int(n))


def make_experiment1(a: float = 1.0, n: int | None = None) -> ProblemSpec:
    """1D multi-scale Poisson ``u'' = f`` with a frequency-``a`` component."""
    if not a > 0:
        raise ValueError("a must be positive")
    a = float(a)
    tilt = np.sin(2 * np.pi) + 0.1 * np.sin(a * np.pi)

    def exact(x):
        (t,) = _cols(x)
        return jnp.sin(2 * PI * t) + 0.1 * jnp.sin(a * PI * t) - t * tilt

    def source(x):
        (t,) = _cols(x)
        return -4 * PI**2 * jnp.sin(2 * PI * t) - 0.1 * (a * PI) ** 2 * jnp.sin(a * PI * t)

    return ProblemSpec("exp1", 1, Operator("laplacian"), source, exact, _grid(1, n), params={"a": a})


def make_experiment2(a: float = 1.0, n: int | None = None) -> ProblemSpec:
    """2D Poisson ``-Delta u = f`` with ``u = sin(pi x) sin(pi y) B(x, y)``."""
    a = float(a)

    def parts(x):
        X, Y = _cols(x)
        S = jnp.sin(PI * X) * jnp.sin(PI * Y)
        Sx = PI * jnp.cos(PI * X) * jnp.sin(PI * Y)
        Sy = PI * jnp.sin(PI * X) * jnp.cos(PI * Y)
        s_ap = jnp.sin(a * (X + Y))
        c_ap = jnp.cos(a * (X + Y))
        B = s_ap + jnp.sin(2 * PI * X) + jnp.cos(3 * PI * Y)
        Bx = a * c_ap + 2 * PI * jnp.cos(2 * PI * X)
        By = a * c_ap - 3 * PI * jnp.sin(3 * PI * Y)
        lapB = -2 * a**2 * s_ap - 4 * PI**2 * jnp.sin(2 * PI * X) - 9 * PI**2 * jnp.cos(3 * PI * Y)
        return S, Sx, Sy, B, Bx, By, lapB

    def exact(x):
        S, _, _, B, *_ = parts(x)
        return S * B

    def source(x):
        S, Sx, Sy, B, Bx, By, lapB = parts(x)
        return -(-2 * PI**2 * S * B + 2 * (Sx * Bx + Sy * By) + S * lapB)

    return ProblemSpec("exp2", 2, Operator("negative-laplacian"), source, exact, _grid(2, n), params={"a": a})


def make_experiment3(k_a: float = 20.0, k_u: float = 10.0, beta: float = 0.75, n: int | None = None) -> ProblemSpec:
    """Divergence-form ``-div(a grad u) = f`` with an oscillating coefficient ``a``."""
    if abs(beta) >= 1:
        raise ValueError("|beta| must be < 1 for the coefficient to stay positive")
    k_a, k_u, beta = float(k_a), float(k_u), float(beta)

    def coef(x):
        X, Y = _cols(x)
        return 1.0 + beta * jnp.sin(k_a * PI * X) * jnp.sin(k_a * PI * Y)

    def coef_grad(x):
        X, Y = _cols(x)
        w = k_a * PI
        return jnp.stack(
            [beta * w * jnp.cos(w * X) * jnp.sin(w * Y), beta * w * jnp.sin(w * X) * jnp.cos(w * Y)], -1
        )

    def exact(x):
        X, Y = _cols(x)
        return jnp.sin(k_u * PI * X) * jnp.sin(k_u * PI * Y)

    def source(x):
        X, Y = _cols(x)
        w = k_u * PI
        u = jnp.sin(w * X) * jnp.sin(w * Y)
        grad_u = jnp.stack([w * jnp.cos(w * X) * jnp.sin(w * Y), w * jnp.sin(w * X) * jnp.cos(w * Y)], -1)
        return coef(x) * 2 * w**2 * u - jnp.sum(coef_grad(x) * grad_u, axis=-1)

    op = Operator("divergence", coefficient=coef, coefficient_grad=coef_grad)
    return ProblemSpec("exp3", 2, op, source, exact, _grid(2, n), params={"k_a": k_a, "k_u": k_u, "beta": beta})


def make_experiment4(k: float = 5.0, n: int | None = None) -> ProblemSpec:
    """2D Helmholtz ``Delta u + k^2 u = f`` with ``u = sin(k pi x) sin(k pi y)``."""
    if not k > 0:
        raise ValueError("k must be positive")
    k = float(k)

    def exact(x):
        X, Y = _cols(x)
        return jnp.sin(k * PI * X) * jnp.sin(k * PI * Y)

    def source(x):
        return (k**2 - 2 * k**2 * PI**2) * exact(x)

    return ProblemSpec("exp4", 2, Operator("helmholtz", k=k), source, exact, _grid(2, n), params={"k": k})


def make_experiment5(k: int = 1, n: int | None = None, boundary_count: int = 604) -> ProblemSpec:
    """2D Poisson ``-Delta u = f`` with ``k^2`` Gaussian bumps and nonzero boundary data."""
    k = int(k)
    if k < 1:
        raise ValueError("k must be >= 1")
    centres = np.array([(i / (k + 1), j / (k + 1)) for i in range(1, k + 1) for j in range(1, k + 1)])

    def rho2(x):
        x = jnp.asarray(x, dtype=jnp.float64)
        diff = x[:, None, :] - jnp.asarray(centres)[None, :, :]
        return jnp.sum(diff**2, axis=-1)  # (P, k^2)

    def exact(x):
        return jnp.sum(jnp.exp(-50.0 * rho2(x)), axis=-1)

    def source(x):
        r2 = rho2(x)
        return jnp.sum(100.0 * (2.0 - 100.0 * r2) * jnp.exp(-50.0 * r2), axis=-1)

    return ProblemSpec(
        "exp5", 2, Operator("negative-laplacian"), source, exact, _grid(2, n),
        boundary=exact, boundary_points=perimeter_points(boundary_count), params={"k": k},
    )


def make_experiment6(k: float = 100.0, n: int | None = None) -> ProblemSpec:
    """3D Helmholtz with ``u = sin(pi x) sin(2 pi y) sin(3 pi z) |x|^2``."""
    if not k > 0:
        raise ValueError("k must be positive")
    k = float(k)

    def parts(x):
        X, Y, Z = _cols(x)
        sx, sy, sz = jnp.sin(PI * X), jnp.sin(2 * PI * Y), jnp.sin(3 * PI * Z)
        S = sx * sy * sz
        grad_S = jnp.stack(
            [PI * jnp.cos(PI * X) * sy * sz, 2 * PI * sx * jnp.cos(2 * PI * Y) * sz, 3 * PI * sx * sy * jnp.cos(3 * PI * Z)],
            -1,
        )
        Q = X**2 + Y**2 + Z**2
        return S, grad_S, Q, 2 * jnp.stack([X, Y, Z], -1)

    def exact(x):
        S, _, Q, _ = parts(x)
        return S * Q

    def source(x):
        S, grad_S, Q, grad_Q = parts(x)
        lap = -14 * PI**2 * S * Q + 2 * jnp.sum(grad_S * grad_Q, axis=-1) + 6 * S
        return lap + k**2 * S * Q

    return ProblemSpec("exp6", 3, Operator("helmholtz", k=k), source, exact, _grid(3, n), params={"k": k})


REGISTRY = {
    "exp1": make_experiment1,
    "exp2": make_experiment2,
    "exp3": make_experiment3,
    "exp4": make_experiment4,
    "exp5": make_experiment5,
    "exp6": make_experiment6,
}


class UnknownProblemError(ValueError):
    pass


def parse_problem(text: str) -> ProblemSpec:
    """Build a problem from ``"name key=value ..."``, e.g. ``"exp1 a=100"``."""
    tokens = shlex.split(text.replace(",", " "))
    if not tokens or tokens[0] not in REGISTRY:
        raise UnknownProblemError(f"unknown experiment {text!r}; choose from {sorted(REGISTRY)}")
    factory = REGISTRY[tokens[0]]
    allowed = inspect.signature(factory).parameters
    kwargs = {}
    for tok in tokens[1:]:
        key, sep, value = tok.partition("=")
        if not sep or key not in allowed:
            raise UnknownProblemError(f"bad parameter {tok!r} for {tokens[0]}; allowed: {list(allowed)}")
        num = float(value)
        integral = key == "n" or type(allowed[key].default) is int
        kwargs[key] = int(num) if integral else num
    return factory(**kwargs)
