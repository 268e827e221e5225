"""Loss assembly, tau balancing and the training loop."""

from __future__ import annotations

import csv
import dataclasses
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import jax
import jax.numpy as jnp
import numpy as np

from . import optim
from .net import EvalJet, FeatureMap, _propagate, eval_jet, feature_jet, flatten, forward, glorot_init, is_hard
from .operators import apply_operator
from .problems import ProblemSpec
from .sampler import TestFunctionBatch, sample_wm_batch

DEFAULT_TAU = {1: 0.1, 2: 1.0, 3: 10.0}

# desk-scale architecture and sample sizes per dimension
DESK_DEFAULTS = {
    1: {"width": 64, "depth": 2, "n_features": 64, "n_test": 4000},
    2: {"width": 128, "depth": 3, "n_features": 128, "n_test": 8000},
    3: {"width": 64, "depth": 2, "n_features": 36, "n_test": 4000},
}

# width of the full-scale architecture; sets the default input-layer gain
REFERENCE_WIDTH = 512

METRICS_HEADER = ("step", "total_loss", "interior_loss", "boundary_loss", "l2_rel_err", "wall_s")


class BalancingUndefinedError(ValueError):
    """Tau balancing needs a soft-constraint network with a nonzero initial boundary loss."""


class UndefinedErrorMetric(ValueError):
    """The exact solution vanishes on the test grid."""


# ---------------------------------------------------------------------------
# configuration


@dataclass
class TrainConfig:
    """Everything that defines one training run.

    ``None`` entries are filled from the problem by :meth:`resolved`: desk-scale
    sizes by dimension, DAFF/hard constraint for homogeneous problems and
    Fourier features with a soft penalty otherwise, ``tau`` from the dimension
    (hard mode) or the balancing rule (soft mode).
    """

    loss_kind: str = "svpinn"  # svpinn | pinn
    optimizer: str = "lbfgs"  # lbfgs | adam
    steps: int = 1000
    seed: int = 0
    # architecture
    features: str | None = None  # daff | fourier | identity
    n_features: int | None = None
    width: int | None = None
    depth: int | None = None
    sigma_ff: float = 10.0
    encoder_bias: bool = True
    input_gain: float | None = None
    # sampling
    n_test: int | None = None
    batch_seed: int | None = None
    tau: float | str | None = None  # number or "balanced"
    shifted_residuals: bool = False
    grid_n: int | None = None
    # losses
    lambda_b: float | None = None
    # optimiser
    lr: float = 1e-3
    lr_decay: float = 0.9
    lr_decay_every: int = 100
    history: int = 200
    tolerance_grad: float = 1e-9
    # logging
    l2_every: int = 10

    def __post_init__(self):
        if self.loss_kind not in ("svpinn", "pinn"):
            raise ValueError(f"loss_kind must be 'svpinn' or 'pinn', got {self.loss_kind!r}")
        if self.optimizer not in ("lbfgs", "adam"):
            raise ValueError(f"optimizer must be 'lbfgs' or 'adam', got {self.optimizer!r}")
        if int(self.steps) < 1:
            raise ValueError("steps must be >= 1")
        if self.lambda_b is not None and self.lambda_b < 0:
            raise ValueError("lambda_b must be >= 0")
        if isinstance(self.tau, str) and self.tau != "balanced":
            raise ValueError("tau must be a positive number or 'balanced'")
        if self.input_gain is not None and not self.input_gain > 0:
            raise ValueError("input_gain must be positive")
        if isinstance(self.tau, (int, float)) and not self.tau > 0:
            raise ValueError("tau must be positive")

    def resolved(self, problem: ProblemSpec) -> "TrainConfig":
        d = problem.d
        desk = DESK_DEFAULTS[d]
        c = dataclasses.replace(self)
        if c.features is None:
            c.features = "daff" if problem.homogeneous else "fourier"
        c.n_features = desk["n_features"] if c.n_features is None else c.n_features
        c.width = desk["width"] if c.width is None else c.width
        c.depth = desk["depth"] if c.depth is None else c.depth
        c.n_test = desk["n_test"] if c.n_test is None else c.n_test
        if c.input_gain is None:
            c.input_gain = default_input_gain(c.n_features if c.features != "identity" else d, c.width)
        c.batch_seed = c.seed + 1 if c.batch_seed is None else c.batch_seed
        hard = c.features == "daff" and problem.homogeneous
        if c.lambda_b is None:
            c.lambda_b = 0.0 if hard else 1.0
        if not hard and c.lambda_b == 0:
            raise ValueError("lambda_b = 0 is only allowed with a hard boundary constraint")
        if c.tau is None:
            c.tau = DEFAULT_TAU[d] if hard else "balanced"
        return c

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_json(cls, path) -> "TrainConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


def default_input_gain(n_features: int, width: int) -> float:
    """Gain giving the feature-reading layers the pre-activation variance they have at width 512.

    Glorot variance is ``2/(m + r)``, so a narrow net sees larger pre-activations
    than the full-scale one; large pre-activations saturate tanh and create
    harmonics above the grid Nyquist frequency, which alias onto low modes.
    """
    return min(1.0, math.sqrt((n_features + width) / (n_features + REFERENCE_WIDTH)))


def build_feature_map(problem: ProblemSpec, config: TrainConfig) -> FeatureMap:
    if config.features == "daff":
        return FeatureMap.daff(problem.d, config.n_features)
    if config.features == "fourier":
        return FeatureMap.fourier(problem.d, max(1, config.n_features // 2), config.sigma_ff, seed=config.seed + 7)
    if config.features == "identity":
        return FeatureMap.identity(problem.d)
    raise ValueError(f"unknown feature kind {config.features!r}")


# ---------------------------------------------------------------------------
# losses


def shifted_points(grid) -> np.ndarray:
    """Nodes ``i/n`` (``i = 0..n-1`` per axis) paired with the interior nodes ``(i+1)/(n+1)``.

    Evaluating residuals here while the test functions stay on the interior
    nodes perturbs the quadrature slightly.
    """
    axis = np.arange(grid.n) / grid.n
    axes = np.meshgrid(*([axis] * grid.d), indexing="ij")
    return np.stack([a.ravel() for a in axes], axis=-1)


def collocation_points(problem: ProblemSpec, shifted: bool = False) -> np.ndarray:
    return shifted_points(problem.grid) if shifted else problem.grid.points()


def residual(params: dict, fmap: FeatureMap, problem: ProblemSpec, x) -> jax.Array:
    """``L u_theta - f`` at the points ``x``."""
    x = jnp.asarray(x, dtype=jnp.float64).reshape(-1, problem.d)
    jet = eval_jet(params, fmap, x)
    return apply_operator(problem.operator, jet, x) - problem.source(x)


def boundary_loss(params: dict, fmap: FeatureMap, problem: ProblemSpec) -> jax.Array:
    xb = jnp.asarray(problem.boundary_points)
    return jnp.mean((forward(params, fmap, xb) - problem.g(xb)) ** 2)


def svpinn_loss(
    params, fmap, problem: ProblemSpec, batch: TestFunctionBatch, lambda_b: float = 0.0, shifted: bool = False
):
    """Empirical Phi loss of the residual on the batch grid plus ``lambda_b`` times the boundary penalty."""
    if batch.grid != problem.grid:
        raise ValueError(f"batch grid {batch.grid} differs from the collocation grid {problem.grid}")
    r = residual(params, fmap, problem, collocation_points(problem, shifted))
    pair = jnp.asarray(batch.values) @ r / batch.grid.size
    interior = jnp.mean(pair**2)
    if lambda_b == 0:
        return interior
    return interior + lambda_b * boundary_loss(params, fmap, problem)


def pinn_loss(params, fmap, problem: ProblemSpec, lambda_b: float = 0.0, shifted: bool = False):
    """Mean squared strong residual on the collocation grid plus the boundary penalty."""
    r = residual(params, fmap, problem, collocation_points(problem, shifted))
    interior = jnp.mean(r**2)
    if lambda_b == 0:
        return interior
    return interior + lambda_b * boundary_loss(params, fmap, problem)


def balance_tau(
    params0: dict, fmap: FeatureMap, problem: ProblemSpec, batch_at_tau_1: TestFunctionBatch, shifted: bool = False
) -> float:
    """``tau = sqrt(L_b(theta_0) / L_Phi(theta_0; tau=1))``."""
    if is_hard(params0, fmap):
        raise BalancingUndefinedError("balancing applies to soft-constraint networks only")
    if batch_at_tau_1.tau != 1.0:
        raise ValueError("the batch must be sampled with tau = 1")
    lb = float(boundary_loss(params0, fmap, problem))
    li = float(svpinn_loss(params0, fmap, problem, batch_at_tau_1, 0.0, shifted))
    if not lb > 0 or not li > 0:
        raise BalancingUndefinedError(f"initial losses must be positive (boundary={lb}, interior={li})")
    return math.sqrt(lb / li)


def l2_relative_error(params, fmap, problem: ProblemSpec, test_points=None) -> float:
    """``sqrt(sum (u_theta - u)^2 / sum u^2)`` over the test points (default: the test grid)."""
    x = problem.test_points() if test_points is None else np.reshape(test_points, (-1, problem.d))
    u = np.asarray(problem.exact(jnp.asarray(x)))
    den = float(np.sum(u * u))
    if den == 0.0:
        raise UndefinedErrorMetric("exact solution is identically zero on the test points")
    diff = np.asarray(_chunked_forward(params, fmap, x)) - u
    return math.sqrt(float(np.sum(diff * diff)) / den)


_FORWARD_CACHE: dict = {}


def _jitted_forward(fmap: FeatureMap):
    entry = _FORWARD_CACHE.get(id(fmap))
    if entry is None or entry[0] is not fmap:
        if len(_FORWARD_CACHE) > 16:
            _FORWARD_CACHE.clear()
        entry = (fmap, jax.jit(lambda p, pts: forward(p, fmap, pts)))
        _FORWARD_CACHE[id(fmap)] = entry
    return entry[1]


def _chunked_forward(params, fmap, x, chunk: int = 65536):
    fwd = _jitted_forward(fmap)
    return np.concatenate([np.asarray(fwd(params, x[i : i + chunk])) for i in range(0, len(x), chunk)])


class LossFunction:
    """Jitted loss on a flat parameter vector, with feature jets precomputed.

    Calling it returns ``(total, grad)`` as float/ndarray; ``components(x)``
    returns ``(interior, boundary)`` for a recently evaluated ``x``.
    """

    def __init__(self, params0, fmap, problem: ProblemSpec, config: TrainConfig, batch: TestFunctionBatch | None):
        self.flat0, self.unflatten = flatten(params0)
        self.lambda_b = float(config.lambda_b)
        x = collocation_points(problem, config.shifted_residuals)
        feats = feature_jet(fmap, x, order=2)
        xj = jnp.asarray(x)
        rhs = problem.source(xj)
        op = problem.operator
        xb = jnp.asarray(problem.boundary_points)
        gb = problem.g(xb)
        fb = feature_jet(fmap, xb, order=0)[0]
        kind = config.loss_kind
        phi = None if batch is None else jnp.asarray(batch.values)
        n_c = x.shape[0]
        unflatten = self.unflatten
        need_boundary = not is_hard(params0, fmap) or not problem.homogeneous

        # large arrays go in as arguments so XLA does not embed them as constants
        self._data = (feats, xj, rhs, xb, gb, fb, phi)

        def parts(vec, data):
            feats, xj, rhs, xb, gb, fb, phi = data
            p = unflatten(vec)
            y, dy, d2y = _propagate(p, *feats)
            jet = EvalJet(y[:, 0], dy[..., 0].T, d2y[..., 0].T)
            r = apply_operator(op, jet, xj) - rhs
            if kind == "svpinn":
                interior = jnp.mean((phi @ r / n_c) ** 2)
            else:
                interior = jnp.mean(r**2)
            if need_boundary:
                ub = _propagate(p, fb, None, None)[0][:, 0]
                bnd = jnp.mean((ub - gb) ** 2)
            else:
                bnd = jnp.zeros(())
            return interior, bnd

        def total(vec, data):
            interior, bnd = parts(vec, data)
            return interior + self.lambda_b * bnd, (interior, bnd)

        self._vg = jax.jit(jax.value_and_grad(total, has_aux=True))
        self._cache: dict[bytes, tuple[float, float]] = {}
        self.evaluations = 0

    def __call__(self, vec):
        vec = np.asarray(vec, dtype=np.float64)
        (tot, (interior, bnd)), grad = self._vg(jnp.asarray(vec), self._data)
        self.evaluations += 1
        key = vec.tobytes()
        if len(self._cache) > 64:
            self._cache.pop(next(iter(self._cache)))
        self._cache[key] = (float(interior), float(bnd))
        return float(tot), np.asarray(grad, dtype=np.float64)

    def components(self, vec) -> tuple[float, float]:
        key = np.asarray(vec, dtype=np.float64).tobytes()
        if key not in self._cache:
            self(vec)
        return self._cache[key]


# ---------------------------------------------------------------------------
# metrics


@dataclass
class RunMetrics:
    """Per-step training records; ``l2_rel_err`` is NaN where it was not evaluated."""

    records: list = field(default_factory=list)
    events: list = field(default_factory=list)

    def append(self, step, total, interior, boundary, l2, wall):
        if self.records and step <= self.records[-1][0]:
            raise ValueError("steps must be strictly increasing")
        self.records.append((int(step), float(total), float(interior), float(boundary), float(l2), float(wall)))

    def __len__(self):
        return len(self.records)

    def column(self, name: str) -> np.ndarray:
        i = METRICS_HEADER.index(name)
        return np.array([r[i] for r in self.records])

    @property
    def final_l2(self) -> float:
        l2 = self.column("l2_rel_err")
        ok = l2[~np.isnan(l2)]
        return float(ok[-1]) if ok.size else math.nan

    def steps_to(self, threshold: float) -> int | None:
        """First logged step whose L2 relative error is below ``threshold``."""
        for r in self.records:
            if not math.isnan(r[4]) and r[4] < threshold:
                return r[0]
        return None

    def to_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(METRICS_HEADER)
            for r in self.records:
                w.writerow([r[0]] + [("" if math.isnan(v) else repr(v)) for v in r[1:]])
        return path

    @classmethod
    def from_csv(cls, path) -> "RunMetrics":
        out = cls()
        with Path(path).open(newline="") as fh:
            rows = csv.reader(fh)
            header = tuple(next(rows))
            if header != METRICS_HEADER:
                raise ValueError(f"unexpected metrics header {header}")
            for row in rows:
                vals = [math.nan if v == "" else float(v) for v in row[1:]]
                out.append(int(row[0]), *vals)
        return out


# ---------------------------------------------------------------------------
# training loop


@dataclass
class TrainResult:
    params: dict
    fmap: FeatureMap
    metrics: RunMetrics
    config: TrainConfig
    tau: float | None
    batch: TestFunctionBatch | None
    reason: str
    wall_s: float

    @property
    def final_l2(self) -> float:
        return self.metrics.final_l2

    def summary(self) -> dict:
        return {
            "final_l2_rel_err": self.final_l2,
            "steps": self.metrics.records[-1][0] if self.metrics.records else 0,
            "final_total_loss": self.metrics.records[-1][1] if self.metrics.records else math.nan,
            "tau": self.tau,
            "stop_reason": self.reason,
            "wall_s": self.wall_s,
            "steps_to_1pct": self.metrics.steps_to(1e-2),
            "events": self.metrics.events,
        }


def prepare(problem: ProblemSpec, config: TrainConfig):
    """Resolve defaults, build features, initial parameters and (for SV-PINN) the batch."""
    if config.grid_n is not None:
        problem = problem.with_grid(config.grid_n)
    config = config.resolved(problem)
    fmap = build_feature_map(problem, config)
    hard = config.features == "daff" and problem.homogeneous
    params = glorot_init(
        config.seed, fmap, config.width, config.depth, hard=hard, encoder_bias=config.encoder_bias,
        input_gain=config.input_gain,
    )
    tau, batch = None, None
    if config.loss_kind == "svpinn":
        if config.tau == "balanced":
            unit = sample_wm_batch(problem.grid, 1.0, config.n_test, config.batch_seed)
            tau = balance_tau(params, fmap, problem, unit, config.shifted_residuals)
            batch = unit.with_tau(tau)
            del unit
        else:
            tau = float(config.tau)
            batch = sample_wm_batch(problem.grid, tau, config.n_test, config.batch_seed)
    return problem, config, fmap, params, tau, batch


def train(problem: ProblemSpec, config: TrainConfig, *, progress=None) -> TrainResult:
    """Run one configuration and collect per-step metrics.

    ``progress``, if given, is called as ``progress(step, total_loss, l2)`` after each step.
    """
    t0 = time.perf_counter()
    problem, config, fmap, params, tau, batch = prepare(problem, config)
    loss = LossFunction(params, fmap, problem, config, batch)
    test_x = problem.test_points()
    metrics = RunMetrics()
    steps = int(config.steps)

    def on_step(step, x, f, info):
        # step 0 is the starting point; metrics hold one row per optimiser step
        if step == 0:
            if progress:
                progress(0, f, math.nan)
            return
        interior, bnd = loss.components(x)
        l2 = math.nan
        if step % config.l2_every == 0 or step == steps:
            l2 = l2_relative_error(loss.unflatten(jnp.asarray(x)), fmap, problem, test_x)
        metrics.append(step, interior + loss.lambda_b * bnd, interior, bnd, l2, time.perf_counter() - t0)
        if info.get("fallback"):
            metrics.events.append({"step": step, "event": "steepest_descent_fallback"})
        if progress:
            progress(step, f, l2)

    if config.optimizer == "lbfgs":
        res = optim.lbfgs(
            loss, np.asarray(loss.flat0), steps, history=config.history,
            tolerance_grad=config.tolerance_grad, on_step=on_step,
        )
    else:
        res = optim.adam(
            loss, np.asarray(loss.flat0), steps, lr=config.lr, decay=config.lr_decay,
            decay_every=config.lr_decay_every, on_step=on_step,
        )
    final = loss.unflatten(jnp.asarray(res.x))
    if not metrics.records:
        interior, bnd = loss.components(res.x)
        metrics.append(0, interior + loss.lambda_b * bnd, interior, bnd, math.nan, time.perf_counter() - t0)
    last = metrics.records[-1]
    if math.isnan(last[4]):
        metrics.records[-1] = last[:4] + (l2_relative_error(final, fmap, problem, test_x),) + last[5:]
    return TrainResult(final, fmap, metrics, config, tau, batch, res.reason, time.perf_counter() - t0)
