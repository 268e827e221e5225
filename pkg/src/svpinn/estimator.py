"""scikit-learn style wrappers: feature transformers and a PDE-solving regressor."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .net import FeatureMap, forward
from .problems import ProblemSpec, parse_problem
from .training import TrainConfig, l2_relative_error, train


def _check_points(X, d: int | None = None) -> np.ndarray:
    X = check_array(X, dtype=np.float64, ensure_2d=True)
    if d is not None and X.shape[1] != d:
        raise ValueError(f"X has {X.shape[1]} columns, expected {d}")
    if X.shape[1] > 3:
        raise ValueError("only dimensions 1 to 3 are supported")
    if np.any(X < 0) or np.any(X > 1):
        raise ValueError("points must lie in the closed unit hypercube")
    return X


class DAFFTransformer(TransformerMixin, BaseEstimator):
    """Map points of ``[0,1]^d`` to the lowest ``n_features`` Dirichlet eigenfunctions."""

    def __init__(self, n_features: int = 64, max_component: int = 64):
        self.n_features = n_features
        self.max_component = max_component

    def fit(self, X, y=None):
        X = _check_points(X)
        self.n_features_in_ = X.shape[1]
        self.feature_map_ = FeatureMap.daff(X.shape[1], self.n_features, self.max_component)
        self.indices_ = self.feature_map_.matrix
        return self

    def transform(self, X):
        check_is_fitted(self, "feature_map_")
        X = _check_points(X, self.n_features_in_)
        return np.asarray(self.feature_map_(X))


class FourierFeatureTransformer(TransformerMixin, BaseEstimator):
    """``[sin(A x), cos(A x)]`` with ``A`` drawn once from ``N(0, sigma^2)``."""

    def __init__(self, n_frequencies: int = 32, sigma: float = 10.0, random_state: int = 0):
        self.n_frequencies = n_frequencies
        self.sigma = sigma
        self.random_state = random_state

    def fit(self, X, y=None):
        X = _check_points(X)
        self.n_features_in_ = X.shape[1]
        self.feature_map_ = FeatureMap.fourier(X.shape[1], self.n_frequencies, self.sigma, self.random_state)
        self.frequencies_ = self.feature_map_.matrix
        return self

    def transform(self, X):
        check_is_fitted(self, "feature_map_")
        X = _check_points(X, self.n_features_in_)
        return np.asarray(self.feature_map_(X))


class SVPINNRegressor(RegressorMixin, BaseEstimator):
    """Train a network on a boundary value problem, then predict the solution at points.

    ``fit`` takes the problem (a :class:`ProblemSpec` or a registry string such
    as ``"exp1 a=100"``) instead of a design matrix. Constructor arguments mirror
    :class:`~svpinn.training.TrainConfig`; ``None`` picks the desk-scale default.

    Attributes
    ----------
    params_ : dict
        Trained network parameters.
    feature_map_ : FeatureMap
    metrics_ : RunMetrics
    tau_ : float or None
        Test-function scale actually used.
    config_ : TrainConfig
        Fully resolved configuration.
    """

    def __init__(
        self,
        loss_kind: str = "svpinn",
        optimizer: str = "lbfgs",
        steps: int = 1000,
        seed: int = 0,
        features: str | None = None,
        n_features: int | None = None,
        width: int | None = None,
        depth: int | None = None,
        sigma_ff: float = 10.0,
        n_test: int | None = None,
        tau=None,
        lambda_b: float | None = None,
        grid_n: int | None = None,
        shifted_residuals: bool = False,
        input_gain: float | None = None,
    ):
        self.loss_kind = loss_kind
        self.optimizer = optimizer
        self.steps = steps
        self.seed = seed
        self.features = features
        self.n_features = n_features
        self.width = width
        self.depth = depth
        self.sigma_ff = sigma_ff
        self.n_test = n_test
        self.tau = tau
        self.lambda_b = lambda_b
        self.grid_n = grid_n
        self.shifted_residuals = shifted_residuals
        self.input_gain = input_gain

    def _config(self) -> TrainConfig:
        return TrainConfig(**self.get_params())

    def fit(self, problem, y=None):
        if isinstance(problem, str):
            problem = parse_problem(problem)
        if not isinstance(problem, ProblemSpec):
            raise TypeError("fit expects a ProblemSpec or a problem string such as 'exp1 a=1'")
        result = train(problem, self._config())
        self.problem_ = problem if self.grid_n is None else problem.with_grid(self.grid_n)
        self.params_ = result.params
        self.feature_map_ = result.fmap
        self.metrics_ = result.metrics
        self.tau_ = result.tau
        self.config_ = result.config
        self.n_features_in_ = problem.d
        return self

    def predict(self, X) -> np.ndarray:
        check_is_fitted(self, "params_")
        X = _check_points(X, self.n_features_in_)
        return np.asarray(forward(self.params_, self.feature_map_, X))

    def l2_relative_error(self, X=None) -> float:
        """Relative L2 error against the problem's exact solution (test grid by default)."""
        check_is_fitted(self, "params_")
        pts = None if X is None else _check_points(X, self.n_features_in_)
        return l2_relative_error(self.params_, self.feature_map_, self.problem_, pts)
