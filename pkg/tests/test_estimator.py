import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError
from sklearn.linear_model import Ridge
from sklearn.pipeline import make_pipeline

from svpinn.estimator import DAFFTransformer, FourierFeatureTransformer, SVPINNRegressor
from svpinn.problems import make_experiment1
from svpinn.spectral import eigenfunctions


def _pts(d, count=40, seed=0):
    return np.random.default_rng(seed).uniform(0, 1, (count, d))


class TestTransformers:
    @pytest.mark.parametrize("d", [1, 2, 3])
    def test_daff_columns_are_eigenfunctions(self, d):
        X = _pts(d)
        t = DAFFTransformer(n_features=12).fit(X)
        out = t.transform(X)
        assert out.shape == (40, 12)
        np.testing.assert_allclose(out, eigenfunctions(t.indices_, X), atol=1e-13)

    def test_fourier_shape_and_seed(self):
        X = _pts(2)
        a = FourierFeatureTransformer(n_frequencies=5, sigma=2.0, random_state=1).fit_transform(X)
        b = FourierFeatureTransformer(n_frequencies=5, sigma=2.0, random_state=1).fit_transform(X)
        assert a.shape == (40, 10)
        np.testing.assert_array_equal(a, b)
        np.testing.assert_allclose(a[:, :5] ** 2 + a[:, 5:] ** 2, 1.0, atol=1e-14)

    def test_validation(self):
        with pytest.raises(NotFittedError):
            DAFFTransformer().transform(_pts(1))
        t = DAFFTransformer(n_features=4).fit(_pts(2))
        with pytest.raises(ValueError):
            t.transform(_pts(3))
        with pytest.raises(ValueError):
            t.transform(_pts(2) + 1.5)
        with pytest.raises(ValueError):
            DAFFTransformer().fit(_pts(4))

    def test_clone_and_params(self):
        t = FourierFeatureTransformer(n_frequencies=3, sigma=4.0)
        c = clone(t)
        assert c.get_params() == t.get_params()
        c.set_params(sigma=1.0)
        assert t.sigma == 4.0

    def test_in_pipeline(self):
        X = _pts(1, 200)
        y = np.sin(3 * np.pi * X[:, 0])
        model = make_pipeline(DAFFTransformer(n_features=8), Ridge(alpha=1e-8)).fit(X, y)
        assert model.score(X, y) > 0.999


class TestRegressor:
    def test_params_map_to_config(self):
        est = SVPINNRegressor(steps=3, width=8, input_gain=0.5)
        cfg = est._config()
        assert cfg.steps == 3 and cfg.width == 8 and cfg.input_gain == 0.5
        assert clone(est).get_params() == est.get_params()

    def test_fit_predict(self):
        est = SVPINNRegressor(steps=20, width=16, depth=1, n_features=8, n_test=200, grid_n=63)
        est.fit("exp1 a=1")
        X = np.linspace(0, 1, 11)[:, None]
        pred = est.predict(X)
        assert pred.shape == (11,)
        assert abs(pred[0]) == 0.0 and abs(pred[-1]) == 0.0
        assert est.l2_relative_error() == pytest.approx(est.metrics_.final_l2)
        assert est.config_.grid_n == 63 and est.problem_.grid.n == 63
        assert est.tau_ == pytest.approx(0.1)

    def test_fit_accepts_problem_spec(self):
        est = SVPINNRegressor(steps=2, width=4, depth=1, n_features=4, n_test=20, grid_n=15)
        est.fit(make_experiment1(2.0))
        assert est.n_features_in_ == 1

    def test_errors(self):
        with pytest.raises(NotFittedError):
            SVPINNRegressor().predict([[0.5]])
        with pytest.raises(TypeError):
            SVPINNRegressor().fit(np.zeros((3, 1)))
