"""scikit-learn style forecasters wrapping the knowledge, reservoir and hybrid predictors.

``fit(X)`` takes a uniformly sampled training series ``X`` of shape
``(n_samples, n_features)``. ``predict(n_steps, X=None)`` returns the
``n_steps`` states following the synchronization point: the end of the
training data, or the end of ``X`` when a recent segment is supplied
(training reuse: the readout is kept, only the reservoir is resynchronized).
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_series, check_steps
from .evaluation import normalized_error, rms_norm, valid_time
from .hybrid import (
    HybridConfig,
    hybrid_config_from_header,
    iter_hybrid,
    resynchronize_hybrid,
    save_hybrid_artifact,
    train_hybrid,
)
from .knowledge import KnowledgeModel, k_step
from .reservoir import (
    ReservoirConfig,
    iter_closed_loop,
    load_artifact,
    resynchronize,
    save_artifact,
    train_reservoir,
)


class _ForecasterMixin:
    def valid_time(self, X_future, f: float = 0.4, X_recent=None) -> tuple[float, bool]:
        """Valid time of a forecast against the true continuation ``X_future``.

        The error is normalized by the RMS norm of the training data.
        """
        check_is_fitted(self)
        X_future = check_series(X_future, self.n_features_in_, name="X_future")
        pred = self.predict(len(X_future), X_recent)
        E = normalized_error(X_future, pred, self.signal_scale_)
        return valid_time(E, f, self.dt_)


class KnowledgeForecaster(_ForecasterMixin, BaseEstimator):
    """Iterates the imperfect model from the last observed state."""

    def __init__(self, system: str = "lorenz", epsilon: float = 0.0):
        self.system = system
        self.epsilon = epsilon

    def fit(self, X, y=None):
        self.model_ = KnowledgeModel(self.system, self.epsilon)
        X = check_series(X, self.model_.dim)
        self.n_features_in_ = X.shape[1]
        self.dt_ = self.model_.step_dt
        self.signal_scale_ = rms_norm(X)
        self.last_state_ = X[-1].copy()
        return self

    def predict(self, n_steps: int, X=None) -> np.ndarray:
        check_is_fitted(self)
        n_steps = check_steps(n_steps)
        u = self.last_state_ if X is None else check_series(X, self.n_features_in_)[-1]
        out = np.empty((n_steps, self.n_features_in_))
        for i in range(n_steps):
            out[i] = u = k_step(self.model_, u)
        return out


class ReservoirForecaster(_ForecasterMixin, BaseEstimator):
    """Echo-state network forecaster with a ridge readout on ``r*``.

    Parameters
    ----------
    n_reservoir : int
        Number of reservoir nodes ``D_r``.
    spectral_radius : float
        Target largest eigenvalue magnitude of the adjacency matrix.
    avg_degree : float
        Mean number of incoming links per node.
    sigma : float
        Input weights are drawn from ``U[-sigma, sigma]``.
    beta : float
        Ridge regularization.
    dt : float
        Sampling interval of the series.
    xi : float
        Washout duration at the start of training (also the default resync span).
    random_state : int
        Seed for the adjacency and input weights.
    """

    def __init__(self, n_reservoir: int = 500, spectral_radius: float = 0.4,
                 avg_degree: float = 3.0, sigma: float = 0.15, beta: float = 1e-6,
                 dt: float = 0.1, xi: float = 10.0, random_state: int = 0):
        self.n_reservoir = n_reservoir
        self.spectral_radius = spectral_radius
        self.avg_degree = avg_degree
        self.sigma = sigma
        self.beta = beta
        self.dt = dt
        self.xi = xi
        self.random_state = random_state

    def _config(self, n_samples: int) -> ReservoirConfig:
        wash = int(round(self.xi / self.dt))
        return ReservoirConfig(D_r=self.n_reservoir, rho=self.spectral_radius,
                               avg_degree=self.avg_degree, sigma=self.sigma, dt=self.dt,
                               T=max(n_samples - 1 - wash, 1) * self.dt, beta=self.beta,
                               xi=self.xi, seed=int(self.random_state))

    def fit(self, X, y=None):
        X = check_series(X, min_samples=2)
        self.config_ = self._config(len(X))
        self.net_, self.readout_ = train_reservoir(self.config_, X)
        self._set_fitted(X)
        return self

    def _set_fitted(self, X):
        self.n_features_in_ = X.shape[1]
        self.dt_ = self.dt
        self.signal_scale_ = rms_norm(X)

    def _synced_copy(self, X):
        net = self.net_.copy()
        if X is not None:
            resynchronize(net, check_series(X, self.n_features_in_))
        return net

    def predict(self, n_steps: int, X=None) -> np.ndarray:
        check_is_fitted(self)
        n_steps = check_steps(n_steps)
        loop = iter_closed_loop(self._synced_copy(X), self.readout_)
        out = np.empty((n_steps, self.n_features_in_))
        for i in range(n_steps):
            out[i] = next(loop)
        return out

    def resync(self, X):
        """Resynchronize the stored reservoir state on recent data, keeping the readout."""
        check_is_fitted(self)
        self.net_ = self._synced_copy(X)
        return self

    def save(self, path):
        check_is_fitted(self)
        save_artifact(path, self.net_, self.readout_, signal_scale=self.signal_scale_)

    @classmethod
    def load(cls, path) -> "ReservoirForecaster":
        header, net, readout = load_artifact(path)
        if header.get("kind") != "reservoir":
            raise ValueError(f"{path}: expected a reservoir artifact, found {header.get('kind')!r}")
        c = net.config
        est = cls(c.D_r, c.rho, c.avg_degree, c.sigma, c.beta, c.dt, c.xi, c.seed)
        est.config_, est.net_, est.readout_ = c, net, readout
        est.n_features_in_ = header["M"]
        est.dt_ = c.dt
        est.signal_scale_ = header.get("signal_scale", 1.0)
        return est


class HybridForecaster(ReservoirForecaster):
    """Reservoir coupled to an imperfect knowledge model at input and readout."""

    def __init__(self, system: str = "lorenz", epsilon: float = 0.0, gamma: float = 0.5,
                 n_reservoir: int = 500, spectral_radius: float = 0.4, avg_degree: float = 3.0,
                 sigma: float = 0.15, beta: float = 1e-6, dt: float = 0.1, xi: float = 10.0,
                 random_state: int = 0):
        super().__init__(n_reservoir, spectral_radius, avg_degree, sigma, beta, dt, xi,
                         random_state)
        self.system = system
        self.epsilon = epsilon
        self.gamma = gamma

    def fit(self, X, y=None):
        model = KnowledgeModel(self.system, self.epsilon, self.dt)
        X = check_series(X, model.dim, min_samples=2)
        self.config_ = HybridConfig(self._config(len(X)), self.gamma, model)
        self.model_ = model
        self.net_, self.readout_ = train_hybrid(self.config_, X)
        self._set_fitted(X)
        return self

    def _synced_copy(self, X):
        net = self.net_.copy()
        if X is not None:
            resynchronize_hybrid(net, self.model_, check_series(X, self.n_features_in_))
        return net

    def predict(self, n_steps: int, X=None) -> np.ndarray:
        check_is_fitted(self)
        n_steps = check_steps(n_steps)
        out = np.empty((n_steps, self.n_features_in_))
        if n_steps:
            loop = iter_hybrid(self._synced_copy(X), self.model_, self.readout_)
            for i in range(n_steps):
                out[i] = next(loop)
        return out

    def save(self, path):
        check_is_fitted(self)
        save_hybrid_artifact(path, self.net_, self.readout_, self.config_,
                             signal_scale=self.signal_scale_)

    @classmethod
    def load(cls, path) -> "HybridForecaster":
        header, net, readout = load_artifact(path)
        if header.get("kind") != "hybrid":
            raise ValueError(f"{path}: expected a hybrid artifact, found {header.get('kind')!r}")
        config = hybrid_config_from_header(header, net)
        c = config.reservoir
        est = cls(config.model.system, config.model.epsilon, config.gamma, c.D_r, c.rho,
                  c.avg_degree, c.sigma, c.beta, c.dt, c.xi, c.seed)
        est.config_, est.net_, est.readout_, est.model_ = config, net, readout, config.model
        est.n_features_in_ = readout.W_out.shape[0]
        est.dt_ = c.dt
        est.signal_scale_ = header.get("signal_scale", 1.0)
        return est
