"""Input checks shared by the estimators and the CLI."""

from __future__ import annotations

import numpy as np
from sklearn.utils.validation import check_array

from .dynamics import Trajectory


def check_series(X, n_features: int | None = None, min_samples: int = 1,
                 name: str = "X") -> np.ndarray:
    """Validate a time series ``(n_samples, n_features)``; accepts a :class:`Trajectory`."""
    if isinstance(X, Trajectory):
        X = X.samples
    X = check_array(X, dtype=np.float64, ensure_min_samples=min_samples,
                    input_name=name)
    if n_features is not None and X.shape[1] != n_features:
        raise ValueError(f"{name} has {X.shape[1]} features, expected {n_features}")
    return X


def check_state(u, n_features: int, name: str = "u0") -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if u.ndim != 1 or u.shape[0] != n_features:
        raise ValueError(f"{name} must be a vector of length {n_features}, got shape {u.shape}")
    if not np.all(np.isfinite(u)):
        raise ValueError(f"{name} contains non-finite values")
    return u


def check_steps(n_steps) -> int:
    if isinstance(n_steps, (bool, np.bool_)) or int(n_steps) != n_steps or n_steps < 0:
        raise ValueError(f"n_steps must be a non-negative integer, got {n_steps!r}")
    return int(n_steps)
