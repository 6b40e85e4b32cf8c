"""Input validation helpers used by the estimators and the CLI."""

import numpy as np

from .exceptions import NotFittedError, ValidationError


def check_activity_array(X, n_dims=None, min_days=1, copy=False):
    """Validate a stack of activity matrices.

    Accepts a single ``(D, T)`` matrix or an ``(n, D, T)`` stack and always
    returns a float64 ``(n, D, T)`` array.
    """
    X = np.array(X, dtype=np.float64, copy=copy)
    if X.ndim == 2:
        X = X[None]
    if X.ndim != 3:
        raise ValidationError(f"expected an (n, D, T) activity array, got shape {X.shape}")
    if X.shape[0] == 0:
        raise ValidationError("activity array holds no users")
    if n_dims is not None and X.shape[1] != n_dims:
        raise ValidationError(f"expected {n_dims} activity dimensions, got {X.shape[1]}")
    if X.shape[2] < min_days:
        raise ValidationError(f"series must span at least {min_days} day(s), got {X.shape[2]}")
    if not np.all(np.isfinite(X)):
        raise ValidationError("activity array contains non-finite values")
    if np.any(X < 0):
        raise ValidationError("activity counts must be non-negative")
    return X


def check_feature_array(F, n_params=4):
    """Validate per-user feature matrices, returning float64 ``(n, D, n_params)``.

    A flattened ``(n, D * n_params)`` matrix is reshaped.
    """
    F = np.asarray(F, dtype=np.float64)
    if F.ndim == 2:
        if F.shape[1] % n_params:
            raise ValidationError(
                f"flattened features need a multiple of {n_params} columns, got {F.shape[1]}")
        F = F.reshape(F.shape[0], -1, n_params)
    if F.ndim != 3 or F.shape[2] != n_params:
        raise ValidationError(f"expected (n, D, {n_params}) features, got shape {F.shape}")
    if F.shape[0] == 0:
        raise ValidationError("feature array holds no users")
    if not np.all(np.isfinite(F)):
        raise ValidationError("feature array contains non-finite values")
    return F


def check_points(X, min_samples=1):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2 or X.shape[1] < 1:
        raise ValidationError(f"expected an (n, d) point matrix, got shape {X.shape}")
    if X.shape[0] < min_samples:
        raise ValidationError(f"need at least {min_samples} points, got {X.shape[0]}")
    if not np.all(np.isfinite(X)):
        raise ValidationError("points contain non-finite values")
    return X


def check_binary_labels(y, n=None):
    y = np.asarray(y)
    if y.ndim != 1:
        raise ValidationError("labels must be one-dimensional")
    if n is not None and y.shape[0] != n:
        raise ValidationError(f"got {y.shape[0]} labels for {n} samples")
    if not np.all(np.isin(y, (0, 1))):
        raise ValidationError("churn labels must be 0/1")
    return y.astype(np.float64)


def check_distributions(Q, n=None, atol=1e-9):
    """Validate a row-stochastic matrix such as soft typing targets."""
    Q = np.asarray(Q, dtype=np.float64)
    if Q.ndim != 2:
        raise ValidationError("expected a 2-D matrix of probability rows")
    if n is not None and Q.shape[0] != n:
        raise ValidationError(f"got {Q.shape[0]} rows for {n} samples")
    if np.any(Q < 0) or not np.all(np.isfinite(Q)):
        raise ValidationError("probability rows must be finite and non-negative")
    if not np.allclose(Q.sum(axis=1), 1.0, atol=atol):
        raise ValidationError("probability rows must sum to 1")
    return Q


def check_is_fitted(estimator, attributes):
    if isinstance(attributes, str):
        attributes = [attributes]
    missing = [a for a in attributes if getattr(estimator, a, None) is None]
    if missing:
        raise NotFittedError(
            f"{type(estimator).__name__} is not fitted yet; call fit() first")


def as_rng(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)
