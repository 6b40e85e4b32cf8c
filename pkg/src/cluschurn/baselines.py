"""Shared train/test splits and the logistic-regression comparator."""

from dataclasses import dataclass

import numpy as np
from scipy.special import expit
from sklearn.base import BaseEstimator, ClassifierMixin

from .exceptions import ValidationError
from .validation import as_rng, check_activity_array, check_binary_labels, check_is_fitted


@dataclass(frozen=True)
class Split:
    train: tuple
    test: tuple
    seed: int
    ratio: float


def make_splits(ids, ratio=0.8, n_repeats=10, seed=0):
    """``n_repeats`` seeded shuffles of ``ids`` into train / test parts."""
    ids = list(ids)
    n = len(ids)
    if not 0 < ratio < 1:
        raise ValidationError(f"split ratio must lie in (0, 1), got {ratio}")
    if n < 2:
        raise ValidationError("need at least 2 users to split")
    n_train = min(max(int(round(ratio * n)), 1), n - 1)
    rng = as_rng(seed)
    out = []
    for _ in range(n_repeats):
        perm = rng.permutation(n)
        out.append(Split(tuple(ids[i] for i in perm[:n_train]),
                         tuple(ids[i] for i in perm[n_train:]), seed, ratio))
    return out


def _objective(w, b, X, y, alpha):
    z = X @ w + b
    # log(1 + e^z) - y z, stable for large |z|
    loss = np.mean(np.logaddexp(0.0, z) - y * z) + 0.5 * alpha * (w @ w)
    r = expit(z) - y
    gw = X.T @ r / len(y) + alpha * w
    gb = r.mean()
    return loss, gw, gb


def logreg_train(X, y, alpha=1e-2, tol=1e-6, max_iter=5000, w0=None, b0=0.0):
    """Minimize mean log loss + ``alpha/2 |w|^2`` by accelerated gradient descent.

    The step is ``1/L`` with ``L`` the gradient's Lipschitz bound; momentum is
    reset whenever the objective rises. Stops when the gradient norm falls
    below ``tol`` or after ``max_iter`` iterations. Returns ``(w, b, n_iter)``.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, p = X.shape
    L = 0.25 * (np.linalg.norm(X, 2) ** 2 + n) / n + alpha
    step = 1.0 / L
    w = np.zeros(p) if w0 is None else np.array(w0, dtype=np.float64)
    b = float(b0)
    vw, vb = w.copy(), b
    f_prev = np.inf
    theta = 1.0
    for it in range(1, max_iter + 1):
        f, gw, gb = _objective(vw, vb, X, y, alpha)
        if np.sqrt(gw @ gw + gb * gb) < tol:
            w, b = vw, vb
            break
        w_new, b_new = vw - step * gw, vb - step * gb
        f_new = _objective(w_new, b_new, X, y, alpha)[0]
        if f_new > f_prev:
            # restart momentum from the last accepted point
            theta = 1.0
            vw, vb = w, b
            continue
        theta_new = (1 + np.sqrt(1 + 4 * theta * theta)) / 2
        mom = (theta - 1) / theta_new
        vw = w_new + mom * (w_new - w)
        vb = b_new + mom * (b_new - b)
        w, b, theta, f_prev = w_new, b_new, theta_new, f_new
    return w, b, it


def logreg_predict(w, b, X):
    return expit(np.asarray(X, dtype=np.float64) @ w + b)


class LogisticRegressionGD(BaseEstimator, ClassifierMixin):
    """L2 logistic regression on flattened, z-scored first-``window``-day counts."""

    def __init__(self, window=14, alpha=1e-2, tol=1e-6, max_iter=5000):
        self.window = window
        self.alpha = alpha
        self.tol = tol
        self.max_iter = max_iter

    def _design(self, X):
        X = check_activity_array(X, min_days=self.window)
        return X[:, :, :self.window].reshape(X.shape[0], -1)

    def fit(self, X, y):
        Z = self._design(X)
        y = check_binary_labels(y, n=Z.shape[0])
        self.mean_ = Z.mean(axis=0)
        sd = Z.std(axis=0)
        self.scale_ = np.where(sd > 0, sd, 1.0)
        self.coef_, self.intercept_, self.n_iter_ = logreg_train(
            (Z - self.mean_) / self.scale_, y, self.alpha, self.tol, self.max_iter)
        self.classes_ = np.array([0, 1])
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "coef_")
        p = logreg_predict(self.coef_, self.intercept_, (self._design(X) - self.mean_) / self.scale_)
        return np.column_stack([1 - p, p])

    def predict(self, X):
        return (self.predict_proba(X)[:, 1] >= 0.5).astype(int)
