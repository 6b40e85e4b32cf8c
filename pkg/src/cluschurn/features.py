"""Four-parameter descriptors of daily activity rows: volume, burstiness, curve shape.

Each row of an activity matrix becomes ``(mu, lag1, q, phi)``: the mean daily
count, the lag-1 autocorrelation and the steepness / inflection day of a
logistic curve fit to the normalized cumulative counts.
"""

import csv
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.special import expit
from sklearn.base import BaseEstimator, TransformerMixin

from .exceptions import ValidationError
from .validation import check_activity_array

FEATURE_NAMES = ("mu", "lag1", "q", "phi")

_GRID_Q_MAGNITUDES = np.logspace(-2, 1.5, 24)
_GRID_PHI_PER_DAY = 8


class FeatureVector(NamedTuple):
    mu: float
    lag1: float
    q: float
    phi: float


class SigmoidFit(NamedTuple):
    q: float
    phi: float
    residual: float
    inactive: bool


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    user_id: str
    values: np.ndarray  # (D, 4)
    inactive: np.ndarray  # (D,) bool
    dimension_names: tuple

    def rows(self):
        return [FeatureVector(*map(float, r)) for r in self.values]


def mean_daily(row):
    row = np.asarray(row, dtype=np.float64)
    if row.size < 1:
        raise ValidationError("mean_daily needs at least one day")
    return float(row.mean())


def lag1_autocorr(row):
    """Lag-1 sample autocorrelation; 0 for a constant row."""
    row = np.asarray(row, dtype=np.float64)
    if row.ndim != 1 or row.size < 2:
        raise ValidationError("lag-1 autocorrelation needs a 1-D row of at least 2 days")
    return float(_lag1(row[None])[0])


def _lag1(rows):
    dev = rows - rows.mean(axis=1, keepdims=True)
    den = np.einsum("ij,ij->i", dev, dev)
    num = np.einsum("ij,ij->i", dev[:, 1:], dev[:, :-1])
    out = np.zeros(rows.shape[0])
    ok = den > 0
    out[ok] = num[ok] / den[ok]
    return np.clip(out, -1.0, 1.0)


def sigmoid_curve(t, q, phi):
    return expit(q * (np.asarray(t, dtype=np.float64) - phi))


def normalized_cumulative(row):
    c = np.cumsum(np.asarray(row, dtype=np.float64))
    return c / c[-1] if c[-1] > 0 else np.zeros_like(c)


def _sigmoid_grid(T):
    q = np.concatenate([-_GRID_Q_MAGNITUDES[::-1], _GRID_Q_MAGNITUDES])
    phi = np.linspace(0.0, T + 1.0, _GRID_PHI_PER_DAY * (T + 1) + 1)
    qq, pp = np.meshgrid(q, phi, indexing="ij")
    qq, pp = qq.ravel(), pp.ravel()
    t = np.arange(1, T + 1, dtype=np.float64)
    curves = expit(qq[:, None] * (t[None, :] - pp[:, None]))
    return qq, pp, curves


def _gauss_newton(y, q, phi, tol=1e-8, max_iter=100):
    """Refine ``(q, phi)`` from a starting point; steps never increase the residual."""
    t = np.arange(1, y.size + 1, dtype=np.float64)

    def resid(q, phi):
        r = expit(q * (t - phi)) - y
        return r, float(r @ r)

    r, f = resid(q, phi)
    for _ in range(max_iter):
        s = expit(q * (t - phi))
        ds = s * (1 - s)
        J = np.column_stack([ds * (t - phi), -q * ds])
        step, *_ = np.linalg.lstsq(J, -r, rcond=None)
        if not np.all(np.isfinite(step)):
            break
        alpha, accepted = 1.0, False
        while alpha > 1e-10:
            nq, nphi = q + alpha * step[0], phi + alpha * step[1]
            nr, nf = resid(nq, nphi)
            if nf <= f:
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            break
        moved = alpha * np.hypot(step[0], step[1])
        q, phi, r, f = nq, nphi, nr, nf
        if moved < tol:
            break
    return q, phi, f


def fit_sigmoid_rows(rows):
    """Vectorized :func:`fit_sigmoid` over an ``(m, T)`` array.

    Returns arrays ``q, phi, residual, inactive``.
    """
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim != 2 or rows.shape[1] < 2:
        raise ValidationError("sigmoid fitting needs rows of at least 2 days")
    m, T = rows.shape
    c = np.cumsum(rows, axis=1)
    total = c[:, -1]
    inactive = total <= 0
    y = np.zeros_like(c)
    y[~inactive] = c[~inactive] / total[~inactive, None]

    q = np.zeros(m)
    phi = np.zeros(m)
    res = np.zeros(m)
    active = np.nonzero(~inactive)[0]
    if active.size:
        gq, gp, curves = _sigmoid_grid(T)
        sq = np.einsum("ij,ij->i", curves, curves)
        best = np.empty(active.size, dtype=int)
        for lo in range(0, active.size, 512):
            idx = active[lo:lo + 512]
            obj = sq[None, :] - 2.0 * y[idx] @ curves.T
            best[lo:lo + 512] = np.argmin(obj, axis=1)
        for j, i in enumerate(active):
            q[i], phi[i], res[i] = _gauss_newton(y[i], gq[best[j]], gp[best[j]])
    return q, phi, res, inactive


def fit_sigmoid(row):
    """Fit a logistic curve to the normalized cumulative counts of one row.

    An all-zero row returns the inactive convention ``(0, 0, 0, True)``.
    """
    row = np.asarray(row, dtype=np.float64)
    if row.ndim != 1:
        raise ValidationError("fit_sigmoid expects a 1-D row")
    q, phi, res, inactive = fit_sigmoid_rows(row[None])
    return SigmoidFit(float(q[0]), float(phi[0]), float(res[0]), bool(inactive[0]))


def extract_feature_array(X):
    """``(n, D, T)`` activity stack to ``(n, D, 4)`` features plus ``(n, D)`` inactive flags."""
    X = check_activity_array(X, min_days=2)
    n, D, T = X.shape
    rows = X.reshape(n * D, T)
    q, phi, _, inactive = fit_sigmoid_rows(rows)
    F = np.column_stack([rows.mean(axis=1), _lag1(rows), q, phi]).reshape(n, D, 4)
    return F, inactive.reshape(n, D)


def extract_features(s):
    F, inactive = extract_feature_array(s.values[None])
    return FeatureMatrix(s.user_id, F[0], inactive[0], s.dimension_names)


def write_feature_csv(user_ids, F, inactive, dimension_names, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("user_id", "dim") + FEATURE_NAMES + ("inactive_flag",))
        for u, f, flags in zip(user_ids, F, inactive):
            for name, vec, flag in zip(dimension_names, f, flags):
                w.writerow([u, name] + [repr(float(v)) for v in vec] + [int(flag)])


def read_feature_csv(path, dimension_names):
    """Inverse of :func:`write_feature_csv`; returns ``(user_ids, F, inactive)``."""
    dim_index = {n: i for i, n in enumerate(dimension_names)}
    users, data = [], {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        expected = ["user_id", "dim", *FEATURE_NAMES, "inactive_flag"]
        if reader.fieldnames != expected:
            raise ValidationError(f"{path}: expected header {','.join(expected)}")
        for row in reader:
            u = row["user_id"]
            if u not in data:
                users.append(u)
                data[u] = (np.zeros((len(dimension_names), 4)), np.zeros(len(dimension_names), bool))
            if row["dim"] not in dim_index:
                raise ValidationError(f"{path}: unknown dimension {row['dim']!r}")
            d = dim_index[row["dim"]]
            data[u][0][d] = [float(row[k]) for k in FEATURE_NAMES]
            data[u][1][d] = bool(int(row["inactive_flag"]))
    F = np.stack([data[u][0] for u in users])
    inactive = np.stack([data[u][1] for u in users])
    return users, F, inactive


class ActivityFeaturizer(BaseEstimator, TransformerMixin):
    """Stateless transformer from ``(n, D, T)`` activity stacks to feature matrices.

    With ``flatten=True`` the output is ``(n, D * 4)`` so it can feed any
    2-D estimator; otherwise ``(n, D, 4)``.
    """

    def __init__(self, flatten=True):
        self.flatten = flatten

    def fit(self, X, y=None):
        X = check_activity_array(X, min_days=2)
        self.n_dims_in_ = X.shape[1]
        return self

    def transform(self, X):
        F, inactive = extract_feature_array(X)
        return F.reshape(F.shape[0], -1) if self.flatten else F
