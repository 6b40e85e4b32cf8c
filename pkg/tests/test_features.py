import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import expit

from cluschurn.data import DIMENSION_NAMES, ActivitySeries
from cluschurn.exceptions import ValidationError
from cluschurn.features import (
    ActivityFeaturizer,
    _sigmoid_grid,
    extract_feature_array,
    extract_features,
    fit_sigmoid,
    lag1_autocorr,
    mean_daily,
    read_feature_csv,
    write_feature_csv,
)
from oracles import lag1_direct, sigmoid_dense_grid


def noiseless_row(q=1.0, phi=7.0, T=14):
    """Daily increments whose normalized cumulative sum is the sigmoid on days 1..T-1.

    The last day carries the remaining mass so the cumulative curve ends at 1.
    """
    t = np.arange(1, T + 1)
    y = expit(q * (t - phi))
    y[-1] = 1.0
    return np.diff(np.concatenate([[0.0], y]))


class TestMeanDaily:
    def test_values(self):
        assert mean_daily([3] * 14) == 3.0
        assert mean_daily([0] * 14) == 0.0
        assert mean_daily(range(14)) == 6.5


class TestLag1:
    def test_constant(self):
        assert lag1_autocorr([4] * 14) == 0.0

    def test_alternating(self):
        row = [1, 0] * 7
        assert lag1_autocorr(row) == pytest.approx(lag1_direct(row), abs=1e-12)
        assert lag1_autocorr(row) == pytest.approx(-13 / 14, abs=1e-12)

    def test_terminal_spike(self):
        row = [0] * 13 + [10]
        assert lag1_autocorr(row) == pytest.approx(lag1_direct(row), abs=1e-12)

    def test_too_short(self):
        with pytest.raises(ValidationError):
            lag1_autocorr([1])

    def test_random_integer_series(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            row = rng.integers(0, 20, size=rng.integers(2, 30))
            assert lag1_autocorr(row) == pytest.approx(lag1_direct(row), abs=1e-12)


class TestFitSigmoid:
    def test_noiseless_recovery(self):
        fit = fit_sigmoid(noiseless_row())
        assert abs(fit.q - 1.0) < 1e-3 and abs(fit.phi - 7.0) < 1e-3
        assert not fit.inactive

    @pytest.mark.parametrize("q,phi", [(0.5, 4.0), (2.0, 10.0), (1.5, 3.0)])
    def test_other_curves(self, q, phi):
        fit = fit_sigmoid(noiseless_row(q, phi))
        assert abs(fit.q - q) < 2e-2 and abs(fit.phi - phi) < 5e-2

    def test_all_zero(self):
        fit = fit_sigmoid(np.zeros(14))
        assert (fit.q, fit.phi, fit.residual, fit.inactive) == (0.0, 0.0, 0.0, True)

    def test_step_matches_dense_grid(self):
        row = [0] * 7 + [5] * 7
        fit = fit_sigmoid(row)
        q, phi, obj = sigmoid_dense_grid(row)
        # the grid optimum is within half a grid step of the continuous one
        assert fit.residual <= obj + 1e-9
        assert abs(fit.q - q) < 5e-3 and abs(fit.phi - phi) < 5e-3
        assert 7.0 < fit.phi < 12.0

    def test_never_worse_than_grid(self):
        rng = np.random.default_rng(1)
        gq, gp, curves = _sigmoid_grid(14)
        for _ in range(30):
            row = rng.poisson(rng.uniform(0.1, 5), size=14)
            if not row.any():
                continue
            y = np.cumsum(row) / row.sum()
            fit = fit_sigmoid(row)
            assert fit.residual <= ((curves - y) ** 2).sum(axis=1).min() + 1e-12

    def test_rejects_2d(self):
        with pytest.raises(ValidationError):
            fit_sigmoid(np.zeros((2, 14)))


@settings(max_examples=30, deadline=None)
@given(st.lists(st.integers(0, 30), min_size=14, max_size=14), st.floats(0.1, 50))
def test_scale_equivariance(row, alpha):
    a = np.array(row, dtype=float)
    F1, _ = extract_feature_array(a[None, None])
    F2, _ = extract_feature_array(alpha * a[None, None])
    f1, f2 = F1[0, 0], F2[0, 0]
    assert f2[0] == pytest.approx(alpha * f1[0], rel=1e-12, abs=1e-12)
    assert f2[1] == pytest.approx(f1[1], abs=1e-9)
    assert f2[2:] == pytest.approx(f1[2:], abs=1e-6)


class TestExtract:
    def test_all_zero_series(self):
        fm = extract_features(ActivitySeries("z", np.zeros((12, 14)), DIMENSION_NAMES))
        assert fm.values.shape == (12, 4)
        assert not fm.values.any()
        assert fm.inactive.all()

    def test_composition(self):
        rng = np.random.default_rng(2)
        v = rng.poisson(3, (12, 14)).astype(float)
        v[11] = rng.random(14)
        fm = extract_features(ActivitySeries("r", v, DIMENSION_NAMES))
        for d in range(12):
            fit = fit_sigmoid(v[d])
            assert tuple(fm.values[d]) == (mean_daily(v[d]), lag1_autocorr(v[d]), fit.q, fit.phi)

    def test_flat_rate_recovers_mean(self):
        rng = np.random.default_rng(3)
        rate = 6.0
        X = rng.poisson(rate, (200, 1, 14)).astype(float)
        F, _ = extract_feature_array(X)
        tol = 3 * np.sqrt(rate / 14)
        assert np.mean(np.abs(F[:, 0, 0] - rate) <= tol) >= 0.99

    def test_csv_round_trip(self, tmp_path, small_dataset):
        ids = small_dataset.new_users[:15]
        X = np.stack([s.values for s in small_dataset.series[:15]])
        F, inactive = extract_feature_array(X)
        p = tmp_path / "f.csv"
        write_feature_csv(ids, F, inactive, DIMENSION_NAMES, p)
        assert p.read_text().splitlines()[0] == "user_id,dim,mu,lag1,q,phi,inactive_flag"
        ids2, F2, inactive2 = read_feature_csv(p, DIMENSION_NAMES)
        assert ids2 == ids
        assert np.array_equal(F, F2) and np.array_equal(inactive, inactive2)


class TestFeaturizer:
    def test_shapes(self, small_dataset):
        X = np.stack([s.values for s in small_dataset.series[:5]])
        assert ActivityFeaturizer().fit_transform(X).shape == (5, 48)
        assert ActivityFeaturizer(flatten=False).fit_transform(X).shape == (5, 12, 4)

    def test_get_params(self):
        assert ActivityFeaturizer(flatten=False).get_params() == {"flatten": False}

    def test_rejects_negative(self):
        with pytest.raises(ValidationError):
            ActivityFeaturizer().fit(-np.ones((1, 12, 14)))
