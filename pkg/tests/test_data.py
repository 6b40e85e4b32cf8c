import json

import numpy as np
import pytest

from cluschurn.data import (
    ACTIVITY_NAMES,
    DIMENSION_NAMES,
    ActivitySeries,
    Archetype,
    SyntheticSpec,
    churn_labels,
    compute_churn_label,
    default_spec,
    generate_synthetic,
    load_activities,
    load_labels,
    save_activities,
    save_labels,
    stack_series,
)
from cluschurn.exceptions import ParseError, RangeError, ValidationError


def _series(values=None, uid="a"):
    v = np.zeros((12, 14)) if values is None else values
    return ActivitySeries(uid, v, DIMENSION_NAMES)


def _write_csv(path, rows, header=None):
    header = header or ["user_id", "day", *DIMENSION_NAMES]
    lines = [",".join(header)] + [",".join(map(str, r)) for r in rows]
    path.write_text("\n".join(lines) + "\n")


def _row(uid, day, fill=1):
    return [uid, day] + [fill] * 12


class TestActivitySeries:
    def test_rejects_negative(self):
        v = np.zeros((12, 14))
        v[0, 0] = -1
        with pytest.raises(ValidationError):
            _series(v)

    def test_rejects_density_above_one(self):
        v = np.zeros((12, 14))
        v[11, 3] = 1.5
        with pytest.raises(ValidationError):
            _series(v)

    def test_values_are_read_only(self):
        s = _series()
        with pytest.raises(ValueError):
            s.values[0, 0] = 3

    def test_behavioral_excludes_network_rows(self):
        assert _series().behavioral().shape == (10, 14)


class TestChurnLabel:
    def test_all_zero_is_churn(self):
        assert compute_churn_label(_series()).churned

    def test_single_week_two_event(self):
        v = np.zeros((12, 14))
        v[ACTIVITY_NAMES.index("chat_sent"), 8] = 1  # day 9
        assert not compute_churn_label(_series(v)).churned

    def test_week_one_only(self):
        v = np.zeros((12, 14))
        v[:10, :7] = 4
        assert compute_churn_label(_series(v)).churned

    def test_network_growth_is_not_activity(self):
        v = np.zeros((12, 14))
        v[10] = np.arange(1, 15)
        assert compute_churn_label(_series(v)).churned

    def test_window_outside_series(self):
        with pytest.raises(RangeError):
            compute_churn_label(_series(), (8, 15))
        with pytest.raises(RangeError):
            compute_churn_label(_series(), (9, 8))

    def test_custom_window(self):
        v = np.zeros((12, 14))
        v[0, 2] = 1
        label = compute_churn_label(_series(v), (2, 4))
        assert not label.churned
        assert (label.window_start_day, label.window_end_day) == (2, 4)


class TestLoadActivities:
    def test_one_complete_user(self, tmp_path):
        p = tmp_path / "a.csv"
        _write_csv(p, [_row("u1", d) for d in range(1, 15)])
        (s,) = load_activities(p)
        assert s.values.shape == (12, 14)
        assert np.all(s.values == 1)

    def test_missing_day_is_zero(self, tmp_path):
        p = tmp_path / "a.csv"
        _write_csv(p, [_row("u1", d) for d in range(1, 15) if d != 3])
        (s,) = load_activities(p)
        assert np.all(s.values[:, 2] == 0)
        assert np.all(s.values[:, 3] == 1)

    def test_negative_count(self, tmp_path):
        p = tmp_path / "a.csv"
        _write_csv(p, [_row("u1", 1, -2)])
        with pytest.raises(ValidationError, match="negative"):
            load_activities(p)

    def test_duplicate_user_day(self, tmp_path):
        p = tmp_path / "a.csv"
        _write_csv(p, [_row("u1", 1), _row("u1", 1)])
        with pytest.raises(ValidationError, match="duplicate"):
            load_activities(p)

    def test_day_beyond_horizon(self, tmp_path):
        p = tmp_path / "a.csv"
        _write_csv(p, [_row("u1", 15)])
        with pytest.raises(ValidationError):
            load_activities(p)

    def test_malformed_row_names_line(self, tmp_path):
        p = tmp_path / "a.csv"
        _write_csv(p, [_row("u1", 1), ["u1", 2, 3]])
        with pytest.raises(ParseError, match="line 3"):
            load_activities(p)

    def test_non_numeric_count_names_line(self, tmp_path):
        p = tmp_path / "a.csv"
        r = _row("u1", 2)
        r[4] = "many"
        _write_csv(p, [_row("u1", 1), r])
        with pytest.raises(ParseError, match="line 3"):
            load_activities(p)

    def test_unknown_column_is_named(self, tmp_path):
        p = tmp_path / "a.csv"
        header = ["user_id", "day", *DIMENSION_NAMES[:-1], "mystery"]
        _write_csv(p, [_row("u1", 1)], header)
        with pytest.raises(ValidationError, match="mystery"):
            load_activities(p)

    def test_users_keep_file_order(self, tmp_path):
        p = tmp_path / "a.csv"
        _write_csv(p, [_row("zed", 1), _row("amy", 1), _row("zed", 2)])
        assert [s.user_id for s in load_activities(p)] == ["zed", "amy"]

    def test_json_unknown_column(self, tmp_path):
        p = tmp_path / "a.json"
        names = list(DIMENSION_NAMES[:-1]) + ["mystery"]
        p.write_text(json.dumps([{"user_id": "u", "dimension_names": names,
                                  "values": np.zeros((12, 14)).tolist()}]))
        with pytest.raises(ValidationError, match="mystery"):
            load_activities(p)

    def test_json_parse_error_has_line(self, tmp_path):
        p = tmp_path / "a.json"
        p.write_text("[\n{\"user_id\": 1,\n")
        with pytest.raises(ParseError, match="line"):
            load_activities(p)


@pytest.mark.parametrize("fmt", ["csv", "json"])
def test_round_trip_bit_exact(tmp_path, small_dataset, fmt):
    rng = np.random.default_rng(0)
    series = list(small_dataset.series[:20])
    # non-integer values too, to exercise the repr path
    v = series[0].values.copy()
    v[:10] = v[:10] + rng.random((10, 14)) / 3
    series[0] = ActivitySeries(series[0].user_id, v, DIMENSION_NAMES)
    path = tmp_path / f"x.{fmt}"
    save_activities(series, path)
    back = load_activities(path)
    assert [s.user_id for s in back] == [s.user_id for s in series]
    for a, b in zip(series, back):
        assert np.array_equal(a.values, b.values)


def test_labels_round_trip(tmp_path, small_dataset):
    p = tmp_path / "labels.csv"
    save_labels(small_dataset.new_users, small_dataset.archetypes, small_dataset.churned, p)
    back = load_labels(p)
    u = small_dataset.new_users[5]
    assert back[u] == (small_dataset.archetypes[5], int(small_dataset.churned[5]))


class TestSpec:
    def test_proportions_must_sum_to_one(self):
        with pytest.raises(ValidationError):
            SyntheticSpec((Archetype("a", {}, 1.0, proportion=0.5),))

    def test_churn_probability_range(self):
        with pytest.raises(ValidationError):
            SyntheticSpec((Archetype("a", {"chat_sent": (1, "flat")}, 1.2),))

    def test_unknown_shape(self):
        with pytest.raises(ValidationError):
            SyntheticSpec((Archetype("a", {"chat_sent": (1, "wobbly")}, 0.5),))

    def test_silent_archetype_must_churn(self):
        with pytest.raises(ValidationError):
            SyntheticSpec((Archetype("a", {}, 0.5),))

    def test_shapes(self):
        a = Archetype("a", {"chat_sent": (2, "decaying"), "snap_sent": (2, "growing"),
                            "chat_received": (2, "zero")}, 0.5)
        r = a.rates(14)
        i, j, k = (ACTIVITY_NAMES.index(n) for n in ("chat_sent", "snap_sent", "chat_received"))
        assert np.all(np.diff(r[i]) < 0)
        assert np.all(np.diff(r[j]) > 0)
        assert not r[k].any()


class TestGenerator:
    def test_sleeper_only(self):
        spec = SyntheticSpec((Archetype("Sleeper", {}, 1.0),), seed=1)
        ds = generate_synthetic(spec, 30)
        _, X = stack_series(ds.series)
        assert not X[:, :10].any()
        assert ds.churned.all()
        assert churn_labels(ds.series).all()

    def test_deterministic(self):
        a = generate_synthetic(default_spec(5), 80)
        b = generate_synthetic(default_spec(5), 80)
        assert a.new_users == b.new_users and a.archetypes == b.archetypes
        assert a.graph.edges() == b.graph.edges()
        for s, t in zip(a.series, b.series):
            assert np.array_equal(s.values, t.values)

    def test_deterministic_bytes(self, tmp_path):
        for name in ("a", "b"):
            save_activities(generate_synthetic(default_spec(2), 50).series, tmp_path / f"{name}.csv")
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()

    def test_seed_changes_output(self):
        a = generate_synthetic(default_spec(0), 50)
        b = generate_synthetic(default_spec(1), 50)
        assert any(not np.array_equal(s.values, t.values) for s, t in zip(a.series, b.series))

    def test_labels_match_planted_flags(self, default_dataset):
        assert np.array_equal(churn_labels(default_dataset.series), default_dataset.churned)

    def test_churn_rates_near_spec(self, default_dataset):
        # oracle: Monte-Carlo count over the generated labels
        spec = default_spec(0)
        arch = np.array(default_dataset.archetypes)
        for a in spec.archetypes:
            rate = default_dataset.churned[arch == a.name].mean()
            assert abs(rate - a.churn_probability) <= 0.1, a.name

    def test_proportions(self, default_dataset):
        arch = np.array(default_dataset.archetypes)
        for a in default_spec(0).archetypes:
            assert (arch == a.name).sum() == round(600 * a.proportion)

    def test_network_rows_follow_snapshots(self, small_dataset):
        from cluschurn.graph import daily_network_series
        snaps = small_dataset.snapshots()
        for s in small_dataset.series[:10]:
            assert np.allclose(daily_network_series(snaps, s.user_id), s.values[10:])

    def test_size_ranges(self, default_dataset):
        spec = {a.name: a for a in default_spec(0).archetypes}
        for s, name in zip(default_dataset.series, default_dataset.archetypes):
            lo, hi = spec[name].size_range
            assert lo <= s.values[10, -1] <= hi

    def test_rejects_empty(self):
        with pytest.raises(ValidationError):
            generate_synthetic(default_spec(0), 0)
