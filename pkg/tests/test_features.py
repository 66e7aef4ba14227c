import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from eimkit.errors import DataError, DegenerateError
from eimkit.features import (
    DEFAULT_RULES, GRAPH_FEATURES, OUTCOMES, QUALITY, RELIABILITY, SMALL_MEETING, BinarizationRule, ConstantScorer,
    LogisticScorer, aggregate_meeting, binary_features, compute_lift, default_grid, eim_frame, participation_bin,
    predictive_features, quality_model_from_dict, rules_from_manifest, rules_manifest, scan_threshold,
    wilson_interval,
)

from helpers import make_record


def test_lift_matches_definition():
    x = np.array([1, 1, 0, 0, 1, 0, 0, 0])
    y = np.array([1, 1, 1, 0, 0, 0, 0, 0])
    # P(x|y) = 2/3, P(x) = 3/8
    assert compute_lift(x, y) == pytest.approx((2 / 3) / (3 / 8))
    with pytest.raises(DegenerateError):
        compute_lift(np.zeros(4), np.ones(4))


def test_scan_threshold_finds_planted_cut():
    rng = np.random.default_rng(0)
    v = rng.random(20000)
    rate = np.select([v <= 0.3, v <= 0.5], [0.2, 0.8], 0.5)
    y = rng.random(20000) < rate
    rule = scan_threshold(v, y, np.round(np.arange(0.05, 0.95, 0.05), 10), feature_name="v")
    assert rule.threshold == 0.3
    assert rule.direction == "greater"


def test_scan_threshold_tie_break_prefers_grid_median():
    v = np.array([0.0, 0.0, 1.0, 1.0])
    y = np.array([0, 0, 1, 1])
    rule = scan_threshold(v, y, [0.2, 0.5, 0.8])
    assert rule.threshold == 0.5


def test_scan_threshold_rejects_bad_grid():
    with pytest.raises(DataError):
        scan_threshold([0.1, 0.2], [0, 1], [0.5, 0.2])
    with pytest.raises(DegenerateError):
        scan_threshold([0.1, 0.2], [0, 1], [0.9])


def test_default_grid_is_ascending_fraction_grid():
    g = default_grid()
    assert g[0] == 0.01 and g[-1] == 0.9 and np.all(np.diff(g) > 0)


def test_rules_manifest_roundtrip():
    assert rules_from_manifest(rules_manifest()) == DEFAULT_RULES
    with pytest.raises(ValueError):
        BinarizationRule("x", 1, "sideways", "X")


@given(size=st.integers(1, 100))
def test_small_meeting_rule(size):
    assert DEFAULT_RULES[0].apply([size])[0] == int(size <= 8)


def test_binary_features_and_frames():
    recs = [make_record(meeting_size=5, reliability_flags={"call_dropped": True}),
            make_record(meeting_size=12, effective_stars=None, inclusive_stars=None, response_time_s=None)]
    bf = binary_features(recs, ConstantScorer(0.9))
    assert list(bf[SMALL_MEETING]) == [1, 0]
    assert list(bf[RELIABILITY]) == [1, 0]
    assert list(bf[QUALITY]) == [1, 1]
    frame = eim_frame(recs, ConstantScorer(0.1))
    assert set(GRAPH_FEATURES) | set(OUTCOMES) <= set(frame.columns)
    assert math.isnan(frame["Effective"].iloc[1])


def test_predictive_features_exclude_survey_outcomes():
    X = predictive_features([make_record(), make_record(meeting_size=20)], ConstantScorer(0.2))
    assert X.shape == (2, 32)
    assert not {"Effective", "Inclusive"} & set(X.columns)
    assert not X.isna().any().any()


def test_quality_model_roundtrip():
    m = LogisticScorer(weights=tuple([0.5] + [0.0] * 39), bias=-1.0)
    back = quality_model_from_dict(m.to_dict())
    X = np.random.default_rng(1).normal(size=(5, 40))
    np.testing.assert_allclose(back.predict_proba(X), m.predict_proba(X))
    with pytest.raises(DataError):
        quality_model_from_dict({"kind": "mystery"})


def test_meeting_aggregate_bins():
    recs = [make_record(user_id=f"u{i}", nef_normalized=nef) for i, nef in enumerate([0.5, 0.5, 0.0])]
    agg = aggregate_meeting(recs)
    assert agg.participation_fraction == pytest.approx(2 / 3)
    assert agg.participation_bin == "mid_40_99"
    assert participation_bin(1.0) == "all_100" and participation_bin(0.39) == "low_under_40"
    with pytest.raises(DataError):
        aggregate_meeting([make_record(meeting_id="a"), make_record(meeting_id="b")])


def test_wilson_interval_known_value():
    lo, hi = wilson_interval(8, 10)
    assert lo == pytest.approx(0.4901625, abs=1e-6)
    assert hi == pytest.approx(0.9433178, abs=1e-6)
    with pytest.raises(DegenerateError):
        wilson_interval(0, 0)
