import copy

import numpy as np
import pytest

from eimkit.errors import DataError
from eimkit.features import EFFECTIVE, INCLUSIVE, PARTICIPATION, QUALITY, SMALL_MEETING, outcome_frame
from eimkit.gbdt import GbdtParams, auc, train
from eimkit.records import parse_records, serialize_record
from eimkit.skew import perfect_meeting_rate
from eimkit.synthgen import (
    DEFAULT_INTERCEPTS, DEFAULT_TARGET_RATES, PLANTED_ODDS_RATIOS, GeneratorSpec, GroundTruth, calibrate_intercepts,
    default_eim_spec, generate, generate_cqf, generate_glm_data, mirrored_spec, org_shift_spec,
)


@pytest.fixture(scope="module")
def default_run():
    return generate(default_eim_spec(20000, seed=1))


def test_generation_is_reproducible():
    a, _ = generate(default_eim_spec(500, seed=3))
    b, _ = generate(default_eim_spec(500, seed=3))
    c, _ = generate(default_eim_spec(500, seed=4))
    assert a == b and a != c


def test_records_validate_through_jsonl(default_run):
    recs = default_run[0][:300]
    assert parse_records([serialize_record(r) for r in recs]) == recs


def test_truth_lists_planted_edges(default_run):
    truth = default_run[1]
    planted = {(s, t): v for t, block in PLANTED_ODDS_RATIOS.items() for s, v in block.items()}
    got = {(e["source"], e["target"]): e["or"] for e in truth.edges}
    assert got.keys() == planted.keys()
    for k, v in planted.items():
        assert got[k] == pytest.approx(v)
    assert GroundTruth.from_dict(truth.to_dict()) == truth


def test_outcome_rates_match_calibration(default_run):
    recs, truth = default_run
    rates = outcome_frame(recs).mean()
    for o, target in DEFAULT_TARGET_RATES.items():
        assert rates[o] == pytest.approx(target, abs=0.02)
        assert truth.expected_rates[o] == pytest.approx(target, abs=0.01)


def test_pmr_matches_expected(default_run):
    recs, truth = default_run
    rated = [r for r in recs if r.responded]
    assert perfect_meeting_rate(rated) == pytest.approx(truth.expected_pmr, abs=0.05)


def test_calibration_reproduces_default_intercepts():
    got = calibrate_intercepts(default_eim_spec(), DEFAULT_TARGET_RATES, n=100_000)
    for o, b in DEFAULT_INTERCEPTS.items():
        assert got[o] == pytest.approx(b, abs=0.05)


def test_cqf_classifier_reaches_auc():
    spec = default_eim_spec()
    X, y = generate_cqf(spec, 12000, seed=5)
    model = train(X[:9000], y[:9000], GbdtParams(tree_count=150))
    assert auc(model.predict_proba(X[9000:]), y[9000:]) >= 0.74


def test_spec_roundtrip_and_validation():
    spec = org_shift_spec(100, seed=2)
    back = GeneratorSpec.from_dict(spec.to_dict())
    assert back.to_dict() == spec.to_dict()
    bad = copy.deepcopy(spec)
    bad.structural[PARTICIPATION]["Mystery"] = 1.0
    with pytest.raises(DataError, match="Mystery"):
        bad.validate()
    bad = copy.deepcopy(spec)
    bad.structural[PARTICIPATION][EFFECTIVE] = 1.0  # downstream outcome
    with pytest.raises(DataError):
        bad.validate()


def test_mirrored_spec_swaps_direction():
    spec = mirrored_spec(default_eim_spec(2000))
    _, truth = generate(spec)
    assert truth.direction == f"{EFFECTIVE}->{INCLUSIVE}"
    assert spec.planted_or(EFFECTIVE, INCLUSIVE) == pytest.approx(PLANTED_ODDS_RATIOS[EFFECTIVE][INCLUSIVE])


def test_org_shift_moves_only_that_org():
    recs, truth = generate(org_shift_spec(20000, seed=0, org="D"))
    assert set(truth.org_shifts) == {"D"}
    small = {o: np.mean([r.meeting_size <= 8 for r in recs if r.org_id == o]) for o in "ABCD"}
    assert small["D"] > small["A"] + 0.2
    assert abs(small["A"] - small["B"]) < 0.05


def test_glm_data_generator_checks_terms():
    cov = {"x": lambda rng, n: rng.random(n) < 0.5}
    frame = generate_glm_data({"Intercept": 0.0, "x": 1.0}, cov, 1000, 0)
    assert set(frame.columns) == {"x", "y"}
    with pytest.raises(DataError):
        generate_glm_data({"x : z": 1.0}, cov, 10, 0)


def test_quality_flag_follows_planted_rate(default_run):
    from eimkit.features import binary_features

    recs, truth = default_run
    flags = binary_features(recs, truth.quality_scorer())[QUALITY]
    assert flags.mean() == pytest.approx(0.13, abs=0.03)
    assert binary_features(recs[:50], truth.quality_scorer())[SMALL_MEETING].isin([0, 1]).all()
