import math

import numpy as np
import pytest

from eimkit.errors import DataError, SingularDesignError
from eimkit.features import RECURRING
from eimkit.interaction import (
    CANNED, MEETING_SIZE, SHORT_CALL_30, SIZE_RECURRING_COEFFICIENTS, SIZE_RECURRING_SPEC, VIDEO_PARTICIPATION_SPEC,
    ModelSpec, fit_spec, interaction_frame, linear_predictor, per_two_participants, predict_scenario,
    scenario_delta, size_recurring_covariates, sweep,
)
from eimkit.synthgen import generate_glm_data

from helpers import make_record


def test_model_spec_columns_and_duplicates():
    assert SIZE_RECURRING_SPEC.columns() == [SHORT_CALL_30, MEETING_SIZE, RECURRING]
    with pytest.raises(SingularDesignError):
        ModelSpec("y", ["a", "a:b".replace(":", " : "), "a  :  b".replace("  :  ", " : ")])
    back = ModelSpec.from_dict(VIDEO_PARTICIPATION_SPEC.to_dict())
    assert back.terms == VIDEO_PARTICIPATION_SPEC.terms


def test_linear_predictor_by_hand():
    c = SIZE_RECURRING_COEFFICIENTS
    s = {SHORT_CALL_30: 1, MEETING_SIZE: 10, RECURRING: 1}
    eta = 3.80 - 0.27 - 0.06 * 10 + 0.0 * 10 - 0.37 + 0.03 * 10
    assert linear_predictor(c, s) == pytest.approx(eta)
    assert predict_scenario(c, s) == pytest.approx(1 / (1 + math.exp(-eta)))
    with pytest.raises(DataError, match="Recurring"):
        linear_predictor(c, {SHORT_CALL_30: 1, MEETING_SIZE: 3})


def test_reference_scenarios_are_ordered():
    c = SIZE_RECURRING_COEFFICIENTS
    sc = SIZE_RECURRING_SPEC.scenarios
    assert predict_scenario(c, sc["oneoff_long_2"]) > predict_scenario(c, sc["oneoff_long_14"])
    assert scenario_delta(c, sc["recurring_short_8"], sc["recurring_short_10"]) < 0
    d = per_two_participants(c, sc["recurring_short_8"])
    assert d == pytest.approx(scenario_delta(c, sc["recurring_short_8"], sc["recurring_short_10"]))


def test_sweep_grid_shape():
    frame = sweep(SIZE_RECURRING_COEFFICIENTS, {SHORT_CALL_30: 0, RECURRING: 0}, MEETING_SIZE, range(2, 15),
                  **{RECURRING: [0, 1], SHORT_CALL_30: [0, 1]})
    assert len(frame) == 13 * 4
    assert list(frame.columns)[-1] == "probability"
    one = frame[(frame[RECURRING] == 0) & (frame[SHORT_CALL_30] == 0)]
    assert np.all(np.diff(one["probability"]) < 0)


def test_fit_recovers_coefficients_in_se_units():
    data = generate_glm_data(SIZE_RECURRING_COEFFICIENTS, size_recurring_covariates(), 50_000, 3,
                             SIZE_RECURRING_SPEC.outcome)
    fit = fit_spec(data, SIZE_RECURRING_SPEC)
    for k, v in SIZE_RECURRING_COEFFICIENTS.items():
        assert abs(fit.coef(k) - v) < 4 * fit.standard_errors[fit.index(k)]


def test_interaction_frame_from_records():
    recs = [make_record(call_duration_min=30.0, meeting_size=9, recurring=True),
            make_record(call_duration_min=31.0, effective_stars=None, inclusive_stars=None, response_time_s=None)]
    f = interaction_frame(recs)
    assert list(f[SHORT_CALL_30]) == [1.0, 0.0]
    assert f["Small Meeting (8 or less)"].tolist() == [0.0, 1.0]
    assert math.isnan(f["Effective"].iloc[1])
    assert set(CANNED) == {"effective_size_recurring", "participation_video"}
    with pytest.raises(DataError, match="outcome"):
        fit_spec(f.drop(columns=["Effective"]), SIZE_RECURRING_SPEC)
