import json

import pytest
from hypothesis import given, strategies as st

from eimkit.errors import RecordError
from eimkit.records import (
    FilterPolicy, apply_filters, derive_outcomes, parse_records, record_from_dict, serialize_record,
)

from helpers import make_record


def test_roundtrip_through_jsonl():
    recs = [make_record(meeting_id=f"m{i}", effective_stars=None, inclusive_stars=None, response_time_s=None)
            if i % 2 else make_record(meeting_id=f"m{i}") for i in range(4)]
    text = "\n".join(serialize_record(r) for r in recs) + "\n\n"
    assert parse_records(text) == recs


def test_parse_errors_carry_line_and_field():
    good = serialize_record(make_record())
    bad = json.loads(good)
    bad["meeting_size"] = -1
    with pytest.raises(RecordError) as exc:
        parse_records([good, json.dumps(bad)])
    assert exc.value.line == 2 and exc.value.field == "meeting_size"
    with pytest.raises(RecordError) as exc:
        parse_records([good, "{not json"])
    assert exc.value.line == 2


def test_missing_field_is_reported():
    d = make_record().to_dict()
    del d["org_id"]
    with pytest.raises(RecordError, match="org_id"):
        record_from_dict(d)


def test_filters_charge_first_failing_rule():
    r = make_record(meeting_size=2, call_duration_min=200.0, response_time_s=1.0)
    kept, report = apply_filters([r])
    assert kept == [] and report.dropped["participants"] == 1
    assert report.to_dict()["kept"] == 0


def test_custom_policy():
    kept, _ = apply_filters([make_record(meeting_size=4)], FilterPolicy(min_participants=5))
    assert kept == []
    with pytest.raises(ValueError):
        FilterPolicy(max_duration_min=0)


def test_unanswered_survey_is_missing_not_zero():
    o = derive_outcomes(make_record(effective_stars=None, inclusive_stars=None, response_time_s=None))
    assert o.effective is None and o.inclusive is None


@given(e=st.integers(1, 5), i=st.integers(1, 5), nef=st.floats(0.0, 1.0))
def test_outcomes_follow_thresholds(e, i, nef):
    o = derive_outcomes(make_record(effective_stars=e, inclusive_stars=i, nef_normalized=nef))
    assert (o.effective, o.inclusive, o.participation) == (int(e >= 4), int(i >= 4), int(nef > 0.1))
