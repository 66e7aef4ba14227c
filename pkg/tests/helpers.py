"""Shared, cached synthetic datasets for the multi-seed tests."""

from functools import lru_cache

import numpy as np

from eimkit.features import eim_frame, predictive_features
from eimkit.records import apply_filters, derive_outcomes
from eimkit.synthgen import default_eim_spec, generate

N_RECORDS = 20_000
SEEDS = range(20)


class SeedData:
    def __init__(self, seed, spec=None):
        spec = spec or default_eim_spec(N_RECORDS, seed)
        records, truth = generate(spec)
        kept, self.filter_report = apply_filters(records)
        scorer = truth.quality_scorer()
        self.truth = truth
        self.frame = eim_frame(kept, scorer)
        rated = [r for r in kept if r.responded]
        self.features = predictive_features(rated, scorer)
        outs = [derive_outcomes(r) for r in rated]
        self.effective = np.array([o.effective for o in outs], dtype=float)
        self.inclusive = np.array([o.inclusive for o in outs], dtype=float)
        self.orgs = [r.org_id for r in rated]


@lru_cache(maxsize=None)
def seed_data(seed: int) -> SeedData:
    return SeedData(seed)


def make_record(**overrides):
    from eimkit.records import AttendeeMeetingRecord, N_QUALITY_STATS, RELIABILITY_FLAGS

    base = dict(
        meeting_id="m1", user_id="u1", org_id="A", meeting_size=5, call_duration_min=30.0, recurring=False,
        start_hour_local=10, day_of_week=2, nef_normalized=0.2, video_duration_fraction=0.5,
        screenshare_fraction=0.0, headset=True, reliability_flags=dict.fromkeys(RELIABILITY_FLAGS, False),
        quality_stats=tuple([0.0] * N_QUALITY_STATS), calls_same_day=2, minutes_in_meetings_same_day=60.0,
        effective_stars=5, inclusive_stars=4, response_time_s=10.0,
    )
    base.update(overrides)
    return AttendeeMeetingRecord(**base)
