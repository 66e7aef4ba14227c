"""Interaction GLMs over a few meeting attributes, and scenario prediction.

Two canned model specs ship with the package: size x duration x
recurring effects on Effective (numeric meeting size) and size x video x
duration effects on Participation. Reference coefficients are kept
alongside so scenarios can be evaluated without refitting.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
import pandas as pd

from .errors import DataError, SingularDesignError
from .features import EFFECTIVE, INCLUSIVE, PARTICIPATION, RECURRING, SMALL_MEETING, VIDEO_30
from .glm import INTERCEPT, DesignMatrix, FittedGlm, fit_logistic_irls, sigmoid
from .records import derive_outcomes

MEETING_SIZE = "Meeting Size"
CALL_DURATION = "Call Duration"
SHORT_CALL_30 = "Short Call (30min or less)"


@dataclass
class ModelSpec:
    outcome: str
    terms: list  # column names or "A : B" products
    scenarios: dict = field(default_factory=dict)  # name -> {column: value}

    def __post_init__(self):
        normalized = [" : ".join(p.strip() for p in t.split(" : ")) for t in self.terms]
        dup = sorted({t for t in normalized if normalized.count(t) > 1})
        if dup:
            raise SingularDesignError(dup)
        self.terms = normalized

    def columns(self) -> list:
        """Base columns referenced by the terms, in first-use order."""
        out = []
        for t in self.terms:
            for part in t.split(" : "):
                if part not in out:
                    out.append(part)
        return out

    def to_dict(self) -> dict:
        return {"outcome": self.outcome, "terms": list(self.terms), "scenarios": dict(self.scenarios)}

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        return cls(d["outcome"], list(d["terms"]), dict(d.get("scenarios", {})))


# Effective ~ size x short call (30 min) + size x recurring
SIZE_RECURRING_SPEC = ModelSpec(
    EFFECTIVE,
    [SHORT_CALL_30, MEETING_SIZE, f"{SHORT_CALL_30} : {MEETING_SIZE}", RECURRING, f"{RECURRING} : {MEETING_SIZE}"],
    scenarios={
        "recurring_short_8": {SHORT_CALL_30: 1, MEETING_SIZE: 8, RECURRING: 1},
        "recurring_short_10": {SHORT_CALL_30: 1, MEETING_SIZE: 10, RECURRING: 1},
        "oneoff_long_2": {SHORT_CALL_30: 0, MEETING_SIZE: 2, RECURRING: 0},
        "oneoff_long_14": {SHORT_CALL_30: 0, MEETING_SIZE: 14, RECURRING: 0},
    },
)
SIZE_RECURRING_COEFFICIENTS = {
    INTERCEPT: 3.80,
    SHORT_CALL_30: -0.27,
    MEETING_SIZE: -0.06,
    f"{SHORT_CALL_30} : {MEETING_SIZE}": 0.00,
    RECURRING: -0.37,
    f"{RECURRING} : {MEETING_SIZE}": 0.03,
}

# Participation ~ small meeting x video + duration interactions. A duplicated
# "small : video" row in the reference coefficients is read as small : duration.
VIDEO_PARTICIPATION_SPEC = ModelSpec(
    PARTICIPATION,
    [SMALL_MEETING, VIDEO_30, CALL_DURATION, f"{SMALL_MEETING} : {VIDEO_30}", f"{VIDEO_30} : {CALL_DURATION}",
     f"{SMALL_MEETING} : {CALL_DURATION}"],
    scenarios={
        "small_video": {SMALL_MEETING: 1, VIDEO_30: 1, CALL_DURATION: 30},
        "small_no_video": {SMALL_MEETING: 1, VIDEO_30: 0, CALL_DURATION: 30},
        "large_video": {SMALL_MEETING: 0, VIDEO_30: 1, CALL_DURATION: 30},
        "large_no_video": {SMALL_MEETING: 0, VIDEO_30: 0, CALL_DURATION: 30},
    },
)
VIDEO_PARTICIPATION_COEFFICIENTS = {
    INTERCEPT: -0.40,
    SMALL_MEETING: 2.00,
    VIDEO_30: 0.16,
    CALL_DURATION: 0.00,
    f"{SMALL_MEETING} : {VIDEO_30}": 0.46,
    f"{VIDEO_30} : {CALL_DURATION}": 0.00,
    f"{SMALL_MEETING} : {CALL_DURATION}": 0.00,
}

CANNED = {"effective_size_recurring": (SIZE_RECURRING_SPEC, SIZE_RECURRING_COEFFICIENTS),
          "participation_video": (VIDEO_PARTICIPATION_SPEC, VIDEO_PARTICIPATION_COEFFICIENTS)}


def interaction_frame(records) -> pd.DataFrame:
    """Numeric and binary columns used by the canned specs, plus outcomes (NaN when unrated)."""
    size = np.array([r.meeting_size for r in records], dtype=float)
    dur = np.array([r.call_duration_min for r in records], dtype=float)
    video = np.array([r.video_duration_fraction for r in records], dtype=float)
    outs = [derive_outcomes(r) for r in records]
    nan = float("nan")
    return pd.DataFrame({
        MEETING_SIZE: size,
        CALL_DURATION: dur,
        SHORT_CALL_30: (dur <= 30).astype(float),
        RECURRING: np.array([r.recurring for r in records], dtype=float),
        SMALL_MEETING: (size <= 8).astype(float),
        VIDEO_30: (video > 0.30).astype(float),
        EFFECTIVE: [nan if o.effective is None else float(o.effective) for o in outs],
        INCLUSIVE: [nan if o.inclusive is None else float(o.inclusive) for o in outs],
        PARTICIPATION: [float(o.participation) for o in outs],
    })


def fit_spec(data, spec: ModelSpec) -> FittedGlm:
    """Fit ``spec`` on a frame (or a list of records); rows missing the outcome are skipped."""
    frame = data if isinstance(data, pd.DataFrame) else interaction_frame(data)
    if spec.outcome not in frame:
        raise DataError(f"outcome {spec.outcome!r} not in data")
    frame = frame.loc[frame[spec.outcome].notna()]
    if len(frame) == 0:
        raise DataError(f"no rows with {spec.outcome!r} present")
    dm = DesignMatrix.from_frame(frame, spec.terms, intercept=True)
    return fit_logistic_irls(dm.values, frame[spec.outcome].to_numpy(dtype=float), dm.columns)


def _coefficients(model) -> dict:
    if isinstance(model, FittedGlm):
        return dict(zip(model.columns, (float(b) for b in model.coefficients)))
    return dict(model)


def linear_predictor(model, scenario: Mapping[str, float]) -> float:
    """beta . x for one scenario; ``model`` is a fit or a {term: coefficient} mapping."""
    coefs = _coefficients(model)
    eta = 0.0
    for term, b in coefs.items():
        if term == INTERCEPT:
            eta += b
            continue
        v = 1.0
        for part in term.split(" : "):
            part = part.strip()
            if part not in scenario:
                raise DataError(f"scenario does not assign column {part!r}")
            v *= float(scenario[part])
        eta += b * v
    return eta


def predict_scenario(model, scenario: Mapping[str, float]) -> float:
    return float(sigmoid(linear_predictor(model, scenario)))


def scenario_delta(model, scenario_a: Mapping[str, float], scenario_b: Mapping[str, float]) -> float:
    """predict(b) - predict(a)."""
    return predict_scenario(model, scenario_b) - predict_scenario(model, scenario_a)


def sweep(model, base: Mapping[str, float], column: str, values: Sequence[float], **grid) -> pd.DataFrame:
    """Predicted probability as ``column`` varies, for every combination of ``grid`` values.

    ``grid`` maps further column names to value lists, e.g.
    ``sweep(m, base, "Meeting Size", range(2, 15), Recurring=[0, 1])``.
    """
    combos = [dict()]
    for name, options in grid.items():
        combos = [{**c, name: v} for c in combos for v in options]
    rows = []
    for c in combos:
        for v in values:
            scen = {**base, **c, column: v}
            rows.append({**scen, "probability": predict_scenario(model, scen)})
    cols = list(dict.fromkeys(list(base) + list(grid) + [column])) + ["probability"]
    return pd.DataFrame(rows)[cols]


def per_two_participants(model, scenario: Mapping[str, float], size_from: float = 8,
                         size_column: str = MEETING_SIZE) -> float:
    """Probability change when two attendees join a meeting of ``size_from``."""
    a = {**scenario, size_column: size_from}
    b = {**scenario, size_column: size_from + 2}
    return scenario_delta(model, a, b)


# --------------------------------------------------------------------------
# synthetic data from a coefficient table


def size_recurring_covariates(size_range=(2, 50), recurring_rate: float = 0.5, short_rate: float = 0.5) -> dict:
    """Samplers for ``synthgen.generate_glm_data`` matching the size/recurring/short-call spec."""
    lo, hi = size_range
    return {
        MEETING_SIZE: lambda rng, n: rng.integers(lo, hi + 1, size=n),
        RECURRING: lambda rng, n: rng.random(n) < recurring_rate,
        SHORT_CALL_30: lambda rng, n: rng.random(n) < short_rate,
    }


def coefficient_errors(fit: FittedGlm, planted: Mapping[str, float]) -> dict:
    return {k: float(fit.coef(k) - v) for k, v in planted.items()}
