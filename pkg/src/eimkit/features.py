"""Binary features for the graph model and the wider predictive vocabulary.

Continuous telemetry is binarized by scanning thresholds for maximal lift
in an outcome; reliability flags collapse into one composite; the
quality-issue flag comes from a pluggable probability model over the 40
quality statistics.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Optional, Protocol, Sequence

import numpy as np
import pandas as pd

from .errors import DataError, DegenerateError
from .records import RELIABILITY_FLAGS, AttendeeMeetingRecord, derive_outcomes

SMALL_MEETING = "Small Meeting (8 or less)"
SHORT_CALL = "Short Call (10min. or less)"
VIDEO_30 = "Video Duration > 30%"
SCREENSHARE = "ScreenShare"
HEADSET = "Headset"
RECURRING = "Recurring"
QUALITY = "Quality Issues"
RELIABILITY = "Reliability Issues"

EFFECTIVE = "Effective"
INCLUSIVE = "Inclusive"
PARTICIPATION = "Participation"
OUTCOMES = (PARTICIPATION, INCLUSIVE, EFFECTIVE)

GRAPH_FEATURES = (SMALL_MEETING, SHORT_CALL, VIDEO_30, SCREENSHARE, HEADSET, RECURRING, QUALITY, RELIABILITY)


@dataclass(frozen=True)
class BinarizationRule:
    source_field: str
    threshold: float
    direction: str  # "greater" | "less_or_equal"
    feature_name: str

    def __post_init__(self):
        if self.direction not in ("greater", "less_or_equal"):
            raise ValueError(f"unknown direction {self.direction!r}")

    def apply(self, values) -> np.ndarray:
        v = np.asarray(values, dtype=float)
        hit = v > self.threshold if self.direction == "greater" else v <= self.threshold
        return hit.astype(np.int8)

    def to_dict(self) -> dict:
        return asdict(self)


DEFAULT_RULES = (
    BinarizationRule("meeting_size", 8, "less_or_equal", SMALL_MEETING),
    BinarizationRule("call_duration_min", 10, "less_or_equal", SHORT_CALL),
    BinarizationRule("video_duration_fraction", 0.30, "greater", VIDEO_30),
    BinarizationRule("screenshare_fraction", 0.10, "greater", SCREENSHARE),
)


def rules_manifest(rules=DEFAULT_RULES) -> list:
    return [r.to_dict() for r in rules]


def rules_from_manifest(items) -> tuple:
    return tuple(BinarizationRule(**d) for d in items)


def compute_lift(x, y) -> float:
    """Lift of ``x`` by ``y``: P(x=1 | y=1) / P(x=1)."""
    x = np.asarray(x, dtype=bool)
    y = np.asarray(y, dtype=bool)
    if x.shape != y.shape:
        raise DataError("series lengths differ")
    px = x.mean() if x.size else 0.0
    if px == 0 or not y.any():
        raise DegenerateError("lift undefined: zero base rate")
    return float(x[y].mean() / px)


def default_grid(kind: str = "fraction") -> np.ndarray:
    if kind == "fraction":
        return np.round(np.linspace(0.01, 0.9, 90), 10)
    raise ValueError(kind)


def scan_threshold(values, outcome, grid: Sequence[float], direction: str = "greater",
                   source_field: str = "value", feature_name: Optional[str] = None) -> BinarizationRule:
    """Grid threshold whose indicator gives the outcome its largest lift.

    Ties go to the grid value nearest the grid median, then to the smaller
    threshold. Grid points whose indicator is all-0 or all-1 are skipped.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0 or np.any(np.diff(grid) <= 0):
        raise DataError("grid must be nonempty and ascending")
    values = np.asarray(values, dtype=float)
    outcome = np.asarray(outcome, dtype=bool)
    if values.shape != outcome.shape:
        raise DataError("series lengths differ")
    lifts = lift_profile(values, outcome, grid, direction)
    valid = ~np.isnan(lifts)
    if not valid.any():
        raise DegenerateError("no valid threshold: every grid point gives a degenerate indicator")
    best = np.max(lifts[valid])
    ties = np.flatnonzero(valid & np.isclose(lifts, best, rtol=1e-12, atol=0.0))
    median = float(np.median(grid))
    t = min(grid[ties], key=lambda g: (abs(g - median), g))
    return BinarizationRule(source_field, float(t), direction, feature_name or f"{source_field} {direction} {t:g}")


def lift_profile(values, outcome, grid, direction="greater") -> np.ndarray:
    """Lift of the outcome by the indicator at each grid point (NaN where degenerate)."""
    values = np.asarray(values, dtype=float)
    outcome = np.asarray(outcome, dtype=bool)
    out = np.full(len(grid), np.nan)
    if not outcome.any():
        return out
    for k, t in enumerate(grid):
        ind = values > t if direction == "greater" else values <= t
        if ind.all() or not ind.any():
            continue
        out[k] = compute_lift(outcome, ind)
    return out


def composite_reliability(record: AttendeeMeetingRecord) -> int:
    return int(any(record.reliability_flags.get(k, False) for k in RELIABILITY_FLAGS))


class ProbabilityModel(Protocol):
    def predict_proba(self, X: np.ndarray) -> np.ndarray: ...


@dataclass(frozen=True)
class LogisticScorer:
    """Linear-logistic probability model over the quality statistics."""

    weights: tuple
    bias: float

    def predict_proba(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        from .glm import sigmoid

        return sigmoid(X @ np.asarray(self.weights) + self.bias)

    def to_dict(self) -> dict:
        return {"kind": "logistic", "weights": list(self.weights), "bias": self.bias}


@dataclass(frozen=True)
class ConstantScorer:
    value: float = 0.0

    def predict_proba(self, X):
        return np.full(np.atleast_2d(X).shape[0], float(self.value))

    def to_dict(self) -> dict:
        return {"kind": "constant", "value": self.value}


def quality_model_from_dict(d: dict):
    kind = d.get("kind")
    if kind == "logistic":
        return LogisticScorer(tuple(d["weights"]), float(d["bias"]))
    if kind == "constant":
        return ConstantScorer(float(d["value"]))
    if kind == "gbdt":
        from .gbdt import GbdtModel

        return GbdtModel.from_dict(d)
    raise DataError(f"unknown quality model kind {kind!r}")


def quality_issue_probability(records, model: Optional[ProbabilityModel]) -> np.ndarray:
    """Predicted probability of a poor call-quality rating for each record."""
    if model is None:
        raise DataError("quality model is not trained")
    if isinstance(records, AttendeeMeetingRecord):
        records = [records]
    stats = np.array([r.quality_stats for r in records], dtype=float).reshape(len(records), -1)
    return np.clip(np.asarray(model.predict_proba(stats), dtype=float), 0.0, 1.0)


def quality_issue_flag(probability, cutoff: float = 0.5) -> np.ndarray:
    return (np.asarray(probability) > cutoff).astype(np.int8)


# --------------------------------------------------------------------------
# tables


def outcome_frame(records) -> pd.DataFrame:
    rows = [derive_outcomes(r) for r in records]
    return pd.DataFrame({
        EFFECTIVE: np.array([np.nan if o.effective is None else o.effective for o in rows], dtype=float),
        INCLUSIVE: np.array([np.nan if o.inclusive is None else o.inclusive for o in rows], dtype=float),
        PARTICIPATION: np.array([o.participation for o in rows], dtype=float),
    })


def binary_features(records, quality_model: Optional[ProbabilityModel] = None, rules=DEFAULT_RULES,
                    cutoff: float = 0.5) -> pd.DataFrame:
    """The canonical binary feature set, one row per record, no missing cells."""
    if quality_model is None:
        raise DataError("a quality model is required to derive Quality Issues")
    cols = {}
    for rule in rules:
        cols[rule.feature_name] = rule.apply([getattr(r, rule.source_field) for r in records])
    cols[HEADSET] = np.array([r.headset for r in records], dtype=np.int8)
    cols[RECURRING] = np.array([r.recurring for r in records], dtype=np.int8)
    cols[QUALITY] = quality_issue_flag(quality_issue_probability(records, quality_model), cutoff) if records else np.zeros(0, np.int8)
    cols[RELIABILITY] = np.array([composite_reliability(r) for r in records], dtype=np.int8)
    return pd.DataFrame(cols)


def eim_frame(records, quality_model, rules=DEFAULT_RULES, cutoff: float = 0.5) -> pd.DataFrame:
    """Binary attributes plus the three outcomes (survey outcomes NaN when missing)."""
    frame = binary_features(records, quality_model, rules, cutoff)
    out = outcome_frame(records)
    for c in out:
        frame[c] = out[c].to_numpy()
    return frame


def predictive_features(records, quality_model: ProbabilityModel) -> pd.DataFrame:
    """The telemetry-only vocabulary used by the boosted-tree models.

    Survey outcomes never appear here, so ``Inclusive`` cannot leak into an
    ``Effective`` model.
    """
    if quality_model is None:
        raise DataError("a quality model is required")
    n = len(records)
    get = lambda name, dt=float: np.array([getattr(r, name) for r in records], dtype=dt)  # noqa: E731
    video = get("video_duration_fraction")
    share = get("screenshare_fraction")
    size = get("meeting_size")
    dur = get("call_duration_min")
    calls = get("calls_same_day")
    minutes = get("minutes_in_meetings_same_day")
    dow = get("day_of_week", int)
    nef = get("nef_normalized")
    pq = quality_issue_probability(records, quality_model) if n else np.zeros(0)
    flags = {k: np.array([r.reliability_flags[k] for r in records], dtype=float) for k in RELIABILITY_FLAGS}
    cols = {
        "Microphone Failure (Initialization)": flags["microphone_failure_init"],
        "Microphone Failure (Mid-Call)": flags["microphone_failure_midcall"],
        "Media Failure": flags["media_failure"],
        "Reconnect Failure": flags["reconnect_failure"],
        "One-Way Audio": flags["one_way_audio"],
        "Call Dropped": flags["call_dropped"],
        "Video Duration Percent": video,
        "Audio Only": ((video == 0) & (share == 0)).astype(float),
        "Video Only": ((video > 0) & (share == 0)).astype(float),
        "Video or ScreenShare": ((video > 0) | (share > 0)).astype(float),
        "ScreenShare Only": ((video == 0) & (share > 0)).astype(float),
        "Audio Participation Rate": nef,
        "Is Friday": (dow == 4).astype(float),
        "Is Monday": (dow == 0).astype(float),
        "Meeting Size": size,
        "Call Duration": dur,
        "Predicted Probability of Call Quality Issues": pq,
        "Total Time In Meeting In The Same Day": minutes,
        "Total Calls In The Same Day": calls,
        "ScreenShare > 10%": (share > 0.10).astype(float),
        QUALITY: (pq > 0.5).astype(float),
        RELIABILITY: np.array([composite_reliability(r) for r in records], dtype=float),
        PARTICIPATION: (nef > 0.10).astype(float),
        VIDEO_30: (video > 0.30).astype(float),
        RECURRING: get("recurring", float),
        SCREENSHARE: (share > 0).astype(float),
        SMALL_MEETING: (size <= 8).astype(float),
        SHORT_CALL: (dur <= 10).astype(float),
        "Long Call (1hr or more)": (dur >= 60).astype(float),
        HEADSET: get("headset", float),
        "Busy Day (10 or More Calls)": (calls >= 10).astype(float),
        "Short Hours in Meetings (Less Than 1hr In Calls On The Same Day)": (minutes < 60).astype(float),
    }
    return pd.DataFrame(cols)


# --------------------------------------------------------------------------
# per-meeting aggregation


@dataclass(frozen=True)
class MeetingAggregate:
    meeting_id: str
    participation_bin: str  # all_100 | mid_40_99 | low_under_40
    participation_fraction: float
    mean_effective: Optional[float]
    mean_inclusive: Optional[float]
    meeting_size: int
    n_attendees: int


def participation_bin(fraction: float) -> str:
    if fraction >= 1.0:
        return "all_100"
    if fraction >= 0.40:
        return "mid_40_99"
    return "low_under_40"


def aggregate_meeting(records) -> MeetingAggregate:
    """Meeting-level participation bin and mean ratings over the responses present."""
    records = list(records)
    if not records:
        raise DataError("empty meeting group")
    ids = {r.meeting_id for r in records}
    if len(ids) != 1:
        raise DataError(f"records span several meetings: {sorted(ids)}")
    outs = [derive_outcomes(r) for r in records]
    frac = sum(o.participation for o in outs) / len(outs)
    eff = [o.effective for o in outs if o.effective is not None]
    inc = [o.inclusive for o in outs if o.inclusive is not None]
    return MeetingAggregate(
        meeting_id=records[0].meeting_id,
        participation_bin=participation_bin(frac),
        participation_fraction=frac,
        mean_effective=sum(eff) / len(eff) if eff else None,
        mean_inclusive=sum(inc) / len(inc) if inc else None,
        meeting_size=records[0].meeting_size,
        n_attendees=len(records),
    )


def aggregate_meetings(records) -> list:
    groups: dict = {}
    for r in records:
        groups.setdefault(r.meeting_id, []).append(r)
    return [aggregate_meeting(g) for g in groups.values()]


def wilson_interval(successes: int, n: int, z: float = 1.959963984540054):
    if n <= 0:
        raise DegenerateError("empty group")
    p = successes / n
    denom = 1 + z * z / n
    centre = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    return max(0.0, centre - half), min(1.0, centre + half)
