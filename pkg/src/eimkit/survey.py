"""In-client survey scheduler simulation.

Meetings arrive in time order. Each meeting is triggered with probability
``trigger_rate``; in a triggered meeting every attendee is shown the survey
unless they saw one less than ``cooldown_days`` ago or fail the eligibility
hook. Shown attendees answer according to a respondent model.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import DataError
from .io import read_text
from .rng import substream

STARS = (1, 2, 3, 4, 5)
# star-rating histograms observed under the production survey
SKEWED_EFFECTIVE = (0.01, 0.01, 0.03, 0.12, 0.82)
SKEWED_INCLUSIVE = (0.01, 0.01, 0.03, 0.10, 0.86)


@dataclass(frozen=True)
class SchedulerConfig:
    trigger_rate: float = 0.10
    cooldown_days: float = 7.0
    survey_timeout_s: float = 30.0
    seed: int = 0
    eligible: Optional[Callable[[str], bool]] = field(default=None, compare=False)

    def __post_init__(self):
        if not 0.0 <= self.trigger_rate <= 1.0:
            raise ValueError("trigger_rate must be in [0, 1]")
        if self.cooldown_days < 0:
            raise ValueError("cooldown_days must be >= 0")
        if self.survey_timeout_s <= 0:
            raise ValueError("survey_timeout_s must be positive")

    def to_dict(self) -> dict:
        return {"trigger_rate": self.trigger_rate, "cooldown_days": self.cooldown_days,
                "survey_timeout_s": self.survey_timeout_s, "seed": self.seed}


def _normalize(p) -> tuple:
    p = np.asarray(p, dtype=float)
    if (p < 0).any() or p.sum() <= 0:
        raise ValueError("star probabilities must be nonnegative with positive total")
    return tuple(float(v) for v in p / p.sum())


def _entropy_bits(p) -> float:
    p = np.asarray(p, dtype=float)
    p = p[p > 0]
    return float(-(p * np.log2(p)).sum())


def flatten_to_entropy(p, target_bits: float) -> tuple:
    """Temper ``p`` (p_i^t, renormalized) until its entropy equals ``target_bits``."""
    p = np.asarray(_normalize(p))
    if not 0 < target_bits < math.log2(len(p)):
        raise ValueError("target entropy out of range")
    lo, hi = 1e-6, 1.0
    while _entropy_bits(p ** hi / (p ** hi).sum()) > target_bits:
        hi *= 2
    for _ in range(200):
        t = 0.5 * (lo + hi)
        q = p ** t / (p ** t).sum()
        if _entropy_bits(q) > target_bits:
            lo = t
        else:
            hi = t
    q = p ** hi / (p ** hi).sum()
    return tuple(float(v) for v in q)


@dataclass(frozen=True)
class RespondentModel:
    """How a shown attendee responds.

    ``effective``/``inclusive`` are star histograms for an attentive answer.
    With probability ``agreement`` the inclusive star copies the effective
    star. Careless responders answer (5, 5) in 1 to 4 seconds. The fatigue
    and busy-day terms shift behavior based on the exposure context.
    """

    name: str = "star-skewed"
    effective: tuple = _normalize(SKEWED_EFFECTIVE)
    inclusive: tuple = _normalize(SKEWED_INCLUSIVE)
    agreement: float = 0.6
    response_rate: float = 0.18
    careless_fraction: float = 0.05
    response_time_median_s: float = 9.0
    response_time_sigma: float = 0.45
    fatigue_window_days: float = 7.0
    fatigue_perfect_boost: float = 0.0  # extra P(answer 5,5) when re-shown within the window
    busy_calls_threshold: int = 10
    busy_response_drop: float = 0.03
    busy_perfect_boost: float = 0.03
    tight_gap_min: float = 5.0  # next meeting starts within this many minutes
    tight_gap_response_drop: float = 0.02
    tight_gap_low_shift: float = 0.02  # mass moved from 5 stars to 3 stars

    def __post_init__(self):
        for name in ("agreement", "response_rate", "careless_fraction", "fatigue_perfect_boost",
                     "busy_response_drop", "busy_perfect_boost", "tight_gap_response_drop", "tight_gap_low_shift"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1]")
        if len(self.effective) != 5 or len(self.inclusive) != 5:
            raise ValueError("star histograms need 5 entries")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["effective"] = list(self.effective)
        d["inclusive"] = list(self.inclusive)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RespondentModel":
        d = dict(d)
        for k in ("effective", "inclusive"):
            if k in d:
                d[k] = _normalize(d[k])
        return cls(**d)


# relative entropy gains of worded options over stars, per question
WORDED_GAIN = {"effective": 2.07 / 1.44, "inclusive": 2.04 / 1.48}


def preset(name: str) -> RespondentModel:
    """``star-skewed`` or ``worded-balanced``."""
    base = RespondentModel()
    if name == "star-skewed":
        return base
    if name == "worded-balanced":
        eff = flatten_to_entropy(base.effective, _entropy_bits(base.effective) * WORDED_GAIN["effective"])
        inc = flatten_to_entropy(base.inclusive, _entropy_bits(base.inclusive) * WORDED_GAIN["inclusive"])
        return replace(base, name=name, effective=eff, inclusive=inc, careless_fraction=0.0)
    raise DataError(f"unknown respondent preset {name!r}; known: star-skewed, worded-balanced")


# --------------------------------------------------------------------------
# meeting stream


@dataclass(frozen=True)
class Attendee:
    user_id: str
    calls_same_day: int = 1
    minutes_to_next_meeting: float = math.inf


@dataclass(frozen=True)
class Meeting:
    meeting_id: str
    time_days: float
    attendees: tuple  # of Attendee


def meeting_stream(n_meetings: int, n_users: int = 2000, days: float = 60.0, size_mean: float = 5.0,
                   seed: int = 0) -> list:
    """Time-ordered synthetic meetings over working hours.

    Attendee context (calls that day, minutes until the next meeting) is
    derived from the stream itself.
    """
    if n_meetings < 0 or n_users < 1 or days <= 0:
        raise DataError("meeting_stream needs n_meetings >= 0, n_users >= 1, days > 0")
    rng = substream(seed, "survey.stream")
    day = np.sort(rng.integers(0, int(math.ceil(days)), size=n_meetings))
    hour = rng.uniform(8.0, 18.0, size=n_meetings)
    t = day + hour / 24.0
    order = np.lexsort((hour, day))
    t = t[order]
    duration_min = np.clip(rng.lognormal(math.log(30.0), 0.5, size=n_meetings), 5, 150)
    sizes = np.clip(2 + rng.poisson(size_mean - 2, size=n_meetings), 2, n_users)
    # users with a higher weight meet more often
    weight = rng.gamma(2.0, 1.0, size=n_users)
    weight /= weight.sum()
    rosters = [rng.choice(n_users, size=int(s), replace=False, p=weight) for s in sizes]

    per_user = {}
    for m, roster in enumerate(rosters):
        for u in roster:
            per_user.setdefault(int(u), []).append(m)
    calls = {}
    gap = {}
    for u, ms in per_user.items():
        days_of = np.floor(t[ms]).astype(int)
        counts = {d: int((days_of == d).sum()) for d in set(days_of.tolist())}
        for k, m in enumerate(ms):
            calls[(u, m)] = counts[int(days_of[k])]
            if k + 1 < len(ms):
                end = t[m] + duration_min[m] / 1440.0
                gap[(u, m)] = max(0.0, (t[ms[k + 1]] - end) * 1440.0)
    out = []
    for m, roster in enumerate(rosters):
        atts = tuple(Attendee(f"u{int(u):05d}", calls[(int(u), m)], gap.get((int(u), m), math.inf)) for u in roster)
        out.append(Meeting(f"s{m:07d}", float(t[m]), atts))
    return out


# --------------------------------------------------------------------------
# scheduler


@dataclass(frozen=True)
class SimEvent:
    time: float
    meeting_id: str
    user_id: str
    triggered: bool
    shown: bool
    suppressed_reason: Optional[str] = None  # not_triggered | cooldown | ineligible
    responded: bool = False
    effective_stars: Optional[int] = None
    inclusive_stars: Optional[int] = None
    response_time_s: Optional[float] = None
    days_since_last_shown: Optional[float] = None
    exposure_count: int = 0  # shows before this one
    calls_same_day: int = 1
    minutes_to_next_meeting: Optional[float] = None

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SimEventLog:
    events: list
    config: dict = field(default_factory=dict)

    def to_jsonl(self) -> str:
        lines = [json.dumps({"config": self.config}, sort_keys=True)]
        lines += [json.dumps(e.to_dict(), sort_keys=True) for e in self.events]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_jsonl(cls, text: str) -> "SimEventLog":
        config, events = {}, []
        for n, line in enumerate(text.splitlines(), start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"line {n}: malformed JSON: {exc.msg}") from exc
            if "config" in obj and len(obj) == 1:
                config = obj["config"]
            else:
                events.append(SimEvent(**obj))
        return cls(events, config)

    @classmethod
    def read(cls, path) -> "SimEventLog":
        return cls.from_jsonl(read_text(path))

    def shown(self) -> list:
        return [e for e in self.events if e.shown]

    def responses(self) -> list:
        return [e for e in self.events if e.responded]

    def meeting_trigger_fraction(self) -> tuple:
        """(triggered meetings, meetings)."""
        seen = {}
        for e in self.events:
            seen.setdefault(e.meeting_id, e.triggered)
        return sum(seen.values()), len(seen)

    def cooldown_violations(self, cooldown_days: float) -> list:
        """Every pair of consecutive shows for one user closer than ``cooldown_days``."""
        last = {}
        bad = []
        for e in self.events:
            if not e.shown:
                continue
            prev = last.get(e.user_id)
            if prev is not None and e.time - prev < cooldown_days:
                bad.append((e.user_id, prev, e.time))
            last[e.user_id] = e.time
        return bad


def _draw_stars(rng, model: RespondentModel, perfect_boost: float, low_shift: float):
    if rng.random() < perfect_boost:
        return 5, 5
    pe = np.array(model.effective)
    pi = np.array(model.inclusive)
    if low_shift > 0:
        for p in (pe, pi):
            moved = min(low_shift, p[4])
            p[4] -= moved
            p[2] += moved
    e = int(rng.choice(5, p=pe)) + 1
    i = e if rng.random() < model.agreement else int(rng.choice(5, p=pi)) + 1
    return e, i


def run_scheduler(stream: Sequence[Meeting], config: SchedulerConfig = SchedulerConfig(),
                  respondent: RespondentModel = RespondentModel()) -> SimEventLog:
    """Run the trigger / cool-down / response state machine over ``stream``."""
    trig_rng = substream(config.seed, "survey.trigger")
    resp_rng = substream(config.seed, "survey.response")
    last_shown = {}
    exposures = {}
    events = []
    prev_t = -math.inf
    for m in stream:
        if m.time_days < prev_t:
            raise DataError(f"meeting stream is not time-ordered at {m.meeting_id}")
        prev_t = m.time_days
        triggered = bool(trig_rng.random() < config.trigger_rate)
        for a in m.attendees:
            last = last_shown.get(a.user_id)
            since = None if last is None else m.time_days - last
            nxt = None if math.isinf(a.minutes_to_next_meeting) else a.minutes_to_next_meeting
            ctx = dict(time=m.time_days, meeting_id=m.meeting_id, user_id=a.user_id, triggered=triggered,
                       days_since_last_shown=since, exposure_count=exposures.get(a.user_id, 0),
                       calls_same_day=a.calls_same_day, minutes_to_next_meeting=nxt)
            if not triggered:
                events.append(SimEvent(shown=False, suppressed_reason="not_triggered", **ctx))
                continue
            if config.eligible is not None and not config.eligible(a.user_id):
                events.append(SimEvent(shown=False, suppressed_reason="ineligible", **ctx))
                continue
            if since is not None and since < config.cooldown_days:
                events.append(SimEvent(shown=False, suppressed_reason="cooldown", **ctx))
                continue
            last_shown[a.user_id] = m.time_days
            exposures[a.user_id] = exposures.get(a.user_id, 0) + 1
            events.append(_respond(resp_rng, respondent, config, ctx))
    return SimEventLog(events, config.to_dict() | {"respondent": respondent.name})


def _respond(rng, model: RespondentModel, config: SchedulerConfig, ctx: dict) -> SimEvent:
    busy = ctx["calls_same_day"] >= model.busy_calls_threshold
    tight = ctx["minutes_to_next_meeting"] is not None and ctx["minutes_to_next_meeting"] < model.tight_gap_min
    rate = model.response_rate - (model.busy_response_drop if busy else 0.0) - (model.tight_gap_response_drop if tight else 0.0)
    if rng.random() >= max(rate, 0.0):
        return SimEvent(shown=True, **ctx)
    if rng.random() < model.careless_fraction:
        return SimEvent(shown=True, responded=True, effective_stars=5, inclusive_stars=5,
                        response_time_s=round(float(rng.uniform(1.0, 4.0)), 3), **ctx)
    rt = float(np.exp(math.log(model.response_time_median_s) + model.response_time_sigma * rng.standard_normal()))
    if rt > config.survey_timeout_s:
        return SimEvent(shown=True, **ctx)  # timed out
    fatigued = ctx["days_since_last_shown"] is not None and ctx["days_since_last_shown"] < model.fatigue_window_days
    boost = (model.fatigue_perfect_boost if fatigued else 0.0) + (model.busy_perfect_boost if busy else 0.0)
    e, i = _draw_stars(rng, model, min(boost, 1.0), model.tight_gap_low_shift if tight else 0.0)
    return SimEvent(shown=True, responded=True, effective_stars=e, inclusive_stars=i,
                    response_time_s=round(rt, 3), **ctx)
