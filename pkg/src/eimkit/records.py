"""Attendee-meeting records: schema, JSON Lines ingestion, filters and outcomes.

One record is one attendee's telemetry (plus an optional survey response)
for one meeting. Records travel as JSON Lines with snake_case keys that
match the dataclass fields below.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, Optional

from .errors import RecordError

RELIABILITY_FLAGS = (
    "call_dropped",
    "one_way_audio",
    "reconnect_failure",
    "media_failure",
    "microphone_failure_init",
    "microphone_failure_midcall",
)
N_QUALITY_STATS = 40
PARTICIPATION_NEF_THRESHOLD = 0.10


@dataclass(frozen=True)
class AttendeeMeetingRecord:
    meeting_id: str
    user_id: str
    org_id: str
    meeting_size: int
    call_duration_min: float
    recurring: bool
    start_hour_local: int
    day_of_week: int
    nef_normalized: float
    video_duration_fraction: float
    screenshare_fraction: float
    headset: bool
    reliability_flags: dict
    quality_stats: tuple
    calls_same_day: int
    minutes_in_meetings_same_day: float
    effective_stars: Optional[int] = None
    inclusive_stars: Optional[int] = None
    response_time_s: Optional[float] = None

    @property
    def responded(self) -> bool:
        return self.effective_stars is not None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["quality_stats"] = list(self.quality_stats)
        d["reliability_flags"] = dict(self.reliability_flags)
        return d


@dataclass(frozen=True)
class FilterPolicy:
    min_participants: int = 3
    max_duration_min: float = 150.0
    min_response_time_s: float = 4.0

    def __post_init__(self):
        if self.min_participants <= 0 or self.max_duration_min <= 0 or self.min_response_time_s <= 0:
            raise ValueError("filter thresholds must be positive")


@dataclass(frozen=True)
class EimOutcomes:
    """Binary outcomes; ``None`` marks a missing survey answer (never 0)."""

    effective: Optional[int]
    inclusive: Optional[int]
    participation: int


@dataclass
class FilterReport:
    kept: int = 0
    dropped: dict = field(default_factory=lambda: {"participants": 0, "duration": 0, "response_time": 0})

    def to_dict(self) -> dict:
        return {"kept": self.kept, "dropped": dict(self.dropped)}


_REQUIRED = (
    "meeting_id", "user_id", "org_id", "meeting_size", "call_duration_min", "recurring",
    "start_hour_local", "day_of_week", "nef_normalized", "video_duration_fraction",
    "screenshare_fraction", "headset", "reliability_flags", "quality_stats",
    "calls_same_day", "minutes_in_meetings_same_day",
)


def _num(d, name, lo=None, hi=None, integer=False, line=None):
    v = d[name]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise RecordError(f"field {name} must be numeric, got {v!r}", line, name)
    if integer and (isinstance(v, float) and not v.is_integer()):
        raise RecordError(f"field {name} must be an integer, got {v!r}", line, name)
    if not math.isfinite(v):
        raise RecordError(f"field {name} is not finite", line, name)
    if (lo is not None and v < lo) or (hi is not None and v > hi):
        raise RecordError(f"field {name}={v!r} outside [{lo}, {hi}]", line, name)
    return int(v) if integer else float(v)


def _flag(v, name, line):
    if not isinstance(v, bool):
        raise RecordError(f"field {name} must be boolean, got {v!r}", line, name)
    return v


def record_from_dict(d: dict, line: Optional[int] = None) -> AttendeeMeetingRecord:
    """Validate a decoded JSON object and build a record."""
    if not isinstance(d, dict):
        raise RecordError("record must be a JSON object", line)
    for name in _REQUIRED:
        if name not in d:
            raise RecordError(f"missing required field {name}", line, name)

    flags = d["reliability_flags"]
    if not isinstance(flags, dict):
        raise RecordError("reliability_flags must be an object", line, "reliability_flags")
    unknown = set(flags) - set(RELIABILITY_FLAGS)
    if unknown:
        raise RecordError(f"unknown reliability flags {sorted(unknown)}", line, "reliability_flags")
    flags = {k: _flag(flags.get(k, False), f"reliability_flags.{k}", line) for k in RELIABILITY_FLAGS}

    stats = d["quality_stats"]
    if not isinstance(stats, list) or len(stats) != N_QUALITY_STATS:
        raise RecordError(f"quality_stats must have exactly {N_QUALITY_STATS} entries", line, "quality_stats")
    for s in stats:
        if isinstance(s, bool) or not isinstance(s, (int, float)) or not math.isfinite(s):
            raise RecordError("quality_stats entries must be finite numbers", line, "quality_stats")

    e, i = d.get("effective_stars"), d.get("inclusive_stars")
    if (e is None) != (i is None):
        raise RecordError("effective_stars and inclusive_stars must be both present or both absent",
                          line, "effective_stars" if e is None else "inclusive_stars")
    if e is not None:
        e = _num(d, "effective_stars", 1, 5, integer=True, line=line)
        i = _num(d, "inclusive_stars", 1, 5, integer=True, line=line)
    rt = d.get("response_time_s")
    if rt is not None:
        rt = _num(d, "response_time_s", 0, None, line=line)

    for name in ("meeting_id", "user_id", "org_id"):
        if not isinstance(d[name], (str, int)) or isinstance(d[name], bool):
            raise RecordError(f"field {name} must be an identifier", line, name)

    return AttendeeMeetingRecord(
        meeting_id=str(d["meeting_id"]),
        user_id=str(d["user_id"]),
        org_id=str(d["org_id"]),
        meeting_size=_num(d, "meeting_size", 1, None, integer=True, line=line),
        call_duration_min=_num(d, "call_duration_min", 0, None, line=line),
        recurring=_flag(d["recurring"], "recurring", line),
        start_hour_local=_num(d, "start_hour_local", 0, 23, integer=True, line=line),
        day_of_week=_num(d, "day_of_week", 0, 6, integer=True, line=line),
        nef_normalized=_num(d, "nef_normalized", 0, 1, line=line),
        video_duration_fraction=_num(d, "video_duration_fraction", 0, 1, line=line),
        screenshare_fraction=_num(d, "screenshare_fraction", 0, 1, line=line),
        headset=_flag(d["headset"], "headset", line),
        reliability_flags=flags,
        quality_stats=tuple(float(s) for s in stats),
        calls_same_day=_num(d, "calls_same_day", 1, None, integer=True, line=line),
        minutes_in_meetings_same_day=_num(d, "minutes_in_meetings_same_day", 0, None, line=line),
        effective_stars=e,
        inclusive_stars=i,
        response_time_s=rt,
    )


def parse_records(lines: Iterable[str] | str) -> list[AttendeeMeetingRecord]:
    """Parse JSON Lines text into validated records, preserving input order.

    Blank lines are skipped. Errors carry the 1-based line number and, for
    range or type violations, the offending field name.
    """
    if isinstance(lines, str):
        lines = lines.splitlines()
    out = []
    for n, raw in enumerate(lines, start=1):
        if not raw.strip():
            continue
        try:
            obj = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise RecordError(f"malformed JSON: {exc.msg}", n) from exc
        out.append(record_from_dict(obj, n))
    return out


def serialize_record(rec: AttendeeMeetingRecord) -> str:
    return json.dumps(rec.to_dict(), separators=(",", ":"))


def drop_reason(rec: AttendeeMeetingRecord, policy: FilterPolicy) -> Optional[str]:
    # precedence: participants -> duration -> response_time
    if rec.meeting_size < policy.min_participants:
        return "participants"
    if not rec.call_duration_min < policy.max_duration_min:
        return "duration"
    if rec.response_time_s is not None and not rec.response_time_s > policy.min_response_time_s:
        return "response_time"
    return None


def apply_filters(records, policy: FilterPolicy = FilterPolicy()):
    """Keep records with >2 participants, duration < 150 min and response time > 4 s.

    Returns ``(kept, report)``; each dropped record is charged to the first
    filter it fails.
    """
    kept = []
    report = FilterReport()
    for rec in records:
        reason = drop_reason(rec, policy)
        if reason is None:
            kept.append(rec)
        else:
            report.dropped[reason] += 1
    report.kept = len(kept)
    return kept, report


def stars_to_binary(stars: Optional[int]) -> Optional[int]:
    if stars is None:
        return None
    return 1 if stars >= 4 else 0


def derive_outcomes(rec: AttendeeMeetingRecord) -> EimOutcomes:
    return EimOutcomes(
        effective=stars_to_binary(rec.effective_stars),
        inclusive=stars_to_binary(rec.inclusive_stars),
        participation=int(rec.nef_normalized > PARTICIPATION_NEF_THRESHOLD),
    )
