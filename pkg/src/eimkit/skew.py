"""Rating-skew analytics: entropy, perfect-meeting rate, exact tests, grouped rates, cohorts."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import DataError, DegenerateError
from .features import wilson_interval
from .rng import substream

Z95 = 1.959963984540054


def entropy(histogram) -> float:
    """Shannon entropy in bits of a count (or frequency) histogram; empty cells contribute 0."""
    h = np.asarray(histogram, dtype=float)
    if (h < 0).any():
        raise DataError("histogram counts must be nonnegative")
    total = h.sum()
    if total <= 0:
        raise DegenerateError("histogram total is zero")
    p = h[h > 0] / total
    return float(-(p * np.log2(p)).sum()) + 0.0


def _stars(r):
    if isinstance(r, tuple):
        return r
    if isinstance(r, dict):
        return r.get("effective_stars"), r.get("inclusive_stars")
    return r.effective_stars, r.inclusive_stars


def perfect_meeting_rate(responses) -> float:
    """Share of responses with 5 stars on both questions.

    Accepts (effective, inclusive) pairs, dicts or objects with
    ``effective_stars``/``inclusive_stars``.
    """
    pairs = [_stars(r) for r in responses]
    if not pairs:
        raise DegenerateError("no responses")
    if any(e is None or i is None for e, i in pairs):
        raise DataError("every response needs both stars")
    return sum(1 for e, i in pairs if e == 5 and i == 5) / len(pairs)


def star_histogram(responses, question: str = "effective") -> list:
    k = 0 if question == "effective" else 1
    h = [0] * 5
    for r in responses:
        s = _stars(r)[k]
        if s is not None:
            h[int(s) - 1] += 1
    return h


# --------------------------------------------------------------------------
# exact tests


def _check_table(table) -> np.ndarray:
    t = np.asarray(table)
    if t.ndim != 2 or t.shape[0] != 2 or t.shape[1] < 2:
        raise DataError("expected a 2 x K table with K >= 2")
    if not np.issubdtype(t.dtype, np.integer):
        if not np.all(np.mod(t, 1) == 0):
            raise DataError("table counts must be integers")
        t = t.astype(np.int64)
    if (t < 0).any():
        raise DataError("table counts must be nonnegative")
    if (t.sum(axis=0) == 0).any() or (t.sum(axis=1) == 0).any():
        raise DegenerateError("table has a zero margin")
    return t


def hypergeometric_pmf(a: int, r1: int, r2: int, c1: int) -> Fraction:
    """Exact P(top-left cell = a) given row sums r1, r2 and first column sum c1."""
    return Fraction(math.comb(r1, a) * math.comb(r2, c1 - a), math.comb(r1 + r2, c1))


def fisher_exact_2x2(table) -> float:
    """Two-sided Fisher exact p-value: total probability of tables no more likely than the observed one."""
    t = _check_table(table)
    if t.shape[1] != 2:
        raise DataError("fisher_exact_2x2 needs a 2 x 2 table")
    (a, b), (c, d) = t.tolist()
    r1, r2, c1 = a + b, c + d, a + c
    lo, hi = max(0, c1 - r2), min(r1, c1)
    # compare numerators over the common denominator exactly
    num = [math.comb(r1, x) * math.comb(r2, c1 - x) for x in range(lo, hi + 1)]
    obs = num[a - lo]
    p = Fraction(sum(v for v in num if v <= obs), math.comb(r1 + r2, c1))
    return min(1.0, float(p))


def distribution_test_2xK(table, mc_iterations: int = 100_000, seed: int = 0) -> float:
    """Monte Carlo Fisher-Freeman-Halton test for a 2 x K table.

    Tables are drawn with both margins fixed; the p-value is the share of
    draws no more likely than the observed table, with the usual +1
    correction.
    """
    t = _check_table(table)
    if mc_iterations < 1:
        raise ValueError("mc_iterations must be >= 1")
    cols = t.sum(axis=0)
    r1 = int(t[0].sum())
    rng = substream(seed, "skew.mc")
    sims = rng.multivariate_hypergeometric(cols, r1, size=mc_iterations)
    obs = _log_prob_first_row(t[0][None, :], cols)[0]
    lp = _log_prob_first_row(sims, cols)
    hits = int((lp <= obs + 1e-7 * abs(obs) + 1e-12).sum())
    return (1 + hits) / (1 + mc_iterations)


_LGAMMA = np.vectorize(math.lgamma, otypes=[float])


def _log_prob_first_row(x: np.ndarray, cols: np.ndarray) -> np.ndarray:
    # sum_j log C(c_j, x_j); the shared denominator C(N, r1) cancels in comparisons
    x = np.asarray(x, dtype=np.int64)
    lf = _LGAMMA(np.arange(int(cols.max()) + 1) + 1.0)  # log k! for every possible count
    return (lf[cols] - lf[x] - lf[cols - x]).sum(axis=1)


# --------------------------------------------------------------------------
# grouped rates


@dataclass(frozen=True)
class GroupRate:
    group: object
    n: int
    successes: int
    rate: float
    ci_low: float
    ci_high: float


@dataclass
class GroupedRates:
    metric: str
    groups: list
    notes: list = field(default_factory=list)

    def get(self, group) -> GroupRate:
        for g in self.groups:
            if g.group == group:
                return g
        raise KeyError(group)

    def to_rows(self) -> list:
        return [asdict(g) | {"metric": self.metric} for g in self.groups]


def _metric_response_rate(e):
    return int(bool(_get(e, "responded"))) if _get(e, "shown", True) else None


def _metric_pmr(e):
    s = _stars(e)
    if s[0] is None:
        return None
    return int(s[0] == 5 and s[1] == 5)


def _metric_five_effective(e):
    s = _stars(e)[0]
    return None if s is None else int(s == 5)


def _metric_top2_effective(e):
    s = _stars(e)[0]
    return None if s is None else int(s >= 4)


METRICS = {
    "response_rate": _metric_response_rate,
    "pmr": _metric_pmr,
    "five_star_effective": _metric_five_effective,
    "top2_effective": _metric_top2_effective,
}


def _get(row, name, default=None):
    if isinstance(row, dict):
        return row.get(name, default)
    return getattr(row, name, default)


def grouped_rates(rows, key, metric="pmr", groups: Optional[Sequence] = None) -> GroupedRates:
    """Per-group rate of a 0/1 metric with Wilson 95% intervals.

    ``key`` is a field name or a function of a row; rows where it returns
    ``None`` are skipped, as are rows where the metric is undefined (e.g.
    PMR for a non-response). ``groups`` fixes the reporting order; listed
    groups with no rows are omitted and noted.
    """
    fn = METRICS[metric] if isinstance(metric, str) else metric
    name = metric if isinstance(metric, str) else getattr(metric, "__name__", "metric")
    keyf = key if callable(key) else (lambda r: _get(r, key))
    tally = {}
    for r in rows:
        g = keyf(r)
        if g is None:
            continue
        v = fn(r)
        if v is None:
            continue
        n, s = tally.get(g, (0, 0))
        tally[g] = (n + 1, s + int(v))
    order = list(groups) if groups is not None else sorted(tally, key=lambda g: (str(type(g)), g))
    out, notes = [], []
    for g in order:
        if g not in tally:
            notes.append(f"group {g!r} is empty and was omitted")
            continue
        n, s = tally[g]
        lo, hi = wilson_interval(s, n)
        out.append(GroupRate(g, n, s, s / n, lo, hi))
    return GroupedRates(name, out, notes)


def rate_difference(a: GroupRate, b: GroupRate) -> tuple:
    """b.rate - a.rate with Newcombe's hybrid score interval (from the two Wilson intervals)."""
    d = b.rate - a.rate
    lo = d - math.sqrt((b.rate - b.ci_low) ** 2 + (a.ci_high - a.rate) ** 2)
    hi = d + math.sqrt((b.ci_high - b.rate) ** 2 + (a.rate - a.ci_low) ** 2)
    return d, lo, hi


def fatigue_bucket(window_days: float = 7.0) -> Callable:
    """Group key: 'within' / 'beyond' the window since the previous show; first exposures skipped."""

    def key(e):
        since = _get(e, "days_since_last_shown")
        if since is None:
            return None
        return "within" if since < window_days else "beyond"

    return key


def calls_bucket(e) -> str:
    c = _get(e, "calls_same_day", 1)
    return "1-3" if c <= 3 else ("4-9" if c <= 9 else "10+")


def next_meeting_bucket(e) -> Optional[str]:
    gap = _get(e, "minutes_to_next_meeting")
    if gap is None or gap > 120:
        return None
    return "<5min" if gap < 5 else "5-120min"


# --------------------------------------------------------------------------
# cohorts


@dataclass(frozen=True)
class CohortThresholds:
    meetings_count: int = 56
    rated_fraction: float = 0.30
    hosted_fraction: float = 0.20
    avg_meeting_size: float = 10.0

    def __post_init__(self):
        if min(self.meetings_count, self.rated_fraction, self.hosted_fraction, self.avg_meeting_size) <= 0:
            raise ValueError("cohort thresholds must be positive")


@dataclass(frozen=True)
class UserHistory:
    meetings_count: int
    rated_fraction: float
    hosted_fraction: float
    avg_meeting_size: float


def assign_cohort(history: UserHistory, thresholds: CohortThresholds = CohortThresholds()) -> str:
    """cohort0: rates rarely; cohort2: rates often in large meetings; cohort1: rates often, few meetings.

    When a user qualifies for both cohort1 and cohort2, cohort2 wins.
    """
    if history.rated_fraction < thresholds.rated_fraction:
        return "cohort0"
    if history.avg_meeting_size >= thresholds.avg_meeting_size:
        return "cohort2"
    if history.meetings_count < thresholds.meetings_count:
        return "cohort1"
    return "other"


def user_histories(events) -> dict:
    """Per-user history from a simulator log.

    A meeting counts as rated when the user answered; meeting size is the
    number of attendees logged for it. The log carries no host information,
    so ``hosted_fraction`` is 0.
    """
    size = {}
    for e in events:
        size[e.meeting_id] = size.get(e.meeting_id, 0) + 1
    acc = {}
    for e in events:
        h = acc.setdefault(e.user_id, [0, 0, 0])
        h[0] += 1
        h[1] += int(e.responded)
        h[2] += size[e.meeting_id]
    return {u: UserHistory(m, r / m, 0.0, s / m) for u, (m, r, s) in acc.items()}


# --------------------------------------------------------------------------
# report


@dataclass
class SkewReport:
    shown: int
    responses: int
    response_rate: float
    histograms: dict  # question -> counts for 1..5 stars
    pmr: Optional[float]
    entropy_bits: dict
    grouped: dict = field(default_factory=dict)  # name -> rows

    def to_dict(self) -> dict:
        return asdict(self)


def skew_report(events, min_response_time_s: Optional[float] = None, grouped: Optional[dict] = None) -> SkewReport:
    """Response rate, star histograms, PMR and entropy of a log.

    With ``min_response_time_s`` set, responses at or below it are
    discarded first (fast responders).
    """
    shown = [e for e in events if _get(e, "shown", True)]
    resp = [e for e in shown if _get(e, "responded", True)]
    if min_response_time_s is not None:
        resp = [e for e in resp if (_get(e, "response_time_s") or 0.0) > min_response_time_s]
    hist = {"effective": star_histogram(resp, "effective"), "inclusive": star_histogram(resp, "inclusive")}
    ent = {q: (entropy(h) if sum(h) else None) for q, h in hist.items()}
    return SkewReport(
        shown=len(shown),
        responses=len(resp),
        response_rate=len(resp) / len(shown) if shown else float("nan"),
        histograms=hist,
        pmr=perfect_meeting_rate(resp) if resp else None,
        entropy_bits=ent,
        grouped={k: v.to_rows() for k, v in (grouped or {}).items()},
    )
