"""Seeded generator of attendee-meeting records with planted structure.

Attributes are drawn from simple marginals (optionally shifted per
organization), then the outcomes follow planted logistic equations in a
fixed order, by default Participation -> Inclusive -> Effective. Stars,
non-response and response times come from a separate response model.
The planted coefficients double as ground truth for every fitting module.
"""

from __future__ import annotations

import copy
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Optional

import numpy as np

from .errors import DataError
from .features import (
    EFFECTIVE,
    HEADSET,
    INCLUSIVE,
    PARTICIPATION,
    QUALITY,
    RECURRING,
    RELIABILITY,
    SCREENSHARE,
    SHORT_CALL,
    SMALL_MEETING,
    VIDEO_30,
    LogisticScorer,
)
from .glm import sigmoid
from .records import N_QUALITY_STATS, RELIABILITY_FLAGS, AttendeeMeetingRecord
from .rng import substream

ATTRIBUTES = (SMALL_MEETING, SHORT_CALL, VIDEO_30, SCREENSHARE, HEADSET, RECURRING, QUALITY, RELIABILITY)
QUALITY_DRIVERS = 4  # quality_stats[0:4] carry the latent quality score


@dataclass
class Marginals:
    size_geom_p: float = 0.11
    size_min: int = 3
    size_max: int = 50
    duration_median_min: float = 18.0
    duration_sigma: float = 0.9
    duration_max_min: float = 150.0
    p_video_zero: float = 0.30
    video_beta: tuple = (1.2, 1.0)
    p_share_zero: float = 0.55
    share_beta: tuple = (1.0, 2.0)
    headset_rate: float = 0.40
    recurring_rate: float = 0.50
    reliability_flag_rate: float = 0.0816
    quality_rate: float = 0.13
    quality_stat_shift: float = 0.0

    def check(self):
        for name in ("p_video_zero", "p_share_zero", "headset_rate", "recurring_rate",
                     "reliability_flag_rate", "quality_rate", "size_geom_p"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise DataError(f"rate {name}={v} outside [0, 1]")


@dataclass
class ResponseModel:
    response_rate: float = 0.95
    careless_fraction: float = 0.02
    p5_given_positive: float = 0.88
    low_star_weights: tuple = (0.2, 0.2, 0.6)  # stars 1, 2, 3 for a negative outcome
    response_time_median_s: float = 10.0
    response_time_sigma: float = 0.4
    timeout_s: float = 30.0

    def check(self):
        for name in ("response_rate", "careless_fraction", "p5_given_positive"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise DataError(f"rate {name}={v} outside [0, 1]")


@dataclass
class OrgSpec:
    weight: float
    shifts: dict = field(default_factory=dict)  # Marginals field -> override


@dataclass
class GeneratorSpec:
    n_records: int = 20000
    orgs: dict = field(default_factory=lambda: {"A": OrgSpec(0.3), "B": OrgSpec(0.3), "C": OrgSpec(0.2), "D": OrgSpec(0.2)})
    marginals: Marginals = field(default_factory=Marginals)
    order: tuple = (PARTICIPATION, INCLUSIVE, EFFECTIVE)
    # outcome -> {"Intercept": b0, column: log-odds}
    structural: dict = field(default_factory=dict)
    response: ResponseModel = field(default_factory=ResponseModel)
    cqf_label_slope: float = 2.0
    attendees_per_meeting_mean: float = 0.4  # extra recorded attendees per meeting (Poisson)
    seed: int = 0

    def validate(self):
        if self.n_records < 0:
            raise DataError("n_records must be >= 0")
        total = sum(o.weight for o in self.orgs.values())
        if not self.orgs or abs(total - 1.0) > 1e-9:
            raise DataError(f"org weights must sum to 1 (got {total})")
        self.marginals.check()
        self.response.check()
        for org in self.orgs.values():
            for k in org.shifts:
                if not hasattr(self.marginals, k):
                    raise DataError(f"unknown org shift field {k!r}")
            replace(self.marginals, **org.shifts).check()
        if len(set(self.order)) != len(self.order):
            raise DataError("outcome order must be distinct")
        for k, outcome in enumerate(self.order):
            allowed = set(ATTRIBUTES) | set(self.order[:k]) | {"Intercept"}
            for name in self.structural.get(outcome, {}):
                if name not in allowed:
                    raise DataError(f"coefficient {name!r} for {outcome} does not resolve to a generated column")
        for outcome in self.structural:
            if outcome not in self.order:
                raise DataError(f"coefficient block for unknown outcome {outcome!r}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["order"] = list(self.order)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "GeneratorSpec":
        d = copy.deepcopy(d)
        d["orgs"] = {k: OrgSpec(**v) for k, v in d.get("orgs", {}).items()} or cls().orgs
        d["marginals"] = Marginals(**{k: tuple(v) if isinstance(v, list) else v for k, v in d.get("marginals", {}).items()})
        d["response"] = ResponseModel(**{k: tuple(v) if isinstance(v, list) else v for k, v in d.get("response", {}).items()})
        if "order" in d:
            d["order"] = tuple(d["order"])
        return cls(**d)

    def planted_or(self, source: str, target: str) -> float:
        return math.exp(self.structural.get(target, {}).get(source, 0.0))


@dataclass
class GroundTruth:
    edges: list  # [{"source", "target", "or"}]
    order: tuple
    direction: str
    org_shifts: dict
    quality_model: dict
    expected_rates: dict
    expected_pmr: float

    def to_dict(self) -> dict:
        d = asdict(self)
        d["order"] = list(self.order)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "GroundTruth":
        d = dict(d)
        d["order"] = tuple(d["order"])
        return cls(**d)

    def quality_scorer(self) -> LogisticScorer:
        return LogisticScorer(tuple(self.quality_model["weights"]), float(self.quality_model["bias"]))


# planted adjusted ORs of the combined graph
PLANTED_ODDS_RATIOS = {
    EFFECTIVE: {QUALITY: 0.14, INCLUSIVE: 45.48, SCREENSHARE: 1.39, SMALL_MEETING: 1.29},
    INCLUSIVE: {QUALITY: 0.35, RELIABILITY: 0.49, PARTICIPATION: 4.05, SMALL_MEETING: 1.51, SHORT_CALL: 0.61},
    PARTICIPATION: {RELIABILITY: 0.13, RECURRING: 0.82, SCREENSHARE: 0.71, SMALL_MEETING: 7.13,
                    SHORT_CALL: 0.72, HEADSET: 1.16, VIDEO_30: 1.17},
}

# calibrated against the default marginals (see calibrate_intercepts)
DEFAULT_INTERCEPTS = {PARTICIPATION: -0.0158, INCLUSIVE: 1.0034, EFFECTIVE: -0.585}
DEFAULT_TARGET_RATES = {PARTICIPATION: 0.50, INCLUSIVE: 0.75, EFFECTIVE: 0.80}


def default_eim_spec(n_records: int = 20000, seed: int = 0) -> GeneratorSpec:
    """Generator spec whose planted ORs are the combined-graph values."""
    structural = {}
    for outcome, ors in PLANTED_ODDS_RATIOS.items():
        block = {"Intercept": DEFAULT_INTERCEPTS[outcome]}
        block.update({k: math.log(v) for k, v in ors.items()})
        structural[outcome] = block
    return GeneratorSpec(n_records=n_records, structural=structural, seed=seed)


# held-out org whose informative attributes barely vary
ORG_SHIFT = {"size_geom_p": 0.45, "reliability_flag_rate": 0.02, "quality_stat_shift": -1.0}


def org_shift_spec(n_records: int = 20000, seed: int = 0, org: str = "D", shifts: Optional[dict] = None) -> GeneratorSpec:
    """Default spec with a planted distribution shift in one organization."""
    spec = default_eim_spec(n_records, seed)
    orgs = dict(spec.orgs)
    orgs[org] = OrgSpec(orgs[org].weight, dict(ORG_SHIFT if shifts is None else shifts))
    return replace(spec, orgs=orgs)


def mirrored_spec(spec: GeneratorSpec, a: str = INCLUSIVE, b: str = EFFECTIVE) -> GeneratorSpec:
    """Swap the roles of outcomes ``a`` and ``b`` everywhere.

    Coefficient blocks, the edge between the two and their position in the
    order are all exchanged, so the mirrored data look like the original
    with the two column names swapped.
    """
    rename = {a: b, b: a}
    order = tuple(rename.get(o, o) for o in spec.order)
    structural = {rename.get(o, o): {rename.get(k, k): v for k, v in block.items()}
                  for o, block in spec.structural.items()}
    return replace(spec, order=order, structural=structural)


def quality_scorer(spec: GeneratorSpec) -> LogisticScorer:
    """True P(poor quality rating | stats); its 0.5 cutoff reproduces the planted flag exactly."""
    k = spec.cqf_label_slope
    c = _quality_cut(spec.marginals.quality_rate)
    w = np.zeros(N_QUALITY_STATS)
    w[:QUALITY_DRIVERS] = k / math.sqrt(QUALITY_DRIVERS)
    return LogisticScorer(tuple(float(v) for v in w), float(-k * c))


def _quality_cut(rate: float) -> float:
    # latent score ~ N(0, 1) for an unshifted org
    from statistics import NormalDist

    return NormalDist().inv_cdf(1.0 - rate) if 0 < rate < 1 else (math.inf if rate <= 0 else -math.inf)


# --------------------------------------------------------------------------
# sampling


def _sample_attributes(spec: GeneratorSpec, rng: np.random.Generator):
    n = spec.n_records
    org_ids = list(spec.orgs)
    weights = np.array([spec.orgs[o].weight for o in org_ids])

    # meetings: each contributes 1 + Poisson(extra) attendee records
    est = max(1, int(n / (1 + spec.attendees_per_meeting_mean)) + 16)
    per = 1 + rng.poisson(spec.attendees_per_meeting_mean, size=est)
    while per.sum() < n:
        per = np.concatenate([per, 1 + rng.poisson(spec.attendees_per_meeting_mean, size=est)])
    m_org = rng.choice(len(org_ids), size=per.size, p=weights)
    m_u = rng.random((per.size, 4))

    meeting_idx = np.repeat(np.arange(per.size), per)[:n]
    n_meet = meeting_idx[-1] + 1 if n else 0
    org = m_org[meeting_idx]

    cols = {k: np.empty(n) for k in ("size", "recurring", "hour", "dow", "duration", "video", "share",
                                        "headset", "calls", "minutes")}
    flags = np.zeros((n, len(RELIABILITY_FLAGS)), dtype=bool)
    stats = rng.normal(size=(n, N_QUALITY_STATS))
    u = rng.random((n, 12))
    g = rng.standard_normal((n, 2))
    beta_v = np.empty(n)
    beta_s = np.empty(n)
    m_size = np.empty(n_meet)
    m_rec = np.empty(n_meet)

    for k, oid in enumerate(org_ids):
        marg = replace(spec.marginals, **spec.orgs[oid].shifts)
        msel = m_org[:n_meet] == k
        geo = np.floor(np.log1p(-m_u[:n_meet][msel, 0]) / np.log1p(-marg.size_geom_p)) if marg.size_geom_p < 1 else np.zeros(msel.sum())
        m_size[msel] = np.clip(marg.size_min + geo, marg.size_min, marg.size_max)
        m_rec[msel] = m_u[:n_meet][msel, 1] < marg.recurring_rate

        sel = org == k
        cnt = int(sel.sum())
        dur = marg.duration_median_min * np.exp(marg.duration_sigma * g[sel, 0])
        cols["duration"][sel] = np.clip(np.round(dur, 2), 0.5, np.nextafter(marg.duration_max_min, 0))
        v = rng.beta(*marg.video_beta, size=cnt)
        cols["video"][sel] = np.where(u[sel, 0] < marg.p_video_zero, 0.0, np.round(v, 4))
        s = rng.beta(*marg.share_beta, size=cnt)
        cols["share"][sel] = np.where(u[sel, 1] < marg.p_share_zero, 0.0, np.round(s, 4))
        cols["headset"][sel] = u[sel, 2] < marg.headset_rate
        flags[sel] = rng.random((cnt, len(RELIABILITY_FLAGS))) < marg.reliability_flag_rate
        # shift moves the latent quality score; the cut stays at the generator-level rate
        stats[sel, :QUALITY_DRIVERS] += marg.quality_stat_shift / math.sqrt(QUALITY_DRIVERS)
        beta_v[sel] = v
        beta_s[sel] = s

    cols["size"] = m_size[meeting_idx]
    cols["recurring"] = m_rec[meeting_idx]
    cols["hour"] = np.floor(8 + 10 * m_u[meeting_idx, 2])
    cols["dow"] = np.floor(5 * m_u[meeting_idx, 3])
    cols["calls"] = 1 + rng.poisson(4.0, size=n)
    cols["minutes"] = np.round(cols["duration"] + (cols["calls"] - 1) * 30.0 * rng.gamma(2.0, 0.5, size=n), 2)
    stats = np.round(stats, 5)
    return org_ids, org, meeting_idx, cols, flags, stats


def attribute_columns(cols, flags, stats, spec: GeneratorSpec) -> dict:
    c = _quality_cut(spec.marginals.quality_rate)
    latent = stats[:, :QUALITY_DRIVERS].sum(axis=1) / math.sqrt(QUALITY_DRIVERS)
    return {
        SMALL_MEETING: (cols["size"] <= 8).astype(float),
        SHORT_CALL: (cols["duration"] <= 10).astype(float),
        VIDEO_30: (cols["video"] > 0.30).astype(float),
        SCREENSHARE: (cols["share"] > 0.10).astype(float),
        HEADSET: cols["headset"].astype(float),
        RECURRING: cols["recurring"].astype(float),
        QUALITY: (latent > c).astype(float),
        RELIABILITY: flags.any(axis=1).astype(float),
    }


def _outcome_probabilities(spec, attrs, rng=None):
    """Draw outcomes in order; also return per-record success probabilities."""
    n = len(next(iter(attrs.values()))) if attrs else 0
    values = dict(attrs)
    probs = {}
    for outcome in spec.order:
        block = spec.structural.get(outcome, {})
        eta = np.full(n, block.get("Intercept", 0.0))
        for name, b in block.items():
            if name != "Intercept":
                eta = eta + b * values[name]
        probs[outcome] = sigmoid(eta)
        if rng is not None:
            values[outcome] = (rng.random(n) < probs[outcome]).astype(float)
    return values, probs


def _expected_joint_positive(spec, attrs):
    """Per-record P(Effective=1, Inclusive=1) under the planted model (exact)."""
    n = len(next(iter(attrs.values())))
    outs = list(spec.order)
    total = np.zeros(n)
    # enumerate outcome configurations; weight = product of conditionals
    for bits in range(2 ** len(outs)):
        vals = dict(attrs)
        w = np.ones(n)
        for k, outcome in enumerate(outs):
            bit = float((bits >> k) & 1)
            block = spec.structural.get(outcome, {})
            eta = np.full(n, block.get("Intercept", 0.0))
            for name, b in block.items():
                if name != "Intercept":
                    eta = eta + b * vals[name]
            p = sigmoid(eta)
            w = w * (p if bit else 1 - p)
            vals[outcome] = np.full(n, bit)
        if all(vals.get(o, np.ones(n))[0] == 1 for o in (EFFECTIVE, INCLUSIVE) if o in outs):
            total += w
    return total


def generate(spec: GeneratorSpec):
    """Sample ``spec.n_records`` records; returns ``(records, ground_truth)``."""
    spec.validate()
    rng_attr = substream(spec.seed, "generator.attributes")
    rng_out = substream(spec.seed, "generator.outcomes")
    rng_resp = substream(spec.seed, "generator.response")
    n = spec.n_records

    org_ids, org, meeting_idx, cols, flags, stats = _sample_attributes(spec, rng_attr)
    attrs = attribute_columns(cols, flags, stats, spec)
    values, probs = _outcome_probabilities(spec, attrs, rng_out)

    part = values.get(PARTICIPATION, (rng_out.random(n) < 0.5).astype(float))
    nef_u = rng_out.beta(2.0, 5.0, size=n)
    nef_l = rng_out.beta(2.0, 2.0, size=n)
    nef = np.where(part == 1, 0.1001 + 0.8999 * nef_u, 0.10 * nef_l)
    nef = np.round(nef, 4)
    nef = np.where(part == 1, np.maximum(nef, 0.1001), np.minimum(nef, 0.10))

    resp = spec.response
    responded = rng_resp.random(n) < resp.response_rate
    careless = rng_resp.random(n) < resp.careless_fraction
    u5 = rng_resp.random((n, 2))
    lowq = rng_resp.choice(3, size=(n, 2), p=np.asarray(resp.low_star_weights) / sum(resp.low_star_weights)) + 1
    rt_normal = resp.response_time_median_s * np.exp(resp.response_time_sigma * rng_resp.standard_normal(n))
    rt_fast = rng_resp.uniform(1.0, 4.0, size=n)
    rt = np.where(careless, rt_fast, np.clip(rt_normal, 0.5, resp.timeout_s))
    rt = np.round(rt, 2)

    def stars(outcome_values, col):
        pos = np.where(u5[:, col] < resp.p5_given_positive, 5, 4)
        s = np.where(outcome_values == 1, pos, lowq[:, col])
        return np.where(careless, 5, s)

    eff = values.get(EFFECTIVE, (rng_resp.random(n) < 0.5).astype(float))
    inc = values.get(INCLUSIVE, (rng_resp.random(n) < 0.5).astype(float))
    e_stars = stars(eff, 0)
    i_stars = stars(inc, 1)

    records = []
    flag_names = RELIABILITY_FLAGS
    for r in range(n):
        got = bool(responded[r])
        records.append(AttendeeMeetingRecord(
            meeting_id=f"m{meeting_idx[r]:07d}",
            user_id=f"u{r:07d}",
            org_id=org_ids[org[r]],
            meeting_size=int(cols["size"][r]),
            call_duration_min=float(cols["duration"][r]),
            recurring=bool(cols["recurring"][r]),
            start_hour_local=int(cols["hour"][r]),
            day_of_week=int(cols["dow"][r]),
            nef_normalized=float(nef[r]),
            video_duration_fraction=float(cols["video"][r]),
            screenshare_fraction=float(cols["share"][r]),
            headset=bool(cols["headset"][r]),
            reliability_flags={f: bool(flags[r, j]) for j, f in enumerate(flag_names)},
            quality_stats=tuple(float(v) for v in stats[r]),
            calls_same_day=int(cols["calls"][r]),
            minutes_in_meetings_same_day=float(max(cols["minutes"][r], cols["duration"][r])),
            effective_stars=int(e_stars[r]) if got else None,
            inclusive_stars=int(i_stars[r]) if got else None,
            response_time_s=float(rt[r]) if got else None,
        ))

    truth = ground_truth(spec, attrs, probs)
    return records, truth


def ground_truth(spec: GeneratorSpec, attrs=None, probs=None) -> GroundTruth:
    edges = []
    for outcome in spec.order:
        for name, b in spec.structural.get(outcome, {}).items():
            if name != "Intercept" and b != 0.0:
                edges.append({"source": name, "target": outcome, "or": math.exp(b)})
    if INCLUSIVE in spec.order and EFFECTIVE in spec.order:
        first = INCLUSIVE if spec.order.index(INCLUSIVE) < spec.order.index(EFFECTIVE) else EFFECTIVE
        second = EFFECTIVE if first == INCLUSIVE else INCLUSIVE
        direction = f"{first}->{second}"
    else:
        direction = "undetermined"
    rates, pmr = {}, float("nan")
    if attrs is not None and len(next(iter(attrs.values()))):
        for o, p in (probs or {}).items():
            rates[o] = float(np.mean(p))
        resp = spec.response
        joint = _expected_joint_positive(spec, attrs)
        honest_pmr = float(np.mean(joint)) * resp.p5_given_positive ** 2
        pmr = resp.careless_fraction + (1 - resp.careless_fraction) * honest_pmr
    return GroundTruth(
        edges=edges,
        order=tuple(spec.order),
        direction=direction,
        org_shifts={k: dict(v.shifts) for k, v in spec.orgs.items() if v.shifts},
        quality_model=quality_scorer(spec).to_dict(),
        expected_rates=rates,
        expected_pmr=pmr,
    )


def generate_cqf(spec: GeneratorSpec, n: int, seed: Optional[int] = None):
    """Quality statistics with noisy poor-quality labels (ratings of 1 or 2).

    Labels follow the true scorer's probability, so a well-fitted classifier
    cut at 0.5 reproduces the planted Quality Issues flag.
    """
    rng = substream(spec.seed if seed is None else seed, "generator.cqf")
    stats = np.round(rng.normal(size=(n, N_QUALITY_STATS)), 5)
    p = quality_scorer(spec).predict_proba(stats)
    labels = (rng.random(n) < p).astype(np.int8)
    return stats, labels


def calibrate_intercepts(spec: GeneratorSpec, targets: dict, n: int = 200_000, seed: int = 12345) -> dict:
    """Intercepts giving the requested marginal outcome rates (bisection, common random numbers)."""
    work = copy.deepcopy(spec)
    work.n_records = n
    work.seed = seed
    rng = substream(seed, "generator.attributes")
    _, _, _, cols, flags, stats = _sample_attributes(work, rng)
    attrs = attribute_columns(cols, flags, stats, work)
    u = substream(seed, "calibrate").random((n, len(work.order)))
    out = {}
    values = dict(attrs)
    for k, outcome in enumerate(work.order):
        block = dict(work.structural.get(outcome, {}))
        lo, hi = -15.0, 15.0
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            eta = np.full(n, mid)
            for name, b in block.items():
                if name != "Intercept":
                    eta = eta + b * values[name]
            rate = sigmoid(eta).mean()
            if rate < targets[outcome]:
                lo = mid
            else:
                hi = mid
        block["Intercept"] = round(0.5 * (lo + hi), 4)
        out[outcome] = block["Intercept"]
        work.structural[outcome] = block
        eta = np.full(n, block["Intercept"])
        for name, b in block.items():
            if name != "Intercept":
                eta = eta + b * values[name]
        values[outcome] = (u[:, k] < sigmoid(eta)).astype(float)
    return out


# --------------------------------------------------------------------------
# generators for single GLMs


def generate_glm_data(coefficients: dict, covariates: dict, n: int, seed: int, outcome: str = "y"):
    """Draw ``outcome`` ~ Bernoulli(sigmoid(sum coef * term)) over sampled covariates.

    ``covariates`` maps a column name to a sampler ``f(rng, n) -> array``;
    coefficient keys are column names, ``"A : B"`` products or ``"Intercept"``.
    Returns a pandas DataFrame.
    """
    import pandas as pd

    rng = substream(seed, "generator.glm")
    frame = pd.DataFrame({name: np.asarray(f(rng, n), dtype=float) for name, f in covariates.items()})
    eta = np.zeros(n)
    for term, b in coefficients.items():
        if term == "Intercept":
            eta += b
            continue
        v = np.ones(n)
        for part in term.split(" : "):
            part = part.strip()
            if part not in frame:
                raise DataError(f"coefficient {term!r} does not resolve to a generated column")
            v = v * frame[part].to_numpy()
        eta += b * v
    frame[outcome] = (rng.random(n) < sigmoid(eta)).astype(float)
    return frame
