"""Gradient-boosted decision trees for binary outcomes, with AUC evaluation.

Trees are grown level by level with exact greedy splits. Each level makes
one pass per feature and accumulates gradient statistics for all open nodes
at once. Continuous features are presorted once; features with few distinct
values use per-value sums instead. Leaves take a Newton step on the
logistic loss.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numba
import numpy as np
import pandas as pd

from .errors import DataError, DegenerateError
from .rng import substream


@dataclass(frozen=True)
class GbdtParams:
    tree_count: int = 200
    max_depth: int = 4
    learning_rate: float = 0.05
    min_leaf_count: int = 20
    subsample: float = 0.8
    l2_leaf: float = 1.0  # ridge on leaf values; keeps single-row leaves finite
    seed: int = 0

    def __post_init__(self):
        if self.tree_count < 0:
            raise ValueError("tree_count must be >= 0")
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if not 0 < self.learning_rate <= 1:
            raise ValueError("learning_rate must be in (0, 1]")
        if not 0 < self.subsample <= 1:
            raise ValueError("subsample must be in (0, 1]")
        if self.min_leaf_count < 1:
            raise ValueError("min_leaf_count must be >= 1")
        if self.l2_leaf < 0:
            raise ValueError("l2_leaf must be >= 0")

    def to_dict(self) -> dict:
        return asdict(self)


# --------------------------------------------------------------------------
# numba kernels


@numba.njit(cache=True)
def _best_splits(xs, order, feat_ids, node_of, g, h, n_open, G, H, C, min_leaf, lam, best_gain, best_feat, best_thr):
    """Update the best (gain, feature, threshold) per open node from a sorted scan.

    ``order[f]`` lists rows by increasing feature ``feat_ids[f]``; ``xs[f]``
    holds the matching sorted values.
    """
    F, n = xs.shape
    GL = np.empty(n_open)
    HL = np.empty(n_open)
    CL = np.empty(n_open, dtype=np.int64)
    last = np.empty(n_open)
    parent = np.empty(n_open)
    for k in range(n_open):
        parent[k] = G[k] * G[k] / (H[k] + lam)
    for f in range(F):
        GL[:] = 0.0
        HL[:] = 0.0
        CL[:] = 0
        for j in range(n):
            i = order[f, j]
            k = node_of[i]
            if k < 0:
                continue
            x = xs[f, j]
            if CL[k] > 0 and x > last[k]:
                cr = C[k] - CL[k]
                if CL[k] >= min_leaf and cr >= min_leaf:
                    gr = G[k] - GL[k]
                    hr = H[k] - HL[k]
                    gain = GL[k] * GL[k] / (HL[k] + lam) + gr * gr / (hr + lam) - parent[k]
                    if gain > best_gain[k] + 1e-12:
                        best_gain[k] = gain
                        best_feat[k] = feat_ids[f]
                        best_thr[k] = 0.5 * (last[k] + x)
            GL[k] += g[i]
            HL[k] += h[i]
            CL[k] += 1
            last[k] = x


@numba.njit(cache=True)
def _best_splits_coded(codes, levels, n_levels, feat_ids, node_of, g, h, n_open, G, H, C, min_leaf, lam,
                       best_gain, best_feat, best_thr):
    """Same search for low-cardinality features via per-value sums.

    ``codes[f, i]`` indexes row i's value in ``levels[f, :n_levels[f]]``
    (sorted). Every adjacent pair of values present in a node is a
    candidate, so the result matches the sorted scan.
    """
    F, n = codes.shape
    width = levels.shape[1]
    SG = np.empty((n_open, width))
    SH = np.empty((n_open, width))
    SC = np.empty((n_open, width), dtype=np.int64)
    for f in range(F):
        m = n_levels[f]
        SG[:, :m] = 0.0
        SH[:, :m] = 0.0
        SC[:, :m] = 0
        for i in range(n):
            k = node_of[i]
            if k < 0:
                continue
            b = codes[f, i]
            SG[k, b] += g[i]
            SH[k, b] += h[i]
            SC[k, b] += 1
        for k in range(n_open):
            parent = G[k] * G[k] / (H[k] + lam)
            gl = 0.0
            hl = 0.0
            cl = 0
            last = -1
            for b in range(m):
                if SC[k, b] == 0:
                    continue
                if cl > 0:
                    cr = C[k] - cl
                    if cl >= min_leaf and cr >= min_leaf:
                        gr = G[k] - gl
                        hr = H[k] - hl
                        gain = gl * gl / (hl + lam) + gr * gr / (hr + lam) - parent
                        if gain > best_gain[k] + 1e-12:
                            best_gain[k] = gain
                            best_feat[k] = feat_ids[f]
                            best_thr[k] = 0.5 * (levels[f, last] + levels[f, b])
                gl += SG[k, b]
                hl += SH[k, b]
                cl += SC[k, b]
                last = b


@numba.njit(cache=True)
def _node_sums(node_of, g, h, n_open):
    G = np.zeros(n_open)
    H = np.zeros(n_open)
    C = np.zeros(n_open, dtype=np.int64)
    for i in range(node_of.shape[0]):
        k = node_of[i]
        if k >= 0:
            G[k] += g[i]
            H[k] += h[i]
            C[k] += 1
    return G, H, C


@numba.njit(cache=True)
def _predict_tree(X, feature, threshold, left, right, value, out):
    for i in range(X.shape[0]):
        k = 0
        while feature[k] >= 0:
            if X[i, feature[k]] <= threshold[k]:
                k = left[k]
            else:
                k = right[k]
        out[i] += value[k]


# --------------------------------------------------------------------------
# trees


@dataclass
class Tree:
    """Flat binary tree; ``feature == -1`` marks a leaf holding ``value``."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def predict_into(self, X: np.ndarray, out: np.ndarray) -> None:
        _predict_tree(X, self.feature, self.threshold, self.left, self.right, self.value, out)

    def to_nested(self, columns: Sequence[str], k: int = 0) -> dict:
        if self.feature[k] < 0:
            return {"leaf": float(self.value[k])}
        return {
            "feature": columns[self.feature[k]],
            "threshold": float(self.threshold[k]),
            "left": self.to_nested(columns, int(self.left[k])),
            "right": self.to_nested(columns, int(self.right[k])),
        }

    @classmethod
    def from_nested(cls, node: dict, columns: Sequence[str]) -> "Tree":
        feat, thr, left, right, val = [], [], [], [], []
        index = {c: j for j, c in enumerate(columns)}

        def visit(d):
            k = len(feat)
            feat.append(-1)
            thr.append(0.0)
            left.append(-1)
            right.append(-1)
            val.append(0.0)
            if "leaf" in d:
                val[k] = float(d["leaf"])
                return k
            if d["feature"] not in index:
                raise DataError(f"tree splits on unknown feature {d['feature']!r}")
            feat[k] = index[d["feature"]]
            thr[k] = float(d["threshold"])
            left[k] = visit(d["left"])
            right[k] = visit(d["right"])
            return k

        visit(node)
        return cls(np.array(feat, dtype=np.int64), np.array(thr), np.array(left, dtype=np.int64),
                   np.array(right, dtype=np.int64), np.array(val))


class _SplitLayout:
    """Per-feature split search data: value codes for low-cardinality
    features, presorted rows for the rest."""

    MAX_LEVELS = 64

    def __init__(self, X: np.ndarray):
        coded, sorted_ = [], []
        uniques = []
        for j in range(X.shape[1]):
            u = np.unique(X[:, j])
            (coded if len(u) <= self.MAX_LEVELS else sorted_).append(j)
            uniques.append(u)
        n = X.shape[0]
        self.coded_ids = np.array(coded, dtype=np.int64)
        self.codes = np.zeros((len(coded), n), dtype=np.int64)
        self.levels = np.zeros((len(coded), self.MAX_LEVELS))
        self.n_levels = np.zeros(len(coded), dtype=np.int64)
        for r, j in enumerate(coded):
            u = uniques[j]
            self.codes[r] = np.searchsorted(u, X[:, j])
            self.levels[r, : len(u)] = u
            self.n_levels[r] = len(u)
        self.sorted_ids = np.array(sorted_, dtype=np.int64)
        sub = X[:, sorted_]
        self.order = np.ascontiguousarray(np.argsort(sub, axis=0, kind="stable").T)
        self.xs = np.ascontiguousarray(np.take_along_axis(sub.T, self.order, axis=1))

    def search(self, node_of, g, h, n_open, G, H, C, min_leaf, lam, gain, feat, thr):
        if len(self.coded_ids):
            _best_splits_coded(self.codes, self.levels, self.n_levels, self.coded_ids, node_of, g, h, n_open,
                               G, H, C, min_leaf, lam, gain, feat, thr)
        if len(self.sorted_ids):
            _best_splits(self.xs, self.order, self.sorted_ids, node_of, g, h, n_open, G, H, C, min_leaf, lam,
                         gain, feat, thr)


def _grow_tree(X, layout, g, h, active, params: GbdtParams) -> Tree:
    """Grow one tree on the rows where ``active`` is true."""
    n = X.shape[0]
    feature, threshold, left, right, value = [-1], [0.0], [-1], [-1], [0.0]
    node_of = np.where(active, 0, -1).astype(np.int64)
    open_ids = [0]  # tree node id for each open slot
    lam = params.l2_leaf
    for depth in range(params.max_depth + 1):
        n_open = len(open_ids)
        G, H, C = _node_sums(node_of, g, h, n_open)
        if depth < params.max_depth:
            gain = np.zeros(n_open)
            feat = np.full(n_open, -1, dtype=np.int64)
            thr = np.zeros(n_open)
            layout.search(node_of, g, h, n_open, G, H, C, params.min_leaf_count, lam, gain, feat, thr)
        else:
            feat = np.full(n_open, -1)
        remap = np.full(n_open, -1, dtype=np.int64)
        next_ids = []
        for k, t in enumerate(open_ids):
            if feat[k] < 0:
                value[t] = -G[k] / (H[k] + lam) * params.learning_rate
                continue
            feature[t] = int(feat[k])
            threshold[t] = float(thr[k])
            for side in (left, right):
                side[t] = len(feature)
                feature.append(-1)
                threshold.append(0.0)
                left.append(-1)
                right.append(-1)
                value.append(0.0)
            remap[k] = len(next_ids)
            next_ids.extend([left[t], right[t]])
        if not next_ids:
            break
        rows = np.flatnonzero(node_of >= 0)
        k = node_of[rows]
        split = remap[k]
        go_right = X[rows, feat[k].clip(0)] > thr[k]
        new = np.where(split >= 0, split + go_right, -1)
        node_of = np.full(n, -1, dtype=np.int64)
        node_of[rows] = new
        open_ids = next_ids
    return Tree(np.array(feature, dtype=np.int64), np.array(threshold), np.array(left, dtype=np.int64),
                np.array(right, dtype=np.int64), np.array(value))


# --------------------------------------------------------------------------
# model


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


@dataclass
class GbdtModel:
    columns: list
    init_score: float
    trees: list
    params: GbdtParams = field(default_factory=GbdtParams)

    def decision_function(self, X) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=float)
        out = np.full(X.shape[0], self.init_score)
        for t in self.trees:
            t.predict_into(X, out)
        return out

    def predict_proba(self, X) -> np.ndarray:
        """Positive-class probability; ``X`` is an array or a frame with this model's columns."""
        if isinstance(X, pd.DataFrame):
            X = _matrix(X, self.columns)
        return _sigmoid(self.decision_function(X))

    # features.ProbabilityModel protocol
    def probability(self, X) -> np.ndarray:
        return self.predict_proba(X)

    def to_dict(self) -> dict:
        return {
            "kind": "gbdt",
            "columns": list(self.columns),
            "init_score": self.init_score,
            "params": self.params.to_dict(),
            "trees": [t.to_nested(self.columns) for t in self.trees],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GbdtModel":
        if d.get("kind", "gbdt") != "gbdt":
            raise DataError(f"not a gbdt model: kind={d.get('kind')!r}")
        cols = list(d["columns"])
        return cls(cols, float(d["init_score"]), [Tree.from_nested(t, cols) for t in d["trees"]],
                   GbdtParams(**d.get("params", {})))


def _matrix(frame: pd.DataFrame, columns: Sequence[str]) -> np.ndarray:
    missing = [c for c in columns if c not in frame.columns]
    extra = [c for c in frame.columns if c not in columns]
    if missing or extra:
        raise DataError(f"feature vocabulary mismatch; missing {missing}, unexpected {extra}")
    return np.ascontiguousarray(frame[list(columns)].to_numpy(dtype=float))


def _check_features(X: np.ndarray, columns: Sequence[str]) -> None:
    bad = np.flatnonzero(~np.isfinite(X).all(axis=0))
    if bad.size:
        raise DataError(f"non-finite values in feature column {columns[bad[0]]!r}")


def train(features, labels, params: GbdtParams = GbdtParams(), columns: Optional[Sequence[str]] = None) -> GbdtModel:
    """Fit a boosted ensemble minimizing logistic loss."""
    if isinstance(features, pd.DataFrame):
        columns = list(features.columns)
        X = np.ascontiguousarray(features.to_numpy(dtype=float))
    else:
        X = np.ascontiguousarray(features, dtype=float)
        columns = list(columns) if columns is not None else [f"x{j}" for j in range(X.shape[1])]
    y = np.asarray(labels, dtype=float)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise DataError("features and labels have mismatched shapes")
    if not np.isin(y, (0.0, 1.0)).all():
        raise DataError("labels must be 0/1")
    if y.size == 0 or y.min() == y.max():
        raise DataError("labels are constant; need both classes")
    _check_features(X, columns)

    n = len(y)
    base = y.mean()
    init = math.log(base / (1 - base))
    layout = _SplitLayout(X)
    rng = substream(params.seed, "gbdt.subsample")
    score = np.full(n, init)
    trees = []
    m = max(1, int(round(params.subsample * n)))
    for _ in range(params.tree_count):
        p = _sigmoid(score)
        g = p - y
        h = p * (1 - p)
        if params.subsample < 1:
            active = np.zeros(n, dtype=bool)
            active[rng.choice(n, size=m, replace=False)] = True
        else:
            active = np.ones(n, dtype=bool)
        tree = _grow_tree(X, layout, g, h, active, params)
        tree.predict_into(X, score)
        trees.append(tree)
    return GbdtModel(columns, init, trees, params)


def predict_probability(model: GbdtModel, row) -> float | np.ndarray:
    """Probability for one row (a mapping) or many rows (a frame)."""
    if isinstance(row, pd.DataFrame):
        return model.predict_proba(row)
    if isinstance(row, dict):
        keys = set(row)
        if keys != set(model.columns):
            raise DataError(f"feature vocabulary mismatch; missing {sorted(set(model.columns) - keys)}, "
                            f"unexpected {sorted(keys - set(model.columns))}")
        x = np.array([[float(row[c]) for c in model.columns]])
    else:
        x = np.asarray(row, dtype=float).reshape(1, -1)
        if x.shape[1] != len(model.columns):
            raise DataError(f"row has {x.shape[1]} values; model expects {len(model.columns)}")
    return float(model.predict_proba(x)[0])


def log_loss(model: GbdtModel, X, y) -> float:
    p = np.clip(model.predict_proba(X), 1e-15, 1 - 1e-15)
    y = np.asarray(y, dtype=float)
    return float(-np.mean(y * np.log(p) + (1 - y) * np.log(1 - p)))


# --------------------------------------------------------------------------
# evaluation


def _rankdata(a: np.ndarray) -> np.ndarray:
    """Average ranks (1-based), ties share the mean of their positions."""
    order = np.argsort(a, kind="mergesort")
    s = a[order]
    starts = np.r_[0, np.flatnonzero(s[1:] != s[:-1]) + 1]
    ends = np.r_[starts[1:], len(s)]
    avg = (starts + ends + 1) / 2.0
    ranks = np.empty(len(a))
    ranks[order] = np.repeat(avg, ends - starts)
    return ranks


def auc(scores, labels) -> float:
    """ROC AUC via the Mann-Whitney rank statistic (ties count half)."""
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels)
    if s.shape != y.shape:
        raise DataError("scores and labels differ in length")
    pos = y == 1
    n1 = int(pos.sum())
    n0 = len(y) - n1
    if n1 == 0 or n0 == 0:
        raise DegenerateError("auc needs both classes")
    r = _rankdata(s)
    # exact: rank sums of half-integers are multiples of 0.5
    u = r[pos].sum() - n1 * (n1 + 1) / 2.0
    return float(u / (n1 * n0))


@dataclass
class EvalReport:
    aucs: list
    split: str = "random"  # random | org-holdout
    held_out_org: Optional[str] = None
    holdout_auc: Optional[float] = None

    @property
    def mean_auc(self) -> float:
        return float(np.mean(self.aucs)) if self.aucs else float("nan")

    @property
    def auc_stddev(self) -> float:
        return float(np.std(self.aucs, ddof=1)) if len(self.aucs) > 1 else 0.0

    def to_dict(self) -> dict:
        d = {"split": self.split, "mean_auc": self.mean_auc, "auc_stddev": self.auc_stddev,
             "aucs": list(self.aucs)}
        if self.split == "org-holdout":
            d["held_out_org"] = self.held_out_org
            d["holdout_auc"] = self.holdout_auc
        return d

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["split_index", "auc"])
        for k, a in enumerate(self.aucs):
            w.writerow([k, repr(float(a))])
        return buf.getvalue()


def _split_indices(rng, n, test_fraction, groups):
    if groups is None:
        perm = rng.permutation(n)
        n_test = max(1, int(round(test_fraction * n)))
        return perm[n_test:], perm[:n_test]
    uniq = np.unique(groups)
    perm = rng.permutation(len(uniq))
    n_test = max(1, int(round(test_fraction * len(uniq))))
    test_groups = uniq[perm[:n_test]]
    mask = np.isin(groups, test_groups)
    return np.flatnonzero(~mask), np.flatnonzero(mask)


def cross_validate(features: pd.DataFrame, labels, params: GbdtParams = GbdtParams(), k: int = 50,
                   test_fraction: float = 0.2, seed: int = 0, groups=None) -> EvalReport:
    """``k`` independent random train/test splits, one AUC per split.

    Rows are the sampling unit unless ``groups`` (e.g. user ids) is given,
    in which case whole groups go to one side. A split whose train or test
    side holds a single class is redrawn once; a second failure is an error.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if not 0 < test_fraction < 1:
        raise ValueError("test_fraction must be in (0, 1)")
    y = np.asarray(labels, dtype=float)
    X = np.ascontiguousarray(features.to_numpy(dtype=float))
    cols = list(features.columns)
    groups = None if groups is None else np.asarray(groups)
    aucs = []
    for split in range(k):
        rng = substream(seed, f"cv.split.{split}")
        for attempt in range(2):
            tr, te = _split_indices(rng, len(y), test_fraction, groups)
            if 0 < y[tr].mean() < 1 and 0 < y[te].mean() < 1:
                break
        else:
            raise DegenerateError(f"split {split}: a side has a single class after one resample")
        model = train(X[tr], y[tr], replace_seed(params, params.seed + split), cols)
        aucs.append(auc(model.predict_proba(X[te]), y[te]))
    return EvalReport(aucs)


def replace_seed(params: GbdtParams, seed: int) -> GbdtParams:
    d = params.to_dict()
    d["seed"] = seed
    return GbdtParams(**d)


def holdout_by_org(features: pd.DataFrame, labels, orgs, held_out_org: str, params: GbdtParams = GbdtParams(),
                   k: int = 50, test_fraction: float = 0.2, seed: int = 0) -> EvalReport:
    """In-train CV over the other orgs, then one evaluation on the held-out org."""
    orgs = np.asarray(orgs).astype(str)
    names = np.unique(orgs)
    if len(names) < 2:
        raise DataError("org holdout needs at least two organizations")
    if held_out_org not in names:
        raise DataError(f"unknown org {held_out_org!r}; known: {', '.join(names)}")
    y = np.asarray(labels, dtype=float)
    out = orgs == held_out_org
    if y[out].min() == y[out].max():
        raise DegenerateError(f"held-out org {held_out_org!r} has a single class")
    inside = features.loc[~out].reset_index(drop=True)
    report = cross_validate(inside, y[~out], params, k, test_fraction, seed)
    model = train(inside, y[~out], params)
    X_out = np.ascontiguousarray(features.loc[out].to_numpy(dtype=float))
    report.split = "org-holdout"
    report.held_out_org = held_out_org
    report.holdout_auc = auc(model.predict_proba(X_out), y[out])
    return report
