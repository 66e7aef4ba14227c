"""The EIM graph: l1 neighborhood selection, unpenalized refit, Wald pruning.

Outcomes are fitted in a fixed order. Each outcome's candidates are all
binary attributes plus the outcomes before it, so edges always point from
attributes or upstream outcomes to a later outcome.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from .errors import DataError, EimError
from .features import EFFECTIVE, INCLUSIVE, OUTCOMES, PARTICIPATION
from .glm import (
    INTERCEPT,
    FittedGlm,
    L1Config,
    fit_l1_logistic,
    fit_logistic_irls,
    select_lambda,
)


@dataclass(frozen=True)
class HierarchyConfig:
    outcomes: tuple = OUTCOMES

    def __post_init__(self):
        if len(set(self.outcomes)) != len(self.outcomes):
            raise ValueError("outcomes must be distinct")

    def candidates(self, outcome: str, attributes: Sequence[str]) -> list:
        k = self.outcomes.index(outcome)
        return list(attributes) + list(self.outcomes[:k])


@dataclass(frozen=True)
class Edge:
    source: str
    target: str
    adjusted_or: float
    p_value: float
    n_used: int

    def to_dict(self) -> dict:
        return {"source": self.source, "target": self.target, "or": self.adjusted_or,
                "p": self.p_value, "n": self.n_used}


@dataclass
class NodeFit:
    outcome: str
    candidates: list
    neighborhood: tuple  # BIC-selected support from the l1 path
    lam: float
    dropped: list  # columns removed by backward elimination, in order
    fit: Optional[FittedGlm]
    n_used: int


@dataclass
class EimGraph:
    nodes: list
    edges: list
    outcomes: tuple = OUTCOMES
    node_fits: dict = field(default_factory=dict, repr=False)

    def edge(self, source: str, target: str) -> Optional[Edge]:
        for e in self.edges:
            if e.source == source and e.target == target:
                return e
        return None

    def edge_set(self) -> set:
        return {(e.source, e.target) for e in self.edges}

    def to_dict(self) -> dict:
        return {"nodes": list(self.nodes), "outcomes": list(self.outcomes),
                "edges": [e.to_dict() for e in self.edges]}

    @classmethod
    def from_dict(cls, d: dict) -> "EimGraph":
        edges = [Edge(e["source"], e["target"], float(e["or"]), float(e["p"]), int(e["n"])) for e in d["edges"]]
        return cls(nodes=list(d["nodes"]), edges=edges, outcomes=tuple(d.get("outcomes", OUTCOMES)))


def _fmt_p(p: float) -> str:
    return "<0.01" if p < 0.01 else f"{p:.2f}"


def format_or(edge: Optional[Edge]) -> str:
    if edge is None:
        return "-"
    return f"{edge.adjusted_or:.2f} ({_fmt_p(edge.p_value)})"


def backward_eliminate(values: dict, y: np.ndarray, names: list, alpha: float):
    """Drop the least significant coefficient and refit until every p < alpha.

    ``values`` maps column name to a 1-D array. Ties on p go to the
    lexicographically smaller column name first. Returns
    ``(fit, kept_names, dropped_names)``; ``fit`` is ``None`` when nothing
    survives.
    """
    names = list(names)
    dropped = []
    n = len(y)
    while names:
        X = np.column_stack([np.ones(n)] + [values[c] for c in names])
        fit = fit_logistic_irls(X, y, [INTERCEPT] + names)
        pv = {c: fit.p_values[j + 1] for j, c in enumerate(names)}
        worst = max(names, key=lambda c: (pv[c], _neg_lex(c)))
        if pv[worst] < alpha:
            return fit, names, dropped
        names.remove(worst)
        dropped.append(worst)
    return None, [], dropped


def _neg_lex(name: str):
    # max() with this key prefers the lexicographically smallest name among equal p
    return tuple(-ord(ch) for ch in name)


def _fit_node(frame: pd.DataFrame, outcome: str, candidates: list, alpha: float, l1: L1Config) -> NodeFit:
    rows = frame[outcome].notna()
    for c in candidates:
        rows &= frame[c].notna()
    sub = frame.loc[rows]
    y = sub[outcome].to_numpy(dtype=float)
    n = len(y)
    if n < 10 * max(1, len(candidates)):
        raise DataError(f"{outcome}: {n} rows is fewer than 10 per candidate ({len(candidates)} candidates)")
    if y.min() == y.max():
        raise DataError(f"{outcome}: outcome is constant on the {n} usable rows")
    usable = [c for c in candidates if sub[c].nunique() > 1]
    if not usable:
        return NodeFit(outcome, candidates, (), math.inf, [], None, n)
    X = sub[usable].to_numpy(dtype=float)
    path = fit_l1_logistic(X, y, usable, l1)
    choice = select_lambda(path)
    neighborhood = tuple(c for c in usable if c in choice.support)
    values = {c: sub[c].to_numpy(dtype=float) for c in neighborhood}
    fit, kept, dropped = backward_eliminate(values, y, list(neighborhood), alpha)
    return NodeFit(outcome, candidates, neighborhood, choice.lam, dropped, fit, n)


def fit_graph(frame: pd.DataFrame, hierarchy: HierarchyConfig = HierarchyConfig(), alpha: float = 0.05,
              attributes: Optional[Sequence[str]] = None, l1: L1Config = L1Config()) -> EimGraph:
    """Fit the EIM graph over ``hierarchy.outcomes``.

    ``frame`` holds binary attribute columns and the outcome columns; survey
    outcomes may be NaN (non-response), in which case those rows only
    contribute to nodes that do not need them.
    """
    missing = [o for o in hierarchy.outcomes if o not in frame]
    if missing:
        raise DataError(f"outcome columns missing: {missing}")
    if attributes is None:
        attributes = [c for c in frame.columns if c not in hierarchy.outcomes and c not in OUTCOMES]
    attributes = list(attributes)
    if len(frame) == 0:
        raise DataError("no records to fit")

    edges, fits = [], {}
    for outcome in hierarchy.outcomes:
        cands = hierarchy.candidates(outcome, attributes)
        try:
            nf = _fit_node(frame, outcome, cands, alpha, l1)
        except EimError as exc:
            exc.args = (f"node {outcome}: {exc}",)
            raise
        fits[outcome] = nf
        if nf.fit is None:
            continue
        for j, c in enumerate(nf.fit.columns):
            if c == INTERCEPT:
                continue
            edges.append(Edge(c, outcome, float(math.exp(nf.fit.coefficients[j])), float(nf.fit.p_values[j]), nf.n_used))
    nodes = list(hierarchy.outcomes) + [a for a in attributes]
    return EimGraph(nodes=nodes, edges=edges, outcomes=tuple(hierarchy.outcomes), node_fits=fits)


@dataclass(frozen=True)
class OrderResult:
    predictor: Optional[str]  # the outcome that predicts the other; None when undetermined
    target: Optional[str]
    aic_forward: float  # AIC of  b ~ a + attributes  (a predicts b)
    aic_backward: float  # AIC of  a ~ b + attributes

    @property
    def undetermined(self) -> bool:
        return self.predictor is None


def order_outcomes_by_aic(frame: pd.DataFrame, pair=(INCLUSIVE, EFFECTIVE), attributes: Optional[Sequence[str]] = None,
                          tie_tol: float = 1e-6) -> OrderResult:
    """Decide which of two outcomes predicts the other by comparing AICs."""
    a, b = pair
    if attributes is None:
        attributes = [c for c in frame.columns if c not in (a, b)]
    attributes = list(attributes)
    rows = frame[a].notna() & frame[b].notna()
    for c in attributes:
        rows &= frame[c].notna()
    sub = frame.loc[rows]
    n = len(sub)
    attrs = [c for c in attributes if sub[c].nunique() > 1]
    base = [sub[c].to_numpy(dtype=float) for c in attrs]
    ya = sub[a].to_numpy(dtype=float)
    yb = sub[b].to_numpy(dtype=float)
    fwd = fit_logistic_irls(np.column_stack([np.ones(n)] + base + [ya]), yb, [INTERCEPT] + attrs + [a])
    bwd = fit_logistic_irls(np.column_stack([np.ones(n)] + base + [yb]), ya, [INTERCEPT] + attrs + [b])
    if abs(fwd.aic - bwd.aic) <= tie_tol:
        return OrderResult(None, None, fwd.aic, bwd.aic)
    if fwd.aic < bwd.aic:
        return OrderResult(a, b, fwd.aic, bwd.aic)
    return OrderResult(b, a, fwd.aic, bwd.aic)


# --------------------------------------------------------------------------
# comparison


@dataclass
class GraphComparison:
    names: list
    rows: list  # [(target, input, {graph_name: Edge | None})]
    migrations: list  # [(input, {graph_name: sorted targets})]

    @property
    def discrepancies(self) -> list:
        """Rows whose edge is absent from at least one graph."""
        return [(t, i) for t, i, cells in self.rows if any(v is None for v in cells.values())]

    def table(self) -> str:
        header = ["Target", "Input"] + list(self.names)
        body = [[t, i] + [format_or(cells[g]) for g in self.names] for t, i, cells in self.rows]
        return render_table(header, body)

    def to_dict(self) -> dict:
        return {
            "graphs": list(self.names),
            "rows": [{"target": t, "input": i,
                      "cells": {g: (None if e is None else {"or": e.adjusted_or, "p": e.p_value}) for g, e in cells.items()}}
                     for t, i, cells in self.rows],
            "migrations": [{"input": i, "targets": tg} for i, tg in self.migrations],
        }


def render_table(header, body) -> str:
    widths = [max(len(str(r[k])) for r in [header] + body) for k in range(len(header))]
    line = lambda r: "  ".join(str(v).rjust(w) if k > 1 else str(v).ljust(w) for k, (v, w) in enumerate(zip(r, widths)))  # noqa: E731
    rule = "-" * (sum(widths) + 2 * (len(widths) - 1))
    return "\n".join([rule, line(header), rule] + [line(r) for r in body] + [rule]) + "\n"


def graph_table(graph: EimGraph, name: str = "OR (p)") -> str:
    """Target / Input / OR (p) listing, targets in reverse hierarchy order."""
    return compare_graphs({name: graph}).table()


def compare_graphs(graphs: dict) -> GraphComparison:
    """Side-by-side edges of several graphs and any neighborhood migrations.

    A migration is an input whose set of targets differs in both directions
    between two graphs (it gained one target and lost another).
    """
    names = list(graphs)
    if not names:
        raise DataError("no graphs to compare")
    vocab = {g: set(graphs[g].nodes) for g in names}
    union = set().union(*vocab.values())
    unshared = sorted(n for n in union if any(n not in v for v in vocab.values()))
    if unshared:
        raise DataError("graphs use different vocabularies; unshared names: " + ", ".join(unshared))

    order = list(graphs[names[0]].outcomes)[::-1]
    keys = set()
    for g in names:
        keys |= graphs[g].edge_set()
    rank = {o: k for k, o in enumerate(order)}
    keys = sorted(keys, key=lambda st: (rank.get(st[1], len(rank)), st[0]))
    rows = [(t, s, {g: graphs[g].edge(s, t) for g in names}) for s, t in keys]

    migrations = []
    inputs = sorted({s for s, _ in keys})
    for s in inputs:
        targets = {g: sorted(t for (src, t) in graphs[g].edge_set() if src == s) for g in names}
        moved = False
        for i, a in enumerate(names):
            for b in names[i + 1:]:
                ta, tb = set(targets[a]), set(targets[b])
                if ta - tb and tb - ta:
                    moved = True
        if moved:
            migrations.append((s, targets))
    return GraphComparison(names, rows, migrations)


def planted_graph(truth_edges, nodes, outcomes=OUTCOMES) -> EimGraph:
    """Graph object holding planted edges (p-values set to 0) for comparisons."""
    edges = [Edge(e["source"], e["target"], float(e["or"]), 0.0, 0) for e in truth_edges]
    return EimGraph(nodes=list(nodes), edges=edges, outcomes=tuple(outcomes))
