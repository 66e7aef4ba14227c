"""Report figures (matplotlib, Agg backend, PNG with fixed metadata for byte-stable output)."""

from __future__ import annotations

import io
import math

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .io import atomic_write_bytes  # noqa: E402

_STYLE = {"font.size": 9, "axes.spines.top": False, "axes.spines.right": False}


def _save(fig, path) -> None:
    buf = io.BytesIO()
    # no timestamp or software tag, so reruns produce identical bytes
    fig.savefig(buf, format="png", dpi=110, metadata={"Software": None}, bbox_inches="tight")
    plt.close(fig)
    atomic_write_bytes(path, buf.getvalue())


def star_histograms(histograms: dict, path, title: str = "Star ratings") -> None:
    """Side-by-side relative-frequency bars, one group per question."""
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=(5, 3))
        width = 0.8 / max(1, len(histograms))
        x = np.arange(1, 6)
        for k, (name, counts) in enumerate(histograms.items()):
            c = np.asarray(counts, dtype=float)
            share = c / c.sum() if c.sum() else c
            ax.bar(x + (k - (len(histograms) - 1) / 2) * width, share, width, label=name)
        ax.set_xticks(x)
        ax.set_xlabel("stars")
        ax.set_ylabel("share of responses")
        ax.set_title(title)
        ax.legend(frameon=False)
        _save(fig, path)


def edge_odds_ratios(graph, path, title: str = "Adjusted odds ratios") -> None:
    """Horizontal log-scale bars of every edge's adjusted OR, grouped by target."""
    edges = sorted(graph.edges, key=lambda e: (e.target, e.adjusted_or))
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=(6, 0.28 * max(4, len(edges)) + 0.8))
        y = np.arange(len(edges))
        vals = [math.log(e.adjusted_or) for e in edges]
        ax.barh(y, vals, color=["tab:blue" if v > 0 else "tab:red" for v in vals])
        ax.set_yticks(y)
        ax.set_yticklabels([f"{e.source} -> {e.target}" for e in edges])
        ax.axvline(0, color="black", lw=0.8)
        ax.set_xlabel("log odds ratio")
        ax.set_title(title)
        _save(fig, path)


def grouped_rates_plot(grouped, path, title: str = "") -> None:
    """Rates with Wilson 95% intervals per group."""
    g = grouped.groups
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=(4.5, 3))
        x = np.arange(len(g))
        rates = np.array([r.rate for r in g])
        err = np.array([[r.rate - r.ci_low for r in g], [r.ci_high - r.rate for r in g]])
        ax.errorbar(x, rates, yerr=err, fmt="o", capsize=4)
        ax.set_xticks(x)
        ax.set_xticklabels([str(r.group) for r in g])
        ax.set_ylabel(grouped.metric)
        ax.set_title(title or grouped.metric)
        _save(fig, path)


def scenario_sweep(frame, x: str, path, by=None, title: str = "") -> None:
    """Predicted probability against ``x``, one line per combination of ``by`` columns."""
    by = list(by or [])
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=(4.5, 3))
        groups = frame.groupby(by, sort=True) if by else [((), frame)]
        for key, sub in groups:
            key = key if isinstance(key, tuple) else (key,)
            label = ", ".join(f"{c}={v:g}" for c, v in zip(by, key)) or None
            ax.plot(sub[x], sub["probability"], marker="o", ms=3, label=label)
        ax.set_xlabel(x)
        ax.set_ylabel("predicted probability")
        if by:
            ax.legend(frameon=False)
        ax.set_title(title)
        _save(fig, path)


def auc_boxplot(reports: dict, path, title: str = "Cross-validated AUC") -> None:
    """Per-split AUC distributions, one box per report."""
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=(4.5, 3))
        names = list(reports)
        ax.boxplot([reports[n].aucs for n in names])
        ax.set_xticks(np.arange(1, len(names) + 1))
        ax.set_xticklabels(names)
        ax.set_ylabel("AUC")
        ax.set_title(title)
        _save(fig, path)
