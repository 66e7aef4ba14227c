"""Logistic GLM core.

Maximum likelihood by iteratively reweighted least squares (Newton with
step-halving), Wald inference, AIC, and an l1-penalized path fitted by
coordinate descent on the IRLS quadratic approximation, with BIC used to
pick the penalty.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import (
    ConvergenceError,
    DataError,
    DegenerateError,
    SeparationError,
    SingularDesignError,
)

INTERCEPT = "Intercept"
SEPARATION_LIMIT = 30.0
TOL = 1e-8
MAX_ITER = 100


def sigmoid(z):
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def log_likelihood(beta, X, y) -> float:
    """Bernoulli log-likelihood with logit link."""
    eta = np.asarray(X) @ np.asarray(beta, dtype=float)
    # y*eta - log(1 + e^eta), computed stably
    return float(np.sum(y * eta - np.logaddexp(0.0, eta)))


def score(beta, X, y) -> np.ndarray:
    """Gradient of :func:`log_likelihood` with respect to ``beta``."""
    X = np.asarray(X, dtype=float)
    return X.T @ (y - sigmoid(X @ np.asarray(beta, dtype=float)))


def normal_two_sided(z: float) -> float:
    return math.erfc(abs(z) / math.sqrt(2.0))


# --------------------------------------------------------------------------
# design matrices


@dataclass(frozen=True)
class DesignMatrix:
    columns: tuple
    values: np.ndarray

    def __post_init__(self):
        if len(set(self.columns)) != len(self.columns):
            dup = sorted({c for c in self.columns if list(self.columns).count(c) > 1})
            raise SingularDesignError(dup)
        if self.values.ndim != 2 or self.values.shape[1] != len(self.columns):
            raise DataError("design values do not match column names")

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]

    @classmethod
    def from_frame(cls, frame, terms: Sequence[str], intercept: bool = True) -> "DesignMatrix":
        """Build a design from named columns; ``"A : B"`` terms are elementwise products."""
        cols, vals = [], []
        if intercept:
            cols.append(INTERCEPT)
            vals.append(np.ones(len(frame)))
        for term in terms:
            parts = [t.strip() for t in term.split(" : ")]
            missing = [p for p in parts if p not in frame]
            if missing:
                raise DataError(f"term {term!r} references unknown columns {missing}")
            v = np.ones(len(frame))
            for part in parts:
                v = v * np.asarray(frame[part], dtype=float)
            cols.append(" : ".join(parts))
            vals.append(v)
        return cls(tuple(cols), np.column_stack(vals) if vals else np.empty((len(frame), 0)))


def collinear_columns(X: np.ndarray, names: Sequence[str], tol: float = 1e-9) -> list:
    """Columns that add nothing to the span of the columns before them."""
    bad = []
    kept = []
    for j in range(X.shape[1]):
        trial = X[:, kept + [j]]
        s = np.linalg.svd(trial, compute_uv=False)
        if s.size == 0 or s[-1] <= tol * max(s[0], 1.0) * math.sqrt(X.shape[0]):
            bad.append(names[j])
        else:
            kept.append(j)
    return bad


# --------------------------------------------------------------------------
# unpenalized fit


@dataclass(frozen=True)
class FittedGlm:
    columns: tuple
    coefficients: np.ndarray
    standard_errors: np.ndarray
    p_values: np.ndarray
    covariance: np.ndarray
    log_likelihood: float
    aic: float
    n: int
    converged: bool
    iterations: int
    loglik_trace: tuple = field(default=(), repr=False)

    @property
    def p(self) -> int:
        return len(self.columns)

    def index(self, name: str) -> int:
        try:
            return self.columns.index(name)
        except ValueError:
            raise KeyError(f"no coefficient named {name!r}") from None

    def coef(self, name: str) -> float:
        return float(self.coefficients[self.index(name)])

    def to_dict(self) -> dict:
        return {
            "columns": list(self.columns),
            "coefficients": [float(v) for v in self.coefficients],
            "standard_errors": [float(v) for v in self.standard_errors],
            "p_values": [float(v) for v in self.p_values],
            "odds_ratios": [float(math.exp(v)) if v < 700 else float("inf") for v in self.coefficients],
            "log_likelihood": float(self.log_likelihood),
            "aic": float(self.aic),
            "n": int(self.n),
            "converged": bool(self.converged),
            "iterations": int(self.iterations),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FittedGlm":
        se = np.asarray(d["standard_errors"], dtype=float)
        return cls(
            columns=tuple(d["columns"]),
            coefficients=np.asarray(d["coefficients"], dtype=float),
            standard_errors=se,
            p_values=np.asarray(d["p_values"], dtype=float),
            covariance=np.diag(se**2),
            log_likelihood=float(d["log_likelihood"]),
            aic=float(d["aic"]),
            n=int(d["n"]),
            converged=bool(d["converged"]),
            iterations=int(d["iterations"]),
        )

    def summary_rows(self):
        for j, name in enumerate(self.columns):
            yield name, self.coefficients[j], self.standard_errors[j], self.p_values[j]


def _standardized_max(beta, X, names):
    sd = X.std(axis=0)
    worst = 0.0
    for j, name in enumerate(names):
        if name == INTERCEPT or sd[j] == 0:
            continue
        worst = max(worst, abs(beta[j]) * sd[j])
    return worst


def fit_logistic_irls(X, y, columns: Optional[Sequence[str]] = None, *, tol: float = TOL,
                      max_iter: int = MAX_ITER) -> FittedGlm:
    """Unpenalized logistic regression by Newton/IRLS with step-halving.

    ``X`` is a :class:`DesignMatrix` or a 2-D array (then ``columns`` names
    it). Convergence is declared when the relative change in log-likelihood
    drops below ``tol``. Separation is declared once any coefficient exceeds
    30 in standardized units.
    """
    if isinstance(X, DesignMatrix):
        columns, X = X.columns, X.values
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    if columns is None:
        columns = tuple(f"x{j}" for j in range(p))
    columns = tuple(columns)
    if y.shape != (n,):
        raise DataError("response length does not match design rows")
    if not np.all((y == 0) | (y == 1)):
        raise DataError("response must be binary 0/1")
    if y.min() == y.max():
        raise DegenerateError("response is constant")
    if n <= p:
        raise DataError(f"need more rows than columns (n={n}, p={p})")
    bad = collinear_columns(X, columns)
    if bad:
        raise SingularDesignError(bad)

    beta = np.zeros(p)
    ll = log_likelihood(beta, X, y)
    trace = [ll]
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        mu = sigmoid(X @ beta)
        w = mu * (1.0 - mu)
        H = X.T @ (X * w[:, None])
        g = X.T @ (y - mu)
        try:
            step = np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(H, g, rcond=None)[0]
        t = 1.0
        for _ in range(40):
            cand = beta + t * step
            ll_new = log_likelihood(cand, X, y)
            if ll_new >= ll - 1e-12 * abs(ll):
                break
            t *= 0.5
        else:
            ll_new, cand = ll, beta
        beta = cand
        if _standardized_max(beta, X, columns) > SEPARATION_LIMIT:
            raise SeparationError(
                "complete or quasi-complete separation: coefficients diverge "
                f"({', '.join(c for c, b, s in zip(columns, beta, X.std(axis=0)) if c != INTERCEPT and abs(b) * s > SEPARATION_LIMIT)})")
        change = abs(ll_new - ll) / (abs(ll) + 1e-300)
        ll = ll_new
        trace.append(ll)
        if change < tol:
            converged = True
            break
    if not converged:
        raise ConvergenceError(f"IRLS did not converge in {max_iter} iterations", iterations=max_iter)

    mu = sigmoid(X @ beta)
    w = mu * (1.0 - mu)
    info = X.T @ (X * w[:, None])
    try:
        cov = np.linalg.inv(info)
    except np.linalg.LinAlgError as exc:
        raise SingularDesignError(list(columns)) from exc
    cov = 0.5 * (cov + cov.T)
    se = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(se > 0, beta / se, 0.0)
    pv = np.array([normal_two_sided(v) for v in z])
    return FittedGlm(
        columns=columns,
        coefficients=beta,
        standard_errors=se,
        p_values=pv,
        covariance=cov,
        log_likelihood=ll,
        aic=2 * p - 2 * ll,
        n=n,
        converged=True,
        iterations=it,
        loglik_trace=tuple(trace),
    )


def wald_pvalue(fit: FittedGlm, index) -> float:
    """Two-sided normal-reference p-value for a single coefficient."""
    j = fit.index(index) if isinstance(index, str) else int(index)
    se = fit.standard_errors[j]
    if not se > 0:
        raise DegenerateError(f"standard error of {fit.columns[j]} is zero")
    return normal_two_sided(fit.coefficients[j] / se)


def odds_ratio(fit: FittedGlm, index) -> float:
    j = fit.index(index) if isinstance(index, str) else int(index)
    return math.exp(fit.coefficients[j])


def convert_or_to_probability(baseline: float, or_: float) -> float:
    """Probability after applying an odds ratio to a baseline probability."""
    if not 0.0 < baseline < 1.0:
        raise DegenerateError(f"baseline probability {baseline} has degenerate odds")
    if not or_ > 0:
        raise ValueError("odds ratio must be positive")
    o = baseline / (1.0 - baseline)
    return (or_ * o) / (1.0 + or_ * o)


def compare_aic(fit_a: FittedGlm, fit_b: FittedGlm, tie_tol: float = 1e-6):
    """Return whichever fit has strictly lower AIC, or ``None`` on a tie."""
    d = fit_a.aic - fit_b.aic
    if abs(d) <= tie_tol:
        return None
    return fit_a if d < 0 else fit_b


def bic(fit: FittedGlm) -> float:
    return fit.p * math.log(fit.n) - 2.0 * fit.log_likelihood


# --------------------------------------------------------------------------
# l1 path


@dataclass(frozen=True)
class L1Config:
    lambdas: Optional[tuple] = None
    n_lambdas: int = 50
    min_ratio: float = 1e-4
    max_iterations: int = 200
    tolerance: float = 1e-8

    def __post_init__(self):
        if self.lambdas is not None:
            lam = np.asarray(self.lambdas, dtype=float)
            if np.any(lam < 0):
                raise ValueError("lambda must be >= 0")
            if lam.size > 1 and np.any(np.diff(lam) >= 0):
                raise ValueError("lambda grid must be strictly descending")
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")


@dataclass(frozen=True)
class PathPoint:
    lam: float
    intercept: float
    coefficients: np.ndarray  # original scale, excluding intercept
    support: tuple


@dataclass(frozen=True)
class L1Path:
    columns: tuple
    points: tuple
    X: np.ndarray = field(repr=False)
    y: np.ndarray = field(repr=False)

    def __len__(self):
        return len(self.points)


def _soft(z, g):
    if z > g:
        return z - g
    if z < -g:
        return z + g
    return 0.0


def lambda_max(Z: np.ndarray, y: np.ndarray) -> float:
    """Smallest penalty at which every standardized coefficient is zero."""
    n = len(y)
    return float(np.max(np.abs(Z.T @ (y - y.mean()))) / n) if Z.shape[1] else 0.0


def _penalized_objective(b0, b, Z, y, lam):
    eta = b0 + Z @ b
    return -float(np.sum(y * eta - np.logaddexp(0.0, eta))) / len(y) + lam * float(np.abs(b).sum())


def _fit_one_lambda(Z, y, lam, b0, b, cfg: L1Config):
    n, p = Z.shape
    obj = _penalized_objective(b0, b, Z, y, lam)
    for outer in range(1, cfg.max_iterations + 1):
        eta = b0 + Z @ b
        mu = sigmoid(eta)
        w = np.clip(mu * (1 - mu), 1e-5, None)
        zwork = eta + (y - mu) / w
        # weighted least squares in covariance form: minimize
        # (1/2n) sum w (zwork - b0 - Z b)^2 + lam |b|_1
        wsum = w.sum()
        Zw = Z * w[:, None]
        G = Z.T @ Zw / n
        zw_mean = Zw.sum(axis=0) / n
        c = Z.T @ (w * zwork) / n
        ww = wsum / n
        zbar = float(w @ zwork) / n
        nb0, nb = b0, b.copy()
        for _inner in range(1000):
            delta = 0.0
            nb0_new = (zbar - zw_mean @ nb) / ww
            delta = max(delta, abs(nb0_new - nb0) * math.sqrt(ww))
            nb0 = nb0_new
            for j in range(p):
                rj = c[j] - nb0 * zw_mean[j] - G[j] @ nb + G[j, j] * nb[j]
                bj = _soft(rj, lam) / G[j, j]
                if bj != nb[j]:
                    delta = max(delta, abs(bj - nb[j]) * math.sqrt(G[j, j]))
                    nb[j] = bj
            if delta < cfg.tolerance * 1e-2:
                break
        # backtrack on the true penalized objective
        t = 1.0
        for _ in range(30):
            cb0 = b0 + t * (nb0 - b0)
            cb = b + t * (nb - b)
            cobj = _penalized_objective(cb0, cb, Z, y, lam)
            if cobj <= obj + 1e-15:
                break
            t *= 0.5
        else:
            cb0, cb, cobj = b0, b, obj
        moved = max(abs(cb0 - b0), float(np.max(np.abs(cb - b))) if p else 0.0)
        b0, b = cb0, cb
        rel = abs(obj - cobj) / max(abs(cobj), 1e-12)
        obj = cobj
        if rel < cfg.tolerance and moved < 1e-6:
            return b0, b
        if moved == 0.0:
            return b0, b
    raise ConvergenceError(f"l1 fit did not converge at lambda={lam:.6g}", iterations=cfg.max_iterations, lam=lam)


def fit_l1_logistic(X, y, columns: Optional[Sequence[str]] = None, config: L1Config = L1Config()) -> L1Path:
    """Fit the l1-penalized logistic path over a descending penalty grid.

    Columns are standardized internally (intercept unpenalized, never part of
    ``X``); coefficients on the path are reported on the original scale.
    Without an explicit grid, 50 log-spaced values run from the smallest
    all-zero penalty down to ``1e-4`` of it.
    """
    if isinstance(X, DesignMatrix):
        columns, X = X.columns, X.values
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    columns = tuple(columns) if columns is not None else tuple(f"x{j}" for j in range(p))
    if INTERCEPT in columns:
        raise DataError("pass the design without an intercept column")
    if y.min() == y.max():
        raise DegenerateError("response is constant")
    mean = X.mean(axis=0)
    sd = X.std(axis=0)
    const = [columns[j] for j in range(p) if sd[j] == 0]
    if const:
        raise SingularDesignError(const)
    Z = (X - mean) / sd

    lmax = lambda_max(Z, y)
    if config.lambdas is not None:
        grid = np.asarray(config.lambdas, dtype=float)
    else:
        grid = lmax * np.logspace(0, math.log10(config.min_ratio), config.n_lambdas) if lmax > 0 else np.zeros(1)

    ybar = y.mean()
    b0 = math.log(ybar / (1 - ybar))
    b = np.zeros(p)
    points = []
    for lam in grid:
        if lam >= lmax:
            # exact all-zero solution; avoids rounding residue at the boundary
            b0, b = math.log(ybar / (1 - ybar)), np.zeros(p)
        else:
            b0, b = _fit_one_lambda(Z, y, float(lam), b0, b, config)
        coef = np.where(b != 0.0, b / sd, 0.0)
        icpt = b0 - float(coef @ mean)
        support = tuple(columns[j] for j in range(p) if b[j] != 0.0)
        points.append(PathPoint(float(lam), icpt, coef, support))
    return L1Path(columns, tuple(points), X, y)


@dataclass(frozen=True)
class LambdaChoice:
    lam: float
    support: tuple
    bic: float
    refit: Optional[FittedGlm]


def select_lambda(path: L1Path) -> LambdaChoice:
    """Pick the penalty whose support minimizes BIC of the unpenalized refit.

    Ties resolve toward the larger penalty (sparser model). Supports whose
    refit fails (separation, singular design) are skipped.
    """
    if len(path) == 0:
        raise DataError("empty l1 path")
    n = len(path.y)
    best = None
    cache = {}
    for pt in path.points:
        if pt.support not in cache:
            idx = [path.columns.index(c) for c in pt.support]
            design = np.column_stack([np.ones(n)] + [path.X[:, j] for j in idx])
            try:
                fit = fit_logistic_irls(design, path.y, (INTERCEPT,) + pt.support)
                cache[pt.support] = (bic(fit), fit)
            except (SeparationError, SingularDesignError, ConvergenceError):
                cache[pt.support] = (math.inf, None)
        score_, fit = cache[pt.support]
        if best is None or score_ < best.bic - 1e-9:
            best = LambdaChoice(pt.lam, pt.support, score_, fit)
    if best.refit is None:
        raise ConvergenceError("no support on the path admits a finite refit")
    return best
