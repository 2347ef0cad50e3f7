"""Regression fitting and model comparison.

Implements the model family the analyses need and nothing more: ordinary
least squares, a random-intercept linear mixed model fit by maximum
likelihood (profiled fixed effects + 1-D bounded search over the variance
ratio), binary logistic regression by IRLS/Newton, likelihood-ratio tests,
BIC, and case-resampling bootstrap intervals.

Fitters are matrix-pure: design construction (intercept, interactions,
treatment coding, standardization) is the caller's job, with small helpers
provided below.  Mixed models use ML rather than REML so likelihood-ratio
tests on fixed effects are valid.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy import optimize, stats as spstats


class RankDeficiencyError(ValueError):
    """Design matrix has linearly dependent columns."""

    def __init__(self, columns: Sequence[str]):
        super().__init__(f"rank-deficient design: dependent column(s) {list(columns)}")
        self.columns = list(columns)


class SeparationError(RuntimeError):
    """Complete separation: logistic coefficients diverge."""


class NotConvergedError(RuntimeError):
    """A comparison was requested on a non-converged fit."""


@dataclass
class FitResult:
    coefficients: dict[str, float]
    std_errors: dict[str, float]
    loglik: float
    n_obs: int
    n_params: int
    model_kind: str  # ols | lmm_ri | logistic
    converged: bool
    group_variance: float | None = None
    residual_variance: float | None = None
    fitted: np.ndarray | None = field(default=None, repr=False, compare=False)
    extras: dict = field(default_factory=dict)

    def beta(self) -> np.ndarray:
        return np.array(list(self.coefficients.values()))

    def to_json_dict(self) -> dict:
        return {
            "model_kind": self.model_kind,
            "formula_columns": list(self.coefficients),
            "coefficients": self.coefficients,
            "std_errors": self.std_errors,
            "loglik": self.loglik,
            "n_obs": self.n_obs,
            "n_params": self.n_params,
            "converged": self.converged,
            "group_variance": self.group_variance,
            "residual_variance": self.residual_variance,
            "extras": self.extras,
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(self.to_json_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )

    @classmethod
    def load(cls, path: str | Path) -> "FitResult":
        d = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(
            coefficients=dict(d["coefficients"]),
            std_errors=dict(d["std_errors"]),
            loglik=float(d["loglik"]),
            n_obs=int(d["n_obs"]),
            n_params=int(d["n_params"]),
            model_kind=d["model_kind"],
            converged=bool(d["converged"]),
            group_variance=d.get("group_variance"),
            residual_variance=d.get("residual_variance"),
            extras=d.get("extras", {}),
        )


# ---------------------------------------------------------------------------
# design helpers


def _as_matrix(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    return X


def _names(X: np.ndarray, names: Sequence[str] | None) -> list[str]:
    if names is None:
        return [f"x{j}" for j in range(X.shape[1])]
    if len(names) != X.shape[1]:
        raise ValueError("column names do not match the design width")
    return list(names)


def add_intercept(X, names: Sequence[str] | None = None) -> tuple[np.ndarray, list[str]]:
    X = _as_matrix(X)
    cols = _names(X, names)
    return np.hstack([np.ones((X.shape[0], 1)), X]), ["(Intercept)", *cols]


def standardize_columns(
    X, names: Sequence[str] | None = None, skip: Sequence[str] = ("(Intercept)",)
) -> tuple[np.ndarray, dict[str, tuple[float, float]]]:
    """Z-score columns in place (constant columns are left alone); the returned
    metadata {name: (mean, sd)} is recorded in fit extras so compared models
    can be checked for matching standardization."""
    X = _as_matrix(X).copy()
    cols = _names(X, names)
    meta: dict[str, tuple[float, float]] = {}
    for j, name in enumerate(cols):
        if name in skip:
            continue
        mu = float(X[:, j].mean())
        sd = float(X[:, j].std(ddof=0))
        if sd == 0:
            continue
        X[:, j] = (X[:, j] - mu) / sd
        meta[name] = (mu, sd)
    return X, meta


def interaction(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Interactions enter the design as precomputed element-wise products."""
    return np.asarray(a, dtype=float) * np.asarray(b, dtype=float)


def treatment_code(labels: Sequence[str], reference: str) -> np.ndarray:
    """0/1 dummy with the given reference level coded 0."""
    labels = list(labels)
    levels = sorted(set(labels))
    if reference not in levels:
        raise ValueError(f"reference level {reference!r} not present")
    others = [l for l in levels if l != reference]
    if len(others) != 1:
        raise ValueError("treatment_code supports exactly two levels")
    return np.array([1.0 if l == others[0] else 0.0 for l in labels])


def _check_rank(X: np.ndarray, cols: list[str]) -> None:
    rank = np.linalg.matrix_rank(X)
    if rank == X.shape[1]:
        return
    # Greedy pass: columns that do not grow the rank are the dependent ones.
    dependent: list[str] = []
    kept: list[int] = []
    for j in range(X.shape[1]):
        trial = X[:, kept + [j]]
        if np.linalg.matrix_rank(trial) > len(kept):
            kept.append(j)
        else:
            dependent.append(cols[j])
    raise RankDeficiencyError(dependent)


# ---------------------------------------------------------------------------
# fitters


def fit_ols(X, y, names: Sequence[str] | None = None) -> FitResult:
    """Least squares with Gaussian ML log-likelihood and classical SEs."""
    X = _as_matrix(X)
    y = np.asarray(y, dtype=float)
    if X.shape[0] != y.shape[0]:
        raise ValueError("X and y have different numbers of rows")
    cols = _names(X, names)
    _check_rank(X, cols)
    n, p = X.shape
    beta, *_ = np.linalg.lstsq(X, y, rcond=None)
    fitted = X @ beta
    resid = y - fitted
    rss = float(resid @ resid)
    sigma2_mle = rss / n
    if sigma2_mle > 0:
        loglik = -0.5 * n * (math.log(2 * math.pi * sigma2_mle) + 1)
    else:
        loglik = math.inf  # degenerate zero-noise fit
    xtx_inv = np.linalg.inv(X.T @ X)
    sigma2_ols = rss / (n - p) if n > p else 0.0
    se = np.sqrt(np.maximum(np.diag(xtx_inv) * sigma2_ols, 0.0))
    return FitResult(
        coefficients=dict(zip(cols, map(float, beta))),
        std_errors=dict(zip(cols, map(float, se))),
        loglik=loglik,
        n_obs=n,
        n_params=p + 1,
        model_kind="ols",
        converged=True,
        residual_variance=sigma2_mle,
        fitted=fitted,
    )


def _lmm_profile(lam: float, X, y, group_sums_X, group_sums_y, group_sizes, xtx, xty, yty):
    """Profiled quantities for variance ratio lam = sigma_b^2 / sigma_e^2.

    With V = I + lam * J per group, V^-1 = I - c * J where c = lam/(1 + lam*n_g),
    so all GLS pieces reduce to per-group sums.
    """
    c = lam / (1.0 + lam * group_sizes)
    A = xtx - (group_sums_X.T * c) @ group_sums_X
    b = xty - group_sums_X.T @ (c * group_sums_y)
    beta = np.linalg.solve(A, b)
    # r' V^-1 r expanded so group sums of residuals suffice
    resid_group = group_sums_y - group_sums_X @ beta
    rVr = (
        yty
        - 2 * float(beta @ xty)
        + float(beta @ xtx @ beta)
        - float((c * resid_group) @ resid_group)
    )
    n = X.shape[0]
    sigma2 = rVr / n
    logdet = float(np.log1p(lam * group_sizes).sum())
    loglik = -0.5 * (n * math.log(2 * math.pi * sigma2) + logdet + n)
    return beta, sigma2, A, loglik


def fit_lmm_random_intercept(X, y, groups, names: Sequence[str] | None = None) -> FitResult:
    """ML fit of y = X b + u[group] + e with one random-intercept variance.

    Fixed effects and the residual variance are profiled out analytically;
    the variance ratio is optimized by bounded 1-D search.  A single group
    makes the variance unidentifiable and falls back to OLS with a warning
    flag in ``extras``.
    """
    X = _as_matrix(X)
    y = np.asarray(y, dtype=float)
    groups = np.asarray(groups)
    if not (X.shape[0] == y.shape[0] == groups.shape[0]):
        raise ValueError("X, y and groups have different numbers of rows")
    cols = _names(X, names)
    _check_rank(X, cols)
    labels, codes = np.unique(groups, return_inverse=True)
    if len(labels) < 2:
        res = fit_ols(X, y, names=cols)
        res.model_kind = "lmm_ri"
        res.n_params = X.shape[1] + 2
        res.group_variance = 0.0
        res.extras["warning"] = "single group: random intercept unidentifiable, OLS fallback"
        return res
    n, p = X.shape
    g = len(labels)
    group_sizes = np.bincount(codes, minlength=g).astype(float)
    group_sums_X = np.zeros((g, p))
    np.add.at(group_sums_X, codes, X)
    group_sums_y = np.zeros(g)
    np.add.at(group_sums_y, codes, y)
    xtx = X.T @ X
    xty = X.T @ y
    yty = float(y @ y)

    def neg_profile(lam: float) -> float:
        return -_lmm_profile(lam, X, y, group_sums_X, group_sums_y, group_sizes, xtx, xty, yty)[3]

    opt = optimize.minimize_scalar(
        neg_profile, bounds=(0.0, 1e6), method="bounded", options={"xatol": 1e-10}
    )
    lam = float(opt.x)
    beta, sigma2, A, loglik = _lmm_profile(
        lam, X, y, group_sums_X, group_sums_y, group_sizes, xtx, xty, yty
    )
    converged = bool(opt.success) and math.isfinite(loglik)
    cov = np.linalg.inv(A) * sigma2
    se = np.sqrt(np.maximum(np.diag(cov), 0.0))
    return FitResult(
        coefficients=dict(zip(cols, map(float, beta))),
        std_errors=dict(zip(cols, map(float, se))),
        loglik=float(loglik),
        n_obs=n,
        n_params=p + 2,
        model_kind="lmm_ri",
        converged=converged,
        group_variance=float(lam * sigma2),
        residual_variance=float(sigma2),
        fitted=X @ beta,
        extras={"variance_ratio": lam} if converged else {"variance_ratio": lam, "opt": str(opt)},
    )


def _logistic_loglik(y: np.ndarray, eta: np.ndarray) -> float:
    # log p = -log(1+exp(-eta)) for y=1, -log(1+exp(eta)) for y=0; stable form
    return float(-(np.logaddexp(0.0, -eta) * y + np.logaddexp(0.0, eta) * (1 - y)).sum())


def fit_logistic(
    X,
    y,
    names: Sequence[str] | None = None,
    max_iter: int = 100,
    score_tol: float = 1e-8,
    loglik_tol: float = 1e-10,
    init: np.ndarray | None = None,
) -> FitResult:
    """Binary logistic regression by iteratively reweighted least squares.

    Convergence when max |X'(y - p)| < score_tol or the relative change in
    log-likelihood falls below loglik_tol.  Diverging coefficients together
    with perfect classification raise SeparationError.
    """
    X = _as_matrix(X)
    y = np.asarray(y, dtype=float)
    if X.shape[0] != y.shape[0]:
        raise ValueError("X and y have different numbers of rows")
    if not np.isin(y, (0.0, 1.0)).all():
        raise ValueError("y must be binary 0/1")
    cols = _names(X, names)
    _check_rank(X, cols)
    n, p = X.shape
    beta = np.zeros(p) if init is None else np.asarray(init, dtype=float).copy()
    eta = X @ beta
    ll = _logistic_loglik(y, eta)
    converged = False
    for _ in range(max_iter):
        prob = 1.0 / (1.0 + np.exp(-eta))
        score = X.T @ (y - prob)
        if np.abs(score).max() < score_tol:
            # On separable data the score also vanishes as beta diverges.
            if _perfectly_separated(y, eta) and np.abs(beta).max() > 50:
                raise SeparationError("separation")
            converged = True
            break
        w = prob * (1.0 - prob)
        hess = X.T @ (X * w[:, None])
        try:
            step = np.linalg.solve(hess, score)
        except np.linalg.LinAlgError as e:
            if _perfectly_separated(y, eta):
                raise SeparationError("separation") from None
            raise RankDeficiencyError(cols) from e
        # Newton with step halving so the log-likelihood never decreases.
        scale = 1.0
        for _ in range(30):
            cand = beta + scale * step
            cand_eta = X @ cand
            cand_ll = _logistic_loglik(y, cand_eta)
            if cand_ll >= ll - 1e-12:
                break
            scale *= 0.5
        beta, eta = cand, cand_eta
        if np.abs(beta).max() > 1e3 and _perfectly_separated(y, eta):
            raise SeparationError("separation")
        if abs(cand_ll - ll) <= loglik_tol * max(1.0, abs(ll)):
            if _perfectly_separated(y, eta) and np.abs(beta).max() > 50:
                raise SeparationError("separation")
            ll = cand_ll
            converged = True
            break
        ll = cand_ll
    else:
        if _perfectly_separated(y, eta):
            raise SeparationError("separation")
    prob = 1.0 / (1.0 + np.exp(-eta))
    ll = _logistic_loglik(y, eta)
    w = prob * (1.0 - prob)
    cov = np.linalg.inv(X.T @ (X * w[:, None]))
    se = np.sqrt(np.maximum(np.diag(cov), 0.0))
    return FitResult(
        coefficients=dict(zip(cols, map(float, beta))),
        std_errors=dict(zip(cols, map(float, se))),
        loglik=ll,
        n_obs=n,
        n_params=p,
        model_kind="logistic",
        converged=converged,
        fitted=prob,
    )


def _perfectly_separated(y: np.ndarray, eta: np.ndarray) -> bool:
    margin = (2 * y - 1) * eta
    return bool((margin > 0).all()) and float(np.abs(eta).min()) > 2.0


# ---------------------------------------------------------------------------
# comparisons


def _require_converged(fit: FitResult) -> None:
    if not fit.converged:
        raise NotConvergedError(f"{fit.model_kind} fit did not converge")


def lrt(fit_small: FitResult, fit_big: FitResult) -> tuple[float, int, float]:
    """Likelihood-ratio test: chi2 = 2 * delta-loglik, df = delta-params."""
    _require_converged(fit_small)
    _require_converged(fit_big)
    if fit_small.n_obs != fit_big.n_obs:
        raise ValueError("models were fit to different numbers of observations")
    df = fit_big.n_params - fit_small.n_params
    if df <= 0:
        raise ValueError("models are not nested: larger model must add parameters")
    if fit_big.loglik < fit_small.loglik - 1e-8:
        raise ValueError("larger model has lower log-likelihood; models are not nested")
    chi2 = 2.0 * (fit_big.loglik - fit_small.loglik)
    chi2 = max(chi2, 0.0)
    p = float(spstats.chi2.sf(chi2, df))
    return chi2, df, p


def bic(fit: FitResult) -> float:
    """k * ln(n) - 2 * loglik; lower is better."""
    _require_converged(fit)
    if fit.n_params == 0 and fit.loglik == 0:
        return 0.0
    return fit.n_params * math.log(fit.n_obs) - 2.0 * fit.loglik


def compare_fits(name_small: str, fit_small: FitResult, name_big: str, fit_big: FitResult) -> dict:
    chi2, df, p = lrt(fit_small, fit_big)
    bic_small, bic_big = bic(fit_small), bic(fit_big)
    return {
        "small": name_small,
        "big": name_big,
        "delta_loglik": fit_big.loglik - fit_small.loglik,
        "chi2": chi2,
        "df": df,
        "p": p,
        "bic_small": bic_small,
        "bic_big": bic_big,
        "delta_bic": bic_big - bic_small,
        "preferred_by_bic": name_big if bic_big < bic_small else name_small,
    }


@dataclass
class BootstrapResult:
    intervals: dict[str, tuple[float, float]]
    n_sims: int
    n_success: int
    level: float
    warned: bool

    def covers(self, name: str, value: float) -> bool:
        lo, hi = self.intervals[name]
        return lo <= value <= hi


def bootstrap_ci(
    fitter: Callable[[np.ndarray, np.ndarray], FitResult],
    rows: tuple,
    n_sims: int = 1000,
    seed: int = 0,
    level: float = 0.95,
) -> BootstrapResult:
    """Percentile intervals from case resampling.

    ``rows`` is (X, y); each resample draws n cases with replacement from a
    per-resample stream spawned off the seed, so results are independent of
    evaluation order.  Failed resample fits are recorded; intervals are
    computed over the successes with a warning flag when fewer than 95%
    succeed.
    """
    if n_sims < 1:
        raise ValueError("n_sims must be >= 1")
    X, y = rows
    X = _as_matrix(X)
    y = np.asarray(y, dtype=float)
    n = X.shape[0]
    draws: dict[str, list[float]] = {}
    n_success = 0
    for i in range(n_sims):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(i,)))
        idx = rng.integers(0, n, size=n)
        try:
            fit = fitter(X[idx], y[idx])
        except Exception:  # noqa: BLE001 - resample failures are expected occasionally
            continue
        n_success += 1
        for name, value in fit.coefficients.items():
            draws.setdefault(name, []).append(value)
    if n_success == 0:
        raise RuntimeError("every bootstrap resample failed to fit")
    alpha = (1.0 - level) / 2.0
    intervals = {
        name: (
            float(np.quantile(np.array(vals), alpha)),
            float(np.quantile(np.array(vals), 1.0 - alpha)),
        )
        for name, vals in draws.items()
    }
    return BootstrapResult(
        intervals=intervals,
        n_sims=n_sims,
        n_success=n_success,
        level=level,
        warned=n_success < 0.95 * n_sims,
    )
