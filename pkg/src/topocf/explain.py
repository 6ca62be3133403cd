"""Correlation of characteristics and the OLS explanatory model with t-test significance."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import qr as pivoted_qr
from scipy.special import betainc

from .errors import DataError, RankDeficient, TooFewSamples, ZeroVariance
from .numerics import zscore

log = logging.getLogger(__name__)

RANK_TOL = 1e-10
COND_WARN = 30.0
STAR_LEVELS = (0.05, 0.01, 0.001)


@dataclass(frozen=True, eq=False)
class DesignMatrix:
    X: np.ndarray
    names: tuple
    dropped: tuple = ()

    @property
    def M(self):
        return self.X.shape[0]

    @property
    def C(self):
        return self.X.shape[1]


def design_matrix(rows, names, standardize: bool = True) -> DesignMatrix:
    """Stack per-sample predictor rows and z-score every column.

    Constant columns cannot be standardized; they are removed and listed in
    ``dropped``.
    """
    X = np.asarray(rows, dtype=float)
    if X.ndim != 2 or X.shape[1] != len(names):
        raise ValueError("rows must form an M x C array matching names")
    if not np.all(np.isfinite(X)):
        raise DataError("design matrix has missing or non-finite values")
    if not standardize:
        return DesignMatrix(X, tuple(names))
    cols, kept, dropped = [], [], []
    for c, name in enumerate(names):
        try:
            cols.append(zscore(X[:, c]))
            kept.append(name)
        except ZeroVariance:
            dropped.append(name)
    if dropped:
        log.warning("constant predictors dropped: %s", ", ".join(dropped))
    Z = np.column_stack(cols) if cols else np.empty((X.shape[0], 0))
    return DesignMatrix(Z, tuple(kept), tuple(dropped))


def pearson_corr(X) -> np.ndarray:
    X = X.X if isinstance(X, DesignMatrix) else np.asarray(X, dtype=float)
    if X.shape[0] < 3:
        raise TooFewSamples("correlation needs at least three rows")
    Xc = X - X.mean(0)
    sd = np.sqrt((Xc ** 2).sum(0))
    if np.any(sd == 0):
        raise ZeroVariance("zero-variance column")
    C = (Xc.T @ Xc) / np.outer(sd, sd)
    C = np.clip((C + C.T) / 2, -1.0, 1.0)
    np.fill_diagonal(C, 1.0)
    return C


def t_two_sided_p(t, df) -> np.ndarray:
    """Two-sided Student-t p-value via the regularized incomplete beta function."""
    t = np.asarray(t, dtype=float)
    t2 = t * t
    # p = I_x(df/2, 1/2) with x = df/(df+t^2); near p = 1 (tiny t) x rounds to 1, so
    # use the complement 1 - I_{1-x}(1/2, df/2) there
    q = betainc(0.5, df / 2.0, t2 / (df + t2))
    p = np.where(q < 0.5, 1.0 - q, betainc(df / 2.0, 0.5, df / (df + t2)))
    return np.clip(p, 0.0, 1.0)


@dataclass(frozen=True, eq=False)
class RegressionReport:
    names: tuple
    intercept: float
    coef: np.ndarray
    se: np.ndarray  # intercept first
    t: np.ndarray
    p: np.ndarray
    r2: float
    adj_r2: float
    residuals: np.ndarray
    fitted: np.ndarray
    df: int
    condition_number: float
    dropped: tuple = ()
    warnings: tuple = ()

    def to_dict(self) -> dict:
        rows = [{"name": "intercept", "coef": self.intercept, "se": float(self.se[0]),
                 "t": float(self.t[0]), "p": float(self.p[0])}]
        for k, n in enumerate(self.names):
            rows.append({"name": n, "coef": float(self.coef[k]), "se": float(self.se[k + 1]),
                         "t": float(self.t[k + 1]), "p": float(self.p[k + 1])})
        return {"coefficients": rows, "r2": self.r2, "adj_r2": self.adj_r2, "df": self.df,
                "n_samples": int(self.residuals.size), "condition_number": self.condition_number,
                "dropped": list(self.dropped), "warnings": list(self.warnings),
                "residuals": self.residuals.tolist()}


def ols_fit(X, y, names=None) -> RegressionReport:
    """y = theta0 + X theta + eps by least squares through a pivoted QR.

    SE = sqrt(s^2 diag((A^T A)^{-1})) with s^2 = RSS / (M - C - 1), A = [1 | X].
    """
    if isinstance(X, DesignMatrix):
        names = X.names if names is None else names
        dropped_before = X.dropped
        X = X.X
    else:
        X = np.asarray(X, dtype=float)
        dropped_before = ()
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=float)
    M, C = X.shape
    names = tuple(names) if names is not None else tuple(f"x{k}" for k in range(C))
    if M <= C + 1:
        raise TooFewSamples(f"need more than {C + 1} samples, got {M}")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise DataError("non-finite values in regression inputs")
    A = np.column_stack([np.ones(M), X])
    Q, Rm, piv = pivoted_qr(A, mode="economic", pivoting=True)
    diag = np.abs(np.diag(Rm))
    rank = int((diag > RANK_TOL * diag[0]).sum())
    if rank < C + 1:
        bad = sorted(int(j) for j in piv[rank:])
        bad_names = tuple("intercept" if j == 0 else names[j - 1] for j in bad)
        raise RankDeficient(f"design matrix is rank deficient; dependent columns: {', '.join(bad_names)}",
                            dropped=bad_names)
    beta_p = np.linalg.solve(Rm, Q.T @ y)
    beta = np.empty(C + 1)
    beta[piv] = beta_p
    fitted = A @ beta
    resid = y - fitted
    df = M - C - 1
    rss = float(resid @ resid)
    tss = float(((y - y.mean()) ** 2).sum())
    if tss <= 1e-300:
        r2 = 0.0
        adj = 0.0
    else:
        r2 = float(min(1.0, max(0.0, 1.0 - rss / tss)))
        adj = float(1.0 - (1.0 - r2) * (M - 1) / df)
    Rinv = np.linalg.solve(Rm, np.eye(C + 1))
    cov_p = Rinv @ Rinv.T
    cov = np.empty_like(cov_p)
    cov[np.ix_(piv, piv)] = cov_p
    s2 = rss / df
    se = np.sqrt(np.maximum(np.diag(cov) * s2, 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(se > 0, beta / se, np.where(beta == 0, 0.0, np.inf * np.sign(beta)))
    p = np.where(np.isfinite(t), t_two_sided_p(np.nan_to_num(t), df), 0.0)
    p = np.where((se == 0) & (beta == 0), 1.0, p)
    cond = float(np.linalg.cond(X)) if C else 1.0
    warns = []
    if cond > COND_WARN:
        warns.append(f"condition number {cond:.1f} indicates near-collinear predictors")
        log.warning(warns[-1])
    return RegressionReport(names, float(beta[0]), beta[1:].copy(), se, t, p, r2, adj, resid, fitted, df,
                            cond, tuple(dropped_before), tuple(warns))


def stars(p: float, levels=STAR_LEVELS) -> str:
    return "*" * sum(1 for lv in levels if p < lv)


def significance_format(report: RegressionReport, levels=STAR_LEVELS) -> list:
    """Rows sorted by |coefficient| (largest first) with sign and star annotations."""
    rows = []
    for k, name in enumerate(report.names):
        c = float(report.coef[k])
        rows.append({"name": name, "coef": c, "abs": abs(c), "sign": "+" if c > 0 else ("-" if c < 0 else "0"),
                     "se": float(report.se[k + 1]), "t": float(report.t[k + 1]), "p": float(report.p[k + 1]),
                     "stars": stars(float(report.p[k + 1]), levels)})
    rows.sort(key=lambda r: (-r["abs"], r["name"]))
    for rank, r in enumerate(rows, 1):
        r["rank"] = rank
    return rows
