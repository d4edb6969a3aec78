"""Random-effects pooling and meta-regression of log-ratios across trials.

Per-trial log-ratios (one estimator versus the gold standard) are pooled
with a normal-normal hierarchical model: weights 1/(se_i^2 + tau2), with
the between-study variance tau2 estimated by the closed-form method of
moments (DerSimonian-Laird, generalized to regression designs) or,
optionally, by REML. The exponential of the pooled effect is the average
ratio of the two estimators. Meta-regression relates the log-ratio to
centered covariates (censoring percentage, competing-event percentage,
gold-standard probability, evaluation time in years); slopes are reported
as multiplicative changes per a stated covariate increase.

Only aggregated records ever reach this module; it never sees
patient-level data.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import MetaFitError
from .estimators import EstimatorId

Z_95 = 1.959963984540054

#: Covariates available to the meta-regression, with the deltas used for
#: multiplicative-change reporting (10 percentage points of censoring or
#: competing events, 0.1 of AE probability, one year of evaluation time).
COVARIATE_DELTAS = {
    "pct_censoring": 10.0,
    "pct_ce": 10.0,
    "aj_probability": 0.1,
    "eval_time_years": 1.0,
}

#: pct_ce is excluded from the multivariable model: it is strongly
#: determined by censoring and the AE probability.
MULTIVARIABLE_COVARIATES = ("pct_censoring", "aj_probability", "eval_time_years")


@dataclass(frozen=True)
class Covariates:
    """Aggregate bias drivers attached to one (trial, AE-type) record."""

    pct_censoring: float
    pct_ce: float
    aj_probability: float
    eval_time_years: float

    def __post_init__(self):
        if not 0.0 <= self.pct_censoring <= 100.0:
            raise ValueError(f"pct_censoring outside [0, 100]: {self.pct_censoring!r}")
        if not 0.0 <= self.pct_ce <= 100.0:
            raise ValueError(f"pct_ce outside [0, 100]: {self.pct_ce!r}")
        if not 0.0 <= self.aj_probability <= 1.0:
            raise ValueError(f"aj_probability outside [0, 1]: {self.aj_probability!r}")
        if not (self.eval_time_years > 0 and math.isfinite(self.eval_time_years)):
            raise ValueError(f"eval_time_years must be positive: {self.eval_time_years!r}")

    def value(self, covariate_id: str) -> float:
        if covariate_id not in COVARIATE_DELTAS:
            raise KeyError(f"unknown covariate {covariate_id!r}")
        return getattr(self, covariate_id)


@dataclass(frozen=True)
class AggregateRecord:
    """One per-(trial, AE-type) log-ratio with its SE and covariates."""

    trial_id: str
    ae_type: str
    arm: str
    estimator_id: EstimatorId
    log_ratio: float
    se_log_ratio: float
    covariates: Covariates
    dropped_fraction: float = 0.0  # bootstrap replicates dropped / total

    def __post_init__(self):
        if not math.isfinite(self.log_ratio):
            raise ValueError(f"log_ratio must be finite: {self.log_ratio!r}")
        if not (self.se_log_ratio >= 0 and math.isfinite(self.se_log_ratio)):
            raise ValueError(f"se_log_ratio must be finite and >= 0: {self.se_log_ratio!r}")
        if not 0.0 <= self.dropped_fraction <= 1.0:
            raise ValueError(f"dropped_fraction outside [0, 1]: {self.dropped_fraction!r}")


@dataclass(frozen=True)
class Coefficient:
    name: str
    estimate: float
    se: float
    ci_low: float
    ci_high: float


@dataclass(frozen=True)
class MetaFit:
    """Pooled effect (mu, on the log scale), heterogeneity, coefficients."""

    mu: float
    tau2: float
    coefficients: tuple[Coefficient, ...]
    k: int
    method: str = "dl"
    covariate_means: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.tau2 < 0:
            raise ValueError("tau2 must be non-negative")
        if self.k < 2:
            raise ValueError("a fit needs at least two records")

    @property
    def intercept(self) -> Coefficient:
        return self.coefficients[0]

    @property
    def average_ratio(self) -> float:
        """exp(mu): the average ratio of estimator to gold standard."""
        return math.exp(self.mu)

    @property
    def average_ratio_ci(self) -> tuple[float, float]:
        c = self.intercept
        return math.exp(c.ci_low), math.exp(c.ci_high)

    def coefficient(self, name: str) -> Coefficient:
        for c in self.coefficients:
            if c.name == name:
                return c
        raise KeyError(f"no coefficient named {name!r} in this fit")


@dataclass(frozen=True)
class MultiplicativeChange:
    """exp(beta * delta): ratio change per delta units of a covariate."""

    covariate_id: str
    delta: float
    ratio: float
    ci_low: float
    ci_high: float


def select_records(records, estimator_id: EstimatorId | None = None):
    """Filter records fit for pooling: positive SE, stable bootstrap."""
    out = []
    for r in records:
        if estimator_id is not None and r.estimator_id != EstimatorId(estimator_id):
            continue
        if r.se_log_ratio <= 0.0:
            continue
        if r.dropped_fraction > 0.5:
            continue
        out.append(r)
    return out


def _design(records, covariate_ids, center: bool):
    y = np.array([r.log_ratio for r in records], dtype=np.float64)
    v = np.array([r.se_log_ratio**2 for r in records], dtype=np.float64)
    cols = [np.ones(len(records))]
    means = {}
    for cid in covariate_ids:
        x = np.array([r.covariates.value(cid) for r in records], dtype=np.float64)
        means[cid] = float(np.mean(x))
        cols.append(x - means[cid] if center else x)
    return y, v, np.column_stack(cols), means


def _wls(x: np.ndarray, y: np.ndarray, w: np.ndarray):
    """Weighted least squares; returns (beta, covariance of beta)."""
    xtw = x.T * w
    xtwx = xtw @ x
    try:
        cov = np.linalg.inv(xtwx)
    except np.linalg.LinAlgError:
        raise MetaFitError("design matrix is rank deficient") from None
    beta = cov @ (xtw @ y)
    return beta, cov


def _tau2_moments(x: np.ndarray, y: np.ndarray, v: np.ndarray) -> float:
    """Method-of-moments between-study variance for a regression design.

    Closed-form generalization of the classic two-step estimator: the
    fixed-effect weighted residual sum of squares is compared with its
    expectation under homogeneity and the excess is scaled by the trace
    of the residual projection.
    """
    k, p = x.shape
    w = 1.0 / v
    beta, cov = _wls(x, y, w)
    resid = y - x @ beta
    q_e = float(np.sum(w * resid**2))
    xtw2x = (x.T * w**2) @ x
    trace_p = float(np.sum(w) - np.trace(cov @ xtw2x))
    if trace_p <= 0.0:
        return 0.0
    return max(0.0, (q_e - (k - p)) / trace_p)


def _tau2_reml(x: np.ndarray, y: np.ndarray, v: np.ndarray) -> float:
    """Restricted maximum-likelihood between-study variance."""
    k, p = x.shape

    def neg_restricted_loglik(tau2: float) -> float:
        tau2 = max(tau2, 0.0)
        w = 1.0 / (v + tau2)
        beta, _ = _wls(x, y, w)
        resid = y - x @ beta
        sign, logdet = np.linalg.slogdet((x.T * w) @ x)
        if sign <= 0:
            return np.inf
        return 0.5 * (float(np.sum(np.log(v + tau2))) + logdet
                      + float(np.sum(w * resid**2)))

    upper = max(10.0 * float(np.var(y, ddof=1)) if k > 1 else 1.0, 1e-3)
    result = minimize_scalar(neg_restricted_loglik, bounds=(0.0, upper),
                             method="bounded", options={"xatol": 1e-10})
    if not result.success:
        raise MetaFitError("REML estimation of tau2 did not converge")
    return max(0.0, float(result.x))


_TAU2_ESTIMATORS = {"dl": _tau2_moments, "reml": _tau2_reml, "fixed": None}


def _fit(records, covariate_ids, center: bool, method: str) -> MetaFit:
    if method not in _TAU2_ESTIMATORS:
        raise ValueError(f"method must be one of {sorted(_TAU2_ESTIMATORS)}, got {method!r}")
    records = list(records)
    k = len(records)
    p = 1 + len(covariate_ids)
    if k < 2:
        raise MetaFitError(f"need at least two records, got {k}")
    if k <= len(covariate_ids) + 1 and covariate_ids:
        raise MetaFitError(f"{k} records cannot support {p} coefficients")

    ses = np.array([r.se_log_ratio for r in records])
    ys = np.array([r.log_ratio for r in records])
    if np.all(ses == 0.0):
        if covariate_ids or not np.all(ys == ys[0]):
            raise MetaFitError("zero-variance records with heterogeneous effects")
        # Degenerate but well defined: every study reports the same ratio.
        mu = float(ys[0])
        coef = Coefficient("intercept", mu, 0.0, mu, mu)
        return MetaFit(mu=mu, tau2=0.0, coefficients=(coef,), k=k, method=method)
    if np.any(ses <= 0.0):
        raise MetaFitError("all records must have positive se_log_ratio")

    y, v, x, means = _design(records, covariate_ids, center)
    if np.linalg.matrix_rank(x) < x.shape[1]:
        raise MetaFitError("design matrix is rank deficient")
    estimator = _TAU2_ESTIMATORS[method]
    tau2 = 0.0 if estimator is None else estimator(x, y, v)
    w = 1.0 / (v + tau2)
    beta, cov = _wls(x, y, w)
    se = np.sqrt(np.diag(cov))
    names = ["intercept", *covariate_ids]
    coefficients = tuple(
        Coefficient(
            name=name,
            estimate=float(b),
            se=float(s),
            ci_low=float(b - Z_95 * s),
            ci_high=float(b + Z_95 * s),
        )
        for name, b, s in zip(names, beta, se)
    )
    return MetaFit(mu=float(beta[0]), tau2=float(tau2), coefficients=coefficients,
                   k=k, method=method, covariate_means=means)


def fit_random_effects(records, method: str = "dl") -> MetaFit:
    """Pool log-ratios with a normal-normal hierarchical model.

    ``method`` selects the tau2 estimator: closed-form method of moments
    ("dl", default), REML ("reml"), or none ("fixed", which pins tau2 at 0
    and reduces to fixed-effect inverse-variance pooling).
    """
    return _fit(records, (), center=True, method=method)


def fit_meta_regression(records, covariate_ids, center: bool = True,
                        method: str = "dl") -> MetaFit:
    """Mixed-effects regression of log-ratios on covariates.

    With centering (default) the exponentiated intercept is the average
    ratio at covariate means. Requires more records than coefficients and
    a full-rank design.
    """
    covariate_ids = tuple(covariate_ids)
    for cid in covariate_ids:
        if cid not in COVARIATE_DELTAS:
            raise KeyError(f"unknown covariate {cid!r}")
    if len(set(covariate_ids)) != len(covariate_ids):
        raise ValueError("duplicate covariates in the design")
    return _fit(records, covariate_ids, center=center, method=method)


def multiplicative_change(fit: MetaFit, covariate_id: str,
                          delta: float | None = None) -> MultiplicativeChange:
    """exp(beta * delta) for a fitted slope, with its scaled normal CI.

    ``delta`` defaults to the covariate's conventional reporting increment
    (see COVARIATE_DELTAS).
    """
    if delta is None:
        if covariate_id not in COVARIATE_DELTAS:
            raise KeyError(f"unknown covariate {covariate_id!r}")
        delta = COVARIATE_DELTAS[covariate_id]
    coef = fit.coefficient(covariate_id)
    bounds = sorted((coef.ci_low * delta, coef.ci_high * delta))
    return MultiplicativeChange(
        covariate_id=covariate_id,
        delta=float(delta),
        ratio=math.exp(coef.estimate * delta),
        ci_low=math.exp(bounds[0]),
        ci_high=math.exp(bounds[1]),
    )
