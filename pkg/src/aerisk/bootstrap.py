"""Patient-level bootstrap for log-ratios against the gold standard.

A comparison estimator and the broad-scope Aalen-Johansen estimator are
recomputed on B resamples (n patients drawn with replacement, within one
arm of one dataset) at the original evaluation time. The spread of
log(estimate / gold standard) over replicates gives the standard error of
the log-ratio; confidence intervals are normal-theory on the log scale.

Replicates whose numerator or denominator is zero carry no log-ratio;
they are dropped and counted rather than continuity-corrected, and the
count is surfaced so downstream pooling can exclude unstable records.

Replicate r draws from a numpy substream derived from (seed, r), so
serial and parallel execution produce bit-identical results.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dataset import AnalysisDataset, Arm, CeScope
from .errors import DegenerateBootstrapError, RatioUndefinedError
from .estimators import (
    COMPARISON_ESTIMATORS,
    EstimatorId,
    _arm_arrays_checked,
    _estimator_value,
    _truncate,
    _validate_tau,
)

DEFAULT_B = 999
Z_95 = 1.959963984540054  # two-sided 95% normal quantile


@dataclass(frozen=True)
class RatioEstimate:
    """Log-ratio of one estimator versus the gold standard, with bootstrap SE."""

    estimator_id: EstimatorId
    log_ratio: float
    se_log_ratio: float
    ci_low: float    # ratio scale
    ci_high: float
    n_replicates_used: int

    def __post_init__(self):
        if self.se_log_ratio < 0:
            raise ValueError("se_log_ratio must be non-negative")
        ratio = math.exp(self.log_ratio)
        if not (self.ci_low <= ratio <= self.ci_high):
            raise ValueError("confidence interval must bracket the ratio")

    @property
    def ratio(self) -> float:
        return math.exp(self.log_ratio)


@dataclass(frozen=True)
class DegeneracyReport:
    """How many replicates were dropped, and whether the record is usable."""

    dropped: int
    total: int
    fraction: float
    usable: bool


#: Records whose dropped-replicate share exceeds this are unusable downstream.
MAX_DROPPED_FRACTION = 0.5


def degenerate_policy_report(dropped: int, b: int) -> DegeneracyReport:
    """Summarize dropped replicates; unusable above MAX_DROPPED_FRACTION."""
    if b <= 0 or dropped < 0 or dropped > b:
        raise ValueError(f"need 0 <= dropped <= B with B > 0, got {dropped}, {b}")
    fraction = dropped / b
    return DegeneracyReport(dropped=dropped, total=b,
                            fraction=fraction, usable=fraction <= MAX_DROPPED_FRACTION)


def _replicate_rng(seed: int, r: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(r,)))


def _bootstrap_logs(times, events, tau, scope, estimator, b, seed,
                    with_reference: bool):
    """Per-replicate log values; returns (logs, n_dropped).

    ``logs`` holds log(est/gold) when with_reference else log(est); invalid
    replicates (zero values) are excluded.
    """
    n = times.size
    logs = []
    dropped = 0
    for r in range(b):
        rng = _replicate_rng(seed, r)
        idx = rng.integers(0, n, size=n)
        t_b = times[idx]
        e_b = events[idx]
        est = _estimator_value(estimator, t_b, e_b, tau, scope)
        if est <= 0.0:
            dropped += 1
            continue
        if with_reference:
            gold = _estimator_value(EstimatorId.AJE_GOLD, t_b, e_b, tau, scope)
            if gold <= 0.0:
                dropped += 1
                continue
            logs.append(math.log(est) - math.log(gold))
        else:
            logs.append(math.log(est))
    return np.asarray(logs, dtype=np.float64), dropped


def _se(logs: np.ndarray) -> float:
    if logs.size < 2:
        raise DegenerateBootstrapError(
            f"only {logs.size} valid replicate(s); need at least 2"
        )
    return float(np.std(logs, ddof=1))


def bootstrap_log_ratio(dataset: AnalysisDataset, arm: Arm, tau: float,
                        estimator_id: EstimatorId, b: int = DEFAULT_B,
                        seed: int = 0,
                        ce_scope: CeScope = CeScope.ALL) -> RatioEstimate:
    """Bootstrap SE and CI for log(estimator / gold-standard Aalen-Johansen).

    The point estimate is the log-ratio on the original data, which must
    have a positive gold-standard value. Raises RatioUndefinedError when
    the gold standard is zero and DegenerateBootstrapError when fewer than
    two replicates yield a finite log-ratio.
    """
    estimator_id = EstimatorId(estimator_id)
    if estimator_id not in COMPARISON_ESTIMATORS:
        raise ValueError(f"{estimator_id.value} is not a comparison estimator")
    if b < 2:
        raise ValueError(f"need B >= 2 bootstrap replicates, got {b}")
    tau = _validate_tau(tau)
    times, events = _arm_arrays_checked(dataset, arm)
    t0, e0 = _truncate(times, events, tau, ce_scope)

    gold0 = _estimator_value(EstimatorId.AJE_GOLD, t0, e0, tau, CeScope.ALL)
    if gold0 <= 0.0:
        raise RatioUndefinedError(
            f"gold-standard estimate is zero for ({dataset.trial_id!r}, "
            f"{dataset.ae_type!r}); log-ratio undefined"
        )
    est0 = _estimator_value(estimator_id, t0, e0, tau, CeScope.ALL)
    if est0 <= 0.0:
        raise RatioUndefinedError(
            f"{estimator_id.value} is zero on the original data; log-ratio undefined"
        )
    log_ratio = math.log(est0) - math.log(gold0)

    logs, _ = _bootstrap_logs(t0, e0, tau, CeScope.ALL, estimator_id, b, seed,
                              with_reference=True)
    se = _se(logs)
    return RatioEstimate(
        estimator_id=estimator_id,
        log_ratio=log_ratio,
        se_log_ratio=se,
        ci_low=math.exp(log_ratio - Z_95 * se),
        ci_high=math.exp(log_ratio + Z_95 * se),
        n_replicates_used=int(logs.size),
    )


def bootstrap_log_se(dataset: AnalysisDataset, arm: Arm, tau: float,
                     estimator_id: EstimatorId, b: int = DEFAULT_B,
                     seed: int = 0,
                     ce_scope: CeScope = CeScope.ALL) -> tuple[float, int]:
    """Bootstrap SE of log(estimate) alone, against a fixed reference.

    Useful when the comparator is a known constant (for calibration
    checks) rather than the resampled gold standard. Returns (se, number
    of replicates used).
    """
    estimator_id = EstimatorId(estimator_id)
    if b < 2:
        raise ValueError(f"need B >= 2 bootstrap replicates, got {b}")
    tau = _validate_tau(tau)
    times, events = _arm_arrays_checked(dataset, arm)
    t0, e0 = _truncate(times, events, tau, ce_scope)
    logs, _ = _bootstrap_logs(t0, e0, tau, CeScope.ALL, estimator_id, b, seed,
                              with_reference=False)
    return _se(logs), int(logs.size)
