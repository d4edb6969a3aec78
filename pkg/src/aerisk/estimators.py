"""One-sample estimators of the cumulative adverse-event probability.

Six estimators of P(first AE by tau) are computed from the same
time-to-first-event data:

* incidence proportion: AE count / sample size,
* incidence-density transforms: 1 - exp(-ID*tau), with and without a
  competing-event correction,
* one minus Kaplan-Meier with AEs as the only event,
* Aalen-Johansen cumulative incidence, under the broad and the
  death-only competing-event definitions.

Composite-endpoint variants (AE or CE as a single event) are included to
isolate the role of censoring. All step estimators share one risk table,
so the Aalen-Johansen decomposition
``cif_ae + cif_ce = 1 - KM(composite)`` holds at every jump time up to
float rounding.

Conventions, fixed here because the estimands do not determine them:
at a tied time, events are processed before censorings and AE and CE
increments share the same left-limit survival value; a record beyond tau
is censored at tau; restricted at-risk time is min(time, tau) for every
patient. No per-curve variance is computed; uncertainty is delegated to
the bootstrap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .dataset import (
    AnalysisDataset,
    Arm,
    CeScope,
    EventClass,
)
from .errors import EmptyArmError, ZeroRiskTimeError

PROB_TOL = 1e-12  # equality tolerance for probabilities on step curves


class EstimatorId(str, Enum):
    """Names of the six estimators; values double as wire identifiers."""

    IP = "ip"
    PT_ID_IGNORE_CE = "pt_id_ignore_ce"
    ONE_MINUS_KM = "one_minus_km"
    PT_ID_ACCOUNT_CE = "pt_id_account_ce"
    AJE_DEATH_ONLY = "aje_death_only"
    AJE_GOLD = "aje_gold"


#: The five estimators compared against the gold standard.
COMPARISON_ESTIMATORS = (
    EstimatorId.IP,
    EstimatorId.PT_ID_IGNORE_CE,
    EstimatorId.ONE_MINUS_KM,
    EstimatorId.PT_ID_ACCOUNT_CE,
    EstimatorId.AJE_DEATH_ONLY,
)


@dataclass(frozen=True)
class StepCurve:
    """Right-continuous step function on [0, inf) with values in [0, 1].

    ``baseline`` is the value before the first jump: 1 for survival-type
    curves (non-increasing) and 0 for cumulative-incidence curves
    (non-decreasing).
    """

    times: tuple[float, ...]
    values: tuple[float, ...]
    baseline: float

    def __post_init__(self):
        object.__setattr__(self, "times", tuple(float(t) for t in self.times))
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        if len(self.times) != len(self.values):
            raise ValueError("times and values must have equal length")
        if any(t <= 0 or not math.isfinite(t) for t in self.times):
            raise ValueError("jump times must be positive and finite")
        if any(b >= a for a, b in zip(self.times[1:], self.times[:-1])):
            raise ValueError("jump times must be strictly increasing")
        for v in self.values + (self.baseline,):
            if not -PROB_TOL <= v <= 1.0 + PROB_TOL:
                raise ValueError(f"curve value outside [0, 1]: {v!r}")
        seq = (self.baseline,) + self.values
        increasing = self.baseline < 0.5
        for a, b in zip(seq, seq[1:]):
            if increasing and b < a - PROB_TOL:
                raise ValueError("cumulative-incidence curve must be non-decreasing")
            if not increasing and b > a + PROB_TOL:
                raise ValueError("survival-type curve must be non-increasing")

    def __call__(self, t: float) -> float:
        idx = np.searchsorted(np.asarray(self.times), t, side="right")
        return self.baseline if idx == 0 else self.values[idx - 1]


@dataclass(frozen=True)
class KaplanMeierEstimate:
    probability: float  # 1 - S(tau)
    curve: StepCurve    # cumulative 1 - S(t), baseline 0


@dataclass(frozen=True)
class AalenJohansenEstimate:
    cif_ae: float
    cif_ce: float
    curve_ae: StepCurve
    curve_ce: StepCurve


@dataclass(frozen=True)
class EstimateSet:
    """All estimator values for one arm at one evaluation time.

    Probabilities are the six AE-risk estimators plus the two composite
    variants; ``id_ae`` and ``id_ce`` are the raw incidence densities in
    events per day.
    """

    tau: float
    ip: float
    pt_id_ignore_ce: float
    one_minus_km: float
    pt_id_account_ce: float
    aje_death_only: float
    aje_gold: float
    id_ae: float
    id_ce: float
    composite_ip: float
    composite_one_minus_km: float

    def __post_init__(self):
        for name in ("ip", "pt_id_ignore_ce", "one_minus_km", "pt_id_account_ce",
                     "aje_death_only", "aje_gold", "composite_ip",
                     "composite_one_minus_km"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} outside [0, 1]: {v!r}")
        if self.id_ae < 0 or self.id_ce < 0:
            raise ValueError("incidence densities must be non-negative")

    def value(self, estimator: EstimatorId) -> float:
        return getattr(self, EstimatorId(estimator).value)

    def as_dict(self) -> dict[str, float]:
        return {
            "tau_days": self.tau,
            "ip": self.ip,
            "pt_id_ignore_ce": self.pt_id_ignore_ce,
            "one_minus_km": self.one_minus_km,
            "pt_id_account_ce": self.pt_id_account_ce,
            "aje_death_only": self.aje_death_only,
            "aje_gold": self.aje_gold,
            "id_ae": self.id_ae,
            "id_ce": self.id_ce,
            "composite_ip": self.composite_ip,
            "composite_one_minus_km": self.composite_one_minus_km,
        }


# ---------------------------------------------------------------------------
# Array-level core. Everything below works on (times, events) arrays for one
# arm; the public operations and the bootstrap build on these.
# ---------------------------------------------------------------------------

def _validate_tau(tau: float) -> float:
    tau = float(tau)
    if not math.isfinite(tau) or tau <= 0.0:
        raise ValueError(f"tau must be positive and finite, got {tau!r}")
    return tau


def _truncate(times: np.ndarray, events: np.ndarray, tau: float,
              scope: CeScope) -> tuple[np.ndarray, np.ndarray]:
    """Censor beyond tau and apply the competing-event scope recoding."""
    t = np.minimum(times, tau)
    e = np.where(times > tau, int(EventClass.CENSORED), events)
    if CeScope(scope) is CeScope.DEATH_ONLY:
        e = np.where(e == int(EventClass.OTHER_CE), int(EventClass.CENSORED), e)
    return t, e


@dataclass(frozen=True)
class _RiskTable:
    """Distinct times with at-risk counts and per-class event counts."""

    u: np.ndarray      # distinct observed times, ascending
    y: np.ndarray      # number at risk just before each u
    d_ae: np.ndarray   # first AEs at u
    d_ce: np.ndarray   # first competing events at u


def _risk_table(t: np.ndarray, e: np.ndarray) -> _RiskTable:
    n = t.size
    u, inv = np.unique(t, return_inverse=True)
    m = u.size
    is_ae = e == int(EventClass.AE)
    is_ce = (e == int(EventClass.DEATH_BEFORE_AE)) | (e == int(EventClass.OTHER_CE))
    d_ae = np.bincount(inv[is_ae], minlength=m).astype(np.float64)
    d_ce = np.bincount(inv[is_ce], minlength=m).astype(np.float64)
    removed = np.bincount(inv, minlength=m)
    y = n - np.concatenate(([0], np.cumsum(removed)[:-1])).astype(np.float64)
    return _RiskTable(u=u, y=y, d_ae=d_ae, d_ce=d_ce)


def _km_survival(table: _RiskTable, d: np.ndarray) -> np.ndarray:
    """Product-limit survival at the table's times for event counts d."""
    return np.cumprod(1.0 - d / table.y)


def _clip01(x: float) -> float:
    return min(max(float(x), 0.0), 1.0)


def _km_from_arrays(t, e, which: str) -> tuple[float, StepCurve]:
    table = _risk_table(t, e)
    d = table.d_ae if which == "ae_only" else table.d_ae + table.d_ce
    s = _km_survival(table, d)
    jumps = d > 0
    curve = StepCurve(
        times=tuple(table.u[jumps]),
        values=tuple(_clip01(1.0 - v) for v in s[jumps]),
        baseline=0.0,
    )
    prob = _clip01(1.0 - s[-1]) if s.size else 0.0
    return prob, curve


def _aj_from_arrays(t, e) -> tuple[float, float, StepCurve, StepCurve]:
    table = _risk_table(t, e)
    s_all = _km_survival(table, table.d_ae + table.d_ce)
    s_left = np.concatenate(([1.0], s_all[:-1]))
    inc_ae = np.cumsum(s_left * table.d_ae / table.y)
    inc_ce = np.cumsum(s_left * table.d_ce / table.y)
    jumps_ae = table.d_ae > 0
    jumps_ce = table.d_ce > 0
    curve_ae = StepCurve(
        times=tuple(table.u[jumps_ae]),
        values=tuple(_clip01(v) for v in inc_ae[jumps_ae]),
        baseline=0.0,
    )
    curve_ce = StepCurve(
        times=tuple(table.u[jumps_ce]),
        values=tuple(_clip01(v) for v in inc_ce[jumps_ce]),
        baseline=0.0,
    )
    cif_ae = _clip01(inc_ae[-1]) if inc_ae.size else 0.0
    cif_ce = _clip01(inc_ce[-1]) if inc_ce.size else 0.0
    return cif_ae, cif_ce, curve_ae, curve_ce


def _ip_from_arrays(t, e, composite: bool) -> float:
    is_hit = e == int(EventClass.AE)
    if composite:
        is_hit |= (e == int(EventClass.DEATH_BEFORE_AE)) | (e == int(EventClass.OTHER_CE))
    return float(np.count_nonzero(is_hit)) / t.size


def _densities_from_arrays(times, t, e) -> tuple[float, float]:
    """AE and CE incidence densities per day; `times` are pre-truncation."""
    at_risk = float(np.sum(t))
    if at_risk <= 0.0:
        raise ZeroRiskTimeError("total restricted at-risk time is zero")
    n_ae = float(np.count_nonzero(e == int(EventClass.AE)))
    n_ce = float(np.count_nonzero(
        (e == int(EventClass.DEATH_BEFORE_AE)) | (e == int(EventClass.OTHER_CE))
    ))
    return n_ae / at_risk, n_ce / at_risk


def _pt_ignore(id_ae: float, tau: float) -> float:
    return _clip01(1.0 - math.exp(-id_ae * tau))


def _pt_account(id_ae: float, id_ce: float, tau: float) -> float:
    total = id_ae + id_ce
    if total <= 0.0:
        return 0.0  # continuity limit of the transform at zero rates
    return _clip01(id_ae / total * (1.0 - math.exp(-tau * total)))


def _estimates_from_arrays(times: np.ndarray, events: np.ndarray, tau: float,
                           scope: CeScope) -> EstimateSet:
    t, e = _truncate(times, events, tau, scope)
    ip = _ip_from_arrays(t, e, composite=False)
    composite_ip = _ip_from_arrays(t, e, composite=True)
    id_ae, id_ce = _densities_from_arrays(times, t, e)
    km_prob, _ = _km_from_arrays(t, e, "ae_only")
    km_comp_prob, _ = _km_from_arrays(t, e, "composite")
    aj_gold, _, _, _ = _aj_from_arrays(t, e)
    t_d, e_d = _truncate(times, events, tau, CeScope.DEATH_ONLY)
    aj_death, _, _, _ = _aj_from_arrays(t_d, e_d)
    return EstimateSet(
        tau=tau,
        ip=ip,
        pt_id_ignore_ce=_pt_ignore(id_ae, tau),
        one_minus_km=km_prob,
        pt_id_account_ce=_pt_account(id_ae, id_ce, tau),
        aje_death_only=aj_death,
        aje_gold=aj_gold,
        id_ae=id_ae,
        id_ce=id_ce,
        composite_ip=composite_ip,
        composite_one_minus_km=km_comp_prob,
    )


def _estimator_value(estimator: EstimatorId, times, events, tau, scope) -> float:
    """Single estimator on arrays; cheaper than a full EstimateSet."""
    estimator = EstimatorId(estimator)
    t, e = _truncate(times, events, tau, scope)
    if estimator is EstimatorId.IP:
        return _ip_from_arrays(t, e, composite=False)
    if estimator is EstimatorId.ONE_MINUS_KM:
        return _km_from_arrays(t, e, "ae_only")[0]
    if estimator is EstimatorId.PT_ID_IGNORE_CE:
        id_ae, _ = _densities_from_arrays(times, t, e)
        return _pt_ignore(id_ae, tau)
    if estimator is EstimatorId.PT_ID_ACCOUNT_CE:
        id_ae, id_ce = _densities_from_arrays(times, t, e)
        return _pt_account(id_ae, id_ce, tau)
    if estimator is EstimatorId.AJE_GOLD:
        return _aj_from_arrays(t, e)[0]
    t_d, e_d = _truncate(times, events, tau, CeScope.DEATH_ONLY)
    return _aj_from_arrays(t_d, e_d)[0]


def _arm_arrays_checked(dataset: AnalysisDataset, arm: Arm):
    times, events = dataset.arm_arrays(arm)
    if times.size == 0:
        raise EmptyArmError(
            f"arm {Arm(arm).value} is empty in ({dataset.trial_id!r}, {dataset.ae_type!r})"
        )
    return times, events


# ---------------------------------------------------------------------------
# Public operations
# ---------------------------------------------------------------------------

def incidence_proportion(dataset: AnalysisDataset, arm: Arm, tau: float) -> float:
    """Patients with a first AE on [0, tau] divided by arm size."""
    tau = _validate_tau(tau)
    times, events = _arm_arrays_checked(dataset, arm)
    t, e = _truncate(times, events, tau, CeScope.ALL)
    return _ip_from_arrays(t, e, composite=False)


def composite_incidence_proportion(dataset: AnalysisDataset, arm: Arm, tau: float,
                                   ce_scope: CeScope = CeScope.ALL) -> float:
    """Incidence proportion of the composite endpoint (AE or CE)."""
    tau = _validate_tau(tau)
    times, events = _arm_arrays_checked(dataset, arm)
    t, e = _truncate(times, events, tau, ce_scope)
    return _ip_from_arrays(t, e, composite=True)


def incidence_density(dataset: AnalysisDataset, arm: Arm, tau: float,
                      target: str = "ae", ce_scope: CeScope = CeScope.ALL) -> float:
    """First events of the target kind per day of restricted at-risk time.

    At-risk time is sum over patients of min(time, tau). ``target`` is
    "ae" or "ce"; the CE count respects the active scope.
    """
    if target not in ("ae", "ce"):
        raise ValueError(f"target must be 'ae' or 'ce', got {target!r}")
    tau = _validate_tau(tau)
    times, events = _arm_arrays_checked(dataset, arm)
    t, e = _truncate(times, events, tau, ce_scope)
    id_ae, id_ce = _densities_from_arrays(times, t, e)
    return id_ae if target == "ae" else id_ce


def prob_transform_id_ignoring_ce(dataset: AnalysisDataset, arm: Arm, tau: float) -> float:
    """1 - exp(-ID * tau) with the AE incidence density."""
    tau = _validate_tau(tau)
    id_ae = incidence_density(dataset, arm, tau, "ae")
    return _pt_ignore(id_ae, tau)


def prob_transform_id_accounting_ce(dataset: AnalysisDataset, arm: Arm, tau: float,
                                    ce_scope: CeScope = CeScope.ALL) -> float:
    """Constant-hazards AE probability with a competing-event correction.

    ID_ae / (ID_ae + ID_ce) * (1 - exp(-tau * (ID_ae + ID_ce))); returns 0
    when both densities are zero, the continuity limit.
    """
    tau = _validate_tau(tau)
    times, events = _arm_arrays_checked(dataset, arm)
    t, e = _truncate(times, events, tau, ce_scope)
    id_ae, id_ce = _densities_from_arrays(times, t, e)
    return _pt_account(id_ae, id_ce, tau)


def one_minus_kaplan_meier(dataset: AnalysisDataset, arm: Arm, tau: float,
                           event_def: str = "ae_only",
                           ce_scope: CeScope = CeScope.ALL) -> KaplanMeierEstimate:
    """Product-limit estimate of 1 - S(tau) plus its full step curve.

    ``event_def`` "ae_only" codes AEs as events and censors everything
    else; "composite" codes AE-or-CE as a single event.
    """
    if event_def not in ("ae_only", "composite"):
        raise ValueError(f"event_def must be 'ae_only' or 'composite', got {event_def!r}")
    tau = _validate_tau(tau)
    times, events = _arm_arrays_checked(dataset, arm)
    t, e = _truncate(times, events, tau, ce_scope)
    prob, curve = _km_from_arrays(t, e, event_def)
    return KaplanMeierEstimate(probability=prob, curve=curve)


def aalen_johansen(dataset: AnalysisDataset, arm: Arm, tau: float,
                   ce_scope: CeScope = CeScope.ALL) -> AalenJohansenEstimate:
    """Cumulative incidence of AE and of CE by tau, with full curves.

    cif_ae(tau) sums S(t-) * d_ae(t) / Y(t) over AE times t <= tau, with S
    the all-first-event product-limit survival under the given CE scope;
    under DEATH_ONLY, non-death competing events are treated as censoring.
    """
    tau = _validate_tau(tau)
    times, events = _arm_arrays_checked(dataset, arm)
    t, e = _truncate(times, events, tau, ce_scope)
    cif_ae, cif_ce, curve_ae, curve_ce = _aj_from_arrays(t, e)
    return AalenJohansenEstimate(cif_ae, cif_ce, curve_ae, curve_ce)


def estimate_all(dataset: AnalysisDataset, arm: Arm, tau: float,
                 ce_scope: CeScope = CeScope.ALL) -> EstimateSet:
    """Every estimator in one pass over the arm's data.

    Field-by-field equal to the individual operations called with the same
    arguments. ``aje_gold`` uses the active scope; ``aje_death_only``
    always treats only death as competing.
    """
    tau = _validate_tau(tau)
    times, events = _arm_arrays_checked(dataset, arm)
    return _estimates_from_arrays(times, events, tau, ce_scope)
