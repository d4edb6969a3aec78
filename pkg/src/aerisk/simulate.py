"""Synthetic competing-risks trial generator with closed-form truth.

Patients experience a first event driven by two cause-specific hazards
(adverse event, competing event) plus an independent censoring time. With
constant hazards a and b the true cumulative AE probability is
``a/(a+b) * (1 - exp(-(a+b)t))``, which makes simulated trials usable as
oracles for the estimators. Hazards may also be Weibull; then event times
come from inverting the all-cause cumulative hazard and the event type is
assigned multinomially at the drawn time, so there is no discretization
bias in either case.

All randomness flows through numpy substreams derived from
(seed, trial_index), so generation is reproducible and order-independent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .dataset import (
    DAYS_PER_YEAR,
    AnalysisDataset,
    Arm,
    EventClass,
    PatientRecord,
)
from .errors import ConfigError

_MIN_TIME_DAYS = 1e-9  # keeps records strictly positive after unit conversion


@dataclass(frozen=True)
class Weibull:
    """Weibull hazard with cumulative hazard (t / scale) ** shape, t in years."""

    shape: float
    scale: float

    def __post_init__(self):
        if not (self.shape > 0 and math.isfinite(self.shape)):
            raise ConfigError(f"Weibull shape must be positive, got {self.shape!r}")
        if not (self.scale > 0 and math.isfinite(self.scale)):
            raise ConfigError(f"Weibull scale must be positive, got {self.scale!r}")

    def cumulative(self, t):
        return (np.asarray(t) / self.scale) ** self.shape

    def rate(self, t):
        t = np.asarray(t)
        return self.shape / self.scale * (t / self.scale) ** (self.shape - 1.0)


Hazard = float | Weibull


def _as_hazard(value, name: str, allow_zero: bool) -> Hazard:
    if isinstance(value, Weibull):
        return value
    try:
        rate = float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{name} must be a rate or a Weibull, got {value!r}") from None
    if not math.isfinite(rate) or rate < 0 or (rate == 0 and not allow_zero):
        raise ConfigError(f"invalid {name} rate: {value!r}")
    return rate


def _cumulative(h: Hazard, t):
    return h.cumulative(t) if isinstance(h, Weibull) else np.asarray(t) * h


def _rate(h: Hazard, t):
    if isinstance(h, Weibull):
        return h.rate(t)
    return np.full_like(np.asarray(t, dtype=float), h)


@dataclass(frozen=True)
class CensoringSpec:
    """Censoring-time distribution: none, exponential, uniform or administrative."""

    kind: str
    rate: float | None = None   # exponential, per year
    low: float | None = None    # uniform bounds, years
    high: float | None = None
    at: float | None = None     # administrative cutoff, years

    def __post_init__(self):
        if self.kind == "none":
            pass
        elif self.kind == "exponential":
            if self.rate is None or not (self.rate > 0 and math.isfinite(self.rate)):
                raise ConfigError(f"exponential censoring needs a positive rate, got {self.rate!r}")
        elif self.kind == "uniform":
            ok = (self.low is not None and self.high is not None
                  and 0 <= self.low < self.high and math.isfinite(self.high))
            if not ok:
                raise ConfigError(f"uniform censoring needs 0 <= low < high, got {self.low!r}, {self.high!r}")
        elif self.kind == "admin":
            if self.at is None or not (self.at > 0 and math.isfinite(self.at)):
                raise ConfigError(f"administrative censoring needs a positive time, got {self.at!r}")
        else:
            raise ConfigError(f"unknown censoring kind {self.kind!r}")

    @classmethod
    def none(cls) -> "CensoringSpec":
        return cls("none")

    @classmethod
    def exponential(cls, rate: float) -> "CensoringSpec":
        return cls("exponential", rate=rate)

    @classmethod
    def uniform(cls, low: float, high: float) -> "CensoringSpec":
        return cls("uniform", low=low, high=high)

    @classmethod
    def admin(cls, at: float) -> "CensoringSpec":
        return cls("admin", at=at)

    def draw(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.kind == "none":
            return np.full(n, np.inf)
        if self.kind == "exponential":
            return rng.exponential(1.0 / self.rate, size=n)
        if self.kind == "uniform":
            return rng.uniform(self.low, self.high, size=n)
        return np.full(n, float(self.at))


@dataclass(frozen=True)
class SimulationConfig:
    """One synthetic trial family: hazards per year, censoring, sizes, seed."""

    n_per_arm: int
    hazard_ae: Hazard
    hazard_ce: Hazard
    censoring: CensoringSpec
    seed: int
    n_trials: int = 1
    death_fraction: float = 0.5  # share of competing events recorded as death
    ae_type: str = "AE"
    trial_prefix: str = "SIM"

    def __post_init__(self):
        if int(self.n_per_arm) < 1:
            raise ConfigError(f"n_per_arm must be >= 1, got {self.n_per_arm!r}")
        if int(self.n_trials) < 1:
            raise ConfigError(f"n_trials must be >= 1, got {self.n_trials!r}")
        object.__setattr__(self, "hazard_ae", _as_hazard(self.hazard_ae, "hazard_ae", allow_zero=False))
        object.__setattr__(self, "hazard_ce", _as_hazard(self.hazard_ce, "hazard_ce", allow_zero=True))
        if not 0.0 <= self.death_fraction <= 1.0:
            raise ConfigError(f"death_fraction must be in [0, 1], got {self.death_fraction!r}")
        if not isinstance(self.censoring, CensoringSpec):
            raise ConfigError("censoring must be a CensoringSpec")

    @classmethod
    def from_dict(cls, d: dict) -> "SimulationConfig":
        """Build a config from a plain JSON-style mapping."""
        if not isinstance(d, dict):
            raise ConfigError("simulation config must be a JSON object")
        known = {"n_per_arm", "hazard_ae", "hazard_ce", "censoring", "seed",
                 "n_trials", "death_fraction", "ae_type", "trial_prefix"}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        for key in ("n_per_arm", "hazard_ae", "hazard_ce", "censoring", "seed"):
            if key not in d:
                raise ConfigError(f"missing config key {key!r}")

        def hazard(value):
            if isinstance(value, dict):
                extra = set(value) - {"shape", "scale"}
                if extra or set(value) != {"shape", "scale"}:
                    raise ConfigError(f"Weibull hazard needs exactly shape and scale, got {value!r}")
                return Weibull(float(value["shape"]), float(value["scale"]))
            return value

        cens = d["censoring"]
        if not isinstance(cens, dict) or "kind" not in cens:
            raise ConfigError(f"censoring must be an object with a 'kind', got {cens!r}")
        spec = CensoringSpec(
            kind=cens.get("kind"),
            rate=cens.get("rate"),
            low=cens.get("low"),
            high=cens.get("high"),
            at=cens.get("at"),
        )
        extra = set(cens) - {"kind", "rate", "low", "high", "at"}
        if extra:
            raise ConfigError(f"unknown censoring keys: {sorted(extra)}")
        try:
            seed = int(d["seed"])
        except (TypeError, ValueError):
            raise ConfigError(f"seed must be an integer, got {d['seed']!r}") from None
        return cls(
            n_per_arm=int(d["n_per_arm"]),
            hazard_ae=hazard(d["hazard_ae"]),
            hazard_ce=hazard(d["hazard_ce"]),
            censoring=spec,
            seed=seed,
            n_trials=int(d.get("n_trials", 1)),
            death_fraction=float(d.get("death_fraction", 0.5)),
            ae_type=str(d.get("ae_type", "AE")),
            trial_prefix=str(d.get("trial_prefix", "SIM")),
        )


def truth_cif(a: float, b: float, t: float) -> float:
    """True cumulative AE probability under constant yearly hazards a, b."""
    if a < 0 or b < 0 or t < 0:
        raise ValueError("rates and time must be non-negative")
    if a == 0.0:
        return 0.0
    total = a + b
    return a / total * (1.0 - math.exp(-total * t))


@dataclass(frozen=True)
class TruthRecord:
    """Closed-form truth for a constant-hazard configuration."""

    hazard_ae: float
    hazard_ce: float

    def cif_ae(self, t: float) -> float:
        return truth_cif(self.hazard_ae, self.hazard_ce, t)

    def cif_ce(self, t: float) -> float:
        return truth_cif(self.hazard_ce, self.hazard_ae, t)


def _draw_event_times(rng: np.random.Generator, config: SimulationConfig,
                      n: int) -> tuple[np.ndarray, np.ndarray]:
    """Latent first-event times (years) and a flag for 'the event is an AE'."""
    ha, hc = config.hazard_ae, config.hazard_ce
    if isinstance(ha, float) and isinstance(hc, float):
        total = ha + hc
        times = rng.exponential(1.0 / total, size=n)
        is_ae = rng.random(n) < ha / total
        return times, is_ae
    targets = rng.exponential(1.0, size=n)

    def invert(target: float) -> float:
        hi = 1.0
        while _cumulative(ha, hi) + _cumulative(hc, hi) < target:
            hi *= 2.0
            if hi > 1e12:
                return hi
        return brentq(
            lambda t: _cumulative(ha, t) + _cumulative(hc, t) - target,
            0.0, hi, xtol=1e-12, rtol=1e-14,
        )

    times = np.array([invert(x) for x in targets])
    r_ae = _rate(ha, times)
    r_ce = _rate(hc, times)
    is_ae = rng.random(n) * (r_ae + r_ce) < r_ae
    return times, is_ae


def simulate_trial(config: SimulationConfig, trial_index: int = 0,
                   trial_id: str | None = None) -> AnalysisDataset:
    """Generate one trial (both arms) as an AnalysisDataset.

    The RNG stream is derived from (config.seed, trial_index), so repeated
    calls are bit-identical and trials may be generated in any order or in
    parallel without changing the output.
    """
    if trial_id is None:
        trial_id = f"{config.trial_prefix}-{trial_index + 1:03d}"
    rng = np.random.default_rng(
        np.random.SeedSequence(entropy=config.seed, spawn_key=(trial_index,))
    )
    records: list[PatientRecord] = []
    for arm in (Arm.E, Arm.C):
        n = int(config.n_per_arm)
        event_times, is_ae = _draw_event_times(rng, config, n)
        is_death = rng.random(n) < config.death_fraction
        censor_times = config.censoring.draw(rng, n)
        observed = np.minimum(event_times, censor_times)
        event_seen = event_times <= censor_times
        for i in range(n):
            if not event_seen[i]:
                cls = EventClass.CENSORED
            elif is_ae[i]:
                cls = EventClass.AE
            else:
                cls = EventClass.DEATH_BEFORE_AE if is_death[i] else EventClass.OTHER_CE
            days = max(observed[i] * DAYS_PER_YEAR, _MIN_TIME_DAYS)
            records.append(PatientRecord(f"P-{arm.value}-{i + 1:05d}", arm, days, cls))
    return AnalysisDataset(trial_id, config.ae_type, tuple(records))


def simulate_trials(config: SimulationConfig) -> list[AnalysisDataset]:
    """All config.n_trials trials, each from its own (seed, index) substream."""
    return [simulate_trial(config, k) for k in range(int(config.n_trials))]
