"""Patient-level data model, CSV ingestion, evaluation times, event frequencies.

One observation per patient: the time of the first thing that happened to
them (an adverse event of the type under study, a competing event, or end
of observation) and what that thing was. Datasets are immutable; every
operation here is a pure function, so datasets can be processed in
parallel without shared state.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from enum import Enum, IntEnum

import numpy as np

from .errors import CsvFormatError, EmptyArmError

DAYS_PER_YEAR = 365.25

CSV_HEADER = ("trial_id", "ae_type", "patient_id", "arm", "time_days", "event_code")


class EventClass(IntEnum):
    """First-event classification. Integer values match the CSV wire codes."""

    CENSORED = 0
    AE = 1
    DEATH_BEFORE_AE = 2
    OTHER_CE = 3


#: Competing-event classes under the broad ("all") definition.
ALL_CE_CLASSES = frozenset({EventClass.DEATH_BEFORE_AE, EventClass.OTHER_CE})


class Arm(str, Enum):
    E = "E"
    C = "C"


class CeScope(str, Enum):
    """Which recorded events count as competing.

    ALL treats both death before AE and disease- or safety-related end of
    follow-up as competing; DEATH_ONLY reclassifies the latter as censoring.
    """

    ALL = "all"
    DEATH_ONLY = "death_only"


class QuantileSpec(str, Enum):
    """Evaluation-time rule: maximum follow-up, or min-over-arms quantiles."""

    MAX_FOLLOW_UP = "max"
    Q100 = "q100"
    Q90 = "q90"
    Q60 = "q60"
    Q30 = "q30"

    @property
    def fraction(self) -> float | None:
        return _QUANTILE_FRACTIONS[self]


_QUANTILE_FRACTIONS = {
    QuantileSpec.MAX_FOLLOW_UP: None,
    QuantileSpec.Q100: 1.0,
    QuantileSpec.Q90: 0.9,
    QuantileSpec.Q60: 0.6,
    QuantileSpec.Q30: 0.3,
}


@dataclass(frozen=True)
class PatientRecord:
    """One subject's time-to-first-event outcome."""

    patient_id: str
    arm: Arm
    time: float  # days, > 0
    event: EventClass

    def __post_init__(self):
        if not self.patient_id:
            raise ValueError("patient_id must be non-empty")
        if not isinstance(self.arm, Arm):
            object.__setattr__(self, "arm", Arm(self.arm))
        if not isinstance(self.event, EventClass):
            object.__setattr__(self, "event", EventClass(self.event))
        t = float(self.time)
        if not math.isfinite(t) or t <= 0.0:
            raise ValueError(f"time must be positive and finite, got {self.time!r}")
        object.__setattr__(self, "time", t)


@dataclass(frozen=True)
class AnalysisDataset:
    """All records for one (trial, AE-type) pair; the unit of estimation."""

    trial_id: str
    ae_type: str
    records: tuple[PatientRecord, ...]

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        seen: set[str] = set()
        for r in self.records:
            if r.patient_id in seen:
                raise ValueError(
                    f"duplicate patient_id {r.patient_id!r} in "
                    f"({self.trial_id!r}, {self.ae_type!r})"
                )
            seen.add(r.patient_id)

    @property
    def n_e(self) -> int:
        return sum(1 for r in self.records if r.arm is Arm.E)

    @property
    def n_c(self) -> int:
        return sum(1 for r in self.records if r.arm is Arm.C)

    def arm_records(self, arm: Arm) -> tuple[PatientRecord, ...]:
        arm = Arm(arm)
        return tuple(r for r in self.records if r.arm is arm)

    def arm_arrays(self, arm: Arm) -> tuple[np.ndarray, np.ndarray]:
        """Times (float64, days) and event codes (int64) for one arm."""
        recs = self.arm_records(arm)
        times = np.fromiter((r.time for r in recs), dtype=np.float64, count=len(recs))
        events = np.fromiter((int(r.event) for r in recs), dtype=np.int64, count=len(recs))
        return times, events

    def with_ce_scope(self, scope: CeScope) -> "AnalysisDataset":
        """Recode events for the given competing-event scope.

        Under DEATH_ONLY, OTHER_CE records become CENSORED; sample size and
        all times are unchanged. Under ALL this is the identity.
        """
        scope = CeScope(scope)
        if scope is CeScope.ALL:
            return self
        records = tuple(
            PatientRecord(r.patient_id, r.arm, r.time, EventClass.CENSORED)
            if r.event is EventClass.OTHER_CE
            else r
            for r in self.records
        )
        return AnalysisDataset(self.trial_id, self.ae_type, records)


@dataclass(frozen=True)
class EvaluationTime:
    """A time horizon tau (days) plus the rule that produced it."""

    tau: float
    quantile_spec: QuantileSpec

    def __post_init__(self):
        if not math.isfinite(self.tau) or self.tau <= 0.0:
            raise ValueError(f"tau must be positive and finite, got {self.tau!r}")

    @property
    def years(self) -> float:
        return self.tau / DAYS_PER_YEAR


@dataclass(frozen=True)
class EventFrequencies:
    """Observed-event fractions in one arm by a time horizon; sum to one."""

    frac_ae: float
    frac_death: float
    frac_other_ce: float
    frac_censored: float

    def __post_init__(self):
        total = self.frac_ae + self.frac_death + self.frac_other_ce + self.frac_censored
        for name, value in self.as_dict().items():
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} outside [0, 1]: {value!r}")
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"fractions sum to {total!r}, not 1")

    def as_dict(self) -> dict[str, float]:
        return {
            "frac_ae": self.frac_ae,
            "frac_death": self.frac_death,
            "frac_other_ce": self.frac_other_ce,
            "frac_censored": self.frac_censored,
        }


def _parse_row(row: list[str], line_no: int) -> tuple[str, str, PatientRecord]:
    if len(row) != len(CSV_HEADER):
        raise CsvFormatError(
            f"row {line_no}: expected {len(CSV_HEADER)} columns, got {len(row)}"
        )
    trial_id, ae_type, patient_id, arm, time_s, code_s = (c.strip() for c in row)
    if not trial_id or not ae_type or not patient_id:
        raise CsvFormatError(f"row {line_no}: empty trial_id, ae_type or patient_id")
    if arm not in (Arm.E.value, Arm.C.value):
        raise CsvFormatError(f"row {line_no}: arm must be E or C, got {arm!r}")
    try:
        time = float(time_s)
    except ValueError:
        raise CsvFormatError(f"row {line_no}: time_days is not a number: {time_s!r}") from None
    if not math.isfinite(time) or time <= 0.0:
        raise CsvFormatError(f"row {line_no}: time_days must be positive, got {time_s!r}")
    try:
        code = int(code_s)
    except ValueError:
        raise CsvFormatError(f"row {line_no}: event_code must be an integer, got {code_s!r}") from None
    try:
        event = EventClass(code)
    except ValueError:
        raise CsvFormatError(f"row {line_no}: unknown event_code {code}") from None
    return trial_id, ae_type, PatientRecord(patient_id, Arm(arm), time, event)


def parse_patient_csv(path) -> list[AnalysisDataset]:
    """Read a patient CSV into one dataset per distinct (trial_id, ae_type).

    The file must be UTF-8 with the exact header
    ``trial_id,ae_type,patient_id,arm,time_days,event_code``. Event codes:
    1 = AE, 2 = death before AE, 3 = other competing event, 0 = censored.
    Raises :class:`CsvFormatError` naming the offending row on any
    malformed row, non-positive time, unknown code, or duplicate
    patient_id within a dataset.
    """
    groups: dict[tuple[str, str], list[PatientRecord]] = {}
    seen_ids: dict[tuple[str, str], set[str]] = {}
    with open(path, encoding="utf-8-sig", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CsvFormatError("empty file: missing header row") from None
        if tuple(c.strip() for c in header) != CSV_HEADER:
            raise CsvFormatError(
                f"bad header: expected {','.join(CSV_HEADER)!r}, got {','.join(header)!r}"
            )
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            trial_id, ae_type, record = _parse_row(row, line_no)
            key = (trial_id, ae_type)
            ids = seen_ids.setdefault(key, set())
            if record.patient_id in ids:
                raise CsvFormatError(
                    f"row {line_no}: duplicate patient_id {record.patient_id!r} "
                    f"within ({trial_id!r}, {ae_type!r})"
                )
            ids.add(record.patient_id)
            groups.setdefault(key, []).append(record)
    return [
        AnalysisDataset(trial_id, ae_type, tuple(records))
        for (trial_id, ae_type), records in sorted(groups.items())
    ]


def write_patient_csv(datasets, path) -> None:
    """Emit datasets in the same CSV schema `parse_patient_csv` consumes."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for ds in datasets:
            for r in ds.records:
                writer.writerow(
                    [ds.trial_id, ds.ae_type, r.patient_id, r.arm.value,
                     repr(r.time), int(r.event)]
                )


def _empirical_quantile(times: np.ndarray, q: float) -> float:
    """Smallest observed time t with F-hat(t) >= q (left-continuous inverse)."""
    srt = np.sort(times)
    k = math.ceil(q * len(srt))
    return float(srt[max(k, 1) - 1])


def evaluation_time(dataset: AnalysisDataset, spec: QuantileSpec) -> EvaluationTime:
    """Evaluation horizon per the named rule.

    MAX_FOLLOW_UP is the overall maximum observed time. A quantile spec
    takes the per-arm empirical quantile of all observed times (events and
    censorings alike) and returns the minimum over the two arms; both arms
    must then be non-empty.
    """
    spec = QuantileSpec(spec)
    if not dataset.records:
        raise EmptyArmError(f"dataset ({dataset.trial_id!r}, {dataset.ae_type!r}) is empty")
    if spec is QuantileSpec.MAX_FOLLOW_UP:
        tau = max(r.time for r in dataset.records)
        return EvaluationTime(tau, spec)
    q = spec.fraction
    per_arm = []
    for arm in (Arm.E, Arm.C):
        times, _ = dataset.arm_arrays(arm)
        if times.size == 0:
            raise EmptyArmError(
                f"arm {arm.value} is empty in ({dataset.trial_id!r}, "
                f"{dataset.ae_type!r}); quantile evaluation times need both arms"
            )
        per_arm.append(_empirical_quantile(times, q))
    return EvaluationTime(min(per_arm), spec)


def event_frequencies(dataset: AnalysisDataset, arm: Arm, tau: float) -> EventFrequencies:
    """Fractions of AE / death / other-CE / censored first events by tau.

    A record with time beyond tau counts as censored at tau whatever its
    recorded class.
    """
    recs = dataset.arm_records(arm)
    if not recs:
        raise EmptyArmError(f"arm {Arm(arm).value} is empty")
    n = len(recs)
    counts = {cls: 0 for cls in EventClass}
    for r in recs:
        cls = EventClass.CENSORED if r.time > tau else r.event
        counts[cls] += 1
    return EventFrequencies(
        frac_ae=counts[EventClass.AE] / n,
        frac_death=counts[EventClass.DEATH_BEFORE_AE] / n,
        frac_other_ce=counts[EventClass.OTHER_CE] / n,
        frac_censored=counts[EventClass.CENSORED] / n,
    )
