"""Regulatory frequency categories for adverse-event probabilities.

The standard five bins used in product information: very rare (< 0.01%),
rare (< 0.1%), uncommon (< 1%), common (< 10%), very common (>= 10%).
Each bin is closed at its lower bound. Cross-tabulating the categories of
two estimators over a batch of AE types shows how often the choice of
estimator moves an AE to a different frequency label.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass
from enum import IntEnum

import numpy as np


class FrequencyCategory(IntEnum):
    """Ordered frequency labels; comparisons follow rarity order."""

    VERY_RARE = 0
    RARE = 1
    UNCOMMON = 2
    COMMON = 3
    VERY_COMMON = 4

    @property
    def label(self) -> str:
        return _LABELS[self]


_LABELS = {
    FrequencyCategory.VERY_RARE: "very rare",
    FrequencyCategory.RARE: "rare",
    FrequencyCategory.UNCOMMON: "uncommon",
    FrequencyCategory.COMMON: "common",
    FrequencyCategory.VERY_COMMON: "very common",
}

_THRESHOLDS = (0.0001, 0.001, 0.01, 0.1)


def categorize(p: float) -> FrequencyCategory:
    """Frequency category of a probability; bins are lower-inclusive."""
    if not (0.0 <= p <= 1.0) or math.isnan(p):
        raise ValueError(f"probability outside [0, 1]: {p!r}")
    idx = 0
    for threshold in _THRESHOLDS:
        if p >= threshold:
            idx += 1
    return FrequencyCategory(idx)


@dataclass(frozen=True)
class CategoryCrosstab:
    """5x5 count matrix: rows = comparison estimator, columns = reference."""

    counts: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        counts = tuple(tuple(int(c) for c in row) for row in self.counts)
        if len(counts) != 5 or any(len(row) != 5 for row in counts):
            raise ValueError("crosstab must be 5x5")
        if any(c < 0 for row in counts for c in row):
            raise ValueError("crosstab entries must be non-negative")
        object.__setattr__(self, "counts", counts)

    @property
    def total(self) -> int:
        return sum(sum(row) for row in self.counts)

    @property
    def switches(self) -> int:
        """Off-diagonal total: AE types whose category differs between estimators."""
        return self.total - sum(self.counts[i][i] for i in range(5))

    def as_array(self) -> np.ndarray:
        return np.array(self.counts, dtype=np.int64)


def crosstab(pairs) -> CategoryCrosstab:
    """Count (comparison category, reference category) pairs into a 5x5 table."""
    m = np.zeros((5, 5), dtype=np.int64)
    for comparison, reference in pairs:
        m[int(FrequencyCategory(comparison)), int(FrequencyCategory(reference))] += 1
    return CategoryCrosstab(tuple(tuple(int(c) for c in row) for row in m))


def crosstab_to_csv(table: CategoryCrosstab, comparison_name: str = "comparison",
                    reference_name: str = "reference") -> str:
    """CSV rendering; first column holds the comparison estimator's category."""
    out = io.StringIO()
    labels = [c.label for c in FrequencyCategory]
    out.write(f"{comparison_name} vs {reference_name}," + ",".join(labels) + "\n")
    for i, row in enumerate(table.counts):
        out.write(labels[i] + "," + ",".join(str(c) for c in row) + "\n")
    return out.getvalue()


def crosstab_to_text(table: CategoryCrosstab, comparison_name: str = "comparison",
                     reference_name: str = "reference") -> str:
    """Aligned text table with the same orientation as the CSV."""
    labels = [c.label for c in FrequencyCategory]
    width = max(len(s) for s in labels) + 2
    head = f"rows: {comparison_name}; columns: {reference_name}"
    lines = [head, "".rjust(width) + "".join(s.rjust(width) for s in labels)]
    for i, row in enumerate(table.counts):
        lines.append(labels[i].rjust(width) + "".join(str(c).rjust(width) for c in row))
    lines.append(f"off-diagonal switches: {table.switches} of {table.total}")
    return "\n".join(lines) + "\n"
