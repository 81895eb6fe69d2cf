"""Contact matrices: setting sums, reciprocity correction and age-bin aggregation.

Matrices follow the usual survey orientation: ``values[i, j]`` is the mean
number of daily contacts a person in age group ``i`` has with people in
age group ``j``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .errors import DegenerateInputError, InputError

SETTINGS = ("home", "school", "work", "other")


@dataclass(frozen=True)
class AgeStructure:
    labels: tuple[str, ...]
    lower_bounds: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(self.labels))
        object.__setattr__(self, "lower_bounds", tuple(float(b) for b in self.lower_bounds))
        if not self.labels:
            raise InputError("age structure needs at least one bin")
        if len(self.labels) != len(self.lower_bounds):
            raise InputError("labels and lower_bounds differ in length")
        if not all(a < b for a, b in zip(self.lower_bounds, self.lower_bounds[1:])):
            raise InputError("lower_bounds must be strictly increasing")

    def __len__(self) -> int:
        return len(self.labels)


FIVE_YEAR = AgeStructure(
    labels=tuple(f"{a}-{a + 4}" for a in range(0, 75, 5)) + ("75+",),
    lower_bounds=tuple(range(0, 80, 5)),
)
CLUSTER_BINS = AgeStructure(
    labels=("0-4", "5-14", "15-19", "20-24", "25-64", "65+"),
    lower_bounds=(0, 5, 15, 20, 25, 65),
)


@dataclass(frozen=True)
class PopulationVector:
    country: str
    ages: AgeStructure
    counts: np.ndarray

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=float)
        if counts.shape != (len(self.ages),):
            raise InputError(f"{self.country}: expected {len(self.ages)} population bins, got {counts.shape}")
        if not np.all(np.isfinite(counts)) or np.any(counts < 0):
            raise InputError(f"{self.country}: population counts must be finite and nonnegative")
        if counts.sum() <= 0:
            raise DegenerateInputError(f"{self.country}: total population is zero")
        object.__setattr__(self, "counts", counts)

    @property
    def total(self) -> float:
        return float(self.counts.sum())


@dataclass(frozen=True)
class ContactMatrix:
    country: str
    setting: str
    ages: AgeStructure
    values: np.ndarray
    standardized: bool = field(default=False)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        n = len(self.ages)
        if values.shape != (n, n):
            raise InputError(f"{self.country}/{self.setting}: expected {n}x{n} matrix, got {values.shape}")
        if not np.all(np.isfinite(values)):
            raise InputError(f"{self.country}/{self.setting}: matrix has non-finite entries")
        object.__setattr__(self, "values", values)


@dataclass(frozen=True)
class AgePartition:
    """Contiguous grouping of source bins; ``groups[i]`` lists the source indices of target bin ``i``."""

    groups: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        groups = tuple(tuple(int(i) for i in g) for g in self.groups)
        object.__setattr__(self, "groups", groups)
        flat = [i for g in groups for i in g]
        if any(len(g) == 0 for g in groups):
            raise InputError("partition contains an empty group")
        if flat != list(range(len(flat))):
            raise InputError("groups must be contiguous, ordered and cover every source bin exactly once")

    @property
    def source_dim(self) -> int:
        return self.groups[-1][-1] + 1

    def __len__(self) -> int:
        return len(self.groups)

    @classmethod
    def identity(cls, n: int) -> "AgePartition":
        return cls(tuple((i,) for i in range(n)))

    @classmethod
    def between(cls, source: AgeStructure, target: AgeStructure) -> "AgePartition":
        """Partition merging ``source`` bins into ``target`` bins by their lower bounds."""
        if target.lower_bounds[0] != source.lower_bounds[0]:
            raise InputError("source and target must start at the same age")
        starts = []
        for b in target.lower_bounds:
            if b not in source.lower_bounds:
                raise InputError(f"target bound {b} is not a source bin boundary")
            starts.append(source.lower_bounds.index(b))
        ends = starts[1:] + [len(source)]
        return cls(tuple(tuple(range(s, e)) for s, e in zip(starts, ends)))

    def indicator(self) -> np.ndarray:
        """(groups x source_dim) 0/1 membership matrix."""
        P = np.zeros((len(self.groups), self.source_dim))
        for i, g in enumerate(self.groups):
            P[i, list(g)] = 1.0
        return P


DEFAULT_PARTITION = AgePartition.between(FIVE_YEAR, CLUSTER_BINS)


def _check_same_frame(mats: Sequence[ContactMatrix]) -> None:
    first = mats[0]
    for m in mats[1:]:
        if m.country != first.country:
            raise InputError(f"country mismatch: {first.country!r} vs {m.country!r}")
        if m.ages != first.ages:
            raise InputError(f"{first.country}: age structures differ between settings")


def sum_settings(
    home: ContactMatrix,
    school: ContactMatrix,
    work: ContactMatrix,
    other: ContactMatrix,
    weights: Sequence[float] = (1.0, 1.0, 1.0, 1.0),
) -> ContactMatrix:
    """Full contact matrix as a weighted sum of the four settings (unit weights = no intervention)."""
    mats = (home, school, work, other)
    _check_same_frame(mats)
    if len(weights) != 4:
        raise InputError("need one weight per setting")
    values = sum(w * m.values for w, m in zip(weights, mats))
    return ContactMatrix(home.country, "full", home.ages, values)


def _check_population(m: ContactMatrix, pop: PopulationVector) -> None:
    if m.ages != pop.ages:
        raise InputError(f"{m.country}: matrix and population use different age structures")
    if np.any(pop.counts <= 0):
        bad = [m.ages.labels[i] for i in np.flatnonzero(pop.counts <= 0)]
        raise DegenerateInputError(f"{m.country}: zero population in bins {bad}")


def symmetrize(m: ContactMatrix, pop: PopulationVector) -> ContactMatrix:
    """Enforce reciprocity ``mu[i, j] * W[i] == mu[j, i] * W[j]``.

    Total contacts between two groups are averaged over both directions and
    redistributed per capita.
    """
    _check_population(m, pop)
    W = pop.counts
    totals = m.values * W[:, None]
    values = (totals + totals.T) / (2.0 * W[:, None])
    return replace(m, values=values)


def aggregate_matrix(m: ContactMatrix, pop: PopulationVector, part: AgePartition, ages: AgeStructure | None = None) -> ContactMatrix:
    """Merge age bins, keeping population-weighted contact totals.

    ``mu[i, j] = sum_{m in I_i, n in I_j} M[m, n] N[m] / W[i]``.
    """
    if m.ages != pop.ages:
        raise InputError(f"{m.country}: matrix and population use different age structures")
    if part.source_dim != len(m.ages):
        raise InputError(f"partition covers {part.source_dim} bins, matrix has {len(m.ages)}")
    P = part.indicator()
    W = P @ pop.counts
    if np.any(W <= 0):
        raise DegenerateInputError(f"{m.country}: an aggregated age bin has zero population")
    values = (P @ (m.values * pop.counts[:, None]) @ P.T) / W[:, None]
    return replace(m, ages=ages or _merged_structure(m.ages, part), values=values)


def aggregate_population(pop: PopulationVector, part: AgePartition, ages: AgeStructure | None = None) -> PopulationVector:
    if part.source_dim != len(pop.ages):
        raise InputError(f"partition covers {part.source_dim} bins, population has {len(pop.ages)}")
    counts = part.indicator() @ pop.counts
    return PopulationVector(pop.country, ages or _merged_structure(pop.ages, part), counts)


def _merged_structure(ages: AgeStructure, part: AgePartition) -> AgeStructure:
    if part.source_dim == len(FIVE_YEAR) and ages == FIVE_YEAR and part == DEFAULT_PARTITION:
        return CLUSTER_BINS
    labels = []
    for g in part.groups:
        first, last = ages.labels[g[0]], ages.labels[g[-1]]
        if len(g) == 1:
            labels.append(first)
        elif "-" in first and (last.endswith("+") or "-" in last):
            lo = first.split("-")[0]
            labels.append(f"{lo}+" if last.endswith("+") else f"{lo}-{last.split('-')[1]}")
        else:
            labels.append(f"{first}..{last}")
    return AgeStructure(tuple(labels), tuple(ages.lower_bounds[g[0]] for g in part.groups))
