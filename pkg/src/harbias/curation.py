"""Soft-biometric curation: binarization, association tests, heterogeneity
labels and training-set enumeration."""

from __future__ import annotations

import itertools
import json
from collections import Counter
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy import stats

from .core import (AgeClass, BinarizedProfile, Gender, HeightClass, SubjectProfile,
                   WeightClass, natural_key)
from .errors import ArgumentError, EnumerationError, ManifestError, StatError

__all__ = [
    "HMLabel", "ContingencyTable", "AssociationResult", "SplitSetting",
    "binarize_profiles", "crosstab", "association_test", "heterogeneity_measure",
    "feasible_subsets", "enumerate_settings", "load_manifest", "save_manifest",
    "check_manifest", "settings_from_entries", "profile_counts",
    "DEFAULT_MAX_SETTINGS",
]

DEFAULT_MAX_SETTINGS = 10

ATTRIBUTE_LEVELS = {
    "gender": (Gender.FEMALE, Gender.MALE),
    "age_class": (AgeClass.YOUNG, AgeClass.OLD),
    "height_class": (HeightClass.SHORT, HeightClass.TALL),
    "weight_class": (WeightClass.LIGHT, WeightClass.HEAVY),
}


class HMLabel(str, Enum):
    HM1 = "HM1"
    HM2a = "HM2a"
    HM2b = "HM2b"
    HM3 = "HM3"
    HM4 = "HM4"

    @property
    def group(self) -> str:
        """Coarse group with 2a and 2b merged."""
        return "HM2" if self in (HMLabel.HM2a, HMLabel.HM2b) else self.value

    @classmethod
    def parse(cls, text) -> "HMLabel":
        if isinstance(text, cls):
            return text
        token = str(text).strip().replace(" ", "").upper()
        token = token[2:] if token.startswith("HM") else token
        for label in cls:
            if label.value[2:].upper() == token:
                return label
        raise ArgumentError("bad_hm", f"unknown heterogeneity label {text!r}")


@dataclass(frozen=True)
class ContingencyTable:
    row_attr: str
    col_attr: str
    counts: np.ndarray

    @property
    def row_levels(self):
        return tuple(v.value for v in ATTRIBUTE_LEVELS[self.row_attr])

    @property
    def col_levels(self):
        return tuple(v.value for v in ATTRIBUTE_LEVELS[self.col_attr])

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def transpose(self) -> "ContingencyTable":
        return ContingencyTable(self.col_attr, self.row_attr, self.counts.T.copy())


@dataclass(frozen=True)
class AssociationResult:
    statistic: float
    p_value: float
    dof: int
    significant_at_0_05: bool
    expected: np.ndarray


@dataclass(frozen=True)
class SplitSetting:
    setting_id: str
    train_subjects: tuple
    test_subjects: tuple
    hm: HMLabel
    seed: int = 0

    def __post_init__(self):
        if len(self.train_subjects) != 4:
            raise ArgumentError("bad_setting", f"{self.setting_id}: need exactly 4 training subjects")
        if set(self.train_subjects) & set(self.test_subjects):
            raise ArgumentError("bad_setting", f"{self.setting_id}: train and test overlap")

    def to_json(self) -> dict:
        return {"setting_id": self.setting_id, "hm": self.hm.value,
                "train_subjects": list(self.train_subjects), "seed": self.seed}


def binarize_profiles(subjects: Sequence[SubjectProfile]) -> list:
    """Split age, height and weight at the cohort median.

    Values strictly above the median go to the upper class, values at or
    below it to the lower class. Binarize each dataset on its own; medians
    are dataset-specific.
    """
    if len(subjects) < 2:
        raise ArgumentError("too_few_subjects", "binarization needs at least 2 subjects")
    ages = np.array([s.age for s in subjects], dtype=float)
    heights = np.array([s.height for s in subjects], dtype=float)
    weights = np.array([s.weight for s in subjects], dtype=float)
    age_med, height_med, weight_med = np.median(ages), np.median(heights), np.median(weights)
    return [
        BinarizedProfile(
            subject_id=s.subject_id,
            age_class=AgeClass.OLD if s.age > age_med else AgeClass.YOUNG,
            gender=s.gender,
            height_class=HeightClass.TALL if s.height > height_med else HeightClass.SHORT,
            weight_class=WeightClass.HEAVY if s.weight > weight_med else WeightClass.LIGHT,
        )
        for s in subjects
    ]


def crosstab(profiles: Iterable[BinarizedProfile], row_attr: str, col_attr: str) -> ContingencyTable:
    for attr in (row_attr, col_attr):
        if attr not in ATTRIBUTE_LEVELS:
            raise ArgumentError("missing_attribute", f"unknown attribute {attr!r}")
    rows, cols = ATTRIBUTE_LEVELS[row_attr], ATTRIBUTE_LEVELS[col_attr]
    counts = np.zeros((2, 2), dtype=np.int64)
    for p in profiles:
        r, c = getattr(p, row_attr), getattr(p, col_attr)
        if r is None or c is None:
            raise ArgumentError("missing_attribute",
                                f"subject {p.subject_id} lacks {row_attr if r is None else col_attr}")
        counts[rows.index(r), cols.index(c)] += 1
    return ContingencyTable(row_attr, col_attr, counts)


def association_test(table, correction: bool = False) -> AssociationResult:
    """Pearson chi-square test of independence on a 2x2 table.

    ``correction`` applies Yates' continuity correction; off by default.
    """
    counts = np.asarray(getattr(table, "counts", table), dtype=float)
    total = counts.sum()
    row, col = counts.sum(axis=1), counts.sum(axis=0)
    if total < 1 or np.any(row == 0) or np.any(col == 0):
        raise StatError("degenerate_table", "a row or column marginal is zero")
    expected = np.outer(row, col) / total
    dof = (counts.shape[0] - 1) * (counts.shape[1] - 1)
    diff = np.abs(counts - expected)
    if correction and dof == 1:
        diff = np.maximum(diff - 0.5, 0.0)
    statistic = float(np.sum(diff ** 2 / expected))
    p_value = float(stats.chi2.sf(statistic, dof))
    return AssociationResult(statistic, p_value, dof, p_value < 0.05, expected)


def _key(p):
    return p.key if isinstance(p, BinarizedProfile) else tuple(p)


def heterogeneity_measure(profiles) -> HMLabel:
    """Label a 4-subject training set by how many (age, gender) profiles it holds."""
    keys = [_key(p) for p in profiles]
    if len(keys) != 4:
        raise ArgumentError("need_four", f"heterogeneity needs exactly 4 profiles, got {len(keys)}")
    distinct = set(keys)
    if len(distinct) == 1:
        return HMLabel.HM1
    if len(distinct) == 3:
        return HMLabel.HM3
    if len(distinct) == 4:
        return HMLabel.HM4
    a, b = distinct
    n_diff = sum(x != y for x, y in zip(a, b))
    return HMLabel.HM2a if n_diff == 1 else HMLabel.HM2b


def _sorted_profiles(profiles):
    return sorted(profiles, key=lambda p: natural_key(p.subject_id))


def feasible_subsets(profiles: Sequence[BinarizedProfile], hm) -> list:
    """All 4-subject id tuples whose heterogeneity label is ``hm``, in
    lexicographic order of natural-sorted ids."""
    hm = HMLabel.parse(hm)
    ordered = _sorted_profiles(profiles)
    return [tuple(p.subject_id for p in combo)
            for combo in itertools.combinations(ordered, 4)
            if heterogeneity_measure(combo) is hm]


def enumerate_settings(profiles: Sequence[BinarizedProfile], hm, max_settings: Optional[int] = DEFAULT_MAX_SETTINGS,
                       seed: int = 0, prefix: str = "") -> list:
    """Draw up to ``max_settings`` distinct training sets with label ``hm``.

    Feasible subsets are sampled uniformly without replacement; the returned
    settings keep the lexicographic order of the feasible family.
    ``max_settings=None`` returns every feasible subset.
    """
    hm = HMLabel.parse(hm)
    if len(profiles) < 8:
        raise ArgumentError("too_few_subjects", "need at least 4 training and 4 test subjects")
    if max_settings is not None and max_settings < 1:
        raise ArgumentError("bad_max", "max_settings must be >= 1")
    family = feasible_subsets(profiles, hm)
    if not family:
        raise EnumerationError("infeasible_hm", f"no 4-subject subset has label {hm.value}")
    if max_settings is None or max_settings >= len(family):
        chosen = range(len(family))
    else:
        rng = np.random.default_rng(seed)
        chosen = sorted(rng.choice(len(family), size=max_settings, replace=False).tolist())
    all_ids = [p.subject_id for p in _sorted_profiles(profiles)]
    out = []
    for n, idx in enumerate(chosen):
        train = family[idx]
        test = tuple(s for s in all_ids if s not in train)
        out.append(SplitSetting(f"{prefix}{hm.value}-{n + 1:02d}", train, test, hm, seed))
    return out


def _as_binarized(subjects) -> dict:
    subjects = list(subjects)
    if subjects and isinstance(subjects[0], SubjectProfile):
        subjects = binarize_profiles(subjects)
    return {p.subject_id: p for p in subjects}


def check_manifest(entries: Sequence[dict], subjects) -> list:
    """Return ``(setting_id, declared, computed)`` for every row whose
    declared label disagrees with its training subjects."""
    lookup = _as_binarized(subjects)
    bad = []
    for entry in entries:
        train = [str(s) for s in entry["train_subjects"]]
        unknown = [s for s in train if s not in lookup]
        if unknown:
            raise ManifestError("unknown_subject", f"{entry.get('setting_id')}: {unknown}")
        declared = HMLabel.parse(entry["hm"])
        computed = heterogeneity_measure([lookup[s] for s in train])
        if computed is not declared:
            bad.append((entry.get("setting_id"), declared, computed))
    return bad


def load_manifest(path, subjects) -> list:
    """Load settings from a JSON list of ``{setting_id, hm, train_subjects, seed}``.

    ``subjects`` are the dataset's :class:`SubjectProfile` (binarized here)
    or already-binarized profiles. Every declared label is recomputed; any
    disagreement rejects the whole manifest.
    """
    entries = json.loads(Path(path).read_text())
    if isinstance(entries, dict):
        entries = entries["settings"]
    return settings_from_entries(entries, subjects)


def settings_from_entries(entries: Sequence[dict], subjects) -> list:
    lookup = _as_binarized(subjects)
    mismatches = check_manifest(entries, lookup.values())
    if mismatches:
        detail = "; ".join(f"{sid}: declared {d.value}, computed {c.value}"
                           for sid, d, c in mismatches)
        raise ManifestError("hm_mismatch", detail)
    all_ids = sorted(lookup, key=natural_key)
    out = []
    for n, entry in enumerate(entries):
        train = tuple(str(s) for s in entry["train_subjects"])
        test = tuple(s for s in all_ids if s not in train)
        out.append(SplitSetting(str(entry.get("setting_id", f"setting-{n + 1:02d}")),
                                train, test, HMLabel.parse(entry["hm"]),
                                int(entry.get("seed", 0))))
    return out


def save_manifest(settings: Sequence[SplitSetting], path) -> Path:
    path = Path(path)
    path.write_text(json.dumps([s.to_json() for s in settings], indent=2))
    return path


def profile_counts(profiles: Iterable[BinarizedProfile]) -> Counter:
    return Counter(p.code for p in profiles)
