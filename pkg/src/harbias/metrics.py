"""Confusion matrices, accuracy / weighted F1 and per-group aggregation."""

from __future__ import annotations

import logging
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import ArgumentError, MetricError

__all__ = [
    "ConfusionMatrix", "TrialResult", "TrialStats", "FiveNumber", "GroupSummary",
    "confusion", "accuracy", "weighted_f1", "per_class_f1", "trial_stats",
    "five_number", "group_summary",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    """Rows are true classes, columns predicted classes."""

    counts: np.ndarray
    class_names: tuple = ()

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        if counts.ndim != 2 or counts.shape[0] != counts.shape[1]:
            raise ArgumentError("bad_shape", "confusion matrix must be square")
        if np.any(counts < 0):
            raise ArgumentError("bad_counts", "negative count")
        object.__setattr__(self, "counts", counts)
        names = tuple(self.class_names) or tuple(str(i) for i in range(counts.shape[0]))
        object.__setattr__(self, "class_names", names)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def permuted(self, order) -> "ConfusionMatrix":
        order = list(order)
        return ConfusionMatrix(self.counts[np.ix_(order, order)],
                               tuple(self.class_names[i] for i in order))


def confusion(pred, truth, n_classes: int, class_names: Sequence[str] = ()) -> ConfusionMatrix:
    pred = np.asarray(pred, dtype=np.int64).ravel()
    truth = np.asarray(truth, dtype=np.int64).ravel()
    if pred.shape != truth.shape:
        raise ArgumentError("length_mismatch", f"{len(pred)} predictions vs {len(truth)} labels")
    if pred.size and (min(pred.min(), truth.min()) < 0
                      or max(pred.max(), truth.max()) >= n_classes):
        raise ArgumentError("bad_label", f"labels must lie in [0, {n_classes})")
    counts = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(counts, (truth, pred), 1)
    return ConfusionMatrix(counts, tuple(class_names))


def accuracy(cm: ConfusionMatrix) -> float:
    total = cm.total
    if total == 0:
        raise MetricError("no_samples", "empty confusion matrix")
    return float(np.trace(cm.counts)) / total


def per_class_f1(cm: ConfusionMatrix) -> np.ndarray:
    """F1 per class; undefined precision or recall counts as 0."""
    counts = cm.counts.astype(float)
    tp = np.diag(counts)
    predicted = counts.sum(axis=0)
    support = counts.sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        precision = np.where(predicted > 0, tp / predicted, 0.0)
        recall = np.where(support > 0, tp / support, 0.0)
        denom = precision + recall
        f1 = np.where(denom > 0, 2 * precision * recall / denom, 0.0)
    return f1


def weighted_f1(cm: ConfusionMatrix) -> float:
    """Support-weighted mean of per-class F1 scores."""
    total = cm.total
    if total == 0:
        raise MetricError("no_samples", "empty confusion matrix")
    support = cm.counts.sum(axis=1)
    return float(np.sum(support * per_class_f1(cm)) / total)


@dataclass(frozen=True)
class TrialStats:
    mean: float
    sd: float


def trial_stats(values) -> TrialStats:
    """Mean and population SD (divide by n); SD is 0 for a single value."""
    values = np.asarray(list(values), dtype=float)
    if values.size == 0:
        raise ArgumentError("empty", "trial_stats needs at least one value")
    mean = float(values.mean())
    sd = float(np.sqrt(np.mean((values - mean) ** 2))) if values.size > 1 else 0.0
    return TrialStats(mean, sd)


@dataclass(frozen=True)
class TrialResult:
    setting_id: str
    trial_index: int
    hm: str
    accuracy: float
    wf1: float
    confusion: Optional[ConfusionMatrix] = None
    n_train_windows: int = 0


@dataclass(frozen=True)
class FiveNumber:
    min: float
    q1: float
    median: float
    q3: float
    max: float


def five_number(values) -> FiveNumber:
    """Boxplot summary with linearly interpolated quartiles."""
    values = np.asarray(list(values), dtype=float)
    if values.size == 0:
        raise ArgumentError("empty", "no values to summarize")
    q = np.percentile(values, [0, 25, 50, 75, 100], method="linear")
    return FiveNumber(*(float(x) for x in q))


@dataclass(frozen=True)
class GroupSummary:
    """Aggregate over one heterogeneity group.

    ``mean_*``/``sd_*`` describe the distribution of setting-level means (or
    of single trials with ``level="trial"``). ``mean_trial_sd_*`` is the
    average within-setting SD across repeated trials. ``boxplot`` maps
    ``accuracy``, ``wf1``, ``sd_accuracy`` and ``sd_wf1`` to five-number
    summaries.
    """

    hm: str
    n_settings: int
    n_trials: int
    mean_acc: float
    sd_acc: float
    mean_wf1: float
    sd_wf1: float
    mean_trial_sd_acc: float
    mean_trial_sd_wf1: float
    boxplot: dict = field(default_factory=dict)

    def as_row(self) -> dict:
        row = {k: getattr(self, k) for k in (
            "hm", "n_settings", "n_trials", "mean_acc", "sd_acc", "mean_wf1", "sd_wf1",
            "mean_trial_sd_acc", "mean_trial_sd_wf1")}
        for metric, box in self.boxplot.items():
            for stat in ("min", "q1", "median", "q3", "max"):
                row[f"{metric}_{stat}"] = getattr(box, stat)
        return row


HM_ORDER = ("HM1", "HM2", "HM2a", "HM2b", "HM3", "HM4")


def _group_key(hm: str, group_by: str) -> str:
    if group_by == "hm" and hm in ("HM2a", "HM2b"):
        return "HM2"
    return hm


def group_summary(results: Sequence[TrialResult], group_by: str = "hm",
                  level: str = "setting", groups: Sequence[str] = ()) -> list:
    """Summarize trial results per heterogeneity group.

    ``group_by="hm"`` merges HM2a and HM2b; ``"hm_subgroup"`` keeps them
    apart. ``groups`` lists labels that are expected; any without results is
    skipped with a warning.
    """
    if group_by not in ("hm", "hm_subgroup"):
        raise ArgumentError("bad_group_by", group_by)
    if level not in ("setting", "trial"):
        raise ArgumentError("bad_level", level)
    by_group = defaultdict(lambda: defaultdict(list))
    for r in results:
        by_group[_group_key(r.hm, group_by)][r.setting_id].append(r)
    for g in groups:
        if _group_key(g, group_by) not in by_group:
            log.warning("group %s has no results; excluded", g)
    out = []
    ordered = sorted(by_group, key=lambda g: (HM_ORDER.index(g) if g in HM_ORDER else 99, g))
    for g in ordered:
        settings = by_group[g]
        acc_stats = [trial_stats(r.accuracy for r in trials) for trials in settings.values()]
        wf1_stats = [trial_stats(r.wf1 for r in trials) for trials in settings.values()]
        if level == "setting":
            acc_vals = [s.mean for s in acc_stats]
            wf1_vals = [s.mean for s in wf1_stats]
        else:
            acc_vals = [r.accuracy for trials in settings.values() for r in trials]
            wf1_vals = [r.wf1 for trials in settings.values() for r in trials]
        acc, wf1 = trial_stats(acc_vals), trial_stats(wf1_vals)
        sd_acc_vals = [s.sd for s in acc_stats]
        sd_wf1_vals = [s.sd for s in wf1_stats]
        out.append(GroupSummary(
            hm=g, n_settings=len(settings),
            n_trials=sum(len(t) for t in settings.values()),
            mean_acc=acc.mean, sd_acc=acc.sd, mean_wf1=wf1.mean, sd_wf1=wf1.sd,
            mean_trial_sd_acc=float(np.mean(sd_acc_vals)),
            mean_trial_sd_wf1=float(np.mean(sd_wf1_vals)),
            boxplot={"accuracy": five_number(acc_vals), "wf1": five_number(wf1_vals),
                     "sd_accuracy": five_number(sd_acc_vals),
                     "sd_wf1": five_number(sd_wf1_vals)}))
    return out
