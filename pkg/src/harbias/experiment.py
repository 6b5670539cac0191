"""End-to-end runner: settings x trials -> JSONL results -> grouped reports.

Results are appended one JSON object per line, in canonical (setting,
trial) order, by a single writer. Re-running a manifest skips every
(setting, trial) pair already present for the same manifest hash, so an
interrupted run can simply be restarted.
"""

from __future__ import annotations

import concurrent.futures as cf
import csv
import hashlib
import json
import logging
import multiprocessing as mp
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
import torch

from .classifier import ModelConfig, TrainConfig, branches_by_prefix, build_model, predict, train
from .core import LabeledDataset, SubjectProfile, natural_key
from .curation import (SplitSetting, association_test, binarize_profiles, crosstab,
                       settings_from_entries)
from .errors import ArgumentError, ConfigError, ReportError, StatError
from .ingestion import IngestConfig, load_dataset
from .metrics import TrialResult, accuracy, confusion, group_summary, weighted_f1
from .segmentation import (WindowConfig, WindowSet, apply_normalizer, cached_segment_dataset,
                           fit_normalizer, segment_dataset)

__all__ = [
    "ExperimentManifest", "load_experiment_manifest", "derive_seed", "run_trial",
    "run_experiment", "read_results", "report", "ReportBundle",
    "audit_characteristics", "CharacteristicsReport", "PairTest", "all_subject_reference",
]

log = logging.getLogger(__name__)

MODEL_OPTION_KEYS = ("conv_layers_per_branch", "filters", "kernel_frames", "branch_fc_units",
                     "fusion_fc_units", "dropout_p")


def derive_seed(*parts) -> int:
    """Stable 60-bit seed from the SHA-256 of ``":".join(parts)``."""
    digest = hashlib.sha256(":".join(str(p) for p in parts).encode()).hexdigest()
    return int(digest[:15], 16)


@dataclass(frozen=True)
class ExperimentManifest:
    """Everything needed to reproduce a run.

    ``model`` holds :class:`ModelConfig` options other than the ones fixed by
    the data (classes, window size); ``model["branches"]`` is ``"single"``,
    ``"by_prefix"`` or an explicit list of channel-index groups.
    """

    dataset_root: Optional[Path]
    window: WindowConfig
    train: TrainConfig
    settings: tuple
    model: dict = field(default_factory=dict)
    trials_per_setting: int = 5
    global_seed: int = 0
    dataset_kind: str = "canonical"
    downsample_factor: int = 1
    channel_selection: Optional[tuple] = None
    vary_init_seed: bool = False

    def __post_init__(self):
        if self.trials_per_setting < 1:
            raise ConfigError("bad_manifest", "trials_per_setting must be >= 1")
        ids = [s.setting_id for s in self.settings]
        if len(set(ids)) != len(ids):
            raise ConfigError("bad_manifest", "setting ids must be unique")
        unknown = set(self.model) - set(MODEL_OPTION_KEYS) - {"branches"}
        if unknown:
            raise ConfigError("bad_manifest", f"unknown model options {sorted(unknown)}")

    def to_json(self) -> dict:
        return {
            "dataset": {"root": str(self.dataset_root) if self.dataset_root else None,
                        "kind": self.dataset_kind, "downsample_factor": self.downsample_factor,
                        "channel_selection": list(self.channel_selection)
                        if self.channel_selection else None},
            "window": asdict(self.window),
            "model": self.model,
            "train": asdict(self.train),
            "settings": [s.to_json() for s in self.settings],
            "trials_per_setting": self.trials_per_setting,
            "global_seed": self.global_seed,
            "vary_init_seed": self.vary_init_seed,
        }

    @property
    def hash(self) -> str:
        blob = json.dumps(self.to_json(), sort_keys=True, default=str)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def model_config(self, dataset: LabeledDataset) -> ModelConfig:
        branches = self.model.get("branches", "single")
        n_channels = len(dataset.channels)
        if branches == "single":
            branches = (tuple(range(n_channels)),)
        elif branches == "by_prefix":
            branches = branches_by_prefix(dataset.channels)
        options = {k: self.model[k] for k in MODEL_OPTION_KEYS if k in self.model}
        return ModelConfig(branches=branches, n_classes=len(dataset.class_names),
                           window_size=self.window.window_size, **options)

    def load_dataset(self) -> LabeledDataset:
        if self.dataset_root is None:
            raise ConfigError("no_dataset", "manifest has no dataset root")
        return load_dataset(IngestConfig(self.dataset_kind, self.dataset_root,
                                         self.downsample_factor, self.channel_selection))


def load_experiment_manifest(path, subjects: Optional[Sequence[SubjectProfile]] = None) -> ExperimentManifest:
    """Parse an experiment manifest JSON file.

    Settings come inline (``settings``) or from a curation manifest
    (``settings_file``); relative paths resolve against the manifest's
    directory. Declared HM labels are re-verified against ``subjects`` or,
    when omitted, against the dataset the manifest points to.
    """
    path = Path(path)
    raw = json.loads(path.read_text())
    base = path.parent
    ds = raw.get("dataset", {})
    root = ds.get("root")
    root = (base / root) if root and not Path(root).is_absolute() else (Path(root) if root else None)
    entries = raw.get("settings")
    if entries is None:
        if "settings_file" not in raw:
            raise ConfigError("bad_manifest", "manifest needs 'settings' or 'settings_file'")
        entries = json.loads((base / raw["settings_file"]).read_text())
    try:
        window = WindowConfig(**raw["window"])
        train_cfg = TrainConfig(**raw["train"])
    except (KeyError, TypeError) as exc:
        raise ConfigError("bad_manifest", str(exc)) from exc
    manifest = ExperimentManifest(
        dataset_root=root, window=window, train=train_cfg, settings=(),
        model=raw.get("model", {}), trials_per_setting=raw.get("trials_per_setting", 5),
        global_seed=raw.get("global_seed", 0), dataset_kind=ds.get("kind", "canonical"),
        downsample_factor=ds.get("downsample_factor", 1),
        channel_selection=tuple(ds["channel_selection"]) if ds.get("channel_selection") else None,
        vary_init_seed=raw.get("vary_init_seed", False))
    if subjects is None:
        subjects = manifest.load_dataset().subjects
    return replace(manifest, settings=tuple(settings_from_entries(entries, subjects)))


# -- trials ------------------------------------------------------------------

class _WindowStore:
    """Per-subject segmentation memo shared by all trials of one process."""

    def __init__(self, dataset: LabeledDataset, config: WindowConfig):
        self.dataset, self.config, self._memo = dataset, config, {}

    def windows(self, subject_ids) -> WindowSet:
        parts = []
        for sid in sorted(subject_ids, key=natural_key):
            if sid not in self._memo:
                self._memo[sid] = cached_segment_dataset(self.dataset, [sid], self.config)
            parts.append(self._memo[sid])
        return WindowSet.concat(parts)


def run_trial(dataset: LabeledDataset, manifest: ExperimentManifest, setting: SplitSetting,
              trial_index: int, store: Optional[_WindowStore] = None) -> dict:
    """Train and evaluate one (setting, trial); returns a result record."""
    start = time.perf_counter()
    trial_seed = derive_seed(manifest.global_seed, setting.setting_id, trial_index)
    init_seed = trial_seed if manifest.vary_init_seed else derive_seed(manifest.global_seed, "init")
    record = {"manifest_hash": manifest.hash, "setting_id": setting.setting_id,
              "hm": setting.hm.value, "trial_index": trial_index,
              "trial_seed": trial_seed, "init_seed": init_seed}
    threads = torch.get_num_threads()
    torch.set_num_threads(1)
    try:
        store = store or _WindowStore(dataset, manifest.window)
        train_ws = store.windows(setting.train_subjects)
        test_ws = store.windows(setting.test_subjects)
        overlap = set(train_ws.subjects) & set(test_ws.subjects)
        if overlap:
            raise RuntimeError(f"test windows from training subjects {sorted(overlap)}")
        if manifest.window.normalize:
            norm = fit_normalizer(train_ws)
            train_ws, test_ws = apply_normalizer(norm, train_ws), apply_normalizer(norm, test_ws)
        model_cfg = manifest.model_config(dataset)
        model = train(build_model(model_cfg, init_seed % (2 ** 31)), train_ws,
                      replace(manifest.train, seed=trial_seed))
        if test_ws.augmented:
            raise RuntimeError("test windows must be noise-free")
        pred = predict(model, test_ws)
        cm = confusion(pred, test_ws.labels, model_cfg.n_classes, dataset.class_names)
        record.update(status="ok", accuracy=accuracy(cm), wf1=weighted_f1(cm),
                      n_train_windows=len(train_ws), n_test_windows=len(test_ws),
                      stopped_epoch=model.stopped_epoch, n_classes=model_cfg.n_classes,
                      confusion=cm.counts.ravel().tolist(), error=None)
    except Exception as exc:  # recorded, the run continues
        log.exception("trial %s/%d failed", setting.setting_id, trial_index)
        record.update(status="failed", error=f"{type(exc).__name__}: {exc}")
    finally:
        torch.set_num_threads(threads)
    record["wall_time_s"] = round(time.perf_counter() - start, 3)
    return record


_WORKER: dict = {}


def _worker_init(manifest: ExperimentManifest, dataset: Optional[LabeledDataset]):
    dataset = dataset if dataset is not None else manifest.load_dataset()
    _WORKER.update(manifest=manifest, dataset=dataset,
                   store=_WindowStore(dataset, manifest.window),
                   settings={s.setting_id: s for s in manifest.settings})


def _worker_run(setting_id: str, trial_index: int) -> dict:
    return run_trial(_WORKER["dataset"], _WORKER["manifest"], _WORKER["settings"][setting_id],
                     trial_index, _WORKER["store"])


def read_results(path) -> list:
    path = Path(path)
    if not path.is_file():
        return []
    out = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(json.loads(line))
    return out


def run_experiment(manifest: ExperimentManifest, out_path, workers: int = 1,
                   dataset: Optional[LabeledDataset] = None) -> Path:
    """Run every missing (setting, trial) of ``manifest`` and append results.

    ``dataset`` overrides loading from ``manifest.dataset_root``. With
    ``workers > 1`` trials run in a process pool; records are still written
    in canonical order, so the file does not depend on the worker count.
    """
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    if dataset is None:
        dataset = manifest.load_dataset()
    known = set(dataset.subject_ids)
    for s in manifest.settings:
        missing = (set(s.train_subjects) | set(s.test_subjects)) - known
        if missing:
            raise ConfigError("unknown_subject", f"{s.setting_id}: {sorted(missing)}")
    done = {(r["setting_id"], r["trial_index"]) for r in read_results(out_path)
            if r.get("manifest_hash") == manifest.hash}
    jobs = [(s.setting_id, t) for s in manifest.settings
            for t in range(manifest.trials_per_setting) if (s.setting_id, t) not in done]
    log.info("%d trials to run (%d already present)", len(jobs), len(done))
    with open(out_path, "a") as fh:
        def emit(rec):
            fh.write(json.dumps(rec) + "\n")
            fh.flush()

        if workers <= 1 or len(jobs) <= 1:
            _worker_init(manifest, dataset)
            for sid, t in jobs:
                emit(_worker_run(sid, t))
        else:
            ctx = mp.get_context("spawn")
            with cf.ProcessPoolExecutor(workers, mp_context=ctx, initializer=_worker_init,
                                        initargs=(manifest, dataset)) as pool:
                futures = [pool.submit(_worker_run, sid, t) for sid, t in jobs]
                for fut in futures:
                    emit(fut.result())
    return out_path


def _time_split(dataset: LabeledDataset, test_fraction: float):
    from .core import Recording

    head, tail = [], []
    for r in dataset.recordings:
        cut = int(np.floor((1 - test_fraction) * r.n_frames))
        head.append(Recording(r.subject_id, r.sampling_rate, r.channels, r.samples[:cut],
                              r.frame_labels[:cut]))
        tail.append(Recording(r.subject_id, r.sampling_rate, r.channels, r.samples[cut:],
                              r.frame_labels[cut:]))
    make = lambda recs: LabeledDataset(dataset.name, dataset.class_names, dataset.subjects, recs)
    return make(head), make(tail)


def all_subject_reference(dataset: LabeledDataset, window: WindowConfig, train_config: TrainConfig,
                          model: Optional[dict] = None, test_fraction: float = 0.2,
                          seed: int = 0) -> dict:
    """Train on every subject and test on held-out time.

    Each recording is cut in two: the leading ``1 - test_fraction`` of its
    frames trains, the rest tests. This is the all-subject baseline the
    curated runs are compared against.
    """
    model = dict(model or {})
    manifest = ExperimentManifest(None, window, train_config, (), model=model, global_seed=seed)
    train_ds, test_ds = _time_split(dataset, test_fraction)
    ids = dataset.subject_ids
    train_ws = segment_dataset(train_ds, ids, window)
    test_ws = segment_dataset(test_ds, ids, window)
    if window.normalize:
        norm = fit_normalizer(train_ws)
        train_ws, test_ws = apply_normalizer(norm, train_ws), apply_normalizer(norm, test_ws)
    cfg = manifest.model_config(dataset)
    trained = train(build_model(cfg, seed), train_ws, replace(train_config, seed=seed))
    cm = confusion(predict(trained, test_ws), test_ws.labels, cfg.n_classes, dataset.class_names)
    return {"accuracy": accuracy(cm), "wf1": weighted_f1(cm), "n_train_windows": len(train_ws),
            "n_test_windows": len(test_ws), "stopped_epoch": trained.stopped_epoch}


# -- reporting -----------------------------------------------------------------

@dataclass
class ReportBundle:
    summaries: list
    csv_path: Optional[Path] = None
    json_path: Optional[Path] = None
    figures: list = field(default_factory=list)
    n_records: int = 0
    n_failed: int = 0


def _trial_results(records) -> list:
    return [TrialResult(setting_id=r["setting_id"], trial_index=r["trial_index"], hm=r["hm"],
                        accuracy=r["accuracy"], wf1=r["wf1"],
                        n_train_windows=r.get("n_train_windows", 0))
            for r in records if r.get("status") == "ok"]


def report(results, group_by: str = "hm", out_dir=None, plots: bool = False,
           level: str = "setting") -> ReportBundle:
    """Group summaries (CSV + JSON) and optional boxplot figures.

    ``results`` is a JSONL path or a list of records. Figures are written
    only with ``plots=True``.
    """
    records = read_results(results) if isinstance(results, (str, Path)) else list(results)
    trials = _trial_results(records)
    if not trials:
        raise ReportError("empty", "no successful result records")
    summaries = group_summary(trials, group_by=group_by, level=level)
    bundle = ReportBundle(summaries, n_records=len(records),
                          n_failed=sum(r.get("status") != "ok" for r in records))
    if out_dir is None:
        return bundle
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = [s.as_row() for s in summaries]
    bundle.csv_path = out / "group_summary.csv"
    with open(bundle.csv_path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)
    bundle.json_path = out / "group_summary.json"
    bundle.json_path.write_text(json.dumps(
        {"group_by": group_by, "level": level, "n_records": bundle.n_records,
         "n_failed": bundle.n_failed,
         "groups": [{**{k: v for k, v in asdict(s).items() if k != "boxplot"},
                     "boxplot": {m: asdict(b) for m, b in s.boxplot.items()}}
                    for s in summaries]}, indent=2))
    if plots:
        bundle.figures = _boxplots(trials, summaries, group_by, level, out)
    return bundle


def _boxplots(trials, summaries, group_by, level, out: Path) -> list:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    from .metrics import _group_key, trial_stats

    per_setting = {}
    for r in trials:
        per_setting.setdefault((_group_key(r.hm, group_by), r.setting_id), []).append(r)
    groups = [s.hm for s in summaries]
    panels = {
        "mean_accuracy": lambda rs: trial_stats(r.accuracy for r in rs).mean,
        "mean_wf1": lambda rs: trial_stats(r.wf1 for r in rs).mean,
        "sd_accuracy": lambda rs: trial_stats(r.accuracy for r in rs).sd,
        "sd_wf1": lambda rs: trial_stats(r.wf1 for r in rs).sd,
    }
    paths = []
    for name, fn in panels.items():
        data = [[100 * fn(rs) for (g, _), rs in per_setting.items() if g == grp] for grp in groups]
        fig, ax = plt.subplots(figsize=(5, 3.5))
        ax.boxplot(data)
        ax.set_xticks(range(1, len(groups) + 1), groups)
        ax.set_ylabel(f"{name.replace('_', ' ')} [%]")
        ax.set_xlabel("heterogeneity group")
        fig.tight_layout()
        path = out / f"{name}.png"
        fig.savefig(path, dpi=120)
        plt.close(fig)
        paths.append(path)
    return paths


# -- characteristics audit -------------------------------------------------------

PAIRS = (("gender", "age_class"), ("gender", "height_class"), ("gender", "weight_class"))


@dataclass
class PairTest:
    row_attr: str
    col_attr: str
    counts: np.ndarray
    testable: bool
    statistic: Optional[float] = None
    p_value: Optional[float] = None
    significant: bool = False
    note: str = ""


@dataclass
class CharacteristicsReport:
    tests: list
    alpha: float = 0.05

    @property
    def redundant(self) -> list:
        """Attributes whose association with gender is significant."""
        return [t.col_attr for t in self.tests if t.significant]

    def table(self, col_attr: str) -> PairTest:
        return next(t for t in self.tests if t.col_attr == col_attr)

    def format(self) -> str:
        lines = []
        for t in self.tests:
            levels = {"age_class": ("young", "old"), "height_class": ("short", "tall"),
                      "weight_class": ("light", "heavy")}[t.col_attr]
            lines.append(f"{t.row_attr} x {t.col_attr}")
            lines.append(f"{'':8s}{levels[0]:>8s}{levels[1]:>8s}")
            for name, row in zip(("female", "male"), t.counts):
                lines.append(f"{name:8s}{row[0]:8d}{row[1]:8d}")
            if t.testable:
                flag = "  -> associated, redundant for curation" if t.significant else ""
                lines.append(f"chi2 = {t.statistic:.3f}, p = {t.p_value:.4g}{flag}")
            else:
                lines.append(f"not testable ({t.note})")
            lines.append("")
        return "\n".join(lines)


def audit_characteristics(cohorts, alpha: float = 0.05, min_expected: float = 1.0) -> CharacteristicsReport:
    """Cross-tabulate gender against binarized age, height and weight.

    ``cohorts`` is a dataset, a list of subject profiles, or a list of
    either; each cohort is binarized on its own medians before pooling.
    Tables with a zero marginal or an expected count below
    ``min_expected`` are reported as not testable.
    """
    if isinstance(cohorts, LabeledDataset) or (
            cohorts and isinstance(next(iter(cohorts)), SubjectProfile)):
        cohorts = [cohorts]
    profiles = []
    for cohort in cohorts:
        subjects = cohort.subjects if isinstance(cohort, LabeledDataset) else list(cohort)
        if len(subjects) < 2:
            raise ArgumentError("too_few_subjects", "each cohort needs at least 2 subjects")
        profiles.extend(binarize_profiles(subjects))
    tests = []
    for row_attr, col_attr in PAIRS:
        table = crosstab(profiles, row_attr, col_attr)
        entry = PairTest(row_attr, col_attr, table.counts, testable=False)
        try:
            res = association_test(table)
        except StatError as exc:
            entry.note = exc.reason
        else:
            if res.expected.min() < min_expected:
                entry.note = f"expected count {res.expected.min():.2f} < {min_expected}"
            else:
                entry.testable = True
                entry.statistic, entry.p_value = res.statistic, res.p_value
                entry.significant = res.p_value < alpha
        tests.append(entry)
    return CharacteristicsReport(tests, alpha)
