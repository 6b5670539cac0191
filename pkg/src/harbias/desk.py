"""Desk-scale heterogeneity study on synthetic subjects.

A small, fixed protocol that runs in minutes on one CPU core: 16 synthetic
subjects (4 per profile), a handful of settings per HM group, 3 trials each
and a compact single-branch CNN. It is the stand-in for full-dataset runs
when checking that accuracy rises and spread falls with heterogeneity.
"""

from __future__ import annotations

import tempfile
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

from .classifier import TrainConfig
from .curation import HMLabel, binarize_profiles, enumerate_settings
from .experiment import ExperimentManifest, read_results, report, run_experiment
from .segmentation import WindowConfig
from .synthetic import SynthConfig, generate_synthetic

__all__ = ["DESK_SYNTH", "DESK_WINDOW", "DESK_MODEL", "DESK_TRAIN", "DeskResult",
           "desk_manifest", "run_desk_replication"]

DESK_SYNTH = SynthConfig(idiosyncrasy_strength=0.6)
DESK_WINDOW = WindowConfig(window_size=100, step=25)
DESK_MODEL = {"branches": "single", "conv_layers_per_branch": 2, "filters": 16,
              "kernel_frames": 5, "branch_fc_units": 64, "fusion_fc_units": 64}
DESK_TRAIN = TrainConfig(learning_rate=3e-4, batch_size=32, max_epochs=30, early_stop_patience=5)


@dataclass
class DeskResult:
    strength: float
    replication: int
    summaries: dict          # HM label -> GroupSummary
    records: list

    @property
    def mean_acc(self) -> dict:
        return {k: s.mean_acc for k, s in self.summaries.items()}

    @property
    def sd_acc(self) -> dict:
        return {k: s.sd_acc for k, s in self.summaries.items()}

    @property
    def trial_sd_acc(self) -> dict:
        return {k: s.mean_trial_sd_acc for k, s in self.summaries.items()}

    def spread(self) -> float:
        vals = list(self.mean_acc.values())
        return max(vals) - min(vals)


def desk_manifest(dataset, replication: int, settings_per_group: int = 2,
                  trials: int = 3) -> ExperimentManifest:
    profiles = binarize_profiles(dataset.subjects)
    settings = []
    for hm in HMLabel:
        settings.extend(enumerate_settings(profiles, hm, settings_per_group,
                                           seed=replication, prefix="desk-"))
    return ExperimentManifest(dataset_root=None, window=DESK_WINDOW, train=DESK_TRAIN,
                              settings=tuple(settings), model=dict(DESK_MODEL),
                              trials_per_setting=trials, global_seed=replication)


def run_desk_replication(strength: float, replication: int, settings_per_group: int = 2,
                         trials: int = 3, workers: int = 1,
                         out_dir: Optional[Path] = None) -> DeskResult:
    """Generate one synthetic cohort and run the full HM sweep on it.

    Replications differ in the synthetic seed, the drawn settings and the
    trial seeds.
    """
    dataset = generate_synthetic(replace(DESK_SYNTH, idiosyncrasy_strength=strength,
                                         seed=replication))
    manifest = desk_manifest(dataset, replication, settings_per_group, trials)
    with tempfile.TemporaryDirectory() as tmp:
        out = Path(out_dir) if out_dir is not None else Path(tmp)
        path = run_experiment(manifest, out / f"desk_s{strength}_r{replication}.jsonl",
                              workers=workers, dataset=dataset)
        bundle = report(path, group_by="hm_subgroup")
        records = read_results(path)
    return DeskResult(strength, replication, {s.hm: s for s in bundle.summaries}, records)
