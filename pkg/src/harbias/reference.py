"""Bundled subject metadata and published training-set lists for LARa and
MotionSense.

Metadata lives in ``harbias/data`` in each dataset's own layout, so the
files double as ingestion fixtures.
"""

from __future__ import annotations

import json
from importlib import resources
from pathlib import Path

from .classifier import LARA_TRAIN, MOTIONSENSE_TRAIN
from .ingestion import _lara_subjects, _motionsense_subjects
from .segmentation import WindowConfig

__all__ = ["data_path", "lara_subjects", "motionsense_subjects", "published_settings",
           "REFERENCE_BASELINES", "REFERENCE_PROTOCOLS"]

# all-subject accuracy / wF1 reported for the full-data networks
REFERENCE_BASELINES = {
    "lara_omocap": {"accuracy": 0.7763, "wf1": 0.7877},
    "motionsense": {"accuracy": 0.956, "wf1": 0.9554},
}

# ingest, window, model and training settings of the full-data networks
REFERENCE_PROTOCOLS = {
    "lara_omocap": {"downsample_factor": 2, "window": WindowConfig(100, 12),
                    "model": {"branches": "by_prefix"}, "train": LARA_TRAIN},
    "motionsense": {"downsample_factor": 1, "window": WindowConfig(200, 25),
                    "model": {"branches": "single"}, "train": MOTIONSENSE_TRAIN},
}


def data_path(name: str) -> Path:
    return Path(str(resources.files("harbias") / "data" / name))


def lara_subjects() -> list:
    """The 14 LARa subjects (id, gender, age, weight, height, handedness)."""
    import shutil
    import tempfile

    with tempfile.TemporaryDirectory() as tmp:
        shutil.copy(data_path("lara_subjects.csv"), Path(tmp) / "subjects.csv")
        return _lara_subjects(Path(tmp), ",")


def motionsense_subjects() -> list:
    """The 24 MotionSense subjects from ``data_subjects_info.csv``."""
    import shutil
    import tempfile

    with tempfile.TemporaryDirectory() as tmp:
        shutil.copy(data_path("motionsense_subjects.csv"), Path(tmp) / "data_subjects_info.csv")
        return _motionsense_subjects(Path(tmp), ",")


def published_settings(dataset: str) -> list:
    """Raw manifest entries (``setting_id``, ``hm``, ``train_subjects``,
    ``seed``, ``n_training_sequences``) for ``"lara"`` or ``"motionsense"``."""
    return json.loads(data_path(f"{dataset}_manifest.json").read_text())
