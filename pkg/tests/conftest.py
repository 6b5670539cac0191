import csv
import sys
from pathlib import Path

import numpy as np
import pytest

from harbias.core import LabeledDataset, Recording, SubjectProfile
from harbias.ingestion import LARA_CLASSES, MOTIONSENSE_CHANNELS
from harbias.synthetic import SynthConfig, generate_synthetic


def make_subjects(n, seed=0):
    rng = np.random.default_rng(seed)
    return [SubjectProfile(str(i + 1), int(rng.integers(20, 60)), "male" if i % 2 else "female",
                           float(rng.uniform(150, 195)), float(rng.uniform(45, 100)))
            for i in range(n)]


def make_dataset(n_subjects=3, frames=40, channels=("a", "b"), n_classes=3, seed=0,
                 recs_per_subject=1):
    rng = np.random.default_rng(seed)
    subjects = make_subjects(n_subjects, seed)
    recs = []
    for s in subjects:
        for _ in range(recs_per_subject):
            recs.append(Recording(s.subject_id, 50.0, channels,
                                  rng.normal(size=(frames, len(channels))),
                                  rng.integers(0, n_classes, size=frames)))
    return LabeledDataset("toy", tuple(f"c{i}" for i in range(n_classes)), subjects, recs)


def write_lara(root: Path, n_subjects=3, frames=30, label_mode="column", seed=0):
    rng = np.random.default_rng(seed)
    root.mkdir(parents=True, exist_ok=True)
    with open(root / "subjects.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "gender", "age", "weight_kg", "height_cm", "handedness"])
        for i in range(1, n_subjects + 1):
            w.writerow([f"S{i:02d}", "M" if i % 2 else "F", 20 + 5 * i, 60 + i, 160 + 2 * i, "R"])
    for i in range(1, n_subjects + 1):
        x = rng.normal(size=(frames, 4))
        y = rng.integers(0, len(LARA_CLASSES), size=frames)
        path = root / f"S{i:02d}_R01.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            head = ["sample", "head_x", "head_y", "lhand_x", "lhand_y"]
            w.writerow(head + (["class"] if label_mode == "column" else []))
            for t in range(frames):
                row = [t] + [repr(float(v)) for v in x[t]]
                if label_mode == "column":
                    row.append(LARA_CLASSES[y[t]])
                w.writerow(row)
        if label_mode == "file":
            with open(root / f"S{i:02d}_R01_labels.csv", "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["class"])
                w.writerows([[int(v)] for v in y])
    return root


def write_motionsense(root: Path, n_subjects=2, frames=25, activities=("wlk_7", "jog_9"), seed=0,
                      channels=MOTIONSENSE_CHANNELS):
    rng = np.random.default_rng(seed)
    root.mkdir(parents=True, exist_ok=True)
    with open(root / "data_subjects_info.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["code", "weight", "height", "age", "gender"])
        for i in range(1, n_subjects + 1):
            w.writerow([i, 60 + 3 * i, 165 + i, 25 + i, i % 2])
    for act in activities:
        d = root / "A_DeviceMotion_data" / act
        d.mkdir(parents=True)
        for i in range(1, n_subjects + 1):
            with open(d / f"sub_{i}.csv", "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow([""] + list(channels) + ["extra"])
                for t, row in enumerate(rng.normal(size=(frames, len(channels) + 1))):
                    w.writerow([t] + [repr(float(v)) for v in row])
    return root


@pytest.fixture(scope="session")
def small_synth():
    return generate_synthetic(SynthConfig(frames_per_recording=600, seed=3))


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not getattr(mod, "LINES", None):
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.LINES:
        terminalreporter.write_line(line)
