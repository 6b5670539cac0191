"""Parsers for LARa-style OMoCap exports and MotionSense device-motion CSVs.

Both source layouts are normalized into :class:`~harbias.core.LabeledDataset`.

LARa-style OMoCap root::

    <root>/subjects.csv            id,gender,age,weight_kg,height_cm[,handedness]
    <root>/**/<...>_S<NN>_R<NN>.csv

Each recording file has a header row. A leading ``sample``/``time`` column is
dropped. Activity labels come either from a ``class`` column inside the file
or from the first column of a sibling ``<stem>_labels.csv``; labels may be
activity names or integer class ids.

MotionSense root (the public ``A_DeviceMotion_data`` release)::

    <root>/data_subjects_info.csv  code,weight,height,age,gender (1 = male)
    <root>/A_DeviceMotion_data/<activity>_<trial>/sub_<n>.csv
"""

from __future__ import annotations

import csv
import logging
import re
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .core import LabeledDataset, Recording, SubjectProfile, load_canonical, natural_key
from .errors import ArgumentError, IngestError

__all__ = [
    "DatasetKind", "IngestConfig", "load_dataset", "downsample",
    "LARA_CLASSES", "MOTIONSENSE_CLASSES", "MOTIONSENSE_CHANNELS",
]

log = logging.getLogger(__name__)

LARA_CLASSES = ("Standing", "Walking", "Cart", "Handling (upwards)",
                "Handling (centred)", "Handling (downwards)", "Synchronization", "None")
LARA_RATE_HZ = 200.0

MOTIONSENSE_CODES = ("dws", "ups", "wlk", "jog", "sit", "std")
MOTIONSENSE_CLASSES = ("downstairs", "upstairs", "walking", "jogging", "sitting", "standing")
MOTIONSENSE_RATE_HZ = 50.0
# attitude + rotation rate + user acceleration; gravity left out
MOTIONSENSE_CHANNELS = (
    "attitude.roll", "attitude.pitch", "attitude.yaw",
    "rotationRate.x", "rotationRate.y", "rotationRate.z",
    "userAcceleration.x", "userAcceleration.y", "userAcceleration.z",
)

_TIME_COLUMNS = {"", "sample", "samples", "frame", "time", "timestamp", "unnamed: 0"}
_LABEL_COLUMNS = {"class", "label", "activity"}


class DatasetKind(str, Enum):
    LARA_OMOCAP = "lara_omocap"
    MOTIONSENSE = "motionsense"
    CANONICAL = "canonical"


@dataclass(frozen=True)
class IngestConfig:
    dataset_kind: DatasetKind
    root_path: Path
    downsample_factor: int = 1
    channel_selection: Optional[Sequence[str]] = None
    delimiter: str = ","
    source_rate_hz: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "dataset_kind", DatasetKind(self.dataset_kind))
        object.__setattr__(self, "root_path", Path(self.root_path))
        if int(self.downsample_factor) != self.downsample_factor or self.downsample_factor < 1:
            raise ArgumentError("bad_factor", "downsample_factor must be an integer >= 1")


def downsample(recording: Recording, factor: int) -> Recording:
    """Keep every ``factor``-th frame starting at frame 0 (no anti-alias filter)."""
    if isinstance(factor, bool) or int(factor) != factor or factor < 1:
        raise ArgumentError("bad_factor", f"downsample factor must be a positive integer, got {factor}")
    factor = int(factor)
    if factor == 1:
        return recording
    return Recording(subject_id=recording.subject_id,
                     sampling_rate=recording.sampling_rate / factor,
                     channels=recording.channels,
                     samples=recording.samples[::factor],
                     frame_labels=recording.frame_labels[::factor])


def load_dataset(config: IngestConfig) -> LabeledDataset:
    root = config.root_path
    if not root.exists():
        raise IngestError("missing_root", str(root))
    if config.dataset_kind is DatasetKind.CANONICAL:
        dataset = load_canonical(root)
    elif config.dataset_kind is DatasetKind.MOTIONSENSE:
        dataset = _load_motionsense(config)
    else:
        dataset = _load_lara(config)
    if config.channel_selection is not None and config.dataset_kind is DatasetKind.CANONICAL:
        dataset = _select_channels(dataset, config.channel_selection)
    if config.downsample_factor > 1:
        dataset = LabeledDataset(
            name=dataset.name, class_names=dataset.class_names, subjects=dataset.subjects,
            recordings=[downsample(r, config.downsample_factor) for r in dataset.recordings])
    return dataset


def _select_channels(dataset: LabeledDataset, names: Sequence[str]) -> LabeledDataset:
    index = {c: i for i, c in enumerate(dataset.channels)}
    missing = [n for n in names if n not in index]
    if missing:
        raise IngestError("channel_mismatch", f"channels not present: {missing}")
    cols = [index[n] for n in names]
    recs = [Recording(r.subject_id, r.sampling_rate, tuple(names), r.samples[:, cols],
                      r.frame_labels) for r in dataset.recordings]
    return LabeledDataset(dataset.name, dataset.class_names, dataset.subjects, recs)


def _read_table(path: Path, delimiter: str):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh, delimiter=delimiter))
    if not rows:
        raise IngestError("empty_file", str(path))
    return [h.strip() for h in rows[0]], rows[1:]


def _numeric(cells, n_cols: int, path: Path) -> np.ndarray:
    try:
        return np.array([[float(v) for v in row] for row in cells],
                        dtype=np.float64).reshape(-1, n_cols)
    except (ValueError, IndexError) as exc:
        raise IngestError("bad_value", f"{path.name}: {exc}") from None


def _finish(name, class_names, subjects, recordings):
    if not recordings:
        raise IngestError("empty_dataset", f"{name}: no recordings found")
    recordings.sort(key=lambda r: natural_key(r[0]))
    try:
        return LabeledDataset(name=name, class_names=class_names, subjects=subjects,
                              recordings=[r[1] for r in recordings])
    except ArgumentError as exc:
        raise IngestError(exc.reason, str(exc)) from exc


# -- MotionSense -------------------------------------------------------------

def _motionsense_subjects(root: Path, delimiter: str) -> list:
    meta = root / "data_subjects_info.csv"
    if not meta.is_file():
        raise IngestError("missing_meta", f"{meta} not found")
    header, rows = _read_table(meta, delimiter)
    col = {h: i for i, h in enumerate(header)}
    subjects = []
    for row in rows:
        if not row:
            continue
        subjects.append(SubjectProfile(
            subject_id=str(int(float(row[col["code"]]))),
            age=int(float(row[col["age"]])),
            gender="male" if int(float(row[col["gender"]])) == 1 else "female",
            height=float(row[col["height"]]),
            weight=float(row[col["weight"]])))
    return subjects


def _load_motionsense(config: IngestConfig) -> LabeledDataset:
    root = config.root_path
    subjects = _motionsense_subjects(root, config.delimiter)
    data_root = root / "A_DeviceMotion_data"
    if not data_root.is_dir():
        data_root = root
    channels = tuple(config.channel_selection or MOTIONSENSE_CHANNELS)
    rate = config.source_rate_hz or MOTIONSENSE_RATE_HZ
    recordings = []
    for trial_dir in sorted((p for p in data_root.iterdir() if p.is_dir()),
                            key=lambda p: natural_key(p.name)):
        code = trial_dir.name.split("_")[0]
        if code not in MOTIONSENSE_CODES:
            raise IngestError("unknown_label", f"activity folder {trial_dir.name!r}")
        label = MOTIONSENSE_CODES.index(code)
        for path in sorted(trial_dir.glob("sub_*.csv"), key=lambda p: natural_key(p.name)):
            sid = str(int(path.stem.split("_")[1]))
            header, rows = _read_table(path, config.delimiter)
            idx = {h: i for i, h in enumerate(header)}
            missing = [c for c in channels if c not in idx]
            if missing:
                raise IngestError("channel_mismatch", f"{path}: missing {missing}")
            cols = [idx[c] for c in channels]
            samples = _numeric([[r[i] for i in cols] for r in rows if r], len(cols), path)
            rec = Recording(sid, rate, channels, samples,
                            np.full(samples.shape[0], label, dtype=np.int64))
            recordings.append((f"{sid}/{trial_dir.name}", rec))
    return _finish("motionsense", MOTIONSENSE_CLASSES, subjects, recordings)


# -- LARa OMoCap -------------------------------------------------------------

_LARA_FILE = re.compile(r"S(\d+)_R(\d+)", re.IGNORECASE)


def _lara_subjects(root: Path, delimiter: str) -> list:
    meta = root / "subjects.csv"
    if not meta.is_file():
        raise IngestError("missing_meta", f"{meta} not found")
    header, rows = _read_table(meta, delimiter)
    col = {h.lower(): i for i, h in enumerate(header)}
    subjects = []
    for row in rows:
        if not row:
            continue
        hand = row[col["handedness"]].strip().lower() if "handedness" in col else ""
        hand = {"l": "left", "r": "right"}.get(hand, hand) or None
        gender = row[col["gender"]].strip().lower()
        gender = {"f": "female", "m": "male"}.get(gender, gender)
        sid = row[col["id"]].strip().upper().lstrip("S")
        subjects.append(SubjectProfile(
            subject_id=str(int(sid)), age=int(float(row[col["age"]])), gender=gender,
            height=float(row[col["height_cm"]]), weight=float(row[col["weight_kg"]]),
            handedness=hand))
    return subjects


def _parse_labels(values, class_names, path):
    lookup = {name.lower(): i for i, name in enumerate(class_names)}
    out = np.empty(len(values), dtype=np.int64)
    for i, raw in enumerate(values):
        token = raw.strip()
        try:
            k = int(float(token))
        except ValueError:
            if token.lower() not in lookup:
                raise IngestError("unknown_label", f"{path.name}: {token!r}") from None
            k = lookup[token.lower()]
        if not 0 <= k < len(class_names):
            raise IngestError("unknown_label", f"{path.name}: class id {k}")
        out[i] = k
    return out


def _load_lara(config: IngestConfig) -> LabeledDataset:
    root = config.root_path
    subjects = _lara_subjects(root, config.delimiter)
    rate = config.source_rate_hz or LARA_RATE_HZ
    channels = None
    recordings = []
    for path in sorted(root.rglob("*.csv"), key=lambda p: natural_key(str(p))):
        match = _LARA_FILE.search(path.stem)
        if match is None or path.stem.lower().endswith("_labels"):
            continue
        sid = str(int(match.group(1)))
        header, rows = _read_table(path, config.delimiter)
        rows = [r for r in rows if r]
        lower = [h.lower() for h in header]
        label_col = next((i for i, h in enumerate(lower) if h in _LABEL_COLUMNS), None)
        data_cols = [i for i, h in enumerate(lower)
                     if i != label_col and h not in _TIME_COLUMNS]
        names = tuple(header[i] for i in data_cols)
        if config.channel_selection is not None:
            missing = [c for c in config.channel_selection if c not in names]
            if missing:
                raise IngestError("channel_mismatch", f"{path.name}: missing {missing}")
            data_cols = [data_cols[names.index(c)] for c in config.channel_selection]
            names = tuple(config.channel_selection)
        if channels is None:
            channels = names
        elif names != channels:
            raise IngestError("channel_mismatch",
                              f"{path.name}: {len(names)} channels, expected {len(channels)}")
        samples = _numeric([[r[i] for i in data_cols] for r in rows], len(data_cols), path)
        if label_col is not None:
            labels = _parse_labels([r[label_col] for r in rows], LARA_CLASSES, path)
        else:
            label_path = path.with_name(path.stem + "_labels.csv")
            if not label_path.is_file():
                raise IngestError("missing_labels", f"no labels for {path.name}")
            _, label_rows = _read_table(label_path, config.delimiter)
            labels = _parse_labels([r[0] for r in label_rows if r], LARA_CLASSES, label_path)
        if labels.shape[0] != samples.shape[0]:
            raise IngestError("label_mismatch",
                              f"{path.name}: {samples.shape[0]} frames, {labels.shape[0]} labels")
        rec = Recording(sid, rate, channels, samples, labels)
        recordings.append((f"{sid}/{int(match.group(2)):04d}", rec))
    log.info("loaded %d LARa recordings", len(recordings))
    return _finish("lara_omocap", LARA_CLASSES, subjects, recordings)
