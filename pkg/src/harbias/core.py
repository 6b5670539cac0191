"""Canonical domain types and the on-disk dataset layout.

Every ingested dataset is normalized into a :class:`LabeledDataset`, which can
be written to and read back from the canonical layout::

    <root>/meta.json
    <root>/recordings/<subject_id>_<k>.csv

Each recording CSV has one header row (channel names followed by ``label``),
one row per frame, and an integer class id in the last column.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import ArgumentError, IngestError

__all__ = [
    "Gender", "AgeClass", "HeightClass", "WeightClass", "Handedness",
    "SubjectProfile", "BinarizedProfile", "Recording", "LabeledDataset",
    "natural_key", "save_dataset", "load_canonical",
]


class Gender(str, Enum):
    FEMALE = "female"
    MALE = "male"


class AgeClass(str, Enum):
    YOUNG = "young"
    OLD = "old"


class HeightClass(str, Enum):
    SHORT = "short"
    TALL = "tall"


class WeightClass(str, Enum):
    LIGHT = "light"
    HEAVY = "heavy"


class Handedness(str, Enum):
    LEFT = "left"
    RIGHT = "right"


def natural_key(subject_id: str):
    """Sort key that orders ``"2"`` before ``"10"``."""
    return [int(tok) if tok.isdigit() else tok
            for tok in re.split(r"(\d+)", str(subject_id))]


@dataclass(frozen=True)
class SubjectProfile:
    """Raw soft-biometrics of one recorded person."""

    subject_id: str
    age: int
    gender: Gender
    height: float
    weight: float
    handedness: Optional[Handedness] = None

    def __post_init__(self):
        object.__setattr__(self, "subject_id", str(self.subject_id))
        object.__setattr__(self, "gender", Gender(self.gender))
        if self.handedness is not None:
            object.__setattr__(self, "handedness", Handedness(self.handedness))
        if not (self.age > 0 and self.height > 0 and self.weight > 0):
            raise ArgumentError(
                "invalid_profile",
                f"subject {self.subject_id}: age, height and weight must be positive")


@dataclass(frozen=True)
class BinarizedProfile:
    subject_id: str
    age_class: AgeClass
    gender: Gender
    height_class: Optional[HeightClass] = None
    weight_class: Optional[WeightClass] = None

    def __post_init__(self):
        object.__setattr__(self, "age_class", AgeClass(self.age_class))
        object.__setattr__(self, "gender", Gender(self.gender))
        if self.height_class is not None:
            object.__setattr__(self, "height_class", HeightClass(self.height_class))
        if self.weight_class is not None:
            object.__setattr__(self, "weight_class", WeightClass(self.weight_class))

    @property
    def key(self) -> tuple:
        """The (age_class, gender) pair curation operates on."""
        return (self.age_class, self.gender)

    @property
    def code(self) -> str:
        """Two-letter profile code such as ``YF`` or ``OM``."""
        return self.age_class.value[0].upper() + self.gender.value[0].upper()


@dataclass(frozen=True, eq=False)
class Recording:
    """One contiguous multi-channel recording of a single subject.

    ``samples`` is ``[frames, channels]`` float64 and ``frame_labels`` is
    ``[frames]`` int64. Both arrays are made read-only on construction.
    """

    subject_id: str
    sampling_rate: float
    channels: tuple
    samples: np.ndarray
    frame_labels: np.ndarray

    def __post_init__(self):
        samples = np.array(self.samples, dtype=np.float64)
        labels = np.array(self.frame_labels, dtype=np.int64)
        if samples.ndim != 2:
            raise ArgumentError("bad_shape", "samples must be a [frames x channels] matrix")
        if samples.shape[0] != labels.shape[0]:
            raise ArgumentError(
                "bad_shape",
                f"{samples.shape[0]} sample rows but {labels.shape[0]} frame labels")
        channels = tuple(str(c) for c in self.channels)
        if len(channels) < 1 or len(channels) != samples.shape[1]:
            raise ArgumentError("bad_shape", "channel names do not match sample columns")
        samples.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "subject_id", str(self.subject_id))
        object.__setattr__(self, "sampling_rate", float(self.sampling_rate))
        object.__setattr__(self, "channels", channels)
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "frame_labels", labels)

    @property
    def n_frames(self) -> int:
        return self.samples.shape[0]

    def __eq__(self, other):
        if not isinstance(other, Recording):
            return NotImplemented
        return (self.subject_id == other.subject_id
                and self.sampling_rate == other.sampling_rate
                and self.channels == other.channels
                and np.array_equal(self.samples, other.samples)
                and np.array_equal(self.frame_labels, other.frame_labels))

    __hash__ = None


@dataclass(frozen=True)
class LabeledDataset:
    name: str
    class_names: tuple
    subjects: tuple
    recordings: tuple = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "class_names", tuple(self.class_names))
        object.__setattr__(self, "subjects", tuple(self.subjects))
        object.__setattr__(self, "recordings", tuple(self.recordings))
        ids = [s.subject_id for s in self.subjects]
        if len(set(ids)) != len(ids):
            raise ArgumentError("duplicate_subject", "subject ids must be unique")
        known = set(ids)
        n_classes = len(self.class_names)
        channels = None
        for rec in self.recordings:
            if rec.subject_id not in known:
                raise ArgumentError("unknown_subject",
                                    f"recording references unknown subject {rec.subject_id}")
            if channels is None:
                channels = rec.channels
            elif rec.channels != channels:
                raise ArgumentError("channel_mismatch",
                                    "all recordings must share the same channels")
            if rec.n_frames and (rec.frame_labels.min() < 0
                                 or rec.frame_labels.max() >= n_classes):
                raise ArgumentError("bad_label", "frame label outside class_names")

    @property
    def channels(self) -> tuple:
        return self.recordings[0].channels if self.recordings else ()

    @property
    def sampling_rate(self) -> Optional[float]:
        return self.recordings[0].sampling_rate if self.recordings else None

    @property
    def subject_ids(self) -> list:
        return [s.subject_id for s in self.subjects]

    def subject(self, subject_id) -> SubjectProfile:
        for s in self.subjects:
            if s.subject_id == str(subject_id):
                return s
        raise KeyError(subject_id)

    def recordings_of(self, subject_id) -> list:
        return [r for r in self.recordings if r.subject_id == str(subject_id)]


def _subject_to_json(s: SubjectProfile) -> dict:
    out = {"id": s.subject_id, "age": s.age, "gender": s.gender.value,
           "height_cm": s.height, "weight_kg": s.weight}
    if s.handedness is not None:
        out["handedness"] = s.handedness.value
    return out


def _subject_from_json(d: dict) -> SubjectProfile:
    return SubjectProfile(subject_id=str(d["id"]), age=d["age"], gender=d["gender"],
                          height=d["height_cm"], weight=d["weight_kg"],
                          handedness=d.get("handedness"))


def save_dataset(dataset: LabeledDataset, root) -> Path:
    """Write ``dataset`` in the canonical layout under ``root``."""
    root = Path(root)
    rec_dir = root / "recordings"
    rec_dir.mkdir(parents=True, exist_ok=True)
    counters: dict = {}
    files = []
    for rec in dataset.recordings:
        k = counters.get(rec.subject_id, 0)
        counters[rec.subject_id] = k + 1
        name = f"{rec.subject_id}_{k}.csv"
        table = np.column_stack([rec.samples, rec.frame_labels.astype(np.float64)])
        fmt = ["%.17g"] * rec.samples.shape[1] + ["%d"]
        np.savetxt(rec_dir / name, table, delimiter=",", fmt=fmt,
                   header=",".join(rec.channels + ("label",)), comments="")
        files.append({"subject_id": rec.subject_id, "file": name})
    meta = {
        "name": dataset.name,
        "sampling_rate_hz": dataset.sampling_rate,
        "channels": list(dataset.channels),
        "class_names": list(dataset.class_names),
        "subjects": [_subject_to_json(s) for s in dataset.subjects],
        "recordings": files,
    }
    (root / "meta.json").write_text(json.dumps(meta, indent=2))
    return root


def _read_recording_csv(path: Path, subject_id: str, rate: float, channels: Sequence[str]):
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    if header[:-1] != list(channels):
        raise IngestError("channel_mismatch",
                          f"{path.name}: header {header[:-1]} != meta channels")
    table = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if table.shape[0] == 0:
        table = np.zeros((0, len(channels) + 1))
    return Recording(subject_id=subject_id, sampling_rate=rate, channels=tuple(channels),
                     samples=table[:, :-1], frame_labels=table[:, -1].astype(np.int64))


def load_canonical(root) -> LabeledDataset:
    """Read a dataset written by :func:`save_dataset`."""
    root = Path(root)
    meta_path = root / "meta.json"
    if not meta_path.is_file():
        raise IngestError("missing_meta", f"no meta.json under {root}")
    meta = json.loads(meta_path.read_text())
    subjects = [_subject_from_json(d) for d in meta["subjects"]]
    rate = meta.get("sampling_rate_hz")
    channels = meta.get("channels", [])
    rec_dir = root / "recordings"
    if "recordings" in meta:
        entries = [(e["subject_id"], rec_dir / e["file"]) for e in meta["recordings"]]
    else:
        order = {s.subject_id: i for i, s in enumerate(subjects)}
        found = []
        for p in rec_dir.glob("*.csv") if rec_dir.is_dir() else []:
            sid, _, k = p.stem.rpartition("_")
            found.append((order.get(sid, len(order)), int(k), sid, p))
        entries = [(sid, p) for _, _, sid, p in sorted(found)]
    if not entries:
        raise IngestError("empty_dataset", f"no recordings under {rec_dir}")
    recordings = []
    for sid, path in entries:
        if not path.is_file():
            raise IngestError("missing_recording", str(path))
        recordings.append(_read_recording_csv(path, str(sid), rate, channels))
    try:
        return LabeledDataset(name=meta["name"], class_names=meta["class_names"],
                              subjects=subjects, recordings=recordings)
    except ArgumentError as exc:
        raise IngestError(exc.reason, str(exc)) from exc
