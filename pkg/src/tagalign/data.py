"""Dataset records (JSONL) and the CRTF binary frame-feature format.

CRTF layout, all integers little-endian:
    magic   4 bytes b"CRTF"
    version u16
    frames  u32  (>= 1)
    width   u32  (>= 1)
    payload frames x width float32, little-endian

Values are promoted to float64 on load. Every structural problem
raises DataError; nothing is ever silently accepted.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError

FEATURE_MAGIC = b"CRTF"
FEATURE_VERSION = 1


def write_features(path, frames):
    """Write a (frames, width) float array as a CRTF file."""
    arr = np.asarray(frames, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise DataError(f"feature array must be (frames>=1, width>=1), "
                        f"got {arr.shape}")
    if not np.isfinite(arr).all():
        raise DataError("refusing to write non-finite feature values")
    header = FEATURE_MAGIC + struct.pack("<HII", FEATURE_VERSION,
                                         arr.shape[0], arr.shape[1])
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(arr.astype("<f4").tobytes())


def read_features(path):
    """Parse a CRTF file into a float64 (frames, width) array."""
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as err:
        raise DataError(f"cannot read feature file {path}: {err}") from err
    head = struct.calcsize("<HII") + 4
    if len(blob) < head:
        raise DataError(f"feature file {path} shorter than its header")
    if blob[:4] != FEATURE_MAGIC:
        raise DataError(f"feature file {path} has wrong magic bytes")
    version, n, width = struct.unpack("<HII", blob[4:head])
    if version != FEATURE_VERSION:
        raise DataError(f"feature file {path} has unsupported version {version}")
    if n < 1 or width < 1:
        raise DataError(f"feature file {path} declares empty shape ({n}, {width})")
    expected = n * width * 4
    got = len(blob) - head
    if got != expected:
        raise DataError(
            f"feature file {path} payload is {got} bytes, header implies "
            f"{expected}"
        )
    arr = np.frombuffer(blob, dtype="<f4", offset=head).astype(np.float64)
    arr = arr.reshape(n, width)
    if not np.isfinite(arr).all():
        raise DataError(f"feature file {path} contains non-finite values")
    return arr


@dataclass
class DatasetRecord:
    """One video with its annotations; ``feature_file`` is a path
    relative to the dataset file's directory."""

    video_id: str
    feature_file: str
    category: str
    tags: list[str] = field(default_factory=list)
    title: str = ""
    captions: list[str] = field(default_factory=list)

    def to_json_dict(self):
        return {
            "video_id": self.video_id,
            "feature_file": self.feature_file,
            "category": self.category,
            "tags": list(self.tags),
            "title": self.title,
            "captions": list(self.captions),
        }


_FIELDS = {
    "video_id": str,
    "feature_file": str,
    "category": str,
    "tags": list,
    "title": str,
    "captions": list,
}


def _validate_record(blob, lineno, path):
    if not isinstance(blob, dict):
        raise DataError(f"{path}:{lineno}: record is not a JSON object")
    unknown = sorted(set(blob) - set(_FIELDS))
    if unknown:
        raise DataError(f"{path}:{lineno}: unknown fields {unknown}")
    for name, kind in _FIELDS.items():
        if name not in blob:
            raise DataError(f"{path}:{lineno}: missing field {name!r}")
        if not isinstance(blob[name], kind):
            raise DataError(
                f"{path}:{lineno}: field {name!r} must be {kind.__name__}"
            )
    for name in ("tags", "captions"):
        if not all(isinstance(x, str) for x in blob[name]):
            raise DataError(f"{path}:{lineno}: {name} must be a list of strings")
    if not blob["video_id"]:
        raise DataError(f"{path}:{lineno}: empty video_id")
    if not blob["title"]:
        raise DataError(f"{path}:{lineno}: empty title")
    return DatasetRecord(**blob)


def resolve_feature_path(dataset_path, record):
    return Path(dataset_path).parent / record.feature_file


def load_dataset(path, check_features=True, require_tags=False):
    """Read and validate a JSONL dataset.

    With ``check_features`` every referenced CRTF file is parsed so a
    loaded dataset is guaranteed usable. ``require_tags`` additionally
    rejects records with an empty tag list (labeled splits).
    """
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().split("\n")
    except (OSError, UnicodeDecodeError) as err:
        raise DataError(f"cannot read dataset {path}: {err}") from err
    records = []
    seen = set()
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            blob = json.loads(line)
        except json.JSONDecodeError as err:
            raise DataError(f"{path}:{lineno}: invalid JSON ({err.msg})") from err
        record = _validate_record(blob, lineno, path)
        if record.video_id in seen:
            raise DataError(
                f"{path}:{lineno}: duplicate video_id {record.video_id!r}"
            )
        seen.add(record.video_id)
        if require_tags and not record.tags:
            raise DataError(
                f"{path}:{lineno}: record {record.video_id!r} has no tags"
            )
        feature_path = resolve_feature_path(path, record)
        if not feature_path.exists():
            raise DataError(
                f"{path}:{lineno}: feature file not found: {feature_path}"
            )
        if check_features:
            read_features(feature_path)
        records.append(record)
    if not records:
        raise DataError(f"dataset {path} contains no records")
    return records


def save_dataset(path, records):
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record.to_json_dict(), ensure_ascii=False,
                                sort_keys=True))
            fh.write("\n")


def load_features_for(records, dataset_path):
    """Frame arrays keyed by video id; ids are unique per dataset."""
    return {r.video_id: read_features(resolve_feature_path(dataset_path, r))
            for r in records}
