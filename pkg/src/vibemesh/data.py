"""Dataset manifests, frame records, and leakage-checked split plans.

A dataset directory contains ``manifest.json`` (a JSON array of session
entries: subject_id, object_id, mesh_dir, wav_paths, labels_path, plus
annotation-side extras) and ``dataset.json`` (seed, held-out ids). Meshes are
per-frame TEN1 vertex blobs; labels are JSON-lines; audio is one 5-channel
WAV per session.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .audio import load_recording, preprocess_recording
from .tensor import read_ten1


@dataclass
class FrameRecord:
    """One synchronized sample."""

    vertices: np.ndarray  # (N, 3) mm
    spectrogram: np.ndarray  # (C, F, T), raw (pre-normalization)
    labels: np.ndarray  # (N,) uint8
    subject_id: str
    object_id: str
    session_id: str
    frame_index: int

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.uint8)
        if len(self.labels) != len(self.vertices):
            raise ValueError("label length must equal vertex count")
        if self.spectrogram.shape[0] != 5:
            raise ValueError("spectrogram stack must have 5 channels")

    @property
    def contact_mask(self) -> np.ndarray:
        return self.labels.astype(bool)


@dataclass
class SessionEntry:
    subject_id: str
    object_id: str
    session_id: str
    mesh_dir: str
    wav_paths: list
    labels_path: str
    extras: dict = field(default_factory=dict)
    root: str = "."

    @classmethod
    def from_dict(cls, d: dict, root: Path) -> "SessionEntry":
        known = {"subject_id", "object_id", "session_id", "mesh_dir", "wav_paths", "labels_path"}
        return cls(
            subject_id=str(d["subject_id"]),
            object_id=str(d["object_id"]),
            session_id=str(d.get("session_id", f"{d['subject_id']}_{d['object_id']}")),
            mesh_dir=str(root / d["mesh_dir"]),
            wav_paths=[str(root / p) for p in d["wav_paths"]],
            labels_path=str(root / d["labels_path"]),
            extras={k: v for k, v in d.items() if k not in known},
            root=str(root),
        )

    def extra_path(self, key: str):
        """Resolve a manifest-relative extra (cloud_dir, object_mesh, ...)."""
        if key not in self.extras:
            return None
        value = self.extras[key]
        if isinstance(value, list):
            return [v if os.path.isabs(v) else str(Path(self.root) / v) for v in value]
        return value if os.path.isabs(value) else str(Path(self.root) / value)


def load_manifest(path) -> list[SessionEntry]:
    path = Path(path)
    with open(path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    if not isinstance(raw, list):
        raise ValueError("manifest must be a JSON array of session entries")
    return [SessionEntry.from_dict(d, path.parent) for d in raw]


def load_dataset_info(manifest_path) -> dict:
    """Sidecar dataset.json next to the manifest (held-out ids, seed)."""
    side = Path(manifest_path).parent / "dataset.json"
    if side.exists():
        return json.loads(side.read_text())
    return {}


def read_labels_jsonl(path) -> dict[int, np.ndarray]:
    out = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            d = json.loads(line)
            out[int(d["frame"])] = np.asarray(d["contact"], dtype=np.uint8)
    return out


def write_labels_jsonl(path, labels_by_frame: dict[int, np.ndarray], threshold_mm: float):
    with open(path, "w", encoding="utf-8") as fh:
        for k in sorted(labels_by_frame):
            row = {"frame": int(k), "threshold_mm": float(threshold_mm),
                   "contact": np.asarray(labels_by_frame[k]).astype(int).tolist()}
            fh.write(json.dumps(row) + "\n")


def session_frame_meshes(entry: SessionEntry) -> list[str]:
    mesh_dir = Path(entry.mesh_dir)
    return sorted(str(p) for p in mesh_dir.glob("frame_*.ten"))


def load_session_frames(entry: SessionEntry, cache_dir=None) -> list[FrameRecord]:
    """Materialize a session's frame records (raw spectrograms).

    Spectrogram stacks come from the preprocess cache when present,
    otherwise straight from the WAV through the audio pipeline.
    """
    mesh_paths = session_frame_meshes(entry)
    labels = read_labels_jsonl(entry.labels_path)
    stacks = None
    if cache_dir is not None:
        cached = Path(cache_dir) / f"{entry.session_id}.ten"
        if cached.exists():
            stacks = read_ten1(cached)
    if stacks is None:
        rec = load_recording(entry.wav_paths, subject_id=entry.subject_id, object_id=entry.object_id)
        stacks, _ = preprocess_recording(rec)
    n = min(len(mesh_paths), len(labels), len(stacks))
    frames = []
    for k in range(n):
        if k not in labels:
            continue
        frames.append(FrameRecord(
            vertices=read_ten1(mesh_paths[k]).astype(np.float64),
            spectrogram=np.asarray(stacks[k], dtype=np.float32),
            labels=labels[k],
            subject_id=entry.subject_id,
            object_id=entry.object_id,
            session_id=entry.session_id,
            frame_index=k,
        ))
    return frames


SPLIT_NAMES = ("train", "val", "test", "unseen-object", "unseen-subject")


class SplitLeakageError(AssertionError):
    """A split plan violated a leakage invariant."""


@dataclass
class SplitPlan:
    """Session-level split assignments with leakage invariants.

    Held-out-object test sessions share no object with training; held-out-
    subject sessions share no subject; sessions never straddle splits (the
    session is the assignment unit). Validation takes ~10% of training
    sessions, stratified by object.
    """

    held_out_objects: set
    held_out_subjects: set
    assignments: dict  # session_id -> split name
    sessions: dict  # session_id -> SessionEntry

    @classmethod
    def build(cls, sessions: list[SessionEntry], held_out_objects, held_out_subjects,
              val_fraction: float = 0.1) -> "SplitPlan":
        held_obj = {str(x) for x in held_out_objects}
        held_subj = {str(x) for x in held_out_subjects}
        assignments: dict[str, str] = {}
        seen_pool: list[SessionEntry] = []
        for s in sorted(sessions, key=lambda e: e.session_id):
            obj_held = s.object_id in held_obj
            subj_held = s.subject_id in held_subj
            if obj_held and subj_held:
                assignments[s.session_id] = "excluded"
            elif obj_held:
                assignments[s.session_id] = "unseen-object"
            elif subj_held:
                assignments[s.session_id] = "unseen-subject"
            else:
                seen_pool.append(s)

        by_pair: dict[tuple, list[SessionEntry]] = {}
        for s in seen_pool:
            by_pair.setdefault((s.subject_id, s.object_id), []).append(s)
        train_pool: list[SessionEntry] = []
        for pair in sorted(by_pair):
            group = sorted(by_pair[pair], key=lambda e: e.session_id)
            if len(group) > 1:
                assignments[group[-1].session_id] = "test"
                group = group[:-1]
            train_pool.extend(group)

        train_pool.sort(key=lambda e: (e.object_id, e.session_id))
        n_val = int(round(val_fraction * len(train_pool))) if len(train_pool) >= 2 else 0
        n_val = max(n_val, 1) if len(train_pool) >= 4 and val_fraction > 0 else n_val
        val_ids = set()
        if n_val:
            stride = len(train_pool) / n_val
            val_ids = {train_pool[int(i * stride)].session_id for i in range(n_val)}
        for s in train_pool:
            assignments[s.session_id] = "val" if s.session_id in val_ids else "train"

        plan = cls(held_obj, held_subj, assignments, {s.session_id: s for s in sessions})
        plan.assert_invariants()
        return plan

    def split_sessions(self, name: str) -> list[SessionEntry]:
        return [self.sessions[sid] for sid, sp in sorted(self.assignments.items()) if sp == name]

    def assert_invariants(self):
        train_objs = {self.sessions[sid].object_id for sid, sp in self.assignments.items()
                      if sp in ("train", "val")}
        train_subjs = {self.sessions[sid].subject_id for sid, sp in self.assignments.items()
                       if sp in ("train", "val")}
        for sid, sp in self.assignments.items():
            s = self.sessions[sid]
            if sp == "unseen-object":
                if s.object_id in train_objs:
                    raise SplitLeakageError(f"unseen-object session {sid} leaks object {s.object_id}")
            if sp == "unseen-subject":
                if s.subject_id in train_subjs:
                    raise SplitLeakageError(f"unseen-subject session {sid} leaks subject {s.subject_id}")
            if sp in ("train", "val", "test"):
                if s.object_id in self.held_out_objects or s.subject_id in self.held_out_subjects:
                    raise SplitLeakageError(f"held-out id leaked into {sp} via session {sid}")
        # A session id is assigned exactly once by construction (dict), which
        # is what keeps sessions from straddling train and test.

    def load_frames(self, name: str, cache_dir=None) -> list[FrameRecord]:
        frames = []
        for entry in self.split_sessions(name):
            frames.extend(load_session_frames(entry, cache_dir=cache_dir))
        return frames
