"""Contact metrics (F1, contact chamfer) and split evaluation reports with
the fixed CSV schema."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .audio import apply_normalization
from .geometry import chamfer_distance

CSV_COLUMNS = ["split", "ablation", "f1_mean", "f1_std", "chamfer_mean_mm",
               "chamfer_std_mm", "frames", "skipped_frames"]


def _as_mask(x, n: int | None):
    """Boolean contact mask from a mask, a 0/1 vector, or a set of ids."""
    if isinstance(x, (set, frozenset)):
        ids = np.fromiter(sorted(x), dtype=np.int64, count=len(x))
        size = n if n is not None else (int(ids.max()) + 1 if len(ids) else 0)
        mask = np.zeros(size, dtype=bool)
        mask[ids] = True
        return mask
    arr = np.asarray(x)
    return arr.astype(bool)


def f1_score(pred, true, n_vertices: int | None = None) -> tuple[float, float, float]:
    """Precision, recall, F1 over contact vertex sets.

    Accepts boolean masks, 0/1 vectors, or id sets (id sets need
    `n_vertices` unless the other argument fixes the length). Conventions:
    both sets empty -> (1, 1, 1); exactly one empty -> F1 = 0.
    """
    if n_vertices is None:
        for other in (pred, true):
            if not isinstance(other, (set, frozenset)):
                n_vertices = len(np.asarray(other))
                break
    p = _as_mask(pred, n_vertices)
    t = _as_mask(true, n_vertices)
    if p.shape != t.shape:
        size = max(len(p), len(t))
        p = np.pad(p, (0, size - len(p)))
        t = np.pad(t, (0, size - len(t)))
    inter = float(np.logical_and(p, t).sum())
    n_pred, n_true = float(p.sum()), float(t.sum())
    if n_pred == 0 and n_true == 0:
        return 1.0, 1.0, 1.0
    precision = inter / n_pred if n_pred else 0.0
    recall = inter / n_true if n_true else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return precision, recall, f1


def contact_chamfer(pred_vertices: np.ndarray, true_vertices: np.ndarray) -> float:
    """Chamfer distance (mm) between predicted and true contact positions."""
    return chamfer_distance(pred_vertices, true_vertices)


@dataclass
class SplitMetrics:
    split: str
    ablation: str
    f1_mean: float
    f1_std: float
    chamfer_mean_mm: float
    chamfer_std_mm: float
    frames: int
    skipped_frames: int
    per_frame: list = field(default_factory=list)

    def csv_row(self) -> list[str]:
        return [self.split, self.ablation,
                f"{self.f1_mean:.6f}", f"{self.f1_std:.6f}",
                f"{self.chamfer_mean_mm:.6f}", f"{self.chamfer_std_mm:.6f}",
                str(self.frames), str(self.skipped_frames)]


def _prediction_fn(model, eval_ablation: str | None):
    """Pick the per-frame prediction function for an evaluation run.

    The trained ablation is the default. `no-audio` can additionally be
    switched on at evaluation time for a full model (the audio embedding is
    zeroed); other variants change parameter shapes and therefore need a
    matching checkpoint.
    """
    trained = model.config.ablation
    ablation = eval_ablation or trained
    if ablation == trained:
        return ablation, model.predict
    if ablation == "no-audio" and trained == "none":
        from . import tensor as T
        from .model import fuse_and_predict
        from .tensor import Tensor

        def predict(vertices, spec):
            with T.no_grad():
                h3, z_mesh = model.encode_mesh(vertices, training=False)
                z_audio = Tensor(np.zeros(model.config.embed_dim, dtype=model.dtype))
                yhat, _ = fuse_and_predict(h3, z_mesh, z_audio, model.params,
                                           model.config, False, None)
            return yhat.data.copy()

        return ablation, predict
    raise ValueError(f"evaluation-time ablation {ablation!r} needs a checkpoint trained "
                     f"with it (this one has {trained!r})")


def evaluate_split(model, frames: list, stats, split: str, threshold: float = 0.5,
                   eval_ablation: str | None = None) -> SplitMetrics:
    """Per-frame F1 and contact chamfer for one split, mean +- std.

    Frames where either contact set is empty are skipped for the chamfer
    aggregate and counted in `skipped_frames`.
    """
    if not frames:
        raise ValueError(f"split {split!r} has no frames")
    ablation, predict = _prediction_fn(model, eval_ablation)
    f1s = []
    chamfers = []
    skipped = 0
    rows = []
    for frame in frames:
        spec = apply_normalization(frame.spectrogram, stats)
        yhat = predict(frame.vertices, spec)
        pred = yhat >= threshold
        true = frame.contact_mask
        precision, recall, f1 = f1_score(pred, true)
        f1s.append(f1)
        row = {"session": frame.session_id, "frame": frame.frame_index,
               "precision": precision, "recall": recall, "f1": f1, "chamfer_mm": None}
        if pred.any() and true.any():
            ch = contact_chamfer(frame.vertices[pred], frame.vertices[true])
            chamfers.append(ch)
            row["chamfer_mm"] = ch
        else:
            skipped += 1
        rows.append(row)
    ch_arr = np.asarray(chamfers, dtype=np.float64)
    return SplitMetrics(
        split=split,
        ablation=ablation,
        f1_mean=float(np.mean(f1s)),
        f1_std=float(np.std(f1s)),
        chamfer_mean_mm=float(ch_arr.mean()) if len(ch_arr) else float("nan"),
        chamfer_std_mm=float(ch_arr.std()) if len(ch_arr) else float("nan"),
        frames=len(frames),
        skipped_frames=skipped,
        per_frame=rows,
    )


def write_metrics_csv(path, rows: list[SplitMetrics]):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for r in rows:
            writer.writerow(r.csv_row())


def read_metrics_csv(path) -> list[dict]:
    with open(path, "r", newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def write_metrics_json(path, rows: list[SplitMetrics], extra: dict | None = None):
    payload = {
        "rows": [
            {"split": r.split, "ablation": r.ablation,
             "f1_mean": r.f1_mean, "f1_std": r.f1_std,
             "chamfer_mean_mm": None if np.isnan(r.chamfer_mean_mm) else r.chamfer_mean_mm,
             "chamfer_std_mm": None if np.isnan(r.chamfer_std_mm) else r.chamfer_std_mm,
             "frames": r.frames, "skipped_frames": r.skipped_frames}
            for r in rows
        ],
        "per_frame": {r.split: r.per_frame for r in rows},
    }
    if extra:
        payload.update(extra)
    Path(path).write_text(json.dumps(payload, indent=1, sort_keys=True))
