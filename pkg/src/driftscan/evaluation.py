"""Detection-rate / false-alarm-rate evaluation against annotated boxes."""

from __future__ import annotations

import json
from dataclasses import dataclass

from .geometry import BoundingBox


@dataclass
class EvalReport:
    tp: int
    fp: int
    fn: int
    dr: float | None  # TP / (TP + FN); None when undefined
    far: float | None  # FP / (TP + FP); None when undefined
    per_frame: dict[str, tuple[int, int, int]]

    def to_dict(self) -> dict:
        return {
            "tp": self.tp,
            "fp": self.fp,
            "fn": self.fn,
            "dr": self.dr,
            "far": self.far,
            "per_frame": {k: list(v) for k, v in self.per_frame.items()},
        }


def detection_rate(tp: int, fn: int) -> float | None:
    return tp / (tp + fn) if tp + fn > 0 else None


def false_alarm_rate(tp: int, fp: int) -> float | None:
    return fp / (tp + fp) if tp + fp > 0 else None


def iou(a: BoundingBox, b: BoundingBox) -> float:
    x0 = max(a.x, b.x)
    y0 = max(a.y, b.y)
    x1 = min(a.x + a.w, b.x + b.w)
    y1 = min(a.y + a.h, b.y + b.h)
    if x1 <= x0 or y1 <= y0:
        return 0.0
    inter = (x1 - x0) * (y1 - y0)
    return inter / (a.w * a.h + b.w * b.h - inter)


def _center_inside(pred: BoundingBox, gt: BoundingBox) -> bool:
    cx = pred.x + (pred.w - 1) / 2.0
    cy = pred.y + (pred.h - 1) / 2.0
    return gt.contains(cx, cy)


def match_frame(
    predictions: list[BoundingBox],
    gt_boxes: list[BoundingBox],
    iou_threshold: float,
) -> tuple[int, int, int]:
    """Greedy one-to-one matching by descending IoU.

    A prediction may match a ground-truth box when their IoU reaches the
    threshold or when the prediction's center falls inside the box.
    """
    candidates = []
    for pi, pred in enumerate(predictions):
        for gi, gt in enumerate(gt_boxes):
            v = iou(pred, gt)
            if v >= iou_threshold or _center_inside(pred, gt):
                candidates.append((v, pi, gi))
    candidates.sort(key=lambda t: (-t[0], t[1], t[2]))
    used_p: set[int] = set()
    used_g: set[int] = set()
    tp = 0
    for _, pi, gi in candidates:
        if pi in used_p or gi in used_g:
            continue
        used_p.add(pi)
        used_g.add(gi)
        tp += 1
    fp = len(predictions) - tp
    fn = len(gt_boxes) - tp
    return tp, fp, fn


def evaluate(
    results: dict[str, list[BoundingBox]],
    ground_truth: dict[str, list[BoundingBox]],
    iou_threshold: float = 0.1,
) -> EvalReport:
    """Accumulate greedy per-frame matches into DR and FAR totals.

    results maps frame id -> predicted boxes; every frame id must appear in
    ground_truth (frames with no annotated object map to an empty list).
    """
    tp = fp = fn = 0
    per_frame = {}
    for frame_id in sorted(results):
        if frame_id not in ground_truth:
            raise KeyError(f"frame {frame_id!r} missing from ground truth")
        f_tp, f_fp, f_fn = match_frame(
            results[frame_id], ground_truth[frame_id], iou_threshold
        )
        per_frame[frame_id] = (f_tp, f_fp, f_fn)
        tp += f_tp
        fp += f_fp
        fn += f_fn
    return EvalReport(
        tp=tp,
        fp=fp,
        fn=fn,
        dr=detection_rate(tp, fn),
        far=false_alarm_rate(tp, fp),
        per_frame=per_frame,
    )


def load_ground_truth(path) -> dict[str, list[BoundingBox]]:
    """Ground-truth file: {"frames": {frame-id: [{"x","y","w","h"}, ...]}}."""
    with open(path) as fh:
        data = json.load(fh)
    frames = data["frames"]
    return {
        frame_id: [
            BoundingBox(x=b["x"], y=b["y"], w=b["w"], h=b["h"], score=0.0)
            for b in boxes
        ]
        for frame_id, boxes in frames.items()
    }


def load_results_dir(path) -> dict[str, list[BoundingBox]]:
    """Read every per-frame detection record written by run_sequence."""
    from pathlib import Path

    path = Path(path)
    out = {}
    for rec_path in sorted(path.glob("*.json")):
        if rec_path.name in ("manifest.json", "timings.json"):
            continue
        rec = json.loads(rec_path.read_text())
        out[rec["frame"]] = [
            BoundingBox(x=b["x"], y=b["y"], w=b["w"], h=b["h"], score=b["log_nfa"])
            for b in rec["boxes"]
        ]
    return out
