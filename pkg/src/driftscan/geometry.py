"""Bounding-box construction, fusion, and keypoint-based rejection.

Pixel detections at any pyramid scale become square boxes at level-0
resolution, overlapping boxes merge through connected components of the
painted mask, and boxes without any interest-point support are discarded.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from skimage.feature import corner_fast, corner_harris, corner_peaks

from .acontrario import Detection
from .imaging import luminance

_EIGHT_CONNECTED = np.ones((3, 3), dtype=int)


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned rectangle at level-0 resolution; score is the best
    (minimum) log-NFA among the detections it came from."""

    x: int
    y: int
    w: int
    h: int
    score: float

    def contains(self, px: float, py: float) -> bool:
        # inclusive bounds on all four edges
        return self.x <= px <= self.x + self.w - 1 and self.y <= py <= self.y + self.h - 1


@dataclass(frozen=True)
class InterestPoint:
    x: float
    y: float
    response: float
    detector: str  # corner | blob | fast-intensity


def boxes_from_detections(
    detections: list[Detection], frame_height: int, frame_width: int
) -> list[BoundingBox]:
    """Square box per detection, mapped back to level 0.

    A detection at scale s, radius r, position (x, y) gets center
    floor((x + 0.5) * 2**s), floor((y + 0.5) * 2**s) and side
    (2r + 1) * 2**s, clipped to the frame.
    """
    boxes = []
    for det in detections:
        f = 1 << det.scale
        cx = int((det.x + 0.5) * f)
        cy = int((det.y + 0.5) * f)
        side = (2 * det.radius + 1) * f
        x0 = max(cx - side // 2, 0)
        y0 = max(cy - side // 2, 0)
        x1 = min(cx - side // 2 + side, frame_width)
        y1 = min(cy - side // 2 + side, frame_height)
        if x1 <= x0 or y1 <= y0:
            continue
        boxes.append(BoundingBox(x=x0, y=y0, w=x1 - x0, h=y1 - y0, score=det.log_nfa))
    return boxes


def fuse_overlapping(
    boxes: list[BoundingBox], frame_height: int, frame_width: int
) -> list[BoundingBox]:
    """Merge overlapping/touching boxes into the bounding rectangles of the
    8-connected components of the painted box mask."""
    if not boxes:
        return []
    mask = np.zeros((frame_height, frame_width), dtype=bool)
    for b in boxes:
        mask[b.y : b.y + b.h, b.x : b.x + b.w] = True
    labels, n_components = ndimage.label(mask, structure=_EIGHT_CONNECTED)
    best_score = np.full(n_components + 1, np.inf)
    for b in boxes:
        comp = labels[b.y, b.x]
        best_score[comp] = min(best_score[comp], b.score)
    fused = []
    for comp, sl in enumerate(ndimage.find_objects(labels), start=1):
        if sl is None:
            continue
        ys, xs = sl
        fused.append(
            BoundingBox(
                x=int(xs.start),
                y=int(ys.start),
                w=int(xs.stop - xs.start),
                h=int(ys.stop - ys.start),
                score=float(best_score[comp]),
            )
        )
    fused.sort(key=lambda b: (b.y, b.x, b.w, b.h))
    return fused


def _top_points(rows, cols, responses, detector, limit):
    pts = sorted(
        zip(responses.tolist(), rows.tolist(), cols.tolist()),
        key=lambda t: (-t[0], t[1], t[2]),
    )[:limit]
    return [InterestPoint(x=c, y=r, response=v, detector=detector) for v, r, c in pts]


def _corner_points(lum, limit):
    response = corner_harris(lum, method="k", k=0.05, sigma=1.0)
    peaks = corner_peaks(response, min_distance=2, threshold_abs=1e-8, threshold_rel=0.0)
    if peaks.size == 0:
        return []
    vals = response[peaks[:, 0], peaks[:, 1]]
    return _top_points(peaks[:, 0], peaks[:, 1], vals, "corner", limit)


def _blob_points(lum, limit, n_octaves=3, threshold=0.5):
    # difference-of-Gaussians extrema; lum is in [0, 255] so the threshold
    # is in those units
    points = []
    base = lum.astype(np.float64)
    for octave in range(n_octaves):
        h, w = base.shape
        if h < 8 or w < 8:
            break
        sigmas = [1.0, 1.6, 2.56, 4.096]
        stack = np.stack(
            [ndimage.gaussian_filter(base, s, mode="reflect") for s in sigmas]
        )
        dog = np.diff(stack, axis=0)
        mag = np.abs(dog)
        maxed = ndimage.maximum_filter(mag, size=(3, 3, 3), mode="nearest")
        for layer in range(1, dog.shape[0] - 1):
            is_peak = (mag[layer] == maxed[layer]) & (mag[layer] > threshold)
            ys, xs = np.nonzero(is_peak)
            scale_factor = 1 << octave
            for y, x in zip(ys.tolist(), xs.tolist()):
                points.append(
                    InterestPoint(
                        x=(x + 0.5) * scale_factor - 0.5,
                        y=(y + 0.5) * scale_factor - 0.5,
                        response=float(mag[layer, y, x]),
                        detector="blob",
                    )
                )
        base = ndimage.gaussian_filter(base, 1.0, mode="reflect")[::2, ::2]
    points.sort(key=lambda p: (-p.response, p.y, p.x))
    return points[:limit]


def _fast_points(lum, limit, threshold=0.06):
    response = corner_fast(lum / 255.0, n=9, threshold=threshold)
    peaks = corner_peaks(response, min_distance=1, threshold_abs=1e-8, threshold_rel=0.0)
    if peaks.size == 0:
        return []
    vals = response[peaks[:, 0], peaks[:, 1]]
    return _top_points(peaks[:, 0], peaks[:, 1], vals, "fast-intensity", limit)


def detect_interest_points(img: np.ndarray, per_detector: int = 200) -> list[InterestPoint]:
    """Top-response corner, blob and intensity-arc points on the luminance plane.

    Returns at most per_detector points per family; images smaller than the
    detector windows simply yield fewer (possibly zero) points.
    """
    lum = luminance(img)
    if min(lum.shape) < 8:
        return []
    points: list[InterestPoint] = []
    points.extend(_corner_points(lum, per_detector))
    points.extend(_blob_points(lum, per_detector))
    points.extend(_fast_points(lum, per_detector))
    return points


def keypoint_refine(
    boxes: list[BoundingBox], points: list[InterestPoint]
) -> list[BoundingBox]:
    """Keep exactly the boxes containing at least one interest point."""
    if not boxes:
        return []
    xs = np.array([p.x for p in points])
    ys = np.array([p.y for p in points])
    kept = []
    for b in boxes:
        if xs.size and np.any(
            (xs >= b.x) & (xs <= b.x + b.w - 1) & (ys >= b.y) & (ys <= b.y + b.h - 1)
        ):
            kept.append(b)
    return kept
