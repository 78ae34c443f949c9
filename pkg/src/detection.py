"""Optic disc region (ODR) detection.

Detections come either from the built-in classical bright-disc detector or
from an externally produced JSON file (one record per box). Either way they
end up in a ``DetectionTimeline`` keyed by frame index.
"""

import json
import logging
import math
import statistics
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Tuple, Union

import cv2
import numpy as np

from src.exceptions import (
    DetectionImportError,
    DetectionRangeError,
    NoOdrError,
    ValidationError,
    WriteError,
)
from src.video_io import Frame, VideoSequence, to_grayscale

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class BoundingBox:
    x: int
    y: int
    w: int
    h: int
    score: float = 1.0

    def __post_init__(self):
        if self.w <= 0 or self.h <= 0:
            raise ValidationError(f"Bounding box needs positive size, got {self.w}x{self.h}")
        if not 0.0 <= self.score <= 1.0:
            raise ValidationError(f"Bounding box score must be in [0, 1], got {self.score}")

    @property
    def center(self) -> Tuple[float, float]:
        return self.x + self.w / 2.0, self.y + self.h / 2.0

    @property
    def mean_side(self) -> float:
        return (self.w + self.h) / 2.0

    def clamp(self, width: int, height: int) -> Optional['BoundingBox']:
        """Intersection with the frame; None when nothing is left."""
        x0, y0 = max(self.x, 0), max(self.y, 0)
        x1, y1 = min(self.x + self.w, width), min(self.y + self.h, height)
        if x1 <= x0 or y1 <= y0:
            return None
        return BoundingBox(x0, y0, x1 - x0, y1 - y0, self.score)

    def to_record(self, frame_index: int) -> dict:
        return {
            'frame_index': frame_index,
            'x': self.x, 'y': self.y, 'w': self.w, 'h': self.h,
            'score': self.score,
        }


@dataclass
class DetectionTimeline:
    """frame index -> best box; frames without an entry are not detected."""

    n_frames: int
    entries: Dict[int, BoundingBox] = field(default_factory=dict)

    def __post_init__(self):
        for idx in self.entries:
            if not 0 <= idx < self.n_frames:
                raise DetectionRangeError(f"Frame index {idx} outside [0, {self.n_frames})")

    def get(self, index: int) -> Optional[BoundingBox]:
        return self.entries.get(index)

    def is_detected(self, index: int) -> bool:
        return index in self.entries

    def offer(self, index: int, box: BoundingBox) -> None:
        """Keep ``box`` if the frame has none yet or it scores higher."""
        if not 0 <= index < self.n_frames:
            raise DetectionRangeError(f"Frame index {index} outside [0, {self.n_frames})")
        current = self.entries.get(index)
        if current is None or box.score > current.score:
            self.entries[index] = box

    def detected_indices(self) -> List[int]:
        return sorted(self.entries)

    def __iter__(self) -> Iterator[Tuple[int, Optional[BoundingBox]]]:
        for idx in range(self.n_frames):
            yield idx, self.entries.get(idx)

    def __len__(self) -> int:
        return len(self.entries)


@dataclass(frozen=True)
class DetectorParams:
    intensity_quantile: float = 0.99
    min_area_frac: float = 0.002
    min_mean_luma: float = 20.0
    open_kernel: int = 5
    min_score: float = 0.0

    @classmethod
    def from_config(cls, cfg) -> 'DetectorParams':
        return cls(
            intensity_quantile=cfg.intensity_quantile,
            min_area_frac=cfg.min_area_frac,
            min_mean_luma=cfg.min_mean_luma,
            open_kernel=cfg.open_kernel,
            min_score=cfg.min_score,
        )


def detect_classical(frame: Union[Frame, np.ndarray],
                     params: Optional[DetectorParams] = None) -> Optional[BoundingBox]:
    """Largest bright connected component above the intensity quantile.

    Returns None for dark frames (blinks), for frames where nothing lies
    strictly above the quantile, and for components that are too small.
    """
    params = params or DetectorParams()
    gray = to_grayscale(frame)
    height, width = gray.shape

    if float(gray.mean()) < params.min_mean_luma:
        return None

    threshold = np.quantile(gray, params.intensity_quantile)
    bright = (gray > threshold).astype(np.uint8)
    if not bright.any():
        return None

    if params.open_kernel > 0:
        kernel = cv2.getStructuringElement(cv2.MORPH_ELLIPSE, (params.open_kernel, params.open_kernel))
        bright = cv2.morphologyEx(bright, cv2.MORPH_OPEN, kernel)

    n_labels, labels, stats, _ = cv2.connectedComponentsWithStats(bright, connectivity=8)
    if n_labels <= 1:
        return None

    areas = stats[1:, cv2.CC_STAT_AREA]
    # argmax keeps the lowest label on ties
    label = int(np.argmax(areas)) + 1
    area = int(stats[label, cv2.CC_STAT_AREA])
    if area < params.min_area_frac * width * height:
        return None

    x = int(stats[label, cv2.CC_STAT_LEFT])
    y = int(stats[label, cv2.CC_STAT_TOP])
    w = int(stats[label, cv2.CC_STAT_WIDTH])
    h = int(stats[label, cv2.CC_STAT_HEIGHT])
    score = float(gray[labels == label].mean()) / 255.0
    return BoundingBox(x, y, w, h, min(score, 1.0))


def _parse_record(rec, position: int) -> Tuple[int, BoundingBox]:
    if not isinstance(rec, dict):
        raise DetectionImportError(f"Record {position} is not an object")
    try:
        idx = int(rec['frame_index'])
        x, y, w, h = (int(math.floor(float(rec[k]) + 0.5)) for k in ('x', 'y', 'w', 'h'))
        score = float(rec.get('score', 1.0))
    except (KeyError, TypeError, ValueError) as e:
        raise DetectionImportError(f"Record {position} is malformed: {e}", original_error=e)
    if w < 0 or h < 0:
        raise ValidationError(f"Record {position} (frame {idx}) has negative size {w}x{h}")
    if w == 0 or h == 0:
        raise ValidationError(f"Record {position} (frame {idx}) has empty size {w}x{h}")
    return idx, BoundingBox(x, y, w, h, min(max(score, 0.0), 1.0))


def import_detections(path: Union[str, Path], n_frames: int,
                      frame_size: Optional[Tuple[int, int]] = None,
                      min_score: float = 0.0) -> DetectionTimeline:
    """Read a JSON array of ``{frame_index, x, y, w, h, score}`` records.

    Args:
        frame_size: ``(width, height)`` used to clamp boxes; boxes falling
            entirely outside the frame are dropped.
        min_score: records scoring below this are ignored.
    """
    path = Path(path)
    try:
        with open(path, 'r', encoding='utf-8') as fh:
            data = json.load(fh)
    except json.JSONDecodeError as e:
        raise DetectionImportError(f"Malformed detections file {path}: {e}", original_error=e)
    except OSError as e:
        raise DetectionImportError(f"Cannot read detections file {path}: {e}", original_error=e)
    if not isinstance(data, list):
        raise DetectionImportError(f"Detections file {path} must hold a JSON array")

    timeline = DetectionTimeline(n_frames=n_frames)
    for position, rec in enumerate(data):
        idx, box = _parse_record(rec, position)
        if not 0 <= idx < n_frames:
            raise DetectionRangeError(f"Record {position}: frame_index {idx} outside [0, {n_frames})")
        if box.score < min_score:
            continue
        if frame_size is not None:
            box = box.clamp(*frame_size)
            if box is None:
                continue
        timeline.offer(idx, box)

    logger.info("Imported %d detection(s) over %d frame(s) from %s", len(timeline), n_frames, path)
    return timeline


def export_detections(timeline: DetectionTimeline, path: Union[str, Path]) -> None:
    """Write the timeline in the format ``import_detections`` reads."""
    records = [timeline.entries[idx].to_record(idx) for idx in timeline.detected_indices()]
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, 'w', encoding='utf-8') as fh:
            json.dump(records, fh, indent=2)
            fh.write('\n')
    except OSError as e:
        raise WriteError(f"Failed to write detections {path}: {e}", original_error=e)


def run_detector(seq: VideoSequence, mode: str = 'classical',
                 params: Optional[DetectorParams] = None,
                 detections_path: Optional[Union[str, Path]] = None,
                 threads: int = 1) -> DetectionTimeline:
    """Detection timeline over every frame of ``seq``.

    Timeline keys are positions in ``seq`` (0..len-1), which coincide with
    frame indices for sequences written by this package.
    """
    params = params or DetectorParams()
    n_frames = len(seq)

    if mode == 'file':
        if detections_path is None:
            raise ValidationError("Detector mode 'file' requires a detections path")
        return import_detections(
            detections_path, n_frames,
            frame_size=(seq.width, seq.height),
            min_score=params.min_score,
        )
    if mode != 'classical':
        raise ValidationError(f"Unknown detector mode: {mode}")

    frames = seq.frames
    if threads > 1 and n_frames > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            boxes = list(pool.map(lambda f: detect_classical(f, params), frames))
    else:
        boxes = [detect_classical(f, params) for f in frames]

    timeline = DetectionTimeline(n_frames=n_frames)
    for pos, box in enumerate(boxes):
        if box is not None and box.score >= params.min_score:
            timeline.offer(pos, box)

    logger.info("Classical detector: ODR found in %d/%d frame(s)", len(timeline), n_frames)
    return timeline


def estimate_odr_diameter(timeline: DetectionTimeline) -> int:
    """Median of (w + h) / 2 over detected frames, rounded half up."""
    sides = [box.mean_side for box in timeline.entries.values()]
    if not sides:
        raise NoOdrError("No ODR detected in any frame")
    return int(math.floor(statistics.median(sides) + 0.5))
