"""Spatio-temporal localization of the visible ODR.

Turns a detection timeline into a center trajectory, drops frames on either
side of huge jumps, and cuts what is left into clips that are long enough to
cover a full venous pulsation cycle.
"""

import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, List, Optional, Set, Tuple, Union

from src.detection import DetectionTimeline
from src.exceptions import ValidationError, WriteError

logger = logging.getLogger(__name__)

Point = Tuple[float, float]

TRAJECTORY_COLUMNS = ['frame', 'detected', 'cx', 'cy', 'gradient', 'rolling_variance', 'removed']


@dataclass(frozen=True)
class Trajectory:
    """Per-frame ODR centers and the series derived from them.

    ``deviation`` is the offset of each center from the first detected one.
    All series are None where undefined.
    """

    points: List[Optional[Point]]
    gradient: List[Optional[float]]
    variance_series: List[Optional[float]]
    deviation: List[Optional[Point]]
    window: int

    def __len__(self) -> int:
        return len(self.points)


@dataclass(frozen=True)
class ClipSegment:
    start_frame: int
    end_frame: int
    fps: float

    def __post_init__(self):
        if self.start_frame > self.end_frame:
            raise ValidationError(f"Clip start {self.start_frame} is after end {self.end_frame}")

    @property
    def n_frames(self) -> int:
        return self.end_frame - self.start_frame + 1

    @property
    def length_seconds(self) -> float:
        return self.n_frames / self.fps

    def frames(self) -> range:
        return range(self.start_frame, self.end_frame + 1)

    def to_dict(self, name: str) -> dict:
        return {
            'clip': name,
            'start_frame': self.start_frame,
            'end_frame': self.end_frame,
            'n_frames': self.n_frames,
            'length_seconds': self.length_seconds,
        }


def _population_variance(values: List[float]) -> float:
    mean = math.fsum(values) / len(values)
    return math.fsum((v - mean) ** 2 for v in values) / len(values)


def build_trajectory(timeline: DetectionTimeline, window: int = 15) -> Trajectory:
    """Box centers, per-frame displacement and its rolling variance.

    Gaps are kept as gaps: no value is interpolated across an undetected
    frame, and a gradient needs both t-1 and t.
    """
    if window < 2:
        raise ValidationError(f"window must be >= 2, got {window}")

    n = timeline.n_frames
    points: List[Optional[Point]] = [
        box.center if box is not None else None for _, box in timeline
    ]

    gradient: List[Optional[float]] = [None] * n
    for t in range(1, n):
        p0, p1 = points[t - 1], points[t]
        if p0 is not None and p1 is not None:
            gradient[t] = math.hypot(p1[0] - p0[0], p1[1] - p0[1])

    variance: List[Optional[float]] = [None] * n
    for t in range(n):
        defined = [g for g in gradient[max(0, t - window + 1):t + 1] if g is not None]
        if len(defined) >= 2:
            variance[t] = _population_variance(defined)

    origin = next((p for p in points if p is not None), None)
    deviation: List[Optional[Point]] = [
        (p[0] - origin[0], p[1] - origin[1]) if p is not None else None for p in points
    ]

    return Trajectory(points=points, gradient=gradient, variance_series=variance,
                      deviation=deviation, window=window)


def filter_jitters(traj: Trajectory, grad_thresh: float) -> Set[int]:
    """Both endpoints of every jump larger than ``grad_thresh``."""
    if not grad_thresh > 0:
        raise ValidationError(f"grad_thresh must be positive, got {grad_thresh}")
    removed: Set[int] = set()
    for t, g in enumerate(traj.gradient):
        if g is not None and g > grad_thresh:
            removed.update((t - 1, t))
    if removed:
        logger.debug("Jitter filter removed frames %s", sorted(removed))
    return removed


def segment_clips(timeline: DetectionTimeline, removed: Iterable[int],
                  fps: float, min_seconds: float) -> List[ClipSegment]:
    """Maximal detected, non-removed runs lasting at least ``min_seconds``."""
    if not fps > 0:
        raise ValidationError(f"fps must be positive, got {fps}")
    if not min_seconds > 0:
        raise ValidationError(f"min_seconds must be positive, got {min_seconds}")

    removed = set(removed)
    # 2.2 s * 25 fps is 55.00000000000001 in binary floating point
    min_frames = math.ceil(round(min_seconds * fps, 9))
    clips: List[ClipSegment] = []
    run_start: Optional[int] = None

    for t in range(timeline.n_frames + 1):
        usable = t < timeline.n_frames and timeline.is_detected(t) and t not in removed
        if usable and run_start is None:
            run_start = t
        elif not usable and run_start is not None:
            if t - run_start >= min_frames:
                clips.append(ClipSegment(run_start, t - 1, fps))
            run_start = None
    return clips


def _fmt(value: Optional[float]) -> str:
    return '' if value is None else repr(float(value))


def write_trajectory_csv(traj: Trajectory, removed: Iterable[int], path: Union[str, Path]) -> None:
    """Empty cells mark undefined values."""
    removed = set(removed)
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, 'w', newline='', encoding='utf-8') as fh:
            writer = csv.writer(fh, lineterminator='\n')
            writer.writerow(TRAJECTORY_COLUMNS)
            for t, point in enumerate(traj.points):
                writer.writerow([
                    t,
                    0 if point is None else 1,
                    '' if point is None else _fmt(point[0]),
                    '' if point is None else _fmt(point[1]),
                    _fmt(traj.gradient[t]),
                    _fmt(traj.variance_series[t]),
                    1 if t in removed else 0,
                ])
    except OSError as e:
        raise WriteError(f"Failed to write trajectory {path}: {e}", original_error=e)
