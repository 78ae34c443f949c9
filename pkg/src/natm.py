"""Noise-aware template matching (NATM).

One template per clip: an ODR-sized square cut from the sharpest frame of
the smoothest stretch of the clip. Every clip frame is then registered to it
by a masked sum of absolute RGB differences, with specular highlights
excluded on both sides, and a fixed-size crop centred on the matched ODR is
emitted.
"""

import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Tuple, Union

import cv2
import numpy as np

from src.detection import DetectionTimeline
from src.exceptions import (
    TemplateTooLargeError,
    UnreliableMatchError,
    ValidationError,
    WriteError,
)
from src.flow import DEFAULT_BLOCK_SIZE, DEFAULT_SEARCH_RADIUS, Roi, pair_flow_stats
from src.kernels import masked_match_kernel, match_candidates
from src.stl import ClipSegment, Trajectory
from src.video_io import Frame, VideoSequence

logger = logging.getLogger(__name__)

MATCH_COLUMNS = ['frame', 'x', 'y', 'score', 'valid_fraction', 'flagged', 'center_x', 'center_y']

PAD_BORDERS = {
    'replicate': cv2.BORDER_REPLICATE,
    'constant': cv2.BORDER_CONSTANT,
    'reflect': cv2.BORDER_REFLECT,
}

Interval = Tuple[int, int]


def _round_half_up(value: float) -> int:
    return int(math.floor(value + 0.5))


@dataclass(frozen=True, eq=False)
class SpecularMask:
    """``bits`` is True where a pixel is excluded from matching."""

    bits: np.ndarray
    threshold: int
    filter_kernel: int

    @property
    def coverage(self) -> float:
        return float(self.bits.mean()) if self.bits.size else 0.0


@dataclass(frozen=True)
class MaskPolicy:
    enabled: bool = True
    threshold: int = 220
    kernel: int = 5


@dataclass(frozen=True, eq=False)
class Template:
    """Square reference patch.

    ``center_offset`` locates the detected ODR center relative to
    ``anchor``; it differs from ``side / 2`` only when the patch had to be
    clamped against a frame edge.
    """

    patch: np.ndarray
    side: int
    source_frame: int
    anchor: Tuple[int, int]
    center_offset: Tuple[float, float]
    mask: Optional[SpecularMask] = None


@dataclass(frozen=True)
class MatchResult:
    """Best template position in one frame.

    ``center`` is the center of the emitted crop in input-frame coordinates.
    """

    frame_index: int
    position: Tuple[int, int]
    score: float
    valid_fraction: float
    flagged: bool = False
    center: Tuple[float, float] = (0.0, 0.0)


def select_smooth_window(traj: Trajectory, clip: ClipSegment, window: int = 15) -> Interval:
    """Window inside ``clip`` with the least summed trajectory gradient.

    The window shrinks to the clip when the clip is shorter; undefined
    gradients count as zero; ties go to the earliest window.
    """
    if window < 1:
        raise ValidationError(f"window must be positive, got {window}")
    length = min(window, clip.n_frames)

    def grad(t: int) -> float:
        g = traj.gradient[t] if t < len(traj.gradient) else None
        return 0.0 if g is None else g

    best_start, best_cost = clip.start_frame, None
    for start in range(clip.start_frame, clip.end_frame - length + 2):
        cost = math.fsum(grad(t) for t in range(start, start + length))
        if best_cost is None or cost < best_cost:
            best_start, best_cost = start, cost
    return best_start, best_start + length - 1


def select_template_frame(seq: VideoSequence, interval: Interval,
                          block_size: int = DEFAULT_BLOCK_SIZE,
                          search_radius: int = DEFAULT_SEARCH_RADIUS,
                          roi: Optional[Roi] = None) -> int:
    """Sharpest frame of ``interval``: lowest flow-magnitude variance.

    Frame t is scored by its incoming pair (t-1, t); the first frame, which
    has no incoming pair inside the interval, by its outgoing pair.
    """
    start, end = interval
    if end <= start:
        return start

    pair_var = []
    prev = seq.get(start)
    for t in range(start + 1, end + 1):
        cur = seq.get(t)
        pair_var.append(pair_flow_stats(prev, cur, block_size, search_radius, roi).var_mag)
        prev = cur

    scores = [pair_var[0]] + pair_var
    best = min(range(len(scores)), key=lambda k: (scores[k], k))
    logger.debug("Template screening over [%d, %d]: min var_mag %.4f at frame %d",
                 start, end, scores[best], start + best)
    return start + best


def build_specular_mask(region: np.ndarray, threshold: int = 220,
                        filter_kernel: int = 5) -> SpecularMask:
    """Pixels bright in both B and G, smoothed by a box mean filter."""
    if not 0 <= threshold <= 255:
        raise ValidationError(f"Specular threshold must be in [0, 255], got {threshold}")
    if filter_kernel < 1 or filter_kernel % 2 == 0:
        raise ValidationError(f"Specular filter kernel must be odd and >= 1, got {filter_kernel}")

    raw = (region[..., 2] > threshold) & (region[..., 1] > threshold)
    if filter_kernel == 1 or not raw.any():
        bits = raw
    else:
        smoothed = cv2.blur(raw.astype(np.float32), (filter_kernel, filter_kernel),
                            borderType=cv2.BORDER_REPLICATE)
        bits = smoothed >= 0.5
    return SpecularMask(bits=bits, threshold=threshold, filter_kernel=filter_kernel)


def extract_template(seq: VideoSequence, frame_index: int, timeline: DetectionTimeline,
                     diameter: int, margin: float = 1.0,
                     mask_policy: Optional[MaskPolicy] = None) -> Template:
    box = timeline.get(frame_index)
    if box is None:
        raise ValidationError(f"Frame {frame_index} has no ODR detection to cut a template from")
    if diameter <= 0:
        raise ValidationError(f"ODR diameter must be positive, got {diameter}")

    side = _round_half_up(diameter * margin)
    if side > min(seq.width, seq.height):
        raise TemplateTooLargeError(
            f"Template side {side} exceeds frame size {seq.width}x{seq.height}"
        )

    cx, cy = box.center
    ax = min(max(_round_half_up(cx - side / 2.0), 0), seq.width - side)
    ay = min(max(_round_half_up(cy - side / 2.0), 0), seq.height - side)
    patch = seq.get(frame_index).pixels[ay:ay + side, ax:ax + side].copy()

    mask = None
    if mask_policy is not None and mask_policy.enabled:
        mask = build_specular_mask(patch, mask_policy.threshold, mask_policy.kernel)

    logger.debug("Template %dx%d from frame %d at (%d, %d)", side, side, frame_index, ax, ay)
    return Template(patch=patch, side=side, source_frame=frame_index, anchor=(ax, ay),
                    center_offset=(cx - ax, cy - ay), mask=mask)


def crop_centered(pixels: np.ndarray, top_left: Tuple[int, int], size: int,
                  pad_policy: str = 'replicate') -> np.ndarray:
    """``size`` x ``size`` window at ``top_left``, padded where it leaves the frame."""
    if pad_policy not in PAD_BORDERS:
        raise ValidationError(f"Unknown pad policy: {pad_policy}")
    height, width = pixels.shape[:2]
    x0, y0 = top_left
    x1, y1 = x0 + size, y0 + size

    sx0, sy0 = min(max(x0, 0), width - 1), min(max(y0, 0), height - 1)
    sx1, sy1 = max(min(x1, width), sx0 + 1), max(min(y1, height), sy0 + 1)
    sub = pixels[sy0:sy1, sx0:sx1]

    top, left = sy0 - y0, sx0 - x0
    bottom, right = y1 - sy1, x1 - sx1
    if top == bottom == left == right == 0:
        return np.ascontiguousarray(sub)
    return cv2.copyMakeBorder(sub, top, bottom, left, right, PAD_BORDERS[pad_policy], value=(0, 0, 0))


def _masked_score_at(frame: np.ndarray, frame_mask: np.ndarray, tmpl: Template,
                     tmpl_mask: np.ndarray, position: Tuple[int, int]) -> Tuple[float, float]:
    x, y = position
    side = tmpl.side
    region = frame[y:y + side, x:x + side].astype(np.int64)
    valid = ~(tmpl_mask | frame_mask[y:y + side, x:x + side])
    count = int(valid.sum())
    if count == 0:
        return 0.0, 0.0
    sad = int(np.abs(region - tmpl.patch.astype(np.int64))[valid].sum())
    return sad / (3.0 * count), count / float(side * side)


def masked_match(frame: Union[Frame, np.ndarray], tmpl: Template, policy: MaskPolicy,
                 search_center: Tuple[int, int], search_radius: int,
                 min_valid_fraction: float = 0.25,
                 frame_index: Optional[int] = None) -> MatchResult:
    """Template position minimising mean masked RGB absolute difference.

    ``search_center`` is a template top-left position; candidates are all
    top-left positions within ``search_radius`` (Chebyshev) of it that keep
    the template inside the frame. Ties go to the candidate closest to the
    center, then to row-major order.

    Raises:
        UnreliableMatchError: the winner's unmasked fraction is below
            ``min_valid_fraction``; ``result`` holds a flagged fallback at
            the search center.
    """
    if search_radius < 0:
        raise ValidationError(f"search_radius must be >= 0, got {search_radius}")
    pixels = frame.pixels if isinstance(frame, Frame) else frame
    if frame_index is None:
        frame_index = frame.index if isinstance(frame, Frame) else 0

    height, width = pixels.shape[:2]
    side = tmpl.side
    if side > width or side > height:
        raise TemplateTooLargeError(f"Template side {side} exceeds frame size {width}x{height}")
    max_x, max_y = width - side, height - side
    cx = min(max(int(search_center[0]), 0), max_x)
    cy = min(max(int(search_center[1]), 0), max_y)

    if policy.enabled:
        frame_mask = build_specular_mask(pixels, policy.threshold, policy.kernel).bits
        tmpl_mask = tmpl.mask.bits if tmpl.mask is not None else \
            build_specular_mask(tmpl.patch, policy.threshold, policy.kernel).bits
    else:
        frame_mask = np.zeros((height, width), dtype=np.bool_)
        tmpl_mask = np.zeros((side, side), dtype=np.bool_)

    candidates = match_candidates(cx, cy, int(search_radius), max_x, max_y)
    best_k, best_sad, best_cnt = masked_match_kernel(
        np.ascontiguousarray(pixels), np.ascontiguousarray(frame_mask),
        np.ascontiguousarray(tmpl.patch), np.ascontiguousarray(tmpl_mask),
        candidates,
    )

    if best_k >= 0:
        position = (int(candidates[best_k, 0]), int(candidates[best_k, 1]))
        score = int(best_sad) / (3.0 * int(best_cnt))
        valid_fraction = int(best_cnt) / float(side * side)
        if valid_fraction >= min_valid_fraction:
            return MatchResult(frame_index=frame_index, position=position, score=score,
                               valid_fraction=valid_fraction)
        reason = f"valid fraction {valid_fraction:.3f} below {min_valid_fraction}"
    else:
        reason = "no candidate has an unmasked pixel"

    score, valid_fraction = _masked_score_at(pixels, frame_mask, tmpl, tmpl_mask, (cx, cy))
    fallback = MatchResult(frame_index=frame_index, position=(cx, cy), score=score,
                           valid_fraction=valid_fraction, flagged=True)
    raise UnreliableMatchError(f"Frame {frame_index}: {reason}", result=fallback, stage='stabilize')


def _box_search_center(timeline: DetectionTimeline, frame_index: int, tmpl: Template,
                       fallback: Tuple[int, int]) -> Tuple[int, int]:
    box = timeline.get(frame_index) if timeline is not None else None
    if box is None:
        return fallback
    cx, cy = box.center
    return (_round_half_up(cx - tmpl.center_offset[0]),
            _round_half_up(cy - tmpl.center_offset[1]))


def stabilize_clip(seq: VideoSequence, clip: ClipSegment, tmpl: Template,
                   crop_size: int = 640, pad_policy: str = 'replicate',
                   policy: Optional[MaskPolicy] = None,
                   search_radius: Optional[int] = None,
                   search_mode: str = 'chained',
                   timeline: Optional[DetectionTimeline] = None,
                   min_valid_fraction: float = 0.25,
                   source_id: Optional[str] = None,
                   diameter: Optional[int] = None) -> Tuple[VideoSequence, List[MatchResult]]:
    """Match every clip frame and emit ODR-centred crops.

    In ``chained`` mode each frame's search starts from the previous match
    (the first frame from its detection box); ``per-frame-box`` starts every
    frame from its own detection box. Without ``search_radius`` the search
    reaches one ODR ``diameter`` (the template side when no diameter is given).
    """
    if crop_size <= 0:
        raise ValidationError(f"crop_size must be positive, got {crop_size}")
    if search_mode not in ('chained', 'per-frame-box'):
        raise ValidationError(f"Unknown search mode: {search_mode}")
    policy = policy or MaskPolicy()
    radius = search_radius
    if radius is None:
        radius = diameter if diameter is not None else tmpl.side

    center = _box_search_center(timeline, clip.start_frame, tmpl, tmpl.anchor)
    results: List[MatchResult] = []
    crops: List[np.ndarray] = []

    for frame_index in clip.frames():
        frame = seq.get(frame_index)
        if search_mode == 'per-frame-box':
            center = _box_search_center(timeline, frame_index, tmpl, center)
        try:
            result = masked_match(frame, tmpl, policy, center, radius,
                                  min_valid_fraction, frame_index=frame_index)
        except UnreliableMatchError as e:
            logger.warning("%s; keeping search center", e)
            result = e.result

        odr_x = result.position[0] + tmpl.center_offset[0]
        odr_y = result.position[1] + tmpl.center_offset[1]
        top_left = (_round_half_up(odr_x - crop_size / 2.0), _round_half_up(odr_y - crop_size / 2.0))
        crops.append(crop_centered(frame.pixels, top_left, crop_size, pad_policy))

        result = MatchResult(
            frame_index=result.frame_index, position=result.position, score=result.score,
            valid_fraction=result.valid_fraction, flagged=result.flagged,
            center=(top_left[0] + crop_size / 2.0, top_left[1] + crop_size / 2.0),
        )
        results.append(result)
        center = result.position

    flagged = sum(r.flagged for r in results)
    logger.info("Stabilized frames %d-%d: %d crop(s) of %dx%d, %d flagged",
                clip.start_frame, clip.end_frame, len(crops), crop_size, crop_size, flagged)

    out = VideoSequence(
        frames=[Frame(index=k, pixels=px, timestamp=k / seq.fps) for k, px in enumerate(crops)],
        fps=seq.fps,
        source_id=source_id or seq.source_id,
    )
    return out, results


def write_matches_csv(results: List[MatchResult], path: Union[str, Path]) -> None:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, 'w', newline='', encoding='utf-8') as fh:
            writer = csv.writer(fh, lineterminator='\n')
            writer.writerow(MATCH_COLUMNS)
            for r in results:
                writer.writerow([r.frame_index, r.position[0], r.position[1], repr(r.score),
                                 repr(r.valid_fraction), int(r.flagged),
                                 repr(float(r.center[0])), repr(float(r.center[1]))])
    except OSError as e:
        raise WriteError(f"Failed to write matches {path}: {e}", original_error=e)


def read_matches_csv(path: Union[str, Path]) -> List[MatchResult]:
    with open(path, newline='', encoding='utf-8') as fh:
        return [
            MatchResult(frame_index=int(row['frame']), position=(int(row['x']), int(row['y'])),
                        score=float(row['score']), valid_fraction=float(row['valid_fraction']),
                        flagged=row['flagged'] == '1',
                        center=(float(row['center_x']), float(row['center_y'])))
            for row in csv.DictReader(fh)
        ]
