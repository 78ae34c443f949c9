"""Dense block-matching optical flow and its variance statistics.

Each non-overlapping ``block_size`` block of the previous image is searched
for in the next image within ``search_radius`` pixels, minimising the sum of
absolute differences. The flow variance over blocks is what the template
screening and the stability metric both read.
"""

import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from src.exceptions import FlowSizeError, TooShortError, ValidationError, WriteError
from src.kernels import block_flow, flow_offsets
from src.video_io import Frame, VideoSequence, to_grayscale

logger = logging.getLogger(__name__)

DEFAULT_BLOCK_SIZE = 16
DEFAULT_SEARCH_RADIUS = 24

PROFILE_COLUMNS = ['frame_pair', 'var_u', 'var_v', 'var_mag', 'mean_u', 'mean_v']

# (x, y, w, h) in pixels
Roi = Tuple[int, int, int, int]


@dataclass(frozen=True, eq=False)
class FlowField:
    """Per-block displacement ``vectors[row, col] = (u, v)``."""

    vectors: np.ndarray
    block_size: int
    search_radius: int

    @property
    def grid_h(self) -> int:
        return int(self.vectors.shape[0])

    @property
    def grid_w(self) -> int:
        return int(self.vectors.shape[1])


@dataclass(frozen=True)
class FlowStats:
    var_u: float
    var_v: float
    var_mag: float
    mean_u: float
    mean_v: float

    @property
    def variance(self) -> float:
        """Scalar "variance of optical flow": var_u + var_v."""
        return self.var_u + self.var_v


def compute_flow(prev: np.ndarray, nxt: np.ndarray,
                 block_size: int = DEFAULT_BLOCK_SIZE,
                 search_radius: int = DEFAULT_SEARCH_RADIUS) -> FlowField:
    """Block flow from ``prev`` to ``nxt`` (both 2-D grayscale)."""
    if block_size < 4:
        raise ValidationError(f"block_size must be >= 4, got {block_size}")
    if search_radius < 1:
        raise ValidationError(f"search_radius must be >= 1, got {search_radius}")
    if prev.shape != nxt.shape or prev.ndim != 2:
        raise ValidationError(f"Flow images must be equal-size 2-D arrays: {prev.shape} vs {nxt.shape}")

    height, width = prev.shape
    grid_h, grid_w = height // block_size, width // block_size
    if grid_h == 0 or grid_w == 0:
        raise FlowSizeError(f"Image {width}x{height} is smaller than one {block_size}px block")

    out = np.zeros((grid_h, grid_w, 2), dtype=np.int32)
    block_flow(
        np.ascontiguousarray(prev, dtype=np.uint8),
        np.ascontiguousarray(nxt, dtype=np.uint8),
        block_size,
        flow_offsets(search_radius),
        out,
    )
    return FlowField(vectors=out, block_size=block_size, search_radius=search_radius)


def _two_pass_variance(values: Sequence[float]) -> Tuple[float, float]:
    n = len(values)
    mean = math.fsum(values) / n
    var = math.fsum((x - mean) ** 2 for x in values) / n
    return mean, var


def flow_statistics(field: FlowField) -> FlowStats:
    vec = field.vectors.reshape(-1, 2).astype(np.float64)
    if vec.shape[0] == 0:
        raise ValidationError("Flow field has no blocks")
    u = vec[:, 0].tolist()
    v = vec[:, 1].tolist()
    mag = np.hypot(vec[:, 0], vec[:, 1]).tolist()
    mean_u, var_u = _two_pass_variance(u)
    mean_v, var_v = _two_pass_variance(v)
    _, var_mag = _two_pass_variance(mag)
    return FlowStats(var_u=var_u, var_v=var_v, var_mag=var_mag, mean_u=mean_u, mean_v=mean_v)


def flow_variance(field: FlowField) -> Tuple[float, float, float]:
    """Population variance over blocks of u, v and |(u, v)|."""
    stats = flow_statistics(field)
    return stats.var_u, stats.var_v, stats.var_mag


def crop_roi(image: np.ndarray, roi: Optional[Roi]) -> np.ndarray:
    if roi is None:
        return image
    x, y, w, h = roi
    return image[y:y + h, x:x + w]


def centered_roi(center: Tuple[float, float], side: int, width: int, height: int) -> Roi:
    """Square of ``side`` around ``center``, shifted to lie inside the frame."""
    side_w, side_h = min(side, width), min(side, height)
    x = int(math.floor(center[0] + 0.5)) - side_w // 2
    y = int(math.floor(center[1] + 0.5)) - side_h // 2
    x = min(max(x, 0), width - side_w)
    y = min(max(y, 0), height - side_h)
    return x, y, side_w, side_h


def pair_flow_stats(prev: Union[Frame, np.ndarray], nxt: Union[Frame, np.ndarray],
                    block_size: int = DEFAULT_BLOCK_SIZE,
                    search_radius: int = DEFAULT_SEARCH_RADIUS,
                    roi: Optional[Roi] = None) -> FlowStats:
    g0 = crop_roi(to_grayscale(prev), roi)
    g1 = crop_roi(to_grayscale(nxt), roi)
    return flow_statistics(compute_flow(g0, g1, block_size, search_radius))


def clip_flow_profile(seq: VideoSequence,
                      frame_range: Optional[Tuple[int, int]] = None,
                      block_size: int = DEFAULT_BLOCK_SIZE,
                      search_radius: int = DEFAULT_SEARCH_RADIUS,
                      roi: Optional[Roi] = None) -> List[FlowStats]:
    """Flow statistics of every consecutive frame pair in ``frame_range``
    (inclusive frame indices; whole sequence when omitted)."""
    frames = seq.frames if frame_range is None else seq.slice(*frame_range).frames
    if len(frames) < 2:
        raise TooShortError(f"Flow profile needs >= 2 frames, got {len(frames)}")

    profile: List[FlowStats] = []
    prev_gray = crop_roi(to_grayscale(frames[0]), roi)
    for frame in frames[1:]:
        gray = crop_roi(to_grayscale(frame), roi)
        profile.append(flow_statistics(compute_flow(prev_gray, gray, block_size, search_radius)))
        prev_gray = gray
    logger.debug("Flow profile over %d pair(s) of '%s'", len(profile), seq.source_id)
    return profile


def write_flow_profile(profile: Sequence[FlowStats], path: Union[str, Path],
                       frame_indices: Optional[Sequence[int]] = None) -> None:
    """One CSV row per frame pair, labelled ``<prev>-<next>``."""
    if frame_indices is None:
        frame_indices = list(range(len(profile) + 1))
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, 'w', newline='', encoding='utf-8') as fh:
            writer = csv.writer(fh, lineterminator='\n')
            writer.writerow(PROFILE_COLUMNS)
            for k, stats in enumerate(profile):
                writer.writerow([
                    f"{frame_indices[k]}-{frame_indices[k + 1]}",
                    repr(stats.var_u), repr(stats.var_v), repr(stats.var_mag),
                    repr(stats.mean_u), repr(stats.mean_v),
                ])
    except OSError as e:
        raise WriteError(f"Failed to write flow profile {path}: {e}", original_error=e)


def read_flow_profile(path: Union[str, Path]) -> List[FlowStats]:
    with open(path, newline='', encoding='utf-8') as fh:
        return [
            FlowStats(
                var_u=float(row['var_u']), var_v=float(row['var_v']),
                var_mag=float(row['var_mag']), mean_u=float(row['mean_u']),
                mean_v=float(row['mean_v']),
            )
            for row in csv.DictReader(fh)
        ]
