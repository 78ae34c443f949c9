"""Stability metrics and the run report.

The scalar stability measure is the variance of optical flow: per frame
pair, var_u + var_v over the block grid (magnitude variance is reported
alongside). Synthetic runs additionally get the pixel error between the
true ODR center and the crop center.
"""

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from src.exceptions import AlignmentError, TooShortError, WriteError
from src.flow import (
    DEFAULT_BLOCK_SIZE,
    DEFAULT_SEARCH_RADIUS,
    FlowStats,
    Roi,
    clip_flow_profile,
    write_flow_profile,
)
from src.natm import MatchResult
from src.video_io import VideoSequence

logger = logging.getLogger(__name__)

REPORT_VERSION = 1


def _mean(values: Sequence[float]) -> float:
    return math.fsum(values) / len(values) if values else 0.0


@dataclass
class ClipScore:
    """Flow-variance summary of one sequence (or frame range)."""

    n_frames: int
    profile: List[FlowStats]
    profile_file: Optional[str] = None
    frame_indices: Optional[List[int]] = None

    @property
    def mean_var_u(self) -> float:
        return _mean([s.var_u for s in self.profile])

    @property
    def mean_var_v(self) -> float:
        return _mean([s.var_v for s in self.profile])

    @property
    def mean_var_mag(self) -> float:
        return _mean([s.var_mag for s in self.profile])

    @property
    def mean_variance(self) -> float:
        return _mean([s.variance for s in self.profile])

    def to_dict(self) -> Dict[str, Any]:
        return {
            'frames': self.n_frames,
            'frame_pairs': len(self.profile),
            'mean_var_u': self.mean_var_u,
            'mean_var_v': self.mean_var_v,
            'mean_var_mag': self.mean_var_mag,
            'mean_variance': self.mean_variance,
            'profile': self.profile_file,
        }


@dataclass(frozen=True)
class TrajectoryError:
    mean: float
    p95: float
    max: float
    n_frames: int

    def to_dict(self) -> Dict[str, Any]:
        return {'mean': self.mean, 'p95': self.p95, 'max': self.max, 'frames': self.n_frames}


@dataclass
class ClipEntry:
    name: str
    stabilized: ClipScore
    start_frame: Optional[int] = None
    end_frame: Optional[int] = None
    original: Optional[ClipScore] = None
    trajectory_error: Optional[TrajectoryError] = None
    template_frame: Optional[int] = None
    flagged_frames: int = 0

    def to_dict(self) -> Dict[str, Any]:
        return {
            'clip': self.name,
            'start_frame': self.start_frame,
            'end_frame': self.end_frame,
            'template_frame': self.template_frame,
            'flagged_frames': self.flagged_frames,
            'stabilized': self.stabilized.to_dict(),
            'original': self.original.to_dict() if self.original else None,
            'trajectory_error': self.trajectory_error.to_dict() if self.trajectory_error else None,
        }


@dataclass
class StabilityReport:
    per_clip: List[ClipEntry] = field(default_factory=list)
    config_echo: Dict[str, Any] = field(default_factory=dict)
    notes: List[str] = field(default_factory=list)

    @property
    def no_usable_clips(self) -> bool:
        return not self.per_clip

    def overall(self) -> Dict[str, Any]:
        """Means pooled over every frame pair of every clip."""
        def pooled(scores: List[ClipScore]) -> Optional[Dict[str, float]]:
            rows = [s for score in scores for s in score.profile]
            if not rows:
                return None
            return {
                'frame_pairs': len(rows),
                'mean_var_u': _mean([r.var_u for r in rows]),
                'mean_var_v': _mean([r.var_v for r in rows]),
                'mean_var_mag': _mean([r.var_mag for r in rows]),
                'mean_variance': _mean([r.variance for r in rows]),
            }

        return {
            'clips': len(self.per_clip),
            'stabilized': pooled([c.stabilized for c in self.per_clip]),
            'original': pooled([c.original for c in self.per_clip if c.original is not None]),
        }

    def to_dict(self) -> Dict[str, Any]:
        return {
            'version': REPORT_VERSION,
            'no_usable_clips': self.no_usable_clips,
            'notes': list(self.notes),
            'per_clip': [c.to_dict() for c in self.per_clip],
            'overall': self.overall(),
            'config_echo': self.config_echo,
        }


def score_sequence(seq: VideoSequence,
                   block_size: int = DEFAULT_BLOCK_SIZE,
                   search_radius: int = DEFAULT_SEARCH_RADIUS,
                   frame_range: Optional[Tuple[int, int]] = None,
                   roi: Optional[Roi] = None,
                   profile_file: Optional[str] = None) -> ClipScore:
    """Flow-variance profile of ``seq`` (or ``frame_range`` of it) and its means."""
    n_frames = len(seq) if frame_range is None else len(seq.slice(*frame_range))
    if n_frames < 2:
        raise TooShortError(f"Scoring needs >= 2 frames, got {n_frames}", stage='score')
    profile = clip_flow_profile(seq, frame_range, block_size, search_radius, roi)
    indices = seq.indices if frame_range is None else seq.slice(*frame_range).indices
    score = ClipScore(n_frames=n_frames, profile=profile, profile_file=profile_file,
                      frame_indices=indices)
    logger.debug("Scored %d frame(s): mean var_mag %.4f, mean variance %.4f",
                 n_frames, score.mean_var_mag, score.mean_variance)
    return score


def trajectory_error(ground_truth: Sequence[Tuple[float, float]],
                     matches: Sequence[MatchResult],
                     crop_size: int = 640) -> TrajectoryError:
    """Distance of the true ODR center from the crop center, per frame.

    ``MatchResult.center`` is the crop center in input coordinates, so the
    true center sits at ``gt - center + crop_size / 2`` in the crop.
    """
    if len(ground_truth) != len(matches):
        raise AlignmentError(
            f"Ground truth has {len(ground_truth)} frame(s), matches have {len(matches)}",
            stage='score',
        )
    if not matches:
        return TrajectoryError(mean=0.0, p95=0.0, max=0.0, n_frames=0)

    errors = np.array([
        math.hypot(gx - m.center[0], gy - m.center[1])
        for (gx, gy), m in zip(ground_truth, matches)
    ], dtype=np.float64)
    return TrajectoryError(
        mean=_mean(errors.tolist()),
        p95=float(np.percentile(errors, 95)),
        max=float(errors.max()),
        n_frames=len(errors),
    )


def write_report(report: StabilityReport, path: Union[str, Path]) -> None:
    """``report.json`` plus the flow-profile CSVs it references, written
    next to it."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        for entry in report.per_clip:
            for score, default_name in ((entry.stabilized, f"flow_profile_{entry.name}.csv"),
                                        (entry.original, f"flow_profile_{entry.name}_original.csv")):
                if score is None:
                    continue
                if score.profile_file is None:
                    score.profile_file = default_name
                write_flow_profile(score.profile, path.parent / score.profile_file, score.frame_indices)

        with open(path, 'w', encoding='utf-8') as fh:
            json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
            fh.write('\n')
    except OSError as e:
        raise WriteError(f"Failed to write report {path}: {e}", original_error=e, stage='score')
    logger.info("Report written: %s (%d clip(s))", path, len(report.per_clip))


def read_report(path: Union[str, Path]) -> Dict[str, Any]:
    with open(path, 'r', encoding='utf-8') as fh:
        return json.load(fh)
