"""Stabilization pipeline.

``StabilizationPipeline`` runs one input video through
load → detect → localize → stabilize → score, tracking the active stage so
that any error escaping a stage is tagged with it before it reaches the CLI.

Each stage method is usable on its own (the CLI stage subcommands call them
directly); ``run()`` chains all of them and writes the full output tree::

    <output>/
        detections.json
        trajectory.csv
        clips.json
        clip_<k>/            stabilized frames + meta.json + matches.csv
        flow_profile_clip_<k>.csv
        flow_profile_clip_<k>_original.csv
        report.json
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Set, Tuple

from config.pipeline_config import PipelineConfig
from src.batch_processor import BatchProcessor
from src.detection import (
    DetectionTimeline,
    DetectorParams,
    estimate_odr_diameter,
    export_detections,
    run_detector,
)
from src.exceptions import AlignmentError, NoOdrError, PipelineError, ValidationError
from src.flow import centered_roi
from src.kernels import set_worker_threads
from src.metrics import (
    ClipEntry,
    StabilityReport,
    score_sequence,
    trajectory_error,
    write_report,
)
from src.natm import (
    MaskPolicy,
    MatchResult,
    Template,
    extract_template,
    select_smooth_window,
    select_template_frame,
    stabilize_clip,
    write_matches_csv,
)
from src.stl import (
    ClipSegment,
    Trajectory,
    build_trajectory,
    filter_jitters,
    segment_clips,
    write_trajectory_csv,
)
from src.synth import read_truth
from src.utils import clip_name, write_json
from src.video_io import VideoSequence, find_truth_file, load_sequence, make_sequence, save_sequence

logger = logging.getLogger(__name__)

STAGES = ('load', 'detect', 'localize', 'stabilize', 'score')

# Fields that change how a run executes but not what it produces.
EXECUTION_FIELDS = {'output', 'threads'}

DETECTIONS_FILE = 'detections.json'
TRAJECTORY_FILE = 'trajectory.csv'
CLIPS_FILE = 'clips.json'
MATCHES_FILE = 'matches.csv'
REPORT_FILE = 'report.json'


@dataclass
class Localization:
    trajectory: Trajectory
    removed: Set[int]
    clips: List[ClipSegment]
    diameter: Optional[int] = None
    grad_thresh: Optional[float] = None

    def to_dict(self) -> dict:
        return {
            'odr_diameter': self.diameter,
            'grad_thresh': self.grad_thresh,
            'removed_frames': sorted(self.removed),
            'clips': [clip.to_dict(clip_name(k)) for k, clip in enumerate(self.clips)],
        }


@dataclass
class ClipOutput:
    """Stabilized result of one clip before scoring."""

    name: str
    clip: ClipSegment
    interval: Tuple[int, int]
    template: Template
    sequence: VideoSequence
    matches: List[MatchResult]

    @property
    def flagged_frames(self) -> int:
        return sum(m.flagged for m in self.matches)


@dataclass
class RunResult:
    report: StabilityReport
    localization: Localization
    outputs: List[ClipOutput] = field(default_factory=list)
    output_dir: Optional[Path] = None


def config_echo(cfg: PipelineConfig) -> Dict:
    """Effective configuration as written to ``report.json``."""
    return cfg.model_dump(mode='json', exclude=EXECUTION_FIELDS)


class StabilizationPipeline:
    """Run the detect → localize → stabilize → score pipeline on one video.

    Args:
        cfg: validated run configuration
        sequence: already-loaded input (skips reading ``cfg.input``)
    """

    def __init__(self, cfg: PipelineConfig, sequence: Optional[VideoSequence] = None):
        self.cfg = cfg
        self.output_dir: Optional[Path] = Path(cfg.output) if cfg.output else None
        self.current_stage: str = 'load'
        self.notes: List[str] = []
        self._sequence = sequence
        set_worker_threads(cfg.threads)

    # ------------------------------------------------------------------
    # Internal helpers
    # ------------------------------------------------------------------

    def _set_stage(self, stage: str):
        self.current_stage = stage
        logger.debug("Stage: %s", stage)

    def _fail(self, error: Exception) -> PipelineError:
        """Tag ``error`` with the active stage, wrapping foreign exceptions."""
        if isinstance(error, PipelineError):
            if error.stage is None:
                error.stage = self.current_stage
            return error
        return PipelineError(f"{self.current_stage} failed: {error}",
                             stage=self.current_stage, original_error=error)

    def _require_output(self) -> Path:
        if self.output_dir is None:
            raise ValidationError("An output directory is required", stage=self.current_stage)
        return self.output_dir

    def _note(self, message: str):
        logger.warning(message)
        self.notes.append(message)

    def _mask_policy(self) -> MaskPolicy:
        return MaskPolicy(enabled=self.cfg.specular_masking,
                          threshold=self.cfg.specular_threshold,
                          kernel=self.cfg.specular_kernel)

    # ------------------------------------------------------------------
    # Stages
    # ------------------------------------------------------------------

    def load(self) -> VideoSequence:
        self._set_stage('load')
        if self._sequence is None:
            if not self.cfg.input:
                raise ValidationError("An input path is required", stage='load')
            self._sequence = load_sequence(self.cfg.input)
        seq = self._sequence
        if seq.indices != list(range(len(seq))):
            # detection timelines are keyed by position
            logger.info("Renumbering frames %d..%d of '%s' from 0",
                        seq.indices[0], seq.indices[-1], seq.source_id)
            seq = make_sequence([f.pixels for f in seq.frames], seq.fps, seq.source_id)
            self._sequence = seq
        logger.info("Loaded '%s': %d frame(s) %dx%d @ %.3g fps",
                    seq.source_id, len(seq), seq.width, seq.height, seq.fps)
        return seq

    def detect(self, seq: VideoSequence) -> DetectionTimeline:
        self._set_stage('detect')
        timeline = run_detector(
            seq,
            mode=self.cfg.detector,
            params=DetectorParams.from_config(self.cfg),
            detections_path=self.cfg.detections,
            threads=self.cfg.threads,
        )
        logger.info("Detect: ODR in %d/%d frame(s)", len(timeline), len(seq))
        return timeline

    def localize(self, seq: VideoSequence, timeline: DetectionTimeline) -> Localization:
        self._set_stage('localize')
        trajectory = build_trajectory(timeline, self.cfg.window)

        try:
            diameter = estimate_odr_diameter(timeline)
        except NoOdrError:
            self._note("No ODR detected in any frame")
            return Localization(trajectory=trajectory, removed=set(), clips=[])

        grad_thresh = self.cfg.resolve_grad_thresh(diameter)
        removed = filter_jitters(trajectory, grad_thresh)
        clips = segment_clips(timeline, removed, seq.fps, self.cfg.min_clip_seconds)
        if not clips:
            self._note(f"No clip reaches {self.cfg.min_clip_seconds:g} s of continuous visibility")

        logger.info("Localize: diameter %d px, threshold %.2f, %d frame(s) removed, %d clip(s)",
                    diameter, grad_thresh, len(removed), len(clips))
        return Localization(trajectory=trajectory, removed=removed, clips=clips,
                            diameter=diameter, grad_thresh=grad_thresh)

    def stabilize(self, seq: VideoSequence, timeline: DetectionTimeline,
                  loc: Localization, index: int) -> ClipOutput:
        """Template selection and matching for ``loc.clips[index]``."""
        cfg = self.cfg
        clip = loc.clips[index]
        name = clip_name(index)

        interval = select_smooth_window(loc.trajectory, clip, cfg.window)
        first = next(t for t in range(interval[0], interval[1] + 1) if timeline.is_detected(t))
        roi = centered_roi(timeline.get(first).center, cfg.crop_size, seq.width, seq.height)
        template_frame = select_template_frame(seq, interval, cfg.flow_block_size,
                                               cfg.flow_search_radius, roi)

        policy = self._mask_policy()
        template = extract_template(seq, template_frame, timeline, loc.diameter,
                                    cfg.template_margin, policy)
        sequence, matches = stabilize_clip(
            seq, clip, template,
            crop_size=cfg.crop_size,
            pad_policy=cfg.pad_policy,
            policy=policy,
            search_radius=cfg.search_radius,
            search_mode=cfg.search_mode,
            timeline=timeline,
            min_valid_fraction=cfg.min_valid_fraction,
            source_id=f"{seq.source_id}:{name}" if seq.source_id else name,
            diameter=loc.diameter,
        )
        logger.info("%s: frames %d-%d, window %d-%d, template frame %d",
                    name, clip.start_frame, clip.end_frame, interval[0], interval[1], template_frame)
        return ClipOutput(name=name, clip=clip, interval=interval, template=template,
                          sequence=sequence, matches=matches)

    def score(self, seq: VideoSequence, output: ClipOutput,
              truth: Optional[List[Tuple[float, float]]] = None) -> ClipEntry:
        cfg = self.cfg
        clip = output.clip
        stabilized = score_sequence(output.sequence, cfg.flow_block_size, cfg.flow_search_radius,
                                    profile_file=f"flow_profile_{output.name}.csv")
        original = None
        if cfg.score_original:
            original = score_sequence(seq, cfg.flow_block_size, cfg.flow_search_radius,
                                      frame_range=(clip.start_frame, clip.end_frame),
                                      profile_file=f"flow_profile_{output.name}_original.csv")

        error = None
        if truth is not None:
            if clip.end_frame >= len(truth):
                raise AlignmentError(
                    f"Ground truth covers {len(truth)} frame(s), clip ends at {clip.end_frame}",
                    stage='score',
                )
            error = trajectory_error(truth[clip.start_frame:clip.end_frame + 1],
                                     output.matches, cfg.crop_size)

        logger.info("%s: mean var_mag %.4f stabilized%s", output.name, stabilized.mean_var_mag,
                    f", {original.mean_var_mag:.4f} original" if original else "")
        return ClipEntry(
            name=output.name,
            stabilized=stabilized,
            start_frame=clip.start_frame,
            end_frame=clip.end_frame,
            original=original,
            trajectory_error=error,
            template_frame=output.template.source_frame,
            flagged_frames=output.flagged_frames,
        )

    # ------------------------------------------------------------------
    # Writers
    # ------------------------------------------------------------------

    def write_detections(self, timeline: DetectionTimeline) -> Path:
        path = self._require_output() / DETECTIONS_FILE
        export_detections(timeline, path)
        return path

    def write_localization(self, loc: Localization) -> None:
        out = self._require_output()
        write_trajectory_csv(loc.trajectory, loc.removed, out / TRAJECTORY_FILE)
        write_json(loc.to_dict(), out / CLIPS_FILE)

    def write_clip(self, output: ClipOutput) -> Path:
        clip_dir = self._require_output() / output.name
        save_sequence(output.sequence, clip_dir)
        write_matches_csv(output.matches, clip_dir / MATCHES_FILE)
        return clip_dir

    # ------------------------------------------------------------------
    # Orchestration
    # ------------------------------------------------------------------

    def _load_truth(self) -> Optional[List[Tuple[float, float]]]:
        if not self.cfg.input:
            return None
        path = find_truth_file(self.cfg.input)
        if path is None:
            return None
        logger.info("Ground truth found: %s", path)
        return [(row.cx, row.cy) for row in read_truth(path)]

    def _process_clip(self, index: int, seq: VideoSequence, timeline: DetectionTimeline,
                      loc: Localization, truth, do_score: bool):
        output = self.stabilize(seq, timeline, loc, index)
        if self.output_dir is not None:
            self.write_clip(output)
        if not do_score:
            return output, None
        return output, self.score(seq, output, truth)

    def run(self, score: bool = True) -> RunResult:
        """Run every stage; writes the output tree when an output directory is set.

        Raises:
            PipelineError: tagged with the stage that was active
        """
        try:
            seq = self.load()
            timeline = self.detect(seq)
            if self.output_dir is not None:
                self.write_detections(timeline)

            loc = self.localize(seq, timeline)
            if self.output_dir is not None:
                self.write_localization(loc)

            self._set_stage('stabilize')
            truth = self._load_truth() if score else None
            processor = BatchProcessor(
                self._process_clip,
                label="Clip",
                log_item_name=lambda idx, k: clip_name(k),
                threads=self.cfg.threads,
            )
            batch = processor.process(list(range(len(loc.clips))), seq=seq, timeline=timeline,
                                      loc=loc, truth=truth, do_score=score)

            if batch.failures:
                # first failing clip in clip order, whatever the thread count
                _, k, _, error = batch.failures[0]
                logger.error("%s failed, aborting run", clip_name(k))
                raise self._fail(error)

            outputs: List[ClipOutput] = []
            entries: List[ClipEntry] = []
            for output, entry in batch.results:
                outputs.append(output)
                if entry is not None:
                    entries.append(entry)

            self._set_stage('score')
            report = StabilityReport(per_clip=entries, config_echo=config_echo(self.cfg),
                                     notes=list(self.notes))
            if score and self.output_dir is not None:
                write_report(report, self.output_dir / REPORT_FILE)

            logger.info("Run complete: %d clip(s) stabilized", len(outputs))
            return RunResult(report=report, localization=loc, outputs=outputs,
                             output_dir=self.output_dir)
        except PipelineError as e:
            raise self._fail(e)
        except Exception as e:
            raise self._fail(e) from e

    def score_input(self) -> StabilityReport:
        """Flow-variance score of the whole input as one clip (``score`` command)."""
        try:
            seq = self.load()
            self._set_stage('score')
            name = "input"
            entry = ClipEntry(
                name=name,
                stabilized=score_sequence(seq, self.cfg.flow_block_size, self.cfg.flow_search_radius,
                                          profile_file=f"flow_profile_{name}.csv"),
                start_frame=seq.indices[0],
                end_frame=seq.indices[-1],
            )
            report = StabilityReport(per_clip=[entry], config_echo=config_echo(self.cfg),
                                     notes=list(self.notes))
            if self.output_dir is not None:
                write_report(report, self.output_dir / REPORT_FILE)
            return report
        except PipelineError as e:
            raise self._fail(e)
        except Exception as e:
            raise self._fail(e) from e
