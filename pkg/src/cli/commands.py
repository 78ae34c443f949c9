"""CLI命令处理模块

提供统一的命令处理接口，将参数解析与业务逻辑分离。
退出码：0 成功，1 运行时失败，2 用法/配置错误。
"""

import logging
from pathlib import Path

from config import config
from src.cli.display import (
    console_print,
    display_benchmarks,
    display_detections,
    display_localization,
    display_report,
    print_error_json,
)
from src.cli.parser import parse_config
from src.exceptions import ConfigurationError, PipelineError
from src.kernels import set_worker_threads
from src.logger import get_current_log_file
from src.pipeline import StabilizationPipeline
from src.synth import benchmark, load_spec, standard_benchmarks, write_synthetic

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


class CommandHandler:
    """CLI命令处理器"""

    def __init__(self, args):
        self.args = args

    def execute(self) -> int:
        try:
            try:
                config.validate()
            except ValueError as e:
                raise ConfigurationError(str(e), original_error=e)

            handler = getattr(self, f"_handle_{self.args.command}")
            handler()
            return EXIT_OK

        except ConfigurationError as e:
            logger.error(str(e))
            print_error_json(e)
            return EXIT_USAGE
        except PipelineError as e:
            logger.error("%s failed at stage '%s': %s", self.args.command, e.stage, e)
            logger.debug("Details", exc_info=True)
            self._point_to_log()
            print_error_json(e)
            return EXIT_FAILURE
        except KeyboardInterrupt:
            logger.error("User interrupted")
            print_error_json(PipelineError("Interrupted"))
            return EXIT_FAILURE
        except Exception as e:
            logger.error(f"Program exited abnormally: {e}")
            logger.debug("Details", exc_info=True)
            self._point_to_log()
            print_error_json(PipelineError(str(e), original_error=e))
            return EXIT_FAILURE

    def _point_to_log(self) -> None:
        log_file = get_current_log_file()
        if log_file is not None:
            console_print(f"Details in log: {log_file}")

    def _pipeline(self) -> StabilizationPipeline:
        cfg = parse_config(self.args)
        if not cfg.output:
            raise ConfigurationError("--output is required")
        return StabilizationPipeline(cfg)

    def _handle_run(self) -> None:
        pipeline = self._pipeline()
        result = pipeline.run()
        display_report(result.report, result.output_dir)

    def _handle_detect(self) -> None:
        pipeline = self._pipeline()
        seq = pipeline.load()
        timeline = pipeline.detect(seq)
        path = pipeline.write_detections(timeline)
        display_detections(len(timeline), len(seq), path)

    def _handle_localize(self) -> None:
        pipeline = self._pipeline()
        seq = pipeline.load()
        timeline = pipeline.detect(seq)
        pipeline.write_detections(timeline)
        loc = pipeline.localize(seq, timeline)
        pipeline.write_localization(loc)
        display_localization(loc)

    def _handle_stabilize(self) -> None:
        pipeline = self._pipeline()
        result = pipeline.run(score=False)
        display_localization(result.localization)
        for output in result.outputs:
            console_print(f"  {output.name}: {len(output.sequence)} frame(s), "
                          f"template frame {output.template.source_frame}, "
                          f"{output.flagged_frames} flagged")
        for note in pipeline.notes:
            console_print(f"  note: {note}")

    def _handle_score(self) -> None:
        pipeline = self._pipeline()
        report = pipeline.score_input()
        display_report(report, pipeline.output_dir)

    def _handle_synth(self) -> None:
        args = self.args
        threads = getattr(args, 'threads', config.THREADS)
        if threads < 1:
            raise ConfigurationError(f"--threads must be >= 1, got {threads}")
        if args.scale <= 0:
            raise ConfigurationError(f"--scale must be positive, got {args.scale}")

        if args.list_benchmarks:
            display_benchmarks(standard_benchmarks(args.scale, args.seed))
            return
        if not args.output:
            raise ConfigurationError("--output is required")
        if args.spec:
            spec = load_spec(args.spec)
        elif args.benchmark:
            spec = benchmark(args.benchmark, args.scale, args.seed)
        else:
            raise ConfigurationError("One of --spec, --benchmark or --list-benchmarks is required")

        set_worker_threads(threads)
        truth = write_synthetic(spec, Path(args.output), threads=threads)
        console_print(f"\nWrote '{spec.name}': {len(truth)} frame(s) "
                      f"{spec.width}x{spec.height} to {args.output}")
