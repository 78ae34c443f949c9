"""CLI参数解析模块

提供统一的命令行参数解析接口，以及 默认值 < 配置文件 < 命令行 的配置合并。
"""

import argparse
import json
from pathlib import Path
from typing import Any, Dict

from pydantic import ValidationError as PydanticValidationError

from config import config
from config.pipeline_config import PipelineConfig
from src.exceptions import ConfigurationError

PIPELINE_COMMANDS = ('run', 'detect', 'localize', 'stabilize', 'score')


def _add_pipeline_options(parser: argparse.ArgumentParser) -> None:
    """Flags mirroring ``PipelineConfig``.

    Every flag defaults to SUPPRESS so that only flags actually given on the
    command line override the config file and the built-in defaults.
    """
    S = argparse.SUPPRESS

    io_group = parser.add_argument_group('input/output')
    io_group.add_argument('--input', '-i', default=S, metavar='PATH',
                          help='Frame directory (PNG + meta.json) or .y4m file')
    io_group.add_argument('--output', '-o', default=S, metavar='DIR', help='Output directory')
    io_group.add_argument('--config', dest='config_file', metavar='FILE',
                          help='JSON config file (e.g. the config_echo of a previous report.json)')

    det = parser.add_argument_group('detection')
    det.add_argument('--detector', choices=['classical', 'file'], default=S)
    det.add_argument('--detections', default=S, metavar='FILE',
                     help='Detections JSON for --detector file')
    det.add_argument('--min-score', type=float, default=S)
    det.add_argument('--intensity-quantile', type=float, default=S)
    det.add_argument('--min-area-frac', type=float, default=S)
    det.add_argument('--min-mean-luma', type=float, default=S)
    det.add_argument('--open-kernel', type=int, default=S)

    stl = parser.add_argument_group('localization')
    stl.add_argument('--grad-thresh', type=float, default=S,
                     help='Jitter threshold in px (default: factor x ODR diameter)')
    stl.add_argument('--grad-thresh-factor', type=float, default=S)
    stl.add_argument('--min-clip-seconds', type=float, default=S)
    stl.add_argument('--window', type=int, default=S, metavar='FRAMES')

    natm = parser.add_argument_group('template matching')
    natm.add_argument('--crop-size', type=int, default=S, metavar='PX')
    natm.add_argument('--specular-threshold', type=int, default=S)
    natm.add_argument('--specular-kernel', type=int, default=S)
    natm.add_argument('--specular-masking', action=argparse.BooleanOptionalAction, default=S)
    natm.add_argument('--template-margin', type=float, default=S)
    natm.add_argument('--search-radius', type=int, default=S, metavar='PX',
                      help='Match search radius (default: template side)')
    natm.add_argument('--search-mode', choices=['chained', 'per-frame-box'], default=S)
    natm.add_argument('--min-valid-fraction', type=float, default=S)
    natm.add_argument('--pad-policy', choices=['replicate', 'constant', 'reflect'], default=S)

    flow = parser.add_argument_group('optical flow')
    flow.add_argument('--flow-block-size', type=int, default=S, metavar='PX')
    flow.add_argument('--flow-search-radius', type=int, default=S, metavar='PX')
    flow.add_argument('--score-original', action=argparse.BooleanOptionalAction, default=S,
                      help='Also score the original footage of each clip')


def _add_common_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--threads', type=int, default=argparse.SUPPRESS, metavar='N',
                        help='Worker threads (outputs do not depend on it)')
    parser.add_argument('--verbose', '-v', action='store_true', help='Debug logging')


def create_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='svp-stabilizer',
        description='Fundus video stabilization for spontaneous venous pulsation review',
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  # Full pipeline: detect -> localize -> stabilize -> score
  python src/main.py run --input ./frames --output ./out

  # Individual stages
  python src/main.py detect --input ./frames --output ./out
  python src/main.py localize --input ./frames --output ./out --min-clip-seconds 2
  python src/main.py stabilize --input ./frames --output ./out --crop-size 512
  python src/main.py score --input ./out/clip_0 --output ./out/clip_0_score

  # Replay a run from its report
  python src/main.py run --config report_config.json --output ./replay

  # Synthetic benchmarks
  python src/main.py synth --list-benchmarks
  python src/main.py synth --benchmark sinusoid-20 --output ./bench/sinusoid-20
  python src/main.py synth --spec my_spec.json --output ./bench/custom
        """
    )
    sub = parser.add_subparsers(dest='command', metavar='COMMAND')
    sub.required = True

    helps = {
        'run': 'Full pipeline with report',
        'detect': 'Per-frame ODR detection -> detections.json',
        'localize': 'Trajectory, jitter filter and clips -> trajectory.csv, clips.json',
        'stabilize': 'Template matching and cropping -> clip_<k>/',
        'score': 'Flow-variance score of a frame sequence -> report.json',
    }
    for name in PIPELINE_COMMANDS:
        p = sub.add_parser(name, help=helps[name], description=helps[name])
        _add_pipeline_options(p)
        _add_common_options(p)

    synth = sub.add_parser('synth', help='Generate a synthetic fundus video with ground truth',
                           description='Generate a synthetic fundus video with ground truth')
    source = synth.add_mutually_exclusive_group()
    source.add_argument('--spec', metavar='FILE', help='Synthetic spec JSON')
    source.add_argument('--benchmark', metavar='NAME', help='Name of a standard benchmark')
    source.add_argument('--list-benchmarks', action='store_true', help='List benchmarks and exit')
    synth.add_argument('--output', '-o', metavar='DIR')
    synth.add_argument('--scale', type=float, default=1.0,
                       help='Benchmark size factor (1.0 = 1800x1800)')
    synth.add_argument('--seed', type=int, default=0, help='Benchmark seed')
    _add_common_options(synth)

    return parser


def _load_config_file(path: str) -> Dict[str, Any]:
    try:
        data = json.loads(Path(path).read_text(encoding='utf-8'))
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigurationError(f"Cannot read config file {path}: {e}", original_error=e)
    if not isinstance(data, dict):
        raise ConfigurationError(f"Config file {path} must hold a JSON object")
    return data


def parse_config(args: argparse.Namespace) -> PipelineConfig:
    """Merge defaults < config file < flags into a validated ``PipelineConfig``.

    Raises:
        ConfigurationError: unknown key or out-of-range value
    """
    merged: Dict[str, Any] = config.defaults()
    config_file = getattr(args, 'config_file', None)
    if config_file:
        merged.update(_load_config_file(config_file))

    fields = PipelineConfig.model_fields
    merged.update({k: v for k, v in vars(args).items() if k in fields})

    try:
        return PipelineConfig(**merged)
    except PydanticValidationError as e:
        problems = '; '.join(
            f"{'.'.join(str(p) for p in err['loc']) or 'config'}: {err['msg']}" for err in e.errors()
        )
        raise ConfigurationError(f"Invalid configuration: {problems}", original_error=e)
