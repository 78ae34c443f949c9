"""统一控制台输出模块

提供一致的控制台输出接口，区分日志和用户界面输出。
错误以单行JSON写到stderr，供批处理脚本解析。
"""

import json
import logging
import sys
from typing import Dict

from colorama import Fore, Style

from src.exceptions import PipelineError
from src.utils import clip_name, format_duration, get_dir_size_mb

logger = logging.getLogger(__name__)


def console_print(message: str = "", style: str = None) -> None:
    if style:
        print(f"{style}{message}{Style.RESET_ALL}")
    else:
        print(message)


def print_error_json(error: PipelineError) -> None:
    print(json.dumps(error.to_dict(), sort_keys=True), file=sys.stderr)


def display_banner() -> None:
    banner = f"""
{Fore.CYAN}╔═══════════════════════════════════════════════════════════╗
║   SVP Fundus Video Stabilizer                             ║
║   ODR localization + noise-aware template matching        ║
╚═══════════════════════════════════════════════════════════╝{Style.RESET_ALL}
"""
    console_print(banner)


def display_detections(n_detected: int, n_frames: int, path) -> None:
    console_print(f"\nODR detected in {n_detected}/{n_frames} frame(s)")
    console_print(f"  Detections: {path}")


def display_localization(loc) -> None:
    console_print("\nLocalization")
    console_print("=" * 40)
    if loc.diameter is None:
        console_print("  No ODR detected", Fore.YELLOW)
        return
    console_print(f"  ODR diameter   : {loc.diameter} px")
    console_print(f"  Jitter thresh  : {loc.grad_thresh:.2f} px")
    console_print(f"  Removed frames : {len(loc.removed)}")
    console_print(f"  Clips          : {len(loc.clips)}")
    for k, clip in enumerate(loc.clips):
        console_print(f"    {clip_name(k)}: frames {clip.start_frame}-{clip.end_frame} "
                      f"({format_duration(clip.length_seconds)})")


def display_report(report, output_dir=None) -> None:
    console_print("\nStability report")
    console_print("=" * 60)
    if report.no_usable_clips:
        console_print("  No usable clips", Fore.YELLOW)
    for entry in report.per_clip:
        line = f"  {entry.name:<10} mean var_mag {entry.stabilized.mean_var_mag:10.4f}"
        if entry.original is not None:
            line += f"  (original {entry.original.mean_var_mag:.4f})"
        console_print(line)
        if entry.trajectory_error is not None:
            err = entry.trajectory_error
            console_print(f"             center error mean {err.mean:.2f} px, "
                          f"p95 {err.p95:.2f} px, max {err.max:.2f} px")
        if entry.flagged_frames:
            console_print(f"             {entry.flagged_frames} unreliable match(es)", Fore.YELLOW)
    for note in report.notes:
        console_print(f"  note: {note}", Fore.YELLOW)
    if output_dir is not None:
        console_print(f"\n  Output: {output_dir} ({get_dir_size_mb(output_dir):.1f} MB)")
    console_print()


def display_benchmarks(suite: Dict) -> None:
    console_print("\nStandard benchmarks")
    console_print("=" * 60)
    for name, spec in suite.items():
        console_print(f"  {name:<22} {spec.width}x{spec.height} {spec.n_frames} frames, "
                      f"jitter {spec.jitter.kind}")
    console_print()
