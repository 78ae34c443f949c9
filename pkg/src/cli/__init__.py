from src.cli.parser import create_parser, parse_config
from src.cli.commands import CommandHandler
from src.cli.display import (
    display_banner,
    display_benchmarks,
    display_detections,
    display_localization,
    display_report,
)

__all__ = [
    'create_parser',
    'parse_config',
    'CommandHandler',
    'display_banner',
    'display_benchmarks',
    'display_detections',
    'display_localization',
    'display_report',
]
