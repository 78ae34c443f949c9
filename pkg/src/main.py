#!/usr/bin/env python3
"""SVP眼底视频稳像工具 - 主入口点

CLI逻辑委托给src.cli模块，处理逻辑在src.pipeline中。
"""

import logging
import sys
from pathlib import Path
from typing import List, Optional

# Ensure project root is on sys.path so imports work whether the user runs
# `python src/main.py` or `python -m src.main` from the repository root.
_PROJECT_ROOT = Path(__file__).resolve().parents[1]
if str(_PROJECT_ROOT) not in sys.path:
    sys.path.insert(0, str(_PROJECT_ROOT))

from colorama import init

from config import config
from src.logger import setup_logging
from src.cli import create_parser, CommandHandler, display_banner


def main(argv: Optional[List[str]] = None) -> int:
    parser = create_parser()
    args = parser.parse_args(argv)

    init(autoreset=True)
    setup_logging(config.LOG_DIR, logging.DEBUG if args.verbose else logging.INFO)
    display_banner()

    return CommandHandler(args).execute()


if __name__ == '__main__':
    sys.exit(main())
