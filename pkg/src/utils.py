import json
import logging
from datetime import timedelta
from pathlib import Path
from typing import Any, Union

from src.exceptions import WriteError

logger = logging.getLogger(__name__)


def clip_name(index: int) -> str:
    """Directory / report name of the ``index``-th clip in temporal order."""
    return f"clip_{index}"


def format_duration(seconds: float) -> str:
    """
    Convert seconds to readable duration format

    Args:
        seconds: Number of seconds (fractions kept to 1/100 s)

    Returns:
        Formatted duration (HH:MM:SS.ss or MM:SS.ss)
    """
    total = timedelta(seconds=seconds).total_seconds()
    hours = int(total // 3600)
    minutes = int((total % 3600) // 60)
    secs = total % 60

    if hours > 0:
        return f"{hours:02d}:{minutes:02d}:{secs:05.2f}"
    else:
        return f"{minutes:02d}:{secs:05.2f}"


def write_json(data: Any, path: Union[str, Path]) -> Path:
    """
    Write JSON with sorted keys and a trailing newline so repeated runs
    produce identical bytes.

    Raises:
        WriteError: the file could not be written
    """
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, 'w', encoding='utf-8') as f:
            json.dump(data, f, indent=2, sort_keys=True, ensure_ascii=False)
            f.write('\n')
    except OSError as e:
        raise WriteError(f"Failed to write {path}: {e}", original_error=e)
    return path


def get_dir_size_mb(path: Union[str, Path]) -> float:
    """
    Total size of all files under a directory in MB

    Args:
        path: Directory path

    Returns:
        Size in MB (0 if the directory does not exist)
    """
    path = Path(path)
    if not path.exists():
        return 0.0
    total = sum(p.stat().st_size for p in path.rglob('*') if p.is_file())
    return total / (1024 * 1024)
