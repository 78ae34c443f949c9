"""Frame sequence I/O.

Two lossless, codec-free input formats are supported:

  - a directory holding ``meta.json`` plus zero-padded ``%06d.png`` frames
  - a single uncompressed YUV4MPEG2 (``.y4m``) file, 4:2:0 or 4:4:4

``save_sequence`` writes the directory format and is inverted bit-exactly by
``load_sequence``. Frames are held as ``(H, W, 3)`` ``uint8`` RGB arrays.
"""

import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, Iterator, List, Optional, Sequence, Union

import numpy as np
from PIL import Image

from src.exceptions import (
    CorruptInputError,
    EmptyInputError,
    InputFormatError,
    ValidationError,
    WriteError,
)

logger = logging.getLogger(__name__)

MANIFEST_NAME = 'meta.json'
FRAME_PATTERN = re.compile(r'^\d+\.png$')
CHANNELS = {'R': 0, 'G': 1, 'B': 2}

# ITU-R BT.601 luma weights
LUMA_WEIGHTS = (0.299, 0.587, 0.114)


@dataclass(frozen=True, eq=False)
class Frame:
    """One RGB video frame."""

    index: int
    pixels: np.ndarray
    timestamp: float = 0.0

    def __post_init__(self):
        if self.index < 0:
            raise ValidationError(f"Frame index must be nonnegative, got {self.index}")
        px = self.pixels
        if px.ndim != 3 or px.shape[2] != 3 or px.dtype != np.uint8:
            raise ValidationError(
                f"Frame {self.index}: expected (H, W, 3) uint8 pixels, got {px.shape} {px.dtype}"
            )
        if px.shape[0] == 0 or px.shape[1] == 0:
            raise ValidationError(f"Frame {self.index}: empty pixel buffer")

    @property
    def width(self) -> int:
        return int(self.pixels.shape[1])

    @property
    def height(self) -> int:
        return int(self.pixels.shape[0])


@dataclass(frozen=True, eq=False)
class VideoSequence:
    """Ordered frames sharing one size, plus frame rate and provenance."""

    frames: List[Frame]
    fps: float
    source_id: str = ''
    _positions: Dict[int, int] = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.fps > 0:
            raise ValidationError(f"fps must be positive, got {self.fps}")
        prev = -1
        for pos, f in enumerate(self.frames):
            if f.index <= prev:
                raise CorruptInputError(
                    f"Frame indices must be strictly increasing ({prev} then {f.index})"
                )
            prev = f.index
            self._positions[f.index] = pos
        if self.frames:
            w, h = self.frames[0].width, self.frames[0].height
            for f in self.frames[1:]:
                if (f.width, f.height) != (w, h):
                    raise CorruptInputError(
                        f"Frame {f.index} is {f.width}x{f.height}, expected {w}x{h}"
                    )

    def __len__(self) -> int:
        return len(self.frames)

    def __iter__(self) -> Iterator[Frame]:
        return iter(self.frames)

    @property
    def width(self) -> int:
        return self.frames[0].width if self.frames else 0

    @property
    def height(self) -> int:
        return self.frames[0].height if self.frames else 0

    @property
    def indices(self) -> List[int]:
        return [f.index for f in self.frames]

    def get(self, index: int) -> Frame:
        """Frame by its index (not its list position)."""
        try:
            return self.frames[self._positions[index]]
        except KeyError:
            raise ValidationError(f"Frame index {index} not in sequence '{self.source_id}'") from None

    def slice(self, start: int, end: int) -> 'VideoSequence':
        """Frames with index in ``[start, end]`` (inclusive)."""
        return VideoSequence(
            frames=[f for f in self.frames if start <= f.index <= end],
            fps=self.fps,
            source_id=self.source_id,
        )


def _pixels_of(image: Union[Frame, np.ndarray]) -> np.ndarray:
    return image.pixels if isinstance(image, Frame) else image


def to_grayscale(frame: Union[Frame, np.ndarray]) -> np.ndarray:
    """BT.601 luma, rounded half-up and clamped to ``uint8``."""
    px = _pixels_of(frame).astype(np.float64)
    wr, wg, wb = LUMA_WEIGHTS
    luma = np.floor(wr * px[..., 0] + wg * px[..., 1] + wb * px[..., 2] + 0.5)
    return np.clip(luma, 0, 255).astype(np.uint8)


def channel(frame: Union[Frame, np.ndarray], which: str) -> np.ndarray:
    """Single channel plane ('R', 'G' or 'B'), unchanged."""
    try:
        idx = CHANNELS[which.upper()]
    except KeyError:
        raise ValidationError(f"Unknown channel '{which}', expected one of R, G, B") from None
    return np.ascontiguousarray(_pixels_of(frame)[..., idx])


# ---------------------------------------------------------------------------
# Directory format
# ---------------------------------------------------------------------------

def _read_manifest(directory: Path) -> dict:
    manifest = directory / MANIFEST_NAME
    if not manifest.is_file():
        raise InputFormatError(f"Missing {MANIFEST_NAME} in {directory}")
    try:
        meta = json.loads(manifest.read_text(encoding='utf-8'))
    except (OSError, json.JSONDecodeError) as e:
        raise InputFormatError(f"Unreadable {manifest}: {e}", original_error=e)
    if not isinstance(meta, dict):
        raise InputFormatError(f"{manifest} must hold a JSON object")
    for key in ('fps', 'width', 'height'):
        if key not in meta:
            raise InputFormatError(f"{manifest} lacks '{key}'")
    try:
        fps = float(meta['fps'])
        width, height = int(meta['width']), int(meta['height'])
    except (TypeError, ValueError) as e:
        raise InputFormatError(f"{manifest} has non-numeric fields: {e}", original_error=e)
    if not fps > 0:
        raise InputFormatError(f"{manifest}: fps must be positive, got {fps}")
    return {
        'fps': fps,
        'width': width,
        'height': height,
        'source_id': str(meta.get('source_id') or directory.name),
    }


def _frame_files(directory: Path) -> List[Path]:
    files = [p for p in directory.iterdir() if FRAME_PATTERN.match(p.name)]
    return sorted(files, key=lambda p: int(p.stem))


def _load_directory(directory: Path) -> VideoSequence:
    meta = _read_manifest(directory)
    files = _frame_files(directory)
    if not files:
        raise EmptyInputError(f"No frames found in {directory}")

    frames: List[Frame] = []
    for path in files:
        try:
            with Image.open(path) as img:
                pixels = np.asarray(img.convert('RGB'), dtype=np.uint8)
        except OSError as e:
            raise CorruptInputError(f"Cannot decode {path}: {e}", original_error=e)
        h, w = pixels.shape[:2]
        if (w, h) != (meta['width'], meta['height']):
            raise CorruptInputError(
                f"{path.name} is {w}x{h}, manifest says {meta['width']}x{meta['height']}"
            )
        index = int(path.stem)
        frames.append(Frame(index=index, pixels=pixels, timestamp=index / meta['fps']))

    logger.debug("Loaded %d frame(s) from %s", len(frames), directory)
    return VideoSequence(frames=frames, fps=meta['fps'], source_id=meta['source_id'])


# ---------------------------------------------------------------------------
# YUV4MPEG2
# ---------------------------------------------------------------------------

_Y4M_MAGIC = b'YUV4MPEG2'
_Y4M_420 = ('420', '420jpeg', '420paldv', '420mpeg2')


def _parse_y4m_header(line: bytes) -> dict:
    tokens = line.decode('ascii', errors='replace').split()
    if not tokens or tokens[0] != _Y4M_MAGIC.decode():
        raise InputFormatError("Not a YUV4MPEG2 stream")
    header = {'colorspace': '420jpeg', 'full_range': False}
    for tok in tokens[1:]:
        tag, value = tok[0], tok[1:]
        if tag == 'W':
            header['width'] = int(value)
        elif tag == 'H':
            header['height'] = int(value)
        elif tag == 'F':
            num, _, den = value.partition(':')
            header['fps'] = float(num) / float(den or 1)
        elif tag == 'C':
            header['colorspace'] = value
        elif tag == 'X' and value.upper() == 'COLORRANGE=FULL':
            header['full_range'] = True
    for key in ('width', 'height', 'fps'):
        if key not in header:
            raise InputFormatError(f"Y4M header lacks '{key}'")
    if header['colorspace'] not in _Y4M_420 and header['colorspace'] != '444':
        raise InputFormatError(f"Unsupported Y4M colorspace C{header['colorspace']}")
    return header


def _ycbcr_to_rgb(y: np.ndarray, u: np.ndarray, v: np.ndarray, full_range: bool) -> np.ndarray:
    y = y.astype(np.float64)
    cb = u.astype(np.float64) - 128.0
    cr = v.astype(np.float64) - 128.0
    if full_range:
        r = y + 1.402 * cr
        g = y - 0.344136 * cb - 0.714136 * cr
        b = y + 1.772 * cb
    else:
        yl = 1.164 * (y - 16.0)
        r = yl + 1.596 * cr
        g = yl - 0.392 * cb - 0.813 * cr
        b = yl + 2.017 * cb
    rgb = np.stack([r, g, b], axis=-1)
    return np.clip(np.floor(rgb + 0.5), 0, 255).astype(np.uint8)


def _load_y4m(path: Path) -> VideoSequence:
    try:
        data = path.read_bytes()
    except OSError as e:
        raise InputFormatError(f"Cannot read {path}: {e}", original_error=e)

    eol = data.find(b'\n')
    if eol < 0:
        raise InputFormatError(f"{path}: missing Y4M header")
    header = _parse_y4m_header(data[:eol])
    w, h = header['width'], header['height']
    if header['colorspace'] == '444':
        cw, ch = w, h
    else:
        cw, ch = (w + 1) // 2, (h + 1) // 2
    frame_bytes = w * h + 2 * cw * ch

    frames: List[Frame] = []
    pos = eol + 1
    while pos < len(data):
        line_end = data.find(b'\n', pos)
        if line_end < 0 or not data.startswith(b'FRAME', pos):
            raise CorruptInputError(f"{path}: bad FRAME marker at byte {pos}")
        start = line_end + 1
        stop = start + frame_bytes
        if stop > len(data):
            raise CorruptInputError(f"{path}: truncated frame {len(frames)}")
        buf = np.frombuffer(data, dtype=np.uint8, count=frame_bytes, offset=start)
        y = buf[:w * h].reshape(h, w)
        u = buf[w * h:w * h + cw * ch].reshape(ch, cw)
        v = buf[w * h + cw * ch:].reshape(ch, cw)
        if (cw, ch) != (w, h):
            u = np.repeat(np.repeat(u, 2, axis=0), 2, axis=1)[:h, :w]
            v = np.repeat(np.repeat(v, 2, axis=0), 2, axis=1)[:h, :w]
        index = len(frames)
        frames.append(Frame(
            index=index,
            pixels=_ycbcr_to_rgb(y, u, v, header['full_range']),
            timestamp=index / header['fps'],
        ))
        pos = stop

    if not frames:
        raise EmptyInputError(f"No frames found in {path}")
    logger.debug("Loaded %d Y4M frame(s) from %s", len(frames), path)
    return VideoSequence(frames=frames, fps=header['fps'], source_id=path.stem)


# ---------------------------------------------------------------------------
# Public API
# ---------------------------------------------------------------------------

def load_sequence(path: Union[str, Path]) -> VideoSequence:
    """Load a frame directory or a ``.y4m`` file."""
    path = Path(path)
    if path.is_dir():
        return _load_directory(path)
    if path.is_file():
        with open(path, 'rb') as fh:
            magic = fh.read(len(_Y4M_MAGIC))
        if magic == _Y4M_MAGIC:
            return _load_y4m(path)
        raise InputFormatError(f"{path} is neither a frame directory nor a Y4M file")
    raise InputFormatError(f"Input does not exist: {path}")


def save_frames(frames: Iterable[Frame], path: Union[str, Path], fps: float,
                width: int, height: int, source_id: str = '') -> int:
    """Stream frames to a directory in the ``save_sequence`` layout.

    Numbered PNGs already present in ``path`` are removed first so the
    directory always mirrors what was written. Returns the frame count.
    """
    path = Path(path)
    count = 0
    try:
        path.mkdir(parents=True, exist_ok=True)
        for stale in _frame_files(path):
            stale.unlink()
        meta = {
            'fps': fps,
            'width': width,
            'height': height,
            'source_id': source_id,
        }
        (path / MANIFEST_NAME).write_text(
            json.dumps(meta, indent=2, sort_keys=True) + '\n', encoding='utf-8'
        )
        for frame in frames:
            if (frame.width, frame.height) != (width, height):
                raise CorruptInputError(
                    f"Frame {frame.index} is {frame.width}x{frame.height}, expected {width}x{height}"
                )
            img = Image.fromarray(np.ascontiguousarray(frame.pixels))
            img.save(path / f'{frame.index:06d}.png', format='PNG')
            count += 1
    except OSError as e:
        raise WriteError(f"Failed to write sequence to {path}: {e}", original_error=e)
    logger.debug("Saved %d frame(s) to %s", count, path)
    return count


def save_sequence(seq: VideoSequence, path: Union[str, Path]) -> None:
    """Write ``meta.json`` plus one PNG per frame; ``load_sequence`` reads
    it back bit-exactly."""
    save_frames(seq.frames, path, seq.fps, seq.width, seq.height, seq.source_id)


def make_sequence(images: Sequence[np.ndarray], fps: float, source_id: str = '',
                  start_index: int = 0) -> VideoSequence:
    """Wrap raw RGB arrays as a sequence with consecutive indices."""
    frames = [
        Frame(index=start_index + i, pixels=img, timestamp=(start_index + i) / fps)
        for i, img in enumerate(images)
    ]
    return VideoSequence(frames=frames, fps=fps, source_id=source_id)


def find_truth_file(path: Union[str, Path]) -> Optional[Path]:
    """``truth.csv`` next to a synthetic frame directory, if present."""
    path = Path(path)
    candidate = (path if path.is_dir() else path.parent) / 'truth.csv'
    return candidate if candidate.is_file() else None
