"""Deterministic synthetic fundus videos with known ODR trajectories.

A retina "world" (textured background, bright disc with a darker rim halo,
vessel curves) is rendered once and moved under a camera that adds its own
fixed vignette and circular field stop. Jitter, blur, blinks, illumination
drift, sensor noise and specular spots are layered on per frame. The true
disc center of every frame is written to ``truth.csv`` next to the frames.

Pixel ``(i, j)`` covers ``[i, i + 1) x [j, j + 1)``, so a disc centred at
``(900, 900)`` with radius 80 occupies columns 820..979 and its tight
bounding box is centred exactly on 900.
"""

import csv
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterator, List, Literal, Optional, Tuple, Union

import cv2
import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError as PydanticValidationError, model_validator

from src.exceptions import SynthSpecError, WriteError
from src.video_io import Frame, VideoSequence, save_frames

logger = logging.getLogger(__name__)

TRUTH_NAME = 'truth.csv'
TRUTH_COLUMNS = ['frame', 'cx', 'cy', 'blink', 'blurred', 'specular']

BACKGROUND_RGB = (195.0, 95.0, 50.0)
DISC_RGB = (225.0, 150.0, 95.0)
# per-channel multipliers inside a vessel
VESSEL_GAIN = (0.78, 0.5, 0.5)
BLINK_GAIN = 0.03

# texture octaves as fractions of the disc radius, with their weights
_OCTAVES = ((0.8, 0.5), (0.25, 0.3), (0.08, 0.2))


class _SpecModel(BaseModel):
    model_config = ConfigDict(extra='forbid')


class DiscSpec(_SpecModel):
    center: Optional[Tuple[float, float]] = None
    path: Optional[List[Tuple[float, float]]] = None
    radius: float = Field(80.0, gt=0)
    brightness: float = Field(1.0, gt=0)


class JitterSpec(_SpecModel):
    kind: Literal['none', 'sinusoid', 'random-walk', 'spike'] = 'none'
    amplitude: float = Field(0.0, ge=0)
    period: float = Field(30.0, gt=0)
    spike_frames: List[int] = Field(default_factory=list)
    step: Optional[float] = Field(None, gt=0)


class BlurSpec(_SpecModel):
    frames: List[int] = Field(default_factory=list)
    sigma: float = Field(4.0, gt=0)
    shake: float = Field(0.0, ge=0)


class BlinkSpec(_SpecModel):
    frames: List[int] = Field(default_factory=list)


class SpecularSpec(_SpecModel):
    frames: List[int] = Field(default_factory=list)
    radius: Optional[float] = Field(None, gt=0)
    placement: Literal['on_odr', 'fixed', 'random'] = 'on_odr'
    # on_odr: offset from the resting disc center, in disc radii
    offset: Tuple[float, float] = (0.4, 0.0)
    position: Optional[Tuple[float, float]] = None


class TextureSpec(_SpecModel):
    background: float = Field(0.10, ge=0, le=0.5)
    disc: float = Field(0.05, ge=0, le=0.5)
    vessels: int = Field(10, ge=0)
    halo: float = Field(0.15, ge=0, le=1)


class SynthSpec(_SpecModel):
    """Everything ``generate`` needs; a pure function of this and ``seed``."""

    name: str = 'synthetic'
    width: int = Field(1800, gt=0)
    height: int = Field(1800, gt=0)
    fps: float = Field(30.0, gt=0)
    n_frames: int = Field(150, gt=0)
    seed: int = 0
    disc: DiscSpec = Field(default_factory=DiscSpec)
    jitter: JitterSpec = Field(default_factory=JitterSpec)
    blur: BlurSpec = Field(default_factory=BlurSpec)
    blinks: BlinkSpec = Field(default_factory=BlinkSpec)
    specular: SpecularSpec = Field(default_factory=SpecularSpec)
    texture: TextureSpec = Field(default_factory=TextureSpec)
    noise_sigma: float = Field(0.0, ge=0)
    illumination_drift: float = Field(0.0, ge=0, lt=1)
    vignette: float = Field(0.3, ge=0, lt=1)
    # field stop radius as a fraction of min(width, height); 0 disables
    aperture: float = Field(0.48, ge=0)
    subpixel: bool = False

    @model_validator(mode='after')
    def _check_ranges(self) -> 'SynthSpec':
        n = self.n_frames
        for label, frames in (('blur', self.blur.frames), ('blinks', self.blinks.frames),
                              ('specular', self.specular.frames),
                              ('spike', self.jitter.spike_frames)):
            bad = [f for f in frames if not 0 <= f < n]
            if bad:
                raise ValueError(f"{label} frames {bad} outside [0, {n})")
        if self.disc.radius >= min(self.width, self.height) / 2:
            raise ValueError("disc radius must be below half the smaller frame side")
        if self.disc.path is not None and len(self.disc.path) != n:
            raise ValueError(f"disc path has {len(self.disc.path)} points for {n} frames")
        if self.specular.placement == 'fixed' and self.specular.frames and self.specular.position is None:
            raise ValueError("fixed specular placement needs a position")
        return self

    @property
    def base_center(self) -> Tuple[float, float]:
        if self.disc.center is not None:
            return self.disc.center
        return self.width / 2.0, self.height / 2.0

    @property
    def spot_radius(self) -> float:
        return self.specular.radius if self.specular.radius is not None else 0.5 * self.disc.radius


@dataclass(frozen=True)
class TruthRow:
    frame: int
    cx: float
    cy: float
    blink: bool = False
    blurred: bool = False
    specular: bool = False


@dataclass(frozen=True, eq=False)
class SynthResult:
    sequence: VideoSequence
    truth: List[TruthRow]

    def centers(self) -> List[Tuple[float, float]]:
        return [(r.cx, r.cy) for r in self.truth]


def parse_spec(data: Union[dict, SynthSpec]) -> SynthSpec:
    if isinstance(data, SynthSpec):
        return data
    try:
        return SynthSpec.model_validate(data)
    except PydanticValidationError as e:
        raise SynthSpecError(f"Invalid synthetic spec: {e}", stage='synth', original_error=e)


def load_spec(path: Union[str, Path]) -> SynthSpec:
    try:
        data = json.loads(Path(path).read_text(encoding='utf-8'))
    except (OSError, json.JSONDecodeError) as e:
        raise SynthSpecError(f"Cannot read synthetic spec {path}: {e}", stage='synth', original_error=e)
    return parse_spec(data)


# ---------------------------------------------------------------------------
# Ground truth
# ---------------------------------------------------------------------------

def ground_truth(spec: SynthSpec) -> List[TruthRow]:
    """Per-frame true disc centers and artifact labels."""
    n = spec.n_frames
    cx0, cy0 = spec.base_center
    j = spec.jitter
    rng = np.random.default_rng([spec.seed, 101])

    if spec.disc.path is not None:
        offsets = [(x - cx0, y - cy0) for x, y in spec.disc.path]
    elif j.kind == 'sinusoid':
        offsets = [
            (j.amplitude * math.sin(2 * math.pi * t / j.period),
             j.amplitude * math.sin(2 * math.pi * t / j.period + math.pi / 2))
            for t in range(n)
        ]
    elif j.kind == 'random-walk':
        step = j.step if j.step is not None else j.amplitude / 10.0
        steps = rng.normal(0.0, step, size=(n, 2))
        steps[0] = 0.0
        walk = np.zeros((n, 2))
        for t in range(1, n):
            walk[t] = np.clip(walk[t - 1] + steps[t], -j.amplitude, j.amplitude)
        offsets = [(float(x), float(y)) for x, y in walk]
    elif j.kind == 'spike':
        spikes = sorted(set(j.spike_frames))
        offsets = [(j.amplitude * sum(1 for s in spikes if s <= t), 0.0) for t in range(n)]
    else:
        offsets = [(0.0, 0.0)] * n

    blurred = set(spec.blur.frames)
    blinks = set(spec.blinks.frames)
    specular = set(spec.specular.frames)
    rows = []
    for t, (ox, oy) in enumerate(offsets):
        if t in blurred and spec.blur.shake > 0:
            angle = rng.uniform(0.0, 2 * math.pi)
            ox += spec.blur.shake * math.cos(angle)
            oy += spec.blur.shake * math.sin(angle)
        rows.append(TruthRow(frame=t, cx=cx0 + ox, cy=cy0 + oy, blink=t in blinks,
                             blurred=t in blurred, specular=t in specular))
    return rows


# ---------------------------------------------------------------------------
# Rendering
# ---------------------------------------------------------------------------

def _value_noise(rng: np.random.Generator, height: int, width: int, cell: int) -> np.ndarray:
    gh, gw = height // cell + 3, width // cell + 3
    grid = (rng.random((gh, gw)) * 2.0 - 1.0).astype(np.float32)
    up = cv2.resize(grid, (gw * cell, gh * cell), interpolation=cv2.INTER_CUBIC)
    return up[cell:cell + height, cell:cell + width]


def _texture(rng: np.random.Generator, height: int, width: int, radius: float) -> np.ndarray:
    out = np.zeros((height, width), dtype=np.float32)
    for frac, weight in _OCTAVES:
        cell = max(2, int(round(radius * frac)))
        out += weight * _value_noise(rng, height, width, cell)
    return np.clip(out, -1.0, 1.0)


def _half_up(value: float) -> int:
    return int(math.floor(value + 0.5))


class RetinaRenderer:
    """Renders frames of one ``SynthSpec``; ``render(t)`` is pure in ``t``."""

    def __init__(self, spec: SynthSpec, truth: Optional[List[TruthRow]] = None):
        self.spec = spec
        self.truth = truth if truth is not None else ground_truth(spec)
        cx0, cy0 = spec.base_center
        reach = max(max(abs(r.cx - cx0), abs(r.cy - cy0)) for r in self.truth)
        self.margin = int(math.ceil(reach)) + 2
        self.world = self._build_world()
        self.camera_gain = self._build_vignette()
        self.aperture_mask = self._build_aperture()

    def _build_world(self) -> np.ndarray:
        spec, m = self.spec, self.margin
        h, w = spec.height + 2 * m, spec.width + 2 * m
        r = spec.disc.radius
        rng = np.random.default_rng([spec.seed, 202])
        cx, cy = spec.base_center[0] + m, spec.base_center[1] + m

        bg_tex = _texture(rng, h, w, r)
        disc_tex = _texture(rng, h, w, r)
        ys, xs = np.mgrid[0:h, 0:w].astype(np.float32)
        dist = np.hypot(xs + 0.5 - cx, ys + 0.5 - cy)
        inside = dist <= r

        bg = np.empty((h, w, 3), dtype=np.float32)
        disc = np.empty((h, w, 3), dtype=np.float32)
        for ch in range(3):
            bg[..., ch] = BACKGROUND_RGB[ch] * (1.0 + spec.texture.background * bg_tex)
            disc[..., ch] = DISC_RGB[ch] * spec.disc.brightness * (1.0 + spec.texture.disc * disc_tex)

        if spec.texture.halo > 0:
            rim = np.clip(dist - r, 0.0, None) / (0.4 * r)
            bg *= (1.0 - spec.texture.halo * np.exp(-rim * rim))[..., None]

        vessels = np.zeros((h, w), dtype=np.uint8)
        thickness = max(1, _half_up(0.06 * r))
        for _ in range(spec.texture.vessels):
            angle = rng.uniform(0.0, 2 * math.pi)
            bend = rng.uniform(-0.25, 0.25)
            pts = []
            for k in range(24):
                rad = r * (1.0 + 0.3 * k)
                a = angle + bend * k * 0.3
                pts.append((int(cx + rad * math.cos(a)), int(cy + rad * math.sin(a))))
            cv2.polylines(vessels, [np.array(pts, dtype=np.int32)], False, 1, thickness, cv2.LINE_8)
        vessels[inside] = 0
        gain = np.where(vessels[..., None] > 0, np.array(VESSEL_GAIN, dtype=np.float32), 1.0)
        bg *= gain

        return np.where(inside[..., None], disc, bg).astype(np.float32)

    def _build_vignette(self) -> np.ndarray:
        spec = self.spec
        ys, xs = np.mgrid[0:spec.height, 0:spec.width].astype(np.float32)
        rho = np.hypot(xs + 0.5 - spec.width / 2.0, ys + 0.5 - spec.height / 2.0)
        scale = min(spec.width, spec.height) / 2.0
        return np.clip(1.0 - spec.vignette * (rho / scale) ** 2, 0.0, None).astype(np.float32)

    def _build_aperture(self) -> Optional[np.ndarray]:
        spec = self.spec
        if spec.aperture <= 0:
            return None
        ys, xs = np.mgrid[0:spec.height, 0:spec.width].astype(np.float32)
        rho = np.hypot(xs + 0.5 - spec.width / 2.0, ys + 0.5 - spec.height / 2.0)
        return rho > spec.aperture * min(spec.width, spec.height)

    def _view(self, row: TruthRow) -> np.ndarray:
        spec, m = self.spec, self.margin
        ox = row.cx - spec.base_center[0]
        oy = row.cy - spec.base_center[1]
        if spec.subpixel:
            shift = np.float32([[1, 0, m - ox], [0, 1, m - oy]])
            return cv2.warpAffine(self.world, shift, (spec.width, spec.height),
                                  flags=cv2.INTER_LINEAR | cv2.WARP_INVERSE_MAP,
                                  borderMode=cv2.BORDER_REPLICATE)
        x0, y0 = m - _half_up(ox), m - _half_up(oy)
        return self.world[y0:y0 + spec.height, x0:x0 + spec.width].copy()

    def _spot_center(self, row: TruthRow) -> Tuple[int, int]:
        spec = self.spec
        sp = spec.specular
        r = spec.disc.radius
        if sp.placement == 'fixed':
            return _half_up(sp.position[0]), _half_up(sp.position[1])
        if sp.placement == 'random':
            rng = np.random.default_rng([spec.seed, 303, row.frame])
            angle = rng.uniform(0.0, 2 * math.pi)
            rad = r * 0.6 * math.sqrt(rng.random())
            return _half_up(row.cx + rad * math.cos(angle)), _half_up(row.cy + rad * math.sin(angle))
        cx0, cy0 = spec.base_center
        return _half_up(cx0 + sp.offset[0] * r), _half_up(cy0 + sp.offset[1] * r)

    def render(self, t: int) -> np.ndarray:
        spec = self.spec
        row = self.truth[t]
        img = self._view(row)

        gain = 1.0
        if spec.illumination_drift > 0:
            gain += spec.illumination_drift * math.sin(2 * math.pi * t / spec.n_frames)
        img *= (self.camera_gain * gain)[..., None]

        if row.blurred:
            img = cv2.GaussianBlur(img, (0, 0), spec.blur.sigma, borderType=cv2.BORDER_REPLICATE)
        if spec.noise_sigma > 0:
            noise_rng = np.random.default_rng([spec.seed, 404, t])
            img += noise_rng.normal(0.0, spec.noise_sigma, size=img.shape).astype(np.float32)
        if row.specular:
            radius = max(1, _half_up(spec.spot_radius))
            cv2.circle(img, self._spot_center(row), radius, (255.0, 255.0, 255.0), -1, cv2.LINE_8)
        if self.aperture_mask is not None:
            img[self.aperture_mask] = 0.0
        if row.blink:
            img *= BLINK_GAIN

        return np.clip(np.floor(img + 0.5), 0, 255).astype(np.uint8)

    def frames(self, threads: int = 1) -> Iterator[Frame]:
        """Frames in order; rendering fans out over ``threads`` workers."""
        spec = self.spec
        indices = range(spec.n_frames)
        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                # bounded look-ahead keeps memory flat on full-size specs
                chunk = threads * 2
                for start in range(0, spec.n_frames, chunk):
                    batch = list(indices[start:start + chunk])
                    for t, px in zip(batch, pool.map(self.render, batch)):
                        yield Frame(index=t, pixels=px, timestamp=t / spec.fps)
        else:
            for t in indices:
                yield Frame(index=t, pixels=self.render(t), timestamp=t / spec.fps)


def generate(spec: Union[SynthSpec, dict], threads: int = 1) -> SynthResult:
    """Render the whole video in memory together with its ground truth."""
    spec = parse_spec(spec)
    renderer = RetinaRenderer(spec)
    seq = VideoSequence(frames=list(renderer.frames(threads)), fps=spec.fps, source_id=spec.name)
    logger.info("Generated '%s': %d frame(s) %dx%d", spec.name, spec.n_frames, spec.width, spec.height)
    return SynthResult(sequence=seq, truth=renderer.truth)


def write_truth(rows: List[TruthRow], path: Union[str, Path]) -> None:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, 'w', newline='', encoding='utf-8') as fh:
            writer = csv.writer(fh, lineterminator='\n')
            writer.writerow(TRUTH_COLUMNS)
            for r in rows:
                writer.writerow([r.frame, repr(r.cx), repr(r.cy), int(r.blink),
                                 int(r.blurred), int(r.specular)])
    except OSError as e:
        raise WriteError(f"Failed to write ground truth {path}: {e}", original_error=e, stage='synth')


def read_truth(path: Union[str, Path]) -> List[TruthRow]:
    with open(path, newline='', encoding='utf-8') as fh:
        return [
            TruthRow(frame=int(row['frame']), cx=float(row['cx']), cy=float(row['cy']),
                     blink=row['blink'] == '1', blurred=row['blurred'] == '1',
                     specular=row['specular'] == '1')
            for row in csv.DictReader(fh)
        ]


def write_synthetic(spec: Union[SynthSpec, dict], out_dir: Union[str, Path],
                    threads: int = 1) -> List[TruthRow]:
    """Render straight to disk (frames, ``meta.json``, ``truth.csv``,
    ``spec.json``) without holding the whole video in memory."""
    spec = parse_spec(spec)
    out_dir = Path(out_dir)
    renderer = RetinaRenderer(spec)
    count = save_frames(renderer.frames(threads), out_dir, spec.fps, spec.width, spec.height, spec.name)
    write_truth(renderer.truth, out_dir / TRUTH_NAME)
    try:
        (out_dir / 'spec.json').write_text(
            json.dumps(spec.model_dump(mode='json'), indent=2, sort_keys=True) + '\n',
            encoding='utf-8',
        )
    except OSError as e:
        raise WriteError(f"Failed to write spec.json in {out_dir}: {e}", original_error=e, stage='synth')
    logger.info("Wrote '%s': %d frame(s) to %s", spec.name, count, out_dir)
    return renderer.truth


# ---------------------------------------------------------------------------
# Benchmarks
# ---------------------------------------------------------------------------

def standard_benchmarks(scale: float = 1.0, seed: int = 0) -> Dict[str, SynthSpec]:
    """The fixed benchmark suite, keyed by name.

    At ``scale=1`` every case is 1800x1800 @ 30 fps, 150 frames, disc radius
    80. Smaller scales shrink every length (frame size, radius, amplitudes,
    blur) together so geometry ratios are preserved.
    """
    size = _half_up(1800 * scale)
    r = 80.0 * scale

    def spec(name: str, **kw) -> SynthSpec:
        base = dict(name=name, width=size, height=size, fps=30.0, n_frames=150, seed=seed,
                    disc={'radius': r})
        base.update(kw)
        return parse_spec(base)

    def sinusoid(amplitude: float) -> dict:
        return {'kind': 'sinusoid', 'amplitude': amplitude * scale, 'period': 30.0}

    suite = [
        spec('clean-static'),
        spec('sinusoid-10', jitter=sinusoid(10)),
        spec('sinusoid-20', jitter=sinusoid(20)),
        spec('sinusoid-40', jitter=sinusoid(40)),
        spec('spike', jitter={'kind': 'spike', 'amplitude': 200 * scale, 'spike_frames': [75]}),
        spec('blink-gap', jitter=sinusoid(5), blinks={'frames': list(range(70, 80))}),
        spec('blur-window',
             blur={'frames': list(range(0, 30)), 'sigma': 4 * scale, 'shake': 6 * scale},
             noise_sigma=2.0),
        spec('specular-on-odr',
             jitter=sinusoid(20),
             disc={'radius': r, 'brightness': 0.85},
             texture={'background': 0.03, 'disc': 0.02},
             specular={'frames': list(range(150)), 'placement': 'on_odr'}),
        spec('combined-worst-case',
             jitter=sinusoid(20),
             blur={'frames': list(range(40, 45)), 'sigma': 4 * scale, 'shake': 6 * scale},
             blinks={'frames': list(range(100, 105))},
             specular={'frames': list(range(60, 90)), 'placement': 'random'},
             noise_sigma=2.0,
             illumination_drift=0.1),
    ]
    return {s.name: s for s in suite}


def benchmark(name: str, scale: float = 1.0, seed: int = 0) -> SynthSpec:
    suite = standard_benchmarks(scale, seed)
    if name not in suite:
        raise SynthSpecError(f"Unknown benchmark '{name}'; choose from {', '.join(suite)}", stage='synth')
    return suite[name]
