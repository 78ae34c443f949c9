"""Validated run configuration.

``PipelineConfig`` is the single object every stage reads its parameters
from. It is built by ``src.cli.parser.parse_config`` from defaults, an
optional JSON file and command-line flags, and is echoed verbatim into
``report.json``.
"""

from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class PipelineConfig(BaseModel):
    model_config = ConfigDict(extra='forbid', frozen=True)

    input: Optional[str] = None
    output: Optional[str] = None

    # Detection
    detector: Literal['classical', 'file'] = 'classical'
    detections: Optional[str] = None
    min_score: float = Field(0.0, ge=0.0, le=1.0)
    intensity_quantile: float = Field(0.99, gt=0.0, lt=1.0)
    min_area_frac: float = Field(0.002, ge=0.0, lt=1.0)
    min_mean_luma: float = Field(20.0, ge=0.0, le=255.0)
    open_kernel: int = Field(5, ge=0)

    # Spatio-temporal localization
    grad_thresh: Optional[float] = Field(None, gt=0.0)
    grad_thresh_factor: float = Field(1.0, gt=0.0)
    min_clip_seconds: float = Field(1.5, gt=0.0)
    window: int = Field(15, ge=2)

    # Template matching
    crop_size: int = Field(640, gt=0)
    specular_threshold: int = Field(220, ge=0, le=255)
    specular_kernel: int = Field(5, ge=1)
    specular_masking: bool = True
    template_margin: float = Field(1.0, gt=0.0)
    search_radius: Optional[int] = Field(None, ge=0)
    search_mode: Literal['chained', 'per-frame-box'] = 'chained'
    min_valid_fraction: float = Field(0.25, gt=0.0, le=1.0)
    pad_policy: Literal['replicate', 'constant', 'reflect'] = 'replicate'

    # Optical flow
    flow_block_size: int = Field(16, ge=4)
    flow_search_radius: int = Field(24, ge=1)
    score_original: bool = True

    threads: int = Field(1, ge=1)

    @field_validator('specular_kernel')
    @classmethod
    def _odd_kernel(cls, v: int) -> int:
        if v % 2 == 0:
            raise ValueError('specular_kernel must be odd')
        return v

    @model_validator(mode='after')
    def _detections_for_file_mode(self) -> 'PipelineConfig':
        if self.detector == 'file' and not self.detections:
            raise ValueError("detector 'file' requires a detections path")
        return self

    def resolve_grad_thresh(self, diameter: int) -> float:
        """Explicit threshold if given, otherwise scaled by the ODR diameter."""
        if self.grad_thresh is not None:
            return self.grad_thresh
        return self.grad_thresh_factor * diameter
