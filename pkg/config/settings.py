import os
from pathlib import Path
from dotenv import load_dotenv

load_dotenv()


def _env_bool(name: str, default: str) -> bool:
    return os.getenv(name, default).lower() == 'true'


class Config:
    # Detection
    DETECTOR_MODE = os.getenv('SVP_DETECTOR', 'classical')
    DETECTOR_MIN_SCORE = float(os.getenv('SVP_MIN_SCORE', '0'))
    INTENSITY_QUANTILE = float(os.getenv('SVP_INTENSITY_QUANTILE', '0.99'))
    MIN_AREA_FRAC = float(os.getenv('SVP_MIN_AREA_FRAC', '0.002'))
    MIN_MEAN_LUMA = float(os.getenv('SVP_MIN_MEAN_LUMA', '20'))
    OPEN_KERNEL = int(os.getenv('SVP_OPEN_KERNEL', '5'))

    # Spatio-temporal localization
    GRAD_THRESH_FACTOR = float(os.getenv('SVP_GRAD_THRESH_FACTOR', '1.0'))
    MIN_CLIP_SECONDS = float(os.getenv('SVP_MIN_CLIP_SECONDS', '1.5'))
    WINDOW_FRAMES = int(os.getenv('SVP_WINDOW', '15'))

    # Template matching
    CROP_SIZE = int(os.getenv('SVP_CROP_SIZE', '640'))
    SPECULAR_THRESHOLD = int(os.getenv('SVP_SPECULAR_THRESHOLD', '220'))
    SPECULAR_KERNEL = int(os.getenv('SVP_SPECULAR_KERNEL', '5'))
    SPECULAR_MASKING = _env_bool('SVP_SPECULAR_MASKING', 'true')
    TEMPLATE_MARGIN = float(os.getenv('SVP_TEMPLATE_MARGIN', '1.0'))
    SEARCH_MODE = os.getenv('SVP_SEARCH_MODE', 'chained')
    MIN_VALID_FRACTION = float(os.getenv('SVP_MIN_VALID_FRACTION', '0.25'))
    PAD_POLICY = os.getenv('SVP_PAD_POLICY', 'replicate')

    # Optical flow
    FLOW_BLOCK_SIZE = int(os.getenv('SVP_FLOW_BLOCK_SIZE', '16'))
    FLOW_SEARCH_RADIUS = int(os.getenv('SVP_FLOW_SEARCH_RADIUS', '24'))
    SCORE_ORIGINAL = _env_bool('SVP_SCORE_ORIGINAL', 'true')

    # Workers
    THREADS = int(os.getenv('SVP_THREADS', '1'))

    # Paths
    BASE_DIR = Path(__file__).parent.parent
    LOG_DIR = Path(os.getenv('SVP_LOG_DIR', str(BASE_DIR / 'logs')))

    @classmethod
    def validate(cls) -> bool:
        if cls.DETECTOR_MODE not in ('classical', 'file'):
            raise ValueError("SVP_DETECTOR must be 'classical' or 'file'")
        if cls.CROP_SIZE < 1:
            raise ValueError("SVP_CROP_SIZE must be positive")
        if cls.THREADS < 1:
            raise ValueError("SVP_THREADS must be positive")
        if cls.SPECULAR_KERNEL < 1 or cls.SPECULAR_KERNEL % 2 == 0:
            raise ValueError("SVP_SPECULAR_KERNEL must be a positive odd integer")
        return True

    @classmethod
    def defaults(cls) -> dict:
        """Pipeline defaults keyed by ``PipelineConfig`` field name."""
        return {
            'detector': cls.DETECTOR_MODE,
            'min_score': cls.DETECTOR_MIN_SCORE,
            'intensity_quantile': cls.INTENSITY_QUANTILE,
            'min_area_frac': cls.MIN_AREA_FRAC,
            'min_mean_luma': cls.MIN_MEAN_LUMA,
            'open_kernel': cls.OPEN_KERNEL,
            'grad_thresh_factor': cls.GRAD_THRESH_FACTOR,
            'min_clip_seconds': cls.MIN_CLIP_SECONDS,
            'window': cls.WINDOW_FRAMES,
            'crop_size': cls.CROP_SIZE,
            'specular_threshold': cls.SPECULAR_THRESHOLD,
            'specular_kernel': cls.SPECULAR_KERNEL,
            'specular_masking': cls.SPECULAR_MASKING,
            'template_margin': cls.TEMPLATE_MARGIN,
            'search_mode': cls.SEARCH_MODE,
            'min_valid_fraction': cls.MIN_VALID_FRACTION,
            'pad_policy': cls.PAD_POLICY,
            'flow_block_size': cls.FLOW_BLOCK_SIZE,
            'flow_search_radius': cls.FLOW_SEARCH_RADIUS,
            'score_original': cls.SCORE_ORIGINAL,
            'threads': cls.THREADS,
        }


config = Config()
