from .settings import config
from .pipeline_config import PipelineConfig

__all__ = ['config', 'PipelineConfig']
