"""
项目特定异常层次结构

提供统一的异常类型，便于精确的错误处理和调试。
所有项目异常都继承自PipelineError基类。
"""

from typing import Any, Dict, Optional


class PipelineError(Exception):
    """Pipeline处理异常的基类"""

    def __init__(self, message: str, stage: Optional[str] = None, original_error: Optional[Exception] = None):
        self.stage = stage
        self.original_error = original_error
        super().__init__(message)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'error': type(self).__name__,
            'message': str(self),
            'stage': self.stage,
        }


class InputFormatError(PipelineError):
    """输入格式异常

    用于缺少meta.json、无法识别的Y4M头等场景。
    """
    pass


class CorruptInputError(PipelineError):
    """输入数据损坏异常

    用于帧尺寸不一致、像素数据截断等场景。
    """
    pass


class EmptyInputError(PipelineError):
    """输入为空异常"""
    pass


class WriteError(PipelineError):
    """写入失败异常

    用于帧序列、CSV、报告等输出文件写入失败。
    """
    pass


class DetectionImportError(PipelineError):
    """检测结果文件解析失败"""
    pass


class DetectionRangeError(PipelineError):
    """检测记录的帧索引超出范围"""
    pass


class ValidationError(PipelineError):
    """数据验证异常

    用于负宽高的检测框、非法参数等场景。
    """
    pass


class NoOdrError(PipelineError):
    """时间线中没有任何视盘检测结果"""
    pass


class FlowSizeError(PipelineError):
    """图像小于一个光流块"""
    pass


class TemplateTooLargeError(PipelineError):
    """模板边长超过帧的短边"""
    pass


class UnreliableMatchError(PipelineError):
    """模板匹配有效像素比例过低

    携带回退结果（位置为搜索中心，flagged=True），调用方记录后继续处理。
    """

    def __init__(self, message: str, result: Any = None, **kwargs):
        self.result = result
        super().__init__(message, **kwargs)


class TooShortError(PipelineError):
    """序列帧数不足以计算光流"""
    pass


class AlignmentError(PipelineError):
    """真值轨迹与匹配结果长度不一致"""
    pass


class SynthSpecError(PipelineError):
    """合成视频参数不合法"""
    pass


class ConfigurationError(PipelineError):
    """配置错误异常

    用于未知配置项、参数越界等场景，CLI以退出码2结束。
    """
    pass
