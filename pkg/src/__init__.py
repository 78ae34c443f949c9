"""眼底视频稳像工具 (SVP fundus video stabilizer)"""

__version__ = '1.0.0'
