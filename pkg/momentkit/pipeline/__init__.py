"""
File formats, configuration and the command line.
"""
from .config import PipelineConfig, load_config
