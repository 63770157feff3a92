"""Per-layer embedding export for frozen vision transformers."""

from .extract import ExtractConfig, build_task_partition, extract, scan_image_folder
from .model import BACKBONES, FrozenBackbone, parse_model_id
from .writer import StreamWriter, fnv1a64

__version__ = "0.1.0"

__all__ = [
    "BACKBONES",
    "ExtractConfig",
    "FrozenBackbone",
    "StreamWriter",
    "build_task_partition",
    "extract",
    "fnv1a64",
    "parse_model_id",
    "scan_image_folder",
]
