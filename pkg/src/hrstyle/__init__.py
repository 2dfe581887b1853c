"""Photorealistic style transfer with a per-pair optimized high-resolution network."""

__version__ = "0.1.0"

from .errors import StyleTransferError
from .extractor import FeatureExtractor
from .image_io import ImageTensor, ResizePolicy, load_image, save_image, prepare_content, prepare_style
from .losses import LossConfig, total_loss
from .network import GenerationNetworkSpec, build_network, forward
from .trainer import TrainingConfig, TrainingRun, run_transfer

__all__ = [
    "__version__",
    "StyleTransferError",
    "FeatureExtractor",
    "ImageTensor",
    "ResizePolicy",
    "load_image",
    "save_image",
    "prepare_content",
    "prepare_style",
    "LossConfig",
    "total_loss",
    "GenerationNetworkSpec",
    "build_network",
    "forward",
    "TrainingConfig",
    "TrainingRun",
    "run_transfer",
]
