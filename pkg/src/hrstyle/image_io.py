"""Image loading, saving, resizing and feature-extractor normalization.

Images are held as ``ImageTensor``: a float tensor of shape ``[3, H, W]``
tagged with its value range. ``unit`` images live in ``[0, 1]``;
``normalized`` images have had the extractor's per-channel statistics
applied and are unbounded.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Literal

import numpy as np
import torch
import torch.nn.functional as F
from PIL import Image, UnidentifiedImageError

from .errors import (
    InvalidTarget,
    UnreadableFile,
    UnsupportedFormat,
    ValidationError,
    WrongRangeMode,
)

__all__ = [
    "IMAGENET_MEAN",
    "IMAGENET_STD",
    "ImageTensor",
    "ResizePolicy",
    "StyleResolutionWarning",
    "load_image",
    "save_image",
    "save_gray",
    "prepare_content",
    "prepare_style",
    "normalize",
    "denormalize",
    "normalize_tensor",
]

# torchvision's published ImageNet training statistics for VGG.
IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)

RangeMode = Literal["unit", "normalized"]
_FORMATS = {"PNG", "JPEG"}


class StyleResolutionWarning(UserWarning):
    """Style and content resolutions differ by more than the tolerated factor."""


@dataclass(frozen=True)
class ImageTensor:
    data: torch.Tensor
    range: RangeMode = "unit"

    def __post_init__(self):
        if self.range not in ("unit", "normalized"):
            raise WrongRangeMode(f"unknown range mode {self.range!r}")
        if self.data.ndim != 3 or self.data.shape[0] != 3:
            raise ValidationError(
                f"expected a [3, H, W] image, got shape {tuple(self.data.shape)}"
            )
        if self.range == "unit" and self.data.numel():
            lo, hi = float(self.data.min()), float(self.data.max())
            if lo < 0.0 or hi > 1.0:
                raise ValidationError(
                    f"unit-range image has values outside [0, 1]: [{lo}, {hi}]"
                )

    @property
    def height(self) -> int:
        return int(self.data.shape[1])

    @property
    def width(self) -> int:
        return int(self.data.shape[2])

    @property
    def size(self) -> tuple[int, int]:
        return self.height, self.width

    def numpy(self) -> np.ndarray:
        """``[H, W, 3]`` float64 copy, convenient for plotting and evaluation."""
        return self.data.detach().cpu().double().permute(1, 2, 0).numpy()


@dataclass(frozen=True)
class ResizePolicy:
    content_target: tuple[int, int] = (500, 500)
    style_policy: Literal["keep_original"] = "keep_original"
    # ratio beyond which a style/content size mismatch is reported
    mismatch_factor: float = 4.0

    def __post_init__(self):
        h, w = self.content_target
        if h <= 0 or w <= 0 or h % 4 or w % 4:
            raise InvalidTarget(
                f"content target {self.content_target} must be positive and divisible by 4"
            )
        if self.style_policy != "keep_original":
            raise ValidationError(f"unsupported style policy {self.style_policy!r}")


def load_image(path) -> ImageTensor:
    """Decode a PNG or JPEG file into a unit-range RGB ``ImageTensor``.

    Grayscale files are replicated to three channels and alpha is dropped.
    """
    path = Path(path)
    if not path.is_file():
        raise UnreadableFile(f"no such image file: {path}")
    try:
        with Image.open(path) as im:
            fmt = im.format
            if fmt not in _FORMATS:
                raise UnsupportedFormat(f"{path}: format {fmt} is not PNG or JPEG")
            rgb = np.asarray(im.convert("RGB"), dtype=np.uint8)
    except UnidentifiedImageError as exc:
        raise UnreadableFile(f"cannot decode image {path}") from exc
    except OSError as exc:
        raise UnreadableFile(f"cannot read image {path}: {exc}") from exc
    data = torch.from_numpy(rgb.copy()).permute(2, 0, 1).float().div_(255.0)
    return ImageTensor(data, "unit")


def _to_uint8(arr: np.ndarray) -> np.ndarray:
    return np.round(np.clip(arr, 0.0, 1.0) * 255.0).astype(np.uint8)


def save_image(img: ImageTensor, path) -> Path:
    """Write a unit-range image as 8-bit RGB; the format follows the suffix."""
    if img.range != "unit":
        raise WrongRangeMode("save_image expects a unit-range image; denormalize first")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(_to_uint8(img.numpy()), mode="RGB").save(path)
    return path


def save_gray(arr, path, rescale: bool = False) -> Path:
    """Write a 2-D array as an 8-bit grayscale PNG.

    With ``rescale`` the array is divided by its maximum first, which is how
    edge maps are stored.
    """
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim != 2:
        raise ValidationError(f"expected a 2-D array, got shape {arr.shape}")
    if rescale and arr.max() > 0:
        arr = arr / arr.max()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(_to_uint8(arr), mode="L").save(path)
    return path


def prepare_content(img: ImageTensor, policy: ResizePolicy | None = None) -> ImageTensor:
    """Bilinearly resample the content image to ``policy.content_target``."""
    policy = policy or ResizePolicy()
    h, w = policy.content_target
    if h % 4 or w % 4:
        raise InvalidTarget(f"content target {(h, w)} is not divisible by 4")
    if img.size == (h, w):
        return img
    # antialias keeps large downscales from aliasing; still a bilinear kernel
    out = F.interpolate(
        img.data[None], size=(h, w), mode="bilinear", align_corners=False, antialias=True
    )[0]
    if img.range == "unit":
        out = out.clamp(0.0, 1.0)
    return ImageTensor(out, img.range)


def prepare_style(
    img: ImageTensor,
    policy: ResizePolicy | None = None,
    content_size: tuple[int, int] | None = None,
) -> ImageTensor:
    """Return the style image at its native resolution.

    Emits :class:`StyleResolutionWarning` when either side differs from the
    content side by more than ``policy.mismatch_factor``. Never resizes.
    """
    policy = policy or ResizePolicy()
    ch, cw = content_size or policy.content_target
    for style_side, content_side, name in ((img.height, ch, "height"), (img.width, cw, "width")):
        ratio = max(style_side / content_side, content_side / style_side)
        if ratio > policy.mismatch_factor:
            warnings.warn(
                f"style {name} {style_side} differs from content {name} {content_side} "
                f"by a factor of {ratio:.1f}; the transferred style may cover only part "
                "of the output",
                StyleResolutionWarning,
                stacklevel=2,
            )
            break
    return img


def _stats(ref: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    mean = torch.tensor(IMAGENET_MEAN, dtype=ref.dtype, device=ref.device).view(-1, 1, 1)
    std = torch.tensor(IMAGENET_STD, dtype=ref.dtype, device=ref.device).view(-1, 1, 1)
    return mean, std


def normalize_tensor(x: torch.Tensor) -> torch.Tensor:
    """Differentiable normalization of a ``[..., 3, H, W]`` unit-range tensor."""
    mean, std = _stats(x)
    return (x - mean) / std


def normalize(img: ImageTensor) -> ImageTensor:
    if img.range != "unit":
        raise WrongRangeMode("normalize expects a unit-range image")
    return ImageTensor(normalize_tensor(img.data), "normalized")


def denormalize(img: ImageTensor) -> ImageTensor:
    if img.range != "normalized":
        raise WrongRangeMode("denormalize expects a normalized image")
    mean, std = _stats(img.data)
    return ImageTensor((img.data * std + mean).clamp(0.0, 1.0), "unit")
