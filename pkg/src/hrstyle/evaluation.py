"""Structure-preservation scoring and the runtime benchmark.

Contours are compared on grayscale versions of the images: a Sobel
gradient magnitude is computed for each and the two edge maps are scored by
normalized cross-correlation. The benchmark times complete transfers at a
ladder of resolutions.
"""

from __future__ import annotations

import csv
import platform
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from scipy import ndimage

from .errors import ShapeMismatch, TooSmall, ValidationError
from .extractor import FeatureExtractor
from .image_io import ImageTensor, ResizePolicy, prepare_content
from .losses import LossConfig
from .network import GenerationNetworkSpec
from .trainer import TrainingConfig, run_transfer

__all__ = [
    "REC601",
    "DEFAULT_LADDER",
    "BenchmarkRow",
    "BenchmarkReport",
    "to_grayscale",
    "sobel_contour",
    "contour_similarity",
    "grayscale_histogram_distance",
    "compare_contours",
    "device_descriptor",
    "run_benchmark",
]

REC601 = (0.299, 0.587, 0.114)
DEFAULT_LADDER = ((128, 128), (256, 256), (512, 512))


def _hwc(img) -> np.ndarray:
    if isinstance(img, ImageTensor):
        if img.range != "unit":
            raise ValidationError("grayscale conversion expects a unit-range image")
        return img.numpy()
    arr = np.asarray(img.detach().cpu() if isinstance(img, torch.Tensor) else img, dtype=np.float64)
    if arr.ndim == 3 and arr.shape[0] == 3 and arr.shape[-1] != 3:
        arr = arr.transpose(1, 2, 0)
    if arr.ndim != 3 or arr.shape[-1] != 3:
        raise ValidationError(f"expected an RGB image, got shape {arr.shape}")
    return arr


def to_grayscale(img) -> np.ndarray:
    """Rec.601 luma ``0.299 R + 0.587 G + 0.114 B`` as a float64 ``[H, W]`` array."""
    return np.clip(_hwc(img) @ np.asarray(REC601), 0.0, 1.0)


def sobel_contour(gray) -> np.ndarray:
    """Sobel gradient magnitude ``sqrt(Gx^2 + Gy^2)`` with replicated borders."""
    gray = np.asarray(gray, dtype=np.float64)
    if gray.ndim != 2:
        raise ValidationError(f"expected a 2-D grayscale array, got shape {gray.shape}")
    if min(gray.shape) < 3:
        raise TooSmall(f"Sobel needs at least 3x3 pixels, got {gray.shape}")
    gx = ndimage.sobel(gray, axis=1, mode="nearest")
    gy = ndimage.sobel(gray, axis=0, mode="nearest")
    return np.hypot(gx, gy)


def contour_similarity(a, b) -> float:
    """Normalized cross-correlation of two max-normalized edge maps, in ``[0, 1]``.

    Two all-zero maps are considered identical (1.0); one all-zero map
    against a non-zero one scores 0.0.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeMismatch(f"edge maps differ in shape: {a.shape} vs {b.shape}")
    amax, bmax = a.max(initial=0.0), b.max(initial=0.0)
    if amax == 0 and bmax == 0:
        return 1.0
    if amax == 0 or bmax == 0:
        return 0.0
    a, b = a / amax, b / bmax
    score = float(np.sum(a * b) / np.sqrt(np.sum(a * a) * np.sum(b * b)))
    return min(max(score, 0.0), 1.0)


def grayscale_histogram_distance(a, b, bins: int = 64) -> float:
    """Total-variation distance between grayscale intensity histograms, in ``[0, 1]``.

    An auxiliary statistic for how far the tonal distribution moved; not a
    pass/fail criterion.
    """
    ha, _ = np.histogram(to_grayscale(a), bins=bins, range=(0.0, 1.0))
    hb, _ = np.histogram(to_grayscale(b), bins=bins, range=(0.0, 1.0))
    return 0.5 * float(np.abs(ha / ha.sum() - hb / hb.sum()).sum())


@dataclass(frozen=True)
class ContourComparison:
    gray_a: np.ndarray
    gray_b: np.ndarray
    edges_a: np.ndarray
    edges_b: np.ndarray
    similarity: float


def compare_contours(reference, candidate) -> ContourComparison:
    ga, gb = to_grayscale(reference), to_grayscale(candidate)
    if ga.shape != gb.shape:
        raise ShapeMismatch(f"images differ in size: {ga.shape} vs {gb.shape}")
    ea, eb = sobel_contour(ga), sobel_contour(gb)
    return ContourComparison(ga, gb, ea, eb, contour_similarity(ea, eb))


# -- benchmark -------------------------------------------------------------


def device_descriptor() -> str:
    cpu = platform.processor() or platform.machine()
    return f"cpu:{cpu}|threads={torch.get_num_threads()}|torch={torch.__version__}"


@dataclass(frozen=True)
class BenchmarkRow:
    resolution: tuple[int, int]
    steps: int
    wall_seconds: float
    device: str


@dataclass
class BenchmarkReport:
    rows: list[BenchmarkRow] = field(default_factory=list)

    def to_csv(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["height", "width", "steps", "wall_seconds", "device"])
            for r in self.rows:
                w.writerow([r.resolution[0], r.resolution[1], r.steps, f"{r.wall_seconds:.4f}", r.device])
        return path

    def table(self) -> str:
        lines = [f"{'resolution':>12}  {'steps':>5}  {'seconds':>9}", "-" * 30]
        for r in self.rows:
            res = f"{r.resolution[0]}x{r.resolution[1]}"
            lines.append(f"{res:>12}  {r.steps:>5}  {r.wall_seconds:>9.3f}")
        if self.rows:
            lines.append(f"device: {self.rows[0].device}")
        return "\n".join(lines)


def _synthetic_pair(h: int, w: int, seed: int) -> tuple[torch.Tensor, torch.Tensor]:
    gen = torch.Generator().manual_seed(seed)
    yy = torch.linspace(0, 1, h).view(h, 1).expand(h, w)
    xx = torch.linspace(0, 1, w).view(1, w).expand(h, w)
    content = torch.stack([yy, xx, 0.5 * (xx + yy)])
    content = (content + 0.05 * torch.rand(3, h, w, generator=gen)).clamp(0, 1)
    style = torch.rand(3, h, w, generator=gen)
    return content, style


def run_benchmark(
    resolutions=DEFAULT_LADDER,
    steps: int = 200,
    net_spec: GenerationNetworkSpec | None = None,
    loss_cfg: LossConfig | None = None,
    fx: FeatureExtractor | None = None,
    seed: int = 0,
    images: tuple | None = None,
) -> BenchmarkReport:
    """Time one full transfer per resolution, sequentially.

    Synthetic content/style images are generated at each resolution unless
    ``images`` supplies a ``(content, style)`` pair, which is then resized
    with :func:`~hrstyle.image_io.prepare_content` for both roles.
    """
    resolutions = [tuple(int(v) for v in r) for r in resolutions]
    for h, w in resolutions:
        if h <= 0 or w <= 0 or h % 4 or w % 4:
            raise ValidationError(f"benchmark resolution {h}x{w} is not divisible by 4")
    loss_cfg = loss_cfg or LossConfig()
    if fx is None:
        fx = FeatureExtractor.from_file(depth=loss_cfg.deepest_layer())
    train_cfg = TrainingConfig(steps=steps, seed=seed, log_every=max(steps, 1))
    device = device_descriptor()
    report = BenchmarkReport()
    for h, w in resolutions:
        if images is None:
            content, style = _synthetic_pair(h, w, seed)
        else:
            policy = ResizePolicy((h, w))
            content = prepare_content(images[0], policy).data
            style = prepare_content(images[1], policy).data
        t0 = time.perf_counter()
        run_transfer(content, style, net_spec, loss_cfg, train_cfg, fx=fx)
        report.rows.append(BenchmarkRow((h, w), steps, time.perf_counter() - t0, device))
    return report
