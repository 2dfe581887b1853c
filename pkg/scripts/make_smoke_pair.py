"""Regenerate the bundled 64x64 content/style smoke pair.

The content image is a small synthetic street scene with hard edges (sky,
ground, house, windows, sun, tree); the style image is a smooth warm
dusk palette with no shared geometry. Both are deterministic.

    python scripts/make_smoke_pair.py
"""

from pathlib import Path

import numpy as np
from PIL import Image

OUT = Path(__file__).resolve().parents[1] / "src" / "hrstyle" / "data"
N = 64


def content() -> np.ndarray:
    yy, xx = np.mgrid[0:N, 0:N] / (N - 1)
    img = np.zeros((N, N, 3))
    sky = np.stack([0.45 + 0.2 * yy, 0.65 + 0.2 * yy, 0.95 - 0.1 * yy], -1)
    img[:] = sky
    ground = yy > 0.7
    img[ground] = [0.25, 0.55, 0.2]
    # house body, roof, door, windows
    img[34:46, 12:36] = [0.85, 0.8, 0.7]
    for r in range(24, 34):
        half = (r - 24) * 13 // 10
        img[r, 24 - half:24 + half] = [0.6, 0.15, 0.1]
    img[38:46, 21:27] = [0.35, 0.2, 0.1]
    img[37:41, 14:19] = [0.3, 0.45, 0.8]
    img[37:41, 29:34] = [0.3, 0.45, 0.8]
    # sun
    img[(yy * N - 12) ** 2 + (xx * N - 50) ** 2 < 36] = [1.0, 0.9, 0.3]
    # tree
    img[36:46, 46:49] = [0.4, 0.25, 0.1]
    img[(yy * N - 31) ** 2 + (xx * N - 47.5) ** 2 < 40] = [0.1, 0.4, 0.15]
    return img


def style() -> np.ndarray:
    yy, xx = np.mgrid[0:N, 0:N] / (N - 1)
    rng = np.random.default_rng(7)
    top = np.array([0.35, 0.1, 0.35])
    mid = np.array([0.95, 0.45, 0.15])
    low = np.array([0.2, 0.08, 0.1])
    t = yy[..., None]
    img = np.where(t < 0.6, top + (mid - top) * t / 0.6, mid + (low - mid) * (t - 0.6) / 0.4)
    img = img + 0.08 * np.sin(6 * np.pi * xx)[..., None] * np.array([1.0, 0.6, 0.2])
    img = img + 0.03 * rng.standard_normal((N, N, 1))
    return np.clip(img, 0, 1)


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    for name, arr in (("smoke_content.png", content()), ("smoke_style.png", style())):
        Image.fromarray(np.round(arr * 255).astype(np.uint8)).save(OUT / name)
        print("wrote", OUT / name)


if __name__ == "__main__":
    main()
