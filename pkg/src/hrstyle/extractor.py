"""Frozen VGG19 feature extractor.

Layer names follow the ``convN_M`` convention and map onto the indices of
torchvision's ``vgg19().features``; activations are taken after the ReLU
that follows each convolution. Weights come from a local state-dict file in
torchvision's key layout (``features.<idx>.weight``), optionally verified
against a SHA-256 digest. Nothing is downloaded.

For offline work, :meth:`FeatureExtractor.untrained` builds the same
architecture from a seeded initialization.
"""

from __future__ import annotations

import hashlib
import os
from pathlib import Path
from typing import Iterable

import torch
import torch.nn.functional as F

from .errors import ExtractorUnavailable, UnknownLayer, ValidationError
from .image_io import ImageTensor

__all__ = ["VGG19_LAYERS", "WEIGHTS_ENV", "FeatureExtractor", "file_sha256"]

WEIGHTS_ENV = "HRSTYLE_VGG19_WEIGHTS"

_CFG = [64, 64, "M", 128, 128, "M", 256, 256, 256, 256, "M",
        512, 512, 512, 512, "M", 512, 512, 512, 512, "M"]


def _layer_table() -> dict[str, tuple[int, int, int]]:
    """name -> (features index, in channels, out channels)."""
    table = {}
    idx, block, conv, c_in = 0, 1, 1, 3
    for v in _CFG:
        if v == "M":
            idx += 1
            block, conv = block + 1, 1
            continue
        table[f"conv{block}_{conv}"] = (idx, c_in, v)
        idx += 2  # conv + relu
        conv += 1
        c_in = v
    return table


VGG19_LAYERS = _layer_table()


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _ordered(layers: Iterable[str]) -> list[str]:
    names = list(dict.fromkeys(layers))
    for n in names:
        if n not in VGG19_LAYERS:
            raise UnknownLayer(f"unknown VGG19 layer {n!r}")
    return sorted(names, key=lambda n: VGG19_LAYERS[n][0])


class FeatureExtractor:
    """Read-only VGG19 trunk truncated after its deepest requested layer.

    Parameters
    ----------
    weights : dict
        Mapping ``features.<idx>.weight`` / ``.bias`` to tensors for every
        convolution up to ``depth``.
    depth : str
        Deepest layer kept, e.g. ``"conv5_1"``.
    source : str
        Human-readable provenance recorded in run snapshots.
    """

    def __init__(self, weights: dict, depth: str = "conv5_1", dtype=torch.float32, source: str = ""):
        if depth not in VGG19_LAYERS:
            raise UnknownLayer(f"unknown VGG19 layer {depth!r}")
        self.depth = depth
        self.source = source
        last = VGG19_LAYERS[depth][0]
        self._convs: dict[int, tuple[torch.Tensor, torch.Tensor]] = {}
        for name, (idx, c_in, c_out) in VGG19_LAYERS.items():
            if idx > last:
                continue
            try:
                w = weights[f"features.{idx}.weight"]
                b = weights[f"features.{idx}.bias"]
            except KeyError as exc:
                raise ExtractorUnavailable(f"weights lack {name} ({exc.args[0]})") from None
            if tuple(w.shape) != (c_out, c_in, 3, 3) or tuple(b.shape) != (c_out,):
                raise ExtractorUnavailable(f"{name}: unexpected weight shape {tuple(w.shape)}")
            self._convs[idx] = (
                w.detach().to(dtype).clone().requires_grad_(False),
                b.detach().to(dtype).clone().requires_grad_(False),
            )
        self._last = last

    # construction -----------------------------------------------------

    @classmethod
    def from_file(cls, path=None, sha256: str | None = None, depth: str = "conv5_1",
                  dtype=torch.float32) -> "FeatureExtractor":
        """Load a torchvision-layout VGG19 state dict from ``path``.

        ``path`` defaults to the ``HRSTYLE_VGG19_WEIGHTS`` environment
        variable. A mismatching ``sha256`` raises ``ExtractorUnavailable``.
        """
        path = path or os.environ.get(WEIGHTS_ENV)
        if not path:
            raise ExtractorUnavailable(
                f"no VGG19 weight file given and ${WEIGHTS_ENV} is not set"
            )
        path = Path(path)
        if not path.is_file():
            raise ExtractorUnavailable(f"VGG19 weight file not found: {path}")
        digest = file_sha256(path)
        if sha256 and digest != sha256.lower():
            raise ExtractorUnavailable(f"{path}: sha256 {digest} does not match expected {sha256}")
        try:
            state = torch.load(path, map_location="cpu", weights_only=True)
        except Exception as exc:
            raise ExtractorUnavailable(f"cannot load VGG19 weights from {path}: {exc}") from exc
        if "state_dict" in state and isinstance(state["state_dict"], dict):
            state = state["state_dict"]
        return cls(state, depth, dtype, source=f"file:{path.name}:sha256={digest}")

    @classmethod
    def untrained(cls, seed: int = 0, depth: str = "conv5_1", dtype=torch.float32) -> "FeatureExtractor":
        """VGG19 with seeded Kaiming-normal weights (torchvision's init), no download."""
        return cls(untrained_state_dict(seed, depth), depth, dtype, source=f"untrained:seed={seed}")

    # use ----------------------------------------------------------------

    @property
    def layers(self) -> list[str]:
        return [n for n, (i, _, _) in VGG19_LAYERS.items() if i <= self._last]

    @property
    def dtype(self) -> torch.dtype:
        return next(iter(self._convs.values()))[0].dtype

    def state_dict(self) -> dict[str, torch.Tensor]:
        out = {}
        for idx, (w, b) in self._convs.items():
            out[f"features.{idx}.weight"] = w
            out[f"features.{idx}.bias"] = b
        return out

    def fingerprint(self) -> str:
        """SHA-256 over the raw weight bytes, for checking the extractor stays frozen."""
        h = hashlib.sha256()
        for idx in sorted(self._convs):
            for t in self._convs[idx]:
                h.update(t.detach().cpu().contiguous().numpy().tobytes())
        return h.hexdigest()

    def extract(self, img: torch.Tensor, layers: Iterable[str]) -> dict[str, torch.Tensor]:
        """Activations of ``layers`` for a normalized ``[3, H, W]`` or ``[N, 3, H, W]`` image.

        Gradients flow to ``img``; extractor weights never require grad.
        """
        if isinstance(img, ImageTensor):
            if img.range != "normalized":
                raise ValidationError("extract expects a normalized image")
            img = img.data
        wanted = _ordered(layers)
        for n in wanted:
            if VGG19_LAYERS[n][0] > self._last:
                raise UnknownLayer(f"layer {n} lies beyond this extractor's depth {self.depth}")
        single = img.ndim == 3
        x = img[None] if single else img
        x = x.to(self.dtype)
        stop = VGG19_LAYERS[wanted[-1]][0] if wanted else -1
        by_idx = {VGG19_LAYERS[n][0]: n for n in wanted}
        out = {}
        idx = 0
        for v in _CFG:
            if idx > stop:
                break
            if v == "M":
                x = F.max_pool2d(x, 2, 2)
                idx += 1
                continue
            w, b = self._convs[idx]
            x = F.relu(F.conv2d(x, w, b, padding=1))
            if idx in by_idx:
                out[by_idx[idx]] = x[0] if single else x
            idx += 2
        return {n: out[n] for n in wanted}

    __call__ = extract


def untrained_state_dict(seed: int = 0, depth: str = "conv5_1") -> dict[str, torch.Tensor]:
    last = VGG19_LAYERS[depth][0]
    gen = torch.Generator().manual_seed(seed)
    state = {}
    for idx, c_in, c_out in VGG19_LAYERS.values():
        if idx > last:
            continue
        std = (2.0 / (c_out * 9)) ** 0.5  # kaiming_normal_, fan_out, relu
        state[f"features.{idx}.weight"] = torch.randn(c_out, c_in, 3, 3, generator=gen) * std
        state[f"features.{idx}.bias"] = torch.zeros(c_out)
    return state
