"""Perceptual objective: content loss, Gram matrices, style loss, total variation.

All functions take feature maps shaped ``[C, H, W]`` (a leading batch axis
is tolerated where noted) and return scalar tensors so they can be
back-propagated.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import torch

from .errors import ChannelMismatch, MissingLayer, ShapeMismatch, UnknownLayer, ValidationError
from .extractor import VGG19_LAYERS, FeatureExtractor
from .image_io import ImageTensor, normalize_tensor

__all__ = [
    "DEFAULT_STYLE_LAYERS",
    "LossConfig",
    "LossBreakdown",
    "StyleTargets",
    "content_loss",
    "gram_matrix",
    "style_loss_layer",
    "total_style_loss",
    "tv_loss",
    "precompute_targets",
    "total_loss",
]

DEFAULT_STYLE_LAYERS = {
    "conv1_1": 0.1,
    "conv2_1": 0.2,
    "conv3_1": 0.4,
    "conv4_1": 0.8,
    "conv5_1": 1.6,
}


@dataclass(frozen=True)
class LossConfig:
    content_layer: str = "conv4_2"
    style_layers: Mapping[str, float] = field(default_factory=lambda: dict(DEFAULT_STYLE_LAYERS))
    lambda_content: float = 80.0
    lambda_style: float = 1.0
    lambda_tv: float = 1e-6

    def __post_init__(self):
        object.__setattr__(self, "style_layers", {k: float(v) for k, v in self.style_layers.items()})
        if not self.style_layers:
            raise ValidationError("style_layers must not be empty")
        for name in (self.content_layer, *self.style_layers):
            if name not in VGG19_LAYERS:
                raise UnknownLayer(f"unknown VGG19 layer {name!r}")
        for name, w in self.style_layers.items():
            if not w >= 0:
                raise ValidationError(f"style layer weight for {name} must be >= 0, got {w}")
        for name in ("lambda_content", "lambda_style", "lambda_tv"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and v >= 0 and v != float("inf")):
                raise ValidationError(f"{name} must be a finite number >= 0, got {v!r}")

    @property
    def layers(self) -> list[str]:
        """Every extractor layer this objective reads."""
        return list(dict.fromkeys([self.content_layer, *self.style_layers]))

    def deepest_layer(self) -> str:
        return max(self.layers, key=lambda n: VGG19_LAYERS[n][0])

    def to_dict(self) -> dict:
        return {
            "content_layer": self.content_layer,
            "style_layers": dict(self.style_layers),
            "lambda_content": self.lambda_content,
            "lambda_style": self.lambda_style,
            "lambda_tv": self.lambda_tv,
        }


@dataclass(frozen=True)
class LossBreakdown:
    """Loss terms as floats. ``style`` already includes the per-layer weights."""

    content: float
    style: float
    tv: float
    weighted_content: float
    weighted_style: float
    weighted_tv: float
    total: float
    style_per_layer: dict[str, float] = field(default_factory=dict)


def content_loss(y_feat: torch.Tensor, yhat_feat: torch.Tensor) -> torch.Tensor:
    """Squared Euclidean feature distance divided by ``C*H*W``."""
    if y_feat.shape != yhat_feat.shape:
        raise ShapeMismatch(
            f"content features differ in shape: {tuple(y_feat.shape)} vs {tuple(yhat_feat.shape)}"
        )
    return (yhat_feat - y_feat).pow(2).sum() / y_feat.numel()


def gram_matrix(feat: torch.Tensor) -> torch.Tensor:
    """``psi @ psi.T / (C*H*W)`` where ``psi`` flattens the spatial axes.

    ``[C, H, W] -> [C, C]``; a batched ``[N, C, H, W]`` input gives ``[N, C, C]``.
    """
    c, h, w = feat.shape[-3:]
    psi = feat.reshape(*feat.shape[:-3], c, h * w)
    return psi @ psi.transpose(-1, -2) / (c * h * w)


def _style_from_gram(gram_y: torch.Tensor, yhat_feat: torch.Tensor) -> torch.Tensor:
    if gram_y.shape[-1] != yhat_feat.shape[-3]:
        raise ChannelMismatch(
            f"style features have {gram_y.shape[-1]} channels, output has {yhat_feat.shape[-3]}"
        )
    return (gram_y - gram_matrix(yhat_feat)).pow(2).sum()


def style_loss_layer(y_feat: torch.Tensor, yhat_feat: torch.Tensor) -> torch.Tensor:
    """Squared Frobenius distance between Gram matrices.

    Only channel counts need to agree; the spatial sizes may differ, which is
    what lets the style image keep its own resolution.
    """
    if y_feat.shape[-3] != yhat_feat.shape[-3]:
        raise ChannelMismatch(
            f"channel counts differ: {y_feat.shape[-3]} vs {yhat_feat.shape[-3]}"
        )
    return _style_from_gram(gram_matrix(y_feat), yhat_feat)


def total_style_loss(
    feats_y: Mapping[str, torch.Tensor],
    feats_yhat: Mapping[str, torch.Tensor],
    config: LossConfig | Mapping[str, float],
    *,
    grams: bool = False,
    per_layer: dict | None = None,
) -> torch.Tensor:
    """Weighted sum of per-layer style losses.

    ``config`` is a ``LossConfig`` or a bare ``{layer: weight}`` mapping.
    With ``grams=True`` the entries of ``feats_y`` are precomputed Gram
    matrices. If ``per_layer`` is a dict it receives each unweighted term.
    """
    weights = config.style_layers if isinstance(config, LossConfig) else config
    total = None
    for name, w in weights.items():
        if name not in feats_y or name not in feats_yhat:
            raise MissingLayer(f"style layer {name} missing from the supplied features")
        ref = feats_y[name]
        term = _style_from_gram(ref, feats_yhat[name]) if grams else style_loss_layer(ref, feats_yhat[name])
        if per_layer is not None:
            per_layer[name] = float(term.detach())
        total = w * term if total is None else total + w * term
    return total


def tv_loss(img) -> torch.Tensor:
    """Mean squared horizontal difference plus mean squared vertical difference.

    Means run over channels and valid neighbour pairs; an axis of length one
    contributes nothing.
    """
    x = img.data if isinstance(img, ImageTensor) else img
    dx = x[..., :, 1:] - x[..., :, :-1]
    dy = x[..., 1:, :] - x[..., :-1, :]
    zero = x.new_zeros(())
    return (dx.pow(2).mean() if dx.numel() else zero) + (dy.pow(2).mean() if dy.numel() else zero)


@dataclass
class StyleTargets:
    """Per-job constants: content features and style Grams, computed once."""

    content_features: torch.Tensor
    style_grams: dict[str, torch.Tensor]


def _unit(img) -> torch.Tensor:
    if isinstance(img, ImageTensor):
        if img.range != "unit":
            raise ValidationError("loss inputs must be unit-range images")
        return img.data
    return img


@torch.no_grad()
def precompute_targets(content, style, fx: FeatureExtractor, config: LossConfig) -> StyleTargets:
    c = fx.extract(normalize_tensor(_unit(content).to(fx.dtype)), [config.content_layer])
    s = fx.extract(normalize_tensor(_unit(style).to(fx.dtype)), list(config.style_layers))
    return StyleTargets(
        content_features=c[config.content_layer].detach(),
        style_grams={k: gram_matrix(v).detach() for k, v in s.items()},
    )


def total_loss(
    content_img,
    style_img,
    output_img,
    fx: FeatureExtractor,
    config: LossConfig,
    targets: StyleTargets | None = None,
) -> tuple[torch.Tensor, LossBreakdown]:
    """Weighted content + style + total-variation objective for ``output_img``.

    Images are unit-range ``[3, H, W]`` tensors (or ``ImageTensor``) and are
    normalized before entering the extractor. Pass ``targets`` from
    :func:`precompute_targets` to skip re-extracting the fixed images; the
    image arguments are then unused and may be ``None``.
    """
    if targets is None:
        targets = precompute_targets(content_img, style_img, fx, config)
    out = _unit(output_img).to(fx.dtype)
    feats = fx.extract(normalize_tensor(out), config.layers)

    per_layer: dict[str, float] = {}
    l_content = content_loss(targets.content_features, feats[config.content_layer])
    l_style = total_style_loss(targets.style_grams, feats, config, grams=True, per_layer=per_layer)
    l_tv = tv_loss(out)
    wc = config.lambda_content * l_content
    ws = config.lambda_style * l_style
    wt = config.lambda_tv * l_tv
    total = wc + ws + wt
    breakdown = LossBreakdown(
        content=float(l_content.detach()),
        style=float(l_style.detach()),
        tv=float(l_tv.detach()),
        weighted_content=float(wc.detach()),
        weighted_style=float(ws.detach()),
        weighted_tv=float(wt.detach()),
        total=float(total.detach()),
        style_per_layer=per_layer,
    )
    return total, breakdown
