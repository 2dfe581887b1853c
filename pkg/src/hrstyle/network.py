"""High-resolution generation network.

The network keeps a full-resolution branch alive from input to output and
runs coarser branches in parallel beside it. Branches exchange information
at fusion points: every branch receives all the others, aligned to its own
resolution (strided 3x3 convolutions going down, bilinear interpolation
going up), concatenated along channels and projected back to its width by a
1x1 convolution.

Topology for the default spec (scales 1, 2, 4 and three fusion points)::

    stem -> seg1[1] -> fuse1 (spawn 2) -> seg2[1,2] -> fuse2 (spawn 4)
         -> seg3[1,2,4] -> fuse3 -> head (upsample, concat, 3x3, 3x3, sigmoid)

Parameters are plain tensors in an ordered dict so the forward pass is a
pure function of ``(params, image)``.
"""

from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import torch
import torch.nn.functional as F

from .errors import CorruptCheckpoint, IndivisibleInput, InvalidSpec, ScaleMismatch
from .image_io import ImageTensor

__all__ = [
    "GenerationNetworkSpec",
    "FusionRecord",
    "NetworkParameters",
    "build_network",
    "forward",
    "bottleneck_block",
    "bottleneck_width",
    "fuse",
    "save_params",
    "load_params",
]

SQUEEZE_RATIO = 4
_CKPT_FORMAT = "hrstyle.params/1"


@dataclass(frozen=True)
class GenerationNetworkSpec:
    base_channels: int = 16
    branch_scales: tuple[int, ...] = (1, 2, 4)
    blocks_per_segment: int = 2
    fusion_points: int = 3
    kernel_size: int = 3

    def __post_init__(self):
        # accept lists from JSON configs
        object.__setattr__(self, "branch_scales", tuple(int(s) for s in self.branch_scales))
        self.validate()

    def validate(self) -> None:
        if not isinstance(self.base_channels, int) or self.base_channels < 1:
            raise InvalidSpec(f"base_channels must be a positive integer, got {self.base_channels}")
        if self.kernel_size != 3:
            raise InvalidSpec("all convolutions use 3x3 kernels; kernel_size must be 3")
        scales = self.branch_scales
        if not scales:
            raise InvalidSpec("branch_scales is empty")
        for s in scales:
            if s < 1 or s & (s - 1):
                raise InvalidSpec(f"branch scale {s} is not a power of 2")
        if scales[0] != 1:
            raise InvalidSpec("the first branch must run at full resolution (scale 1)")
        if any(b <= a for a, b in zip(scales, scales[1:])):
            raise InvalidSpec(f"branch_scales must be strictly increasing: {scales}")
        if self.blocks_per_segment < 1:
            raise InvalidSpec("blocks_per_segment must be positive")
        if self.fusion_points < max(1, len(scales) - 1):
            raise InvalidSpec(
                f"{len(scales)} branches need at least {max(1, len(scales) - 1)} fusion points"
            )

    @property
    def max_scale(self) -> int:
        return self.branch_scales[-1]

    def width(self, scale: int) -> int:
        """Channel width of the branch running at ``scale``."""
        return self.base_channels * scale

    def to_dict(self) -> dict:
        d = asdict(self)
        d["branch_scales"] = list(self.branch_scales)
        return d


@dataclass(frozen=True)
class FusionRecord:
    name: str
    target_scale: int
    input_channels: tuple[int, ...]
    concat_channels: int
    output_channels: int


@dataclass
class NetworkParameters:
    spec: GenerationNetworkSpec
    seed: int
    tensors: "OrderedDict[str, torch.Tensor]"
    fusions: list[FusionRecord] = field(default_factory=list)

    def __getitem__(self, name: str) -> torch.Tensor:
        return self.tensors[name]

    def __len__(self) -> int:
        return len(self.tensors)

    def named(self):
        return self.tensors.items()

    def values(self) -> list[torch.Tensor]:
        return list(self.tensors.values())

    def shapes(self) -> dict[str, tuple[int, ...]]:
        return {k: tuple(v.shape) for k, v in self.tensors.items()}

    def numel(self) -> int:
        return sum(v.numel() for v in self.tensors.values())

    def requires_grad_(self, flag: bool = True) -> "NetworkParameters":
        for v in self.tensors.values():
            v.requires_grad_(flag)
        return self

    def clone(self) -> "NetworkParameters":
        tensors = OrderedDict((k, v.detach().clone()) for k, v in self.tensors.items())
        return NetworkParameters(self.spec, self.seed, tensors, list(self.fusions))

    def to(self, dtype: torch.dtype) -> "NetworkParameters":
        tensors = OrderedDict((k, v.detach().to(dtype)) for k, v in self.tensors.items())
        return NetworkParameters(self.spec, self.seed, tensors, list(self.fusions))

    @property
    def dtype(self) -> torch.dtype:
        return next(iter(self.tensors.values())).dtype


def bottleneck_width(channels: int) -> int:
    return max(1, math.ceil(channels / SQUEEZE_RATIO))


class _Builder:
    """Allocates named conv parameters in forward order."""

    def __init__(self, seed: int, dtype: torch.dtype):
        self.gen = torch.Generator().manual_seed(seed)
        self.dtype = dtype
        self.tensors: OrderedDict[str, torch.Tensor] = OrderedDict()

    def conv(self, name: str, c_in: int, c_out: int, k: int) -> None:
        # unit-gain fan-in bound; a rectifier gain of 2 compounds through the
        # concat fusions and saturates the sigmoid head at initialization
        fan_in = c_in * k * k
        bound = math.sqrt(3.0 / fan_in)
        w = (torch.rand(c_out, c_in, k, k, generator=self.gen, dtype=torch.float64) * 2 - 1) * bound
        self.tensors[f"{name}.weight"] = w.to(self.dtype)
        self.tensors[f"{name}.bias"] = torch.zeros(c_out, dtype=self.dtype)


def _octaves(src: int, dst: int) -> int:
    return int(math.log2(dst // src))


def build_network(
    spec: GenerationNetworkSpec | None = None, seed: int = 0, dtype: torch.dtype = torch.float32
) -> NetworkParameters:
    """Allocate and initialize every parameter of the network for ``spec``.

    Weights are uniform with a fan-in bound, drawn from a generator seeded
    with ``seed`` (two builds with one seed are bitwise identical); biases
    start at zero.
    Every fusion point is audited: the projection input width must equal the
    sum of the widths being concatenated.
    """
    spec = spec or GenerationNetworkSpec()
    spec.validate()
    b = _Builder(seed, dtype)
    scales = spec.branch_scales
    c0 = spec.width(1)
    fusions: list[FusionRecord] = []

    b.conv("stem", 3, c0, 3)
    active = [1]
    for k in range(1, spec.fusion_points + 1):
        for s in active:
            w = spec.width(s)
            for m in range(spec.blocks_per_segment):
                pre = f"seg{k}.s{s}.blk{m}"
                b.conv(f"{pre}.squeeze", w, bottleneck_width(w), 3)
                b.conv(f"{pre}.expand", bottleneck_width(w), w, 1)
        if len(active) > 1:
            for t in active:
                for s in active:
                    if s < t:
                        for d in range(_octaves(s, t)):
                            b.conv(f"fuse{k}.to{t}.from{s}.down{d}", spec.width(s), spec.width(s), 3)
                widths = tuple(spec.width(s) for s in active)
                rec = FusionRecord(f"fuse{k}.to{t}", t, widths, sum(widths), spec.width(t))
                b.conv(f"fuse{k}.to{t}.proj", rec.concat_channels, rec.output_channels, 1)
                fusions.append(rec)
        if len(active) < len(scales):
            new = scales[len(active)]
            n = _octaves(1, new)
            for d in range(n):
                c_out = spec.width(new) if d == n - 1 else c0
                b.conv(f"fuse{k}.spawn{new}.down{d}", c0, c_out, 3)
            active.append(new)

    widths = tuple(spec.width(s) for s in active)
    rec = FusionRecord("head", 1, widths, sum(widths), c0)
    b.conv("head.proj", rec.concat_channels, c0, 3)
    b.conv("head.out", c0, 3, 3)
    fusions.append(rec)

    params = NetworkParameters(spec, seed, b.tensors, fusions)
    _audit(params)
    return params


def _audit(params: NetworkParameters) -> None:
    for rec in params.fusions:
        if sum(rec.input_channels) != rec.concat_channels:
            raise InvalidSpec(f"{rec.name}: concat width {rec.concat_channels} != {rec.input_channels}")
        w = params.tensors[f"{rec.name}.proj.weight"]
        if w.shape[1] != rec.concat_channels or w.shape[0] != rec.output_channels:
            raise InvalidSpec(f"{rec.name}: projection shape {tuple(w.shape)} does not match fusion")


def _conv(x, params, name, stride=1, relu=True):
    w = params[f"{name}.weight"]
    y = F.conv2d(x, w, params[f"{name}.bias"], stride=stride, padding=w.shape[-1] // 2)
    return F.relu(y) if relu else y


def bottleneck_block(x: torch.Tensor, block_params: Mapping[str, torch.Tensor], prefix: str = "") -> torch.Tensor:
    """Residual bottleneck: ``x + expand1x1(relu(squeeze3x3(x)))``.

    ``block_params`` holds ``squeeze.weight/bias`` (3x3, C -> ceil(C/4)) and
    ``expand.weight/bias`` (1x1, back to C), optionally under ``prefix``.
    Accepts ``[C, H, W]`` or ``[N, C, H, W]``.
    """
    squeeze = x.ndim == 3
    if squeeze:
        x = x[None]
    p = {k[len(prefix):]: v for k, v in block_params.items() if k.startswith(prefix)}
    h = _conv(x, p, "squeeze")
    out = x + _conv(h, p, "expand", relu=False)
    return out[0] if squeeze else out


def fuse(
    maps: Sequence[torch.Tensor],
    scales: Sequence[int],
    target_scale: int,
    downsamplers: Mapping[int, Sequence[tuple[torch.Tensor, torch.Tensor]]] | None = None,
    branch_scales: Sequence[int] | None = None,
) -> torch.Tensor:
    """Align feature maps from several branches to ``target_scale`` and concatenate.

    Finer maps go through their chain of stride-2 3x3 convolutions in
    ``downsamplers[scale]`` (one ``(weight, bias)`` pair per octave); coarser
    maps are bilinearly upsampled. Output channels are the sum of the inputs'.
    """
    if len(maps) != len(scales) or not maps:
        raise ScaleMismatch("need one scale per feature map")
    allowed = set(branch_scales) if branch_scales is not None else None
    for s in (*scales, target_scale):
        if s < 1 or s & (s - 1) or (allowed is not None and s not in allowed):
            raise ScaleMismatch(f"scale {s} is not one of the branch scales")
    batched = maps[0].ndim == 4
    xs = [m if batched else m[None] for m in maps]
    full = {(x.shape[-2] * s, x.shape[-1] * s) for x, s in zip(xs, scales)}
    if len(full) != 1:
        raise ScaleMismatch(f"feature map sizes disagree with their scales: {sorted(full)}")
    fh, fw = full.pop()
    if fh % target_scale or fw % target_scale:
        raise ScaleMismatch(f"target scale {target_scale} does not divide {fh}x{fw}")
    size = (fh // target_scale, fw // target_scale)

    if len(xs) == 1 and scales[0] == target_scale:
        return maps[0]

    aligned = []
    for x, s in zip(xs, scales):
        if s < target_scale:
            chain = (downsamplers or {}).get(s)
            if chain is None or len(chain) != _octaves(s, target_scale):
                raise ScaleMismatch(f"missing downsampling convs for scale {s} -> {target_scale}")
            for w, bias in chain:
                x = F.relu(F.conv2d(x, w, bias, stride=2, padding=1))
        elif s > target_scale:
            x = F.interpolate(x, size=size, mode="bilinear", align_corners=False)
        aligned.append(x)
    out = torch.cat(aligned, dim=1)
    return out if batched else out[0]


def _downsamplers(params: NetworkParameters, prefix: str, sources, target):
    out = {}
    for s in sources:
        if s < target:
            names = [f"{prefix}.from{s}.down{d}" for d in range(_octaves(s, target))]
            out[s] = [(params[f"{n}.weight"], params[f"{n}.bias"]) for n in names]
    return out


def forward(params: NetworkParameters, image):
    """Run the network on ``image`` (``[3, H, W]``, ``[N, 3, H, W]`` or ``ImageTensor``).

    The output has the input's shape with values in ``[0, 1]``. An
    ``ImageTensor`` input yields a unit-range ``ImageTensor``.
    """
    wrap = isinstance(image, ImageTensor)
    x = image.data if wrap else image
    single = x.ndim == 3
    if single:
        x = x[None]
    if x.ndim != 4 or x.shape[1] != 3:
        raise IndivisibleInput(f"expected a 3-channel image, got shape {tuple(x.shape)}")
    spec = params.spec
    h, w = x.shape[-2:]
    if h % spec.max_scale or w % spec.max_scale:
        raise IndivisibleInput(
            f"input {h}x{w} is not divisible by the coarsest branch scale {spec.max_scale}"
        )
    x = x.to(params.dtype)
    scales = spec.branch_scales

    branches = {1: _conv(x, params, "stem")}
    for k in range(1, spec.fusion_points + 1):
        for s in branches:
            y = branches[s]
            for m in range(spec.blocks_per_segment):
                y = bottleneck_block(y, params.tensors, prefix=f"seg{k}.s{s}.blk{m}.")
            branches[s] = y
        active = list(branches)
        if len(active) > 1:
            maps = [branches[s] for s in active]
            fused = {}
            for t in active:
                prefix = f"fuse{k}.to{t}"
                cat = fuse(maps, active, t, _downsamplers(params, prefix, active, t))
                fused[t] = _conv(cat, params, f"{prefix}.proj")
            branches = fused
        if len(active) < len(scales):
            new = scales[len(active)]
            y = branches[1]
            for d in range(_octaves(1, new)):
                y = _conv(y, params, f"fuse{k}.spawn{new}.down{d}", stride=2)
            branches[new] = y

    active = list(branches)
    cat = fuse([branches[s] for s in active], active, 1)
    y = _conv(cat, params, "head.proj")
    y = torch.sigmoid(_conv(y, params, "head.out", relu=False))
    if single:
        y = y[0]
    return ImageTensor(y, "unit") if wrap else y


def save_params(params: NetworkParameters, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save(
        {
            "format": _CKPT_FORMAT,
            "spec": params.spec.to_dict(),
            "seed": params.seed,
            "tensors": OrderedDict((k, v.detach().cpu()) for k, v in params.tensors.items()),
        },
        path,
    )
    return path


def load_params(path) -> NetworkParameters:
    try:
        blob = torch.load(Path(path), map_location="cpu", weights_only=True)
        if blob.get("format") != _CKPT_FORMAT:
            raise CorruptCheckpoint(f"{path}: not a parameter checkpoint")
        spec = GenerationNetworkSpec(**blob["spec"])
        ref = build_network(spec, blob["seed"])
        tensors = OrderedDict(blob["tensors"])
    except CorruptCheckpoint:
        raise
    except Exception as exc:
        raise CorruptCheckpoint(f"cannot read parameter checkpoint {path}: {exc}") from exc
    if {k: tuple(v.shape) for k, v in tensors.items()} != ref.shapes():
        raise CorruptCheckpoint(f"{path}: parameter shapes do not match the stored spec")
    return NetworkParameters(spec, blob["seed"], tensors, ref.fusions)
