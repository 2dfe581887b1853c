"""Per-image-pair optimization of the generation network.

A fresh network is built for every content/style pair. At each step the
content image goes through the network, the output is scored by the
perceptual objective, and Adam updates the network weights. Nothing is
trained ahead of time.
"""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import torch

from .errors import CorruptCheckpoint, ValidationError
from .extractor import FeatureExtractor
from .image_io import ImageTensor
from .losses import LossConfig, StyleTargets, precompute_targets, total_loss
from .network import GenerationNetworkSpec, NetworkParameters, build_network, forward

__all__ = [
    "TrainingConfig",
    "StepRecord",
    "TrainingRun",
    "TransferState",
    "run_transfer",
    "save_checkpoint",
    "load_checkpoint",
    "write_loss_history",
    "LOSS_HISTORY_HEADER",
]

log = logging.getLogger(__name__)

LOSS_HISTORY_HEADER = ("step", "total", "content", "style", "tv", "wall_ms")
_CKPT_FORMAT = "hrstyle.run/1"


@dataclass(frozen=True)
class TrainingConfig:
    steps: int = 200
    learning_rate: float = 1e-3
    seed: int = 0
    log_every: int = 10
    checkpoint_every: int | None = None
    weight_decay: float = 0.0
    betas: tuple[float, float] = (0.9, 0.999)

    def __post_init__(self):
        object.__setattr__(self, "betas", tuple(self.betas))
        if not isinstance(self.steps, int) or self.steps < 1:
            raise ValidationError(f"steps must be a positive integer, got {self.steps!r}")
        if not self.learning_rate > 0:
            raise ValidationError(f"learning_rate must be > 0, got {self.learning_rate!r}")
        if self.log_every < 1:
            raise ValidationError("log_every must be positive")
        if self.checkpoint_every is not None and self.checkpoint_every < 1:
            raise ValidationError("checkpoint_every must be positive when set")
        if self.weight_decay < 0:
            raise ValidationError("weight_decay must be >= 0")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["betas"] = list(self.betas)
        return d


@dataclass(frozen=True)
class StepRecord:
    """Loss terms evaluated before update ``step`` (1-based).

    ``content``, ``style`` and ``tv`` are weighted and sum to ``total``; the
    ``raw_*`` fields hold the same terms before their lambda weights.
    """

    step: int
    total: float
    content: float
    style: float
    tv: float
    wall_ms: float
    raw_content: float = 0.0
    raw_style: float = 0.0
    raw_tv: float = 0.0


@dataclass
class TransferState:
    """Everything needed to continue an interrupted run."""

    content: torch.Tensor
    style: torch.Tensor
    net_spec: GenerationNetworkSpec
    loss_cfg: LossConfig
    train_cfg: TrainingConfig
    params: NetworkParameters
    optimizer_state: dict | None = None
    step: int = 0
    history: list[StepRecord] = field(default_factory=list)


@dataclass
class TrainingRun:
    loss_history: list[StepRecord]
    final_image: ImageTensor
    final_params: NetworkParameters
    config: dict
    extractor_source: str = ""

    @property
    def totals(self) -> list[float]:
        return [r.total for r in self.loss_history]


def _make_optimizer(params: NetworkParameters, cfg: TrainingConfig) -> torch.optim.Adam:
    return torch.optim.Adam(
        params.values(), lr=cfg.learning_rate, betas=cfg.betas, weight_decay=cfg.weight_decay
    )


def _as_tensor(img) -> torch.Tensor:
    if isinstance(img, ImageTensor):
        if img.range != "unit":
            raise ValidationError("run_transfer expects unit-range images")
        return img.data
    return img


def save_checkpoint(state: TransferState, path, optimizer: torch.optim.Optimizer | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    opt_state = optimizer.state_dict() if optimizer is not None else state.optimizer_state
    blob = {
        "format": _CKPT_FORMAT,
        "step": state.step,
        "net_spec": state.net_spec.to_dict(),
        "loss_cfg": state.loss_cfg.to_dict(),
        "train_cfg": state.train_cfg.to_dict(),
        "seed": state.params.seed,
        "params": {k: v.detach().clone() for k, v in state.params.named()},
        "optimizer": opt_state,
        "history": [asdict(r) for r in state.history],
        "content": state.content.detach().clone(),
        "style": state.style.detach().clone(),
    }
    tmp = path.with_suffix(path.suffix + ".tmp")
    torch.save(blob, tmp)
    tmp.replace(path)
    return path


def load_checkpoint(path) -> TransferState:
    """Read a run checkpoint; any unreadable or malformed file raises ``CorruptCheckpoint``."""
    path = Path(path)
    try:
        blob = torch.load(path, map_location="cpu", weights_only=True)
        if not isinstance(blob, dict) or blob.get("format") != _CKPT_FORMAT:
            raise CorruptCheckpoint(f"{path}: not a run checkpoint")
        net_spec = GenerationNetworkSpec(**blob["net_spec"])
        loss_cfg = LossConfig(**blob["loss_cfg"])
        train_cfg = TrainingConfig(**blob["train_cfg"])
        params = build_network(net_spec, blob["seed"])
        if set(blob["params"]) != set(params.tensors):
            raise CorruptCheckpoint(f"{path}: parameter names do not match the stored spec")
        for k in params.tensors:
            if blob["params"][k].shape != params.tensors[k].shape:
                raise CorruptCheckpoint(f"{path}: parameter {k} has the wrong shape")
            params.tensors[k] = blob["params"][k]
        history = [StepRecord(**r) for r in blob["history"]]
        if len(history) != blob["step"]:
            raise CorruptCheckpoint(f"{path}: history length disagrees with the step counter")
        return TransferState(
            content=blob["content"],
            style=blob["style"],
            net_spec=net_spec,
            loss_cfg=loss_cfg,
            train_cfg=train_cfg,
            params=params,
            optimizer_state=blob["optimizer"],
            step=blob["step"],
            history=history,
        )
    except CorruptCheckpoint:
        raise
    except Exception as exc:
        raise CorruptCheckpoint(f"cannot resume from {path}: {exc}") from exc


def run_transfer(
    content=None,
    style=None,
    net_spec: GenerationNetworkSpec | None = None,
    loss_cfg: LossConfig | None = None,
    train_cfg: TrainingConfig | None = None,
    *,
    fx: FeatureExtractor | None = None,
    resume: TransferState | str | Path | None = None,
    checkpoint_path=None,
    stop_after: int | None = None,
    callback: Callable[[StepRecord], None] | None = None,
) -> TrainingRun:
    """Optimize a fresh generation network so its output of ``content`` takes on ``style``.

    Parameters
    ----------
    content, style : ImageTensor or torch.Tensor
        Unit-range ``[3, H, W]`` images. The content image must already be
        prepared (sides divisible by the coarsest branch scale); the style
        image may have any size. Ignored when ``resume`` is given.
    net_spec, loss_cfg, train_cfg
        Defaults are used for anything left as ``None``.
    fx : FeatureExtractor, optional
        Loss network. Loaded from ``$HRSTYLE_VGG19_WEIGHTS`` when omitted.
    resume : TransferState or path, optional
        Continue a checkpointed run instead of starting fresh.
    checkpoint_path : path, optional
        Where to write checkpoints every ``train_cfg.checkpoint_every`` steps.
    stop_after : int, optional
        Halt after this many total steps (simulates an interruption).

    Returns
    -------
    TrainingRun
        Per-step loss history, the final image and the trained parameters.
    """
    if resume is not None:
        state = resume if isinstance(resume, TransferState) else load_checkpoint(resume)
    else:
        net_spec = net_spec or GenerationNetworkSpec()
        loss_cfg = loss_cfg or LossConfig()
        train_cfg = train_cfg or TrainingConfig()
        state = TransferState(
            content=_as_tensor(content),
            style=_as_tensor(style),
            net_spec=net_spec,
            loss_cfg=loss_cfg,
            train_cfg=train_cfg,
            params=build_network(net_spec, train_cfg.seed),
        )
    cfg = state.train_cfg
    if fx is None:
        fx = FeatureExtractor.from_file(depth=state.loss_cfg.deepest_layer())

    params = state.params.requires_grad_(True)
    dtype = params.dtype
    content_t = state.content.to(dtype)
    style_t = state.style.to(dtype)
    optimizer = _make_optimizer(params, cfg)
    if state.optimizer_state is not None:
        optimizer.load_state_dict(state.optimizer_state)

    # constant per job: content features and style Grams
    targets: StyleTargets = precompute_targets(content_t, style_t, fx, state.loss_cfg)

    end = cfg.steps if stop_after is None else min(cfg.steps, stop_after)
    while state.step < end:
        t0 = time.perf_counter()
        optimizer.zero_grad(set_to_none=True)
        out = forward(params, content_t)
        loss, bd = total_loss(None, None, out, fx, state.loss_cfg, targets=targets)
        loss.backward()
        optimizer.step()
        state.step += 1
        rec = StepRecord(
            step=state.step,
            total=bd.total,
            content=bd.weighted_content,
            style=bd.weighted_style,
            tv=bd.weighted_tv,
            wall_ms=(time.perf_counter() - t0) * 1e3,
            raw_content=bd.content,
            raw_style=bd.style,
            raw_tv=bd.tv,
        )
        state.history.append(rec)
        if callback is not None:
            callback(rec)
        if state.step % cfg.log_every == 0 or state.step == cfg.steps:
            log.info(
                "step %d/%d total=%.6g content=%.6g style=%.6g tv=%.6g",
                state.step, cfg.steps, rec.total, rec.content, rec.style, rec.tv,
            )
        if checkpoint_path and cfg.checkpoint_every and state.step % cfg.checkpoint_every == 0:
            save_checkpoint(state, checkpoint_path, optimizer)

    state.optimizer_state = optimizer.state_dict()
    params.requires_grad_(False)
    with torch.no_grad():
        final = forward(params, content_t).clamp(0.0, 1.0)
    return TrainingRun(
        loss_history=list(state.history),
        final_image=ImageTensor(final.float(), "unit"),
        final_params=params,
        config={
            "network": state.net_spec.to_dict(),
            "loss": state.loss_cfg.to_dict(),
            "training": cfg.to_dict(),
        },
        extractor_source=fx.source,
    )


def write_loss_history(history, path, timing: bool = True) -> Path:
    """Write per-step losses as CSV.

    With ``timing=False`` the ``wall_ms`` column is left out, which makes the
    file byte-identical across reruns with the same seed.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = LOSS_HISTORY_HEADER if timing else LOSS_HISTORY_HEADER[:-1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in history:
            row = [r.step, repr(r.total), repr(r.content), repr(r.style), repr(r.tv)]
            if timing:
                row.append(f"{r.wall_ms:.3f}")
            w.writerow(row)
    return path
