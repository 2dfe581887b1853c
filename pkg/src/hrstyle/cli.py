"""Command-line front end: ``hrstyle {transfer,sweep,benchmark,eval}``.

Settings are layered: built-in defaults, then a JSON config file
(``--config``), then individual flags. Every run writes the fully resolved
configuration next to its outputs.

Exit codes: 0 success, 2 invalid configuration or input, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__
from .errors import ExtractorUnavailable, StyleTransferError, UnreadableFile, ValidationError
from .evaluation import DEFAULT_LADDER, compare_contours, grayscale_histogram_distance, run_benchmark
from .extractor import WEIGHTS_ENV, FeatureExtractor
from .image_io import ResizePolicy, load_image, prepare_content, prepare_style, save_gray, save_image
from .losses import LossConfig
from .network import GenerationNetworkSpec, save_params
from .trainer import TrainingConfig, run_transfer, write_loss_history

log = logging.getLogger("hrstyle")

CONFIG_VERSION = 1
EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3


class ConfigError(ValidationError):
    pass


@dataclass
class ExtractorConfig:
    weights: str | None = None
    sha256: str | None = None
    # seed for an untrained VGG19; only used when no weight file is configured
    untrained_seed: int | None = None

    def load(self, depth: str) -> FeatureExtractor:
        if self.weights or self.untrained_seed is None:
            return FeatureExtractor.from_file(self.weights, self.sha256, depth=depth)
        return FeatureExtractor.untrained(self.untrained_seed, depth=depth)


@dataclass
class JobConfig:
    content_path: str | None = None
    style_path: str | None = None
    output_dir: str = "out"
    loss: LossConfig = field(default_factory=LossConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    network: GenerationNetworkSpec = field(default_factory=GenerationNetworkSpec)
    resize: ResizePolicy = field(default_factory=ResizePolicy)
    extractor: ExtractorConfig = field(default_factory=ExtractorConfig)

    def to_dict(self) -> dict:
        return {
            "version": CONFIG_VERSION,
            "content_path": self.content_path,
            "style_path": self.style_path,
            "output_dir": self.output_dir,
            "loss": self.loss.to_dict(),
            "training": self.training.to_dict(),
            "network": self.network.to_dict(),
            "resize": {"content_target": list(self.resize.content_target)},
            "extractor": {
                "weights": self.extractor.weights,
                "sha256": self.extractor.sha256,
                "untrained_seed": self.extractor.untrained_seed,
            },
        }


def _section(raw: dict, name: str) -> dict:
    sec = raw.get(name, {})
    if not isinstance(sec, dict):
        raise ConfigError(f"config section {name!r} must be an object")
    return dict(sec)


def resolve_config(args: argparse.Namespace) -> JobConfig:
    """Merge defaults, the optional JSON file and command-line flags."""
    raw: dict = {}
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            raw = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: top level must be an object")
        version = raw.get("version", CONFIG_VERSION)
        if version != CONFIG_VERSION:
            raise ConfigError(f"{path}: unsupported config version {version}")

    loss = _section(raw, "loss")
    training = _section(raw, "training")
    network = _section(raw, "network")
    resize = _section(raw, "resize")
    extractor = _section(raw, "extractor")

    def flag(name):
        return getattr(args, name, None)

    for key, attr in (("lambda_content", "content_weight"), ("lambda_style", "style_weight"),
                      ("lambda_tv", "tv_weight")):
        if flag(attr) is not None:
            loss[key] = flag(attr)
    for key, attr in (("steps", "steps"), ("learning_rate", "lr"), ("seed", "seed"),
                      ("checkpoint_every", "checkpoint_every"), ("log_every", "log_every")):
        if flag(attr) is not None:
            training[key] = flag(attr)
    if flag("size") is not None:
        resize["content_target"] = flag("size")
    if flag("extractor_weights") is not None:
        extractor["weights"] = flag("extractor_weights")
    if flag("extractor_sha256") is not None:
        extractor["sha256"] = flag("extractor_sha256")
    if flag("untrained_extractor") is not None:
        extractor["untrained_seed"] = flag("untrained_extractor")
    if "content_target" in resize:
        resize["content_target"] = tuple(resize["content_target"])

    try:
        cfg = JobConfig(
            content_path=flag("content") or raw.get("content_path"),
            style_path=flag("style") or raw.get("style_path"),
            output_dir=flag("out") or raw.get("output_dir") or "out",
            loss=LossConfig(**loss),
            training=TrainingConfig(**training),
            network=GenerationNetworkSpec(**network),
            resize=ResizePolicy(**resize),
            extractor=ExtractorConfig(**extractor),
        )
    except TypeError as exc:
        raise ConfigError(f"unknown or malformed config field: {exc}") from exc
    h, w = cfg.resize.content_target
    if h % cfg.network.max_scale or w % cfg.network.max_scale:
        raise ConfigError(f"content target {h}x{w} is not divisible by {cfg.network.max_scale}")
    return cfg


def _require_file(path: str | None, role: str) -> Path:
    if not path:
        raise ConfigError(f"no {role} image given (use --{role})")
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"{role} image not found: {p}")
    return p


def _load_inputs(cfg: JobConfig):
    content = load_image(_require_file(cfg.content_path, "content"))
    style = load_image(_require_file(cfg.style_path, "style"))
    content = prepare_content(content, cfg.resize)
    style = prepare_style(style, cfg.resize, content.size)
    return content, style


def _load_extractor(cfg: JobConfig) -> FeatureExtractor:
    try:
        return cfg.extractor.load(cfg.loss.deepest_layer())
    except ExtractorUnavailable as exc:
        raise ConfigError(str(exc)) from exc


def _write_snapshot(cfg: JobConfig, out: Path, fx: FeatureExtractor, extra: dict | None = None) -> None:
    snap = cfg.to_dict()
    snap["extractor"]["resolved_source"] = fx.source
    snap["hrstyle_version"] = __version__
    if extra:
        snap.update(extra)
    (out / "resolved_config.json").write_text(json.dumps(snap, indent=2, sort_keys=True) + "\n")


def _write_timings(history, path: Path) -> None:
    with open(path, "w") as fh:
        fh.write("step,wall_ms\n")
        for r in history:
            fh.write(f"{r.step},{r.wall_ms:.3f}\n")


# -- commands ----------------------------------------------------------------


def cmd_transfer(args) -> int:
    cfg = resolve_config(args)
    content, style = _load_inputs(cfg)
    fx = _load_extractor(cfg)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_snapshot(cfg, out, fx)
    ckpt = out / "checkpoint.pt" if cfg.training.checkpoint_every else None
    resume = getattr(args, "resume", None)
    run = run_transfer(
        content, style, cfg.network, cfg.loss, cfg.training,
        fx=fx, checkpoint_path=ckpt, resume=resume,
    )
    save_image(run.final_image, out / "output.png")
    write_loss_history(run.loss_history, out / "loss_history.csv", timing=False)
    _write_timings(run.loss_history, out / "timings.csv")
    save_params(run.final_params, out / "params.pt")
    print(out / "output.png")
    return EXIT_OK


def format_weight(w: float) -> str:
    """``80.0 -> '80'``, ``0.8 -> '0.8'``: the value without trailing zeros."""
    return f"{float(w):g}"


def cmd_sweep(args) -> int:
    weights = args.content_weights or []
    if not weights:
        raise ConfigError("sweep needs at least one content weight")
    cfg = resolve_config(args)
    content, style = _load_inputs(cfg)
    fx = _load_extractor(cfg)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_snapshot(cfg, out, fx, {"sweep_content_weights": list(weights)})
    rows = []
    for w in weights:
        loss = LossConfig(**{**cfg.loss.to_dict(), "lambda_content": w, "lambda_style": 1.0})
        print(f"content weight {format_weight(w)}", file=sys.stderr)
        run = run_transfer(content, style, cfg.network, loss, cfg.training, fx=fx)
        tag = f"cw_{format_weight(w)}"
        save_image(run.final_image, out / f"{tag}.png")
        write_loss_history(run.loss_history, out / f"{tag}_loss_history.csv", timing=False)
        last = run.loss_history[-1]
        rows.append((format_weight(w), last))
    with open(out / "sweep_summary.csv", "w") as fh:
        fh.write("content_weight,total,content,style,tv,raw_content,raw_style,raw_tv\n")
        for tag, r in rows:
            fh.write(",".join([tag] + [repr(v) for v in (
                r.total, r.content, r.style, r.tv, r.raw_content, r.raw_style, r.raw_tv)]) + "\n")
    return EXIT_OK


def cmd_benchmark(args) -> int:
    cfg = resolve_config(args)
    fx = _load_extractor(cfg)
    ladder = DEFAULT_LADDER
    if args.resolutions:
        ladder = [(r, r) for r in args.resolutions]
    for h, w in ladder:
        if h <= 0 or w <= 0 or h % 4 or w % 4:
            raise ConfigError(f"benchmark resolution {h}x{w} is not divisible by 4")
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_snapshot(cfg, out, fx, {"benchmark_resolutions": [list(r) for r in ladder]})
    report = run_benchmark(ladder, cfg.training.steps, cfg.network, cfg.loss, fx=fx, seed=cfg.training.seed)
    report.to_csv(out / "benchmark.csv")
    print(report.table())
    return EXIT_OK


def cmd_eval(args) -> int:
    content = load_image(_require_file(args.content, "content"))
    stylized = load_image(_require_file(args.stylized, "stylized"))
    if content.size != stylized.size:
        raise ConfigError(f"image sizes differ: content {content.size} vs stylized {stylized.size}")
    cmp = compare_contours(content, stylized)
    if args.out:
        out = Path(args.out)
        save_gray(cmp.gray_a, out / "content_gray.png")
        save_gray(cmp.gray_b, out / "stylized_gray.png")
        save_gray(cmp.edges_a, out / "content_contour.png", rescale=True)
        save_gray(cmp.edges_b, out / "stylized_contour.png", rescale=True)
    print(f"contour_similarity {cmp.similarity:.6f}")
    print(f"grayscale_histogram_distance {grayscale_histogram_distance(content, stylized):.6f}")
    return EXIT_OK


# -- parser ------------------------------------------------------------------


def _job_flags(p: argparse.ArgumentParser, images: bool = True) -> None:
    p.add_argument("--config", help="JSON job config; flags override its values")
    if images:
        p.add_argument("--content", help="content image (PNG/JPEG)")
        p.add_argument("--style", help="style image (PNG/JPEG), kept at native resolution")
    p.add_argument("--out", help="output directory")
    p.add_argument("--steps", type=int, help="optimization steps (default 200)")
    p.add_argument("--lr", type=float, help="Adam learning rate (default 1e-3)")
    p.add_argument("--content-weight", type=float, help="content weight (default 80)")
    p.add_argument("--style-weight", type=float, help="style weight (default 1)")
    p.add_argument("--tv-weight", type=float, help="total-variation weight (default 1e-6)")
    p.add_argument("--seed", type=int, help="network initialization seed")
    p.add_argument("--checkpoint-every", type=int, help="write checkpoint.pt every N steps")
    p.add_argument("--log-every", type=int, help="progress line every N steps")
    p.add_argument("--size", type=int, nargs=2, metavar=("H", "W"),
                   help="content resize target, each divisible by 4 (default 500 500)")
    p.add_argument("--extractor-weights",
                   help=f"VGG19 state-dict file (default: ${WEIGHTS_ENV})")
    p.add_argument("--extractor-sha256", help="expected SHA-256 of the weight file")
    p.add_argument("--untrained-extractor", type=int, metavar="SEED",
                   help="use a seeded untrained VGG19 when no weight file is configured")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hrstyle", description="photorealistic style transfer")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-q", "--quiet", action="store_true", help="only warnings and errors")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("transfer", help="stylize one content image")
    _job_flags(p)
    p.add_argument("--resume", help="continue from a checkpoint file")
    p.set_defaults(func=cmd_transfer)

    p = sub.add_parser("sweep", help="one transfer per content weight, style weight fixed at 1")
    _job_flags(p)
    p.add_argument("--content-weights", type=float, nargs="*", required=True,
                   help="content weights to try, e.g. 0.8 8 80 800 8000")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("benchmark", help="time full transfers at a ladder of resolutions")
    _job_flags(p, images=False)
    p.add_argument("--resolutions", type=int, nargs="+",
                   help="square sides to time (default 128 256 512)")
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("eval", help="grayscale and Sobel contour comparison")
    p.add_argument("--content", required=True)
    p.add_argument("--stylized", required=True)
    p.add_argument("--out", help="directory for grayscale and contour PNGs")
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING if args.quiet else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except (ValidationError, UnreadableFile) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StyleTransferError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001 - any other failure is a runtime error for scripts
        log.exception("unexpected failure")
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
