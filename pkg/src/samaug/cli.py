"""Command-line entry point.

``samaug {synth|build-priors|augment|train|infer|evaluate}`` reads one YAML
configuration file (``--config``); command-line flags override file values
and all paths are resolved relative to ``--root``. Every command writes its
effective configuration next to its outputs as ``<command>.config.yaml`` so
runs are reproducible. Exit codes: 0 success, 1 runtime failure, 2 usage or
configuration error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml
from PIL import Image

from samaug import data as data_mod
from samaug.data import DatasetManifest, SCHEME_CLASSES, load_dataset, synth_dataset, write_dataset
from samaug.deployment import (
    STRATEGIES,
    foreground_mask,
    infer_aug_only,
    infer_ensemble,
    infer_entropy_select,
)
from samaug.fusion import augment
from samaug.masks import MaskFormatError
from samaug.metrics import METRIC_NAMES, EvalReport, evaluate_sample
from samaug.models import MODEL_REGISTRY, build_model
from samaug.priors import PRIOR_SCALE, save_prior
from samaug.training import (
    TrainConfig,
    load_checkpoint,
    save_checkpoint,
    train,
    write_loss_csv,
)

logger = logging.getLogger("samaug.cli")


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""


@dataclass
class DataCfg:
    path: str | None = None
    layout: str = "generic"
    split: str = "train"
    class_scheme: str = "binary"


@dataclass
class ModelCfg:
    arch: str = "tiny_unet"
    base_channels: int = 8


@dataclass
class InferCfg:
    strategy: str = "aug-only"
    checkpoint: str | None = None


@dataclass
class EvalCfg:
    predictions: str | None = None
    per_image_csv: bool = False


@dataclass
class SynthCfg:
    n_train: int = 40
    n_test: int = 10
    image_size: int = 128
    blobs_per_image: int = 5
    dilate_px: int = 1
    drop_prob: float = 0.2
    stability: tuple[float, float] = (0.7, 1.0)
    noise_sigma: float = 0.3


@dataclass
class RunConfig:
    root: Path
    seed: int = 0
    out: str = "run"
    strict: bool = False
    dataset: DataCfg = dataclasses.field(default_factory=DataCfg)
    model: ModelCfg = dataclasses.field(default_factory=ModelCfg)
    train: TrainConfig = dataclasses.field(default_factory=TrainConfig)
    infer: InferCfg = dataclasses.field(default_factory=InferCfg)
    evaluate: EvalCfg = dataclasses.field(default_factory=EvalCfg)
    synth: SynthCfg = dataclasses.field(default_factory=SynthCfg)

    @property
    def out_dir(self) -> Path:
        return self.root / self.out


_TOP_KEYS = {"seed", "out", "strict", "dataset", "model", "train", "infer", "evaluate", "synth"}
_TRAIN_KEYS = {"beta", "lambda", "loss", "batch_size", "crop_size", "lr", "iters"}


def _section_from(cls, mapping, where: str):
    if mapping is None:
        mapping = {}
    if not isinstance(mapping, dict):
        raise ConfigError(f"config section {where!r} must be a mapping")
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(mapping) - known
    if unknown:
        raise ConfigError(f"unknown keys in config section {where!r}: {sorted(unknown)}")
    try:
        return cls(**mapping)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid config section {where!r}: {exc}") from exc


def _train_from(mapping) -> TrainConfig:
    if mapping is None:
        mapping = {}
    if not isinstance(mapping, dict):
        raise ConfigError("config section 'train' must be a mapping")
    unknown = set(mapping) - _TRAIN_KEYS
    if unknown:
        raise ConfigError(f"unknown keys in config section 'train': {sorted(unknown)}")
    kwargs = {}
    renames = {"lambda": "lam", "loss": "loss_kind", "iters": "total_iters"}
    for key, value in mapping.items():
        kwargs[renames.get(key, key)] = value
    try:
        return TrainConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid config section 'train': {exc}") from exc


def build_run_config(raw: dict | None, args: argparse.Namespace) -> RunConfig:
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError("config file must contain a YAML mapping")
    unknown = set(raw) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown top-level config keys: {sorted(unknown)}")

    try:
        seed = int(raw.get("seed", 0))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"'seed' must be an integer: {exc}") from exc
    cfg = RunConfig(
        root=Path(args.root),
        seed=seed,
        out=str(raw.get("out", "run")),
        strict=bool(raw.get("strict", False)),
        dataset=_section_from(DataCfg, raw.get("dataset"), "dataset"),
        model=_section_from(ModelCfg, raw.get("model"), "model"),
        train=_train_from(raw.get("train")),
        infer=_section_from(InferCfg, raw.get("infer"), "infer"),
        evaluate=_section_from(EvalCfg, raw.get("evaluate"), "evaluate"),
        synth=_section_from(SynthCfg, raw.get("synth"), "synth"),
    )

    def override(obj, attr, value):
        if value is not None:
            setattr(obj, attr, value)

    if args.seed is not None:
        cfg.seed = args.seed
    if args.out is not None:
        cfg.out = args.out
    override(cfg.dataset, "path", getattr(args, "dataset", None))
    override(cfg.dataset, "layout", getattr(args, "layout", None))
    override(cfg.dataset, "split", getattr(args, "split", None))
    override(cfg.dataset, "class_scheme", getattr(args, "class_scheme", None))
    override(cfg.model, "arch", getattr(args, "arch", None))
    override(cfg.model, "base_channels", getattr(args, "base_channels", None))
    override(cfg.infer, "strategy", getattr(args, "strategy", None))
    override(cfg.infer, "checkpoint", getattr(args, "checkpoint", None))
    override(cfg.evaluate, "predictions", getattr(args, "predictions", None))
    if getattr(args, "per_image_csv", None):
        cfg.evaluate.per_image_csv = True
    if getattr(args, "strict", None):
        cfg.strict = True
    for attr in ("n_train", "n_test", "image_size", "blobs_per_image",
                 "dilate_px", "drop_prob", "noise_sigma"):
        override(cfg.synth, attr, getattr(args, attr, None))
    if getattr(args, "stability", None) is not None:
        cfg.synth.stability = tuple(args.stability)

    train_overrides = {}
    for flag, field in (("beta", "beta"), ("lam", "lam"), ("loss", "loss_kind"),
                        ("batch_size", "batch_size"), ("crop_size", "crop_size"),
                        ("lr", "lr"), ("iters", "total_iters")):
        value = getattr(args, flag, None)
        if value is not None:
            train_overrides[field] = value
    train_overrides["seed"] = cfg.seed
    try:
        cfg.train = dataclasses.replace(cfg.train, **train_overrides)
    except ValueError as exc:
        raise ConfigError(f"invalid training configuration: {exc}") from exc

    if cfg.model.arch not in MODEL_REGISTRY:
        raise ConfigError(f"unknown model arch {cfg.model.arch!r}")
    if cfg.infer.strategy not in STRATEGIES:
        raise ConfigError(f"unknown inference strategy {cfg.infer.strategy!r}")
    return cfg


def _config_mapping(cfg: RunConfig) -> dict:
    return {
        "seed": cfg.seed,
        "out": cfg.out,
        "strict": cfg.strict,
        "dataset": dataclasses.asdict(cfg.dataset),
        "model": dataclasses.asdict(cfg.model),
        "train": {
            "beta": cfg.train.beta,
            "lambda": cfg.train.lam,
            "loss": cfg.train.loss_kind,
            "batch_size": cfg.train.batch_size,
            "crop_size": cfg.train.crop_size,
            "lr": cfg.train.lr,
            "iters": cfg.train.total_iters,
        },
        "infer": dataclasses.asdict(cfg.infer),
        "evaluate": dataclasses.asdict(cfg.evaluate),
        "synth": {**dataclasses.asdict(cfg.synth), "stability": list(cfg.synth.stability)},
    }


def _write_snapshot(cfg: RunConfig, out_dir: Path, command: str) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    text = yaml.safe_dump(_config_mapping(cfg), sort_keys=True)
    (out_dir / f"{command}.config.yaml").write_text(text)


def _manifest(cfg: RunConfig) -> DatasetManifest:
    if cfg.dataset.path is None:
        raise ConfigError("no dataset path configured (set dataset.path or --dataset)")
    root = cfg.root / cfg.dataset.path
    if not root.is_dir():
        raise ConfigError(f"dataset path does not exist: {root}")
    try:
        return DatasetManifest(root=root, layout=cfg.dataset.layout,
                               split=cfg.dataset.split,
                               class_scheme=cfg.dataset.class_scheme)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _save_u16(values: np.ndarray, path: Path) -> None:
    Image.fromarray(np.round(values * PRIOR_SCALE).astype(np.uint16)).save(path)


def cmd_synth(cfg: RunConfig) -> int:
    out = cfg.out_dir
    s = cfg.synth
    common = dict(image_size=s.image_size, blobs_per_image=s.blobs_per_image,
                  noise_sigma=s.noise_sigma, mask_dilate_px=s.dilate_px,
                  mask_drop_prob=s.drop_prob, stability_range=s.stability)
    write_dataset(synth_dataset(s.n_train, seed=cfg.seed, **common), out / "train")
    write_dataset(synth_dataset(s.n_test, seed=cfg.seed + 1, **common), out / "test")
    _write_snapshot(cfg, out, "synth")
    logger.info("wrote %d train / %d test synthetic images under %s",
                s.n_train, s.n_test, out)
    return 0


def cmd_build_priors(cfg: RunConfig) -> int:
    manifest = _manifest(cfg)
    samples = load_dataset(manifest, use_prior_cache=False)
    missing = [s.id for s in samples if s.mask_set is None]
    if missing and cfg.strict:
        raise RuntimeError(f"missing mask sets in strict mode: {', '.join(missing)}")
    priors_dir = manifest.root / "priors"
    priors_dir.mkdir(parents=True, exist_ok=True)
    for s in samples:
        save_prior(s.seg_prior, priors_dir / f"{s.id}.seg.png")
        save_prior(s.bnd_prior, priors_dir / f"{s.id}.bnd.png")
    _write_snapshot(cfg, priors_dir, "build-priors")
    logger.info("wrote prior maps for %d images to %s", len(samples), priors_dir)
    return 0


def cmd_augment(cfg: RunConfig) -> int:
    manifest = _manifest(cfg)
    samples = load_dataset(manifest)
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    for s in samples:
        fused = augment(s.image, s.seg_prior, s.bnd_prior)
        as_u8 = np.round(fused.pixels * 255.0).astype(np.uint8)
        Image.fromarray(as_u8).save(out / f"{s.id}.aug.png")
    _write_snapshot(cfg, out, "augment")
    logger.info("wrote %d augmented images to %s", len(samples), out)
    return 0


def cmd_train(cfg: RunConfig) -> int:
    manifest = _manifest(cfg)
    samples = load_dataset(manifest)
    scheme = manifest.class_scheme
    triples = data_mod.to_train_samples(samples, scheme)
    model = build_model(arch=cfg.model.arch, num_classes=SCHEME_CLASSES[scheme],
                        base_channels=cfg.model.base_channels, seed=cfg.seed)
    history = train(model, triples, cfg.train)
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(out / "checkpoint.pt", model, cfg.train, iteration=cfg.train.total_iters)
    write_loss_csv(out / "loss.csv", history)
    _write_snapshot(cfg, out, "train")
    if len(history):
        logger.info("trained %d iterations; final loss %.6f", len(history), history[-1])
    return 0


def cmd_infer(cfg: RunConfig) -> int:
    if cfg.infer.checkpoint is None:
        raise ConfigError("no checkpoint configured (set infer.checkpoint or --checkpoint)")
    ckpt_path = cfg.root / cfg.infer.checkpoint
    if not ckpt_path.is_file():
        raise ConfigError(f"checkpoint does not exist: {ckpt_path}")
    model, train_cfg, _ = load_checkpoint(ckpt_path)
    strategy = cfg.infer.strategy
    if strategy == "aug-only" and train_cfg.beta != 0.0:
        logger.warning(
            "aug-only deployment of a model trained with beta=%.3g on raw "
            "inputs; consider ensemble or entropy-select", train_cfg.beta)
    if strategy in ("ensemble", "entropy-select") and train_cfg.beta == 0.0:
        logger.warning(
            "%s deployment needs a raw branch, but the checkpoint was trained "
            "with beta=0 (augmented inputs only)", strategy)

    manifest = _manifest(cfg)
    samples = load_dataset(manifest)
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    for s in samples:
        x_aug = augment(s.image, s.seg_prior, s.bnd_prior)
        sidecar = {"id": s.id, "strategy": strategy}
        if strategy == "aug-only":
            probs = infer_aug_only(model, x_aug)
        elif strategy == "ensemble":
            probs = infer_ensemble(model, s.image, x_aug)
        else:
            probs, chosen = infer_entropy_select(model, s.image, x_aug)
            sidecar["chosen"] = chosen
        for c in range(probs.shape[-1]):
            _save_u16(probs[:, :, c], out / f"{s.id}.class{c}.png")
        (out / f"{s.id}.infer.json").write_text(json.dumps(sidecar))
    _write_snapshot(cfg, out, "infer")
    logger.info("wrote %s probability maps for %d images to %s",
                strategy, len(samples), out)
    return 0


def cmd_evaluate(cfg: RunConfig) -> int:
    if cfg.evaluate.predictions is None:
        raise ConfigError("no predictions directory configured "
                          "(set evaluate.predictions or --predictions)")
    pred_dir = cfg.root / cfg.evaluate.predictions
    if not pred_dir.is_dir():
        raise ConfigError(f"predictions directory does not exist: {pred_dir}")
    manifest = _manifest(cfg)
    samples = load_dataset(manifest)

    gt_ids = {s.id for s in samples}
    pred_ids = {p.name[:-len(".class0.png")] for p in pred_dir.glob("*.class0.png")}
    if gt_ids != pred_ids:
        missing = sorted(gt_ids - pred_ids)
        extra = sorted(pred_ids - gt_ids)
        raise RuntimeError(
            f"prediction/ground-truth id mismatch (missing: {missing}, extra: {extra})"
        )

    records = []
    for s in samples:
        class_files = sorted(
            pred_dir.glob(f"{s.id}.class*.png"),
            key=lambda p: int(p.name[len(s.id) + len(".class"):-len(".png")]),
        )
        probs = np.stack(
            [np.asarray(Image.open(p), dtype=np.float64) / PRIOR_SCALE for p in class_files],
            axis=-1,
        )
        fg = foreground_mask(probs)
        records.append({"id": s.id, **evaluate_sample(fg, s.label)})

    report = EvalReport(per_image=records)
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(json.dumps(report.to_dict(), indent=2))
    if cfg.evaluate.per_image_csv:
        lines = ["id," + ",".join(METRIC_NAMES)]
        for r in records:
            lines.append(r["id"] + "," + ",".join(repr(r[m]) for m in METRIC_NAMES))
        (out / "per_image.csv").write_text("\n".join(lines) + "\n")
    _write_snapshot(cfg, out, "evaluate")

    header = f"{'id':<16}" + "".join(f"{m:>14}" for m in METRIC_NAMES)
    print(header)
    for r in records:
        print(f"{r['id']:<16}" + "".join(f"{r[m]:>14.4f}" for m in METRIC_NAMES))
    agg = report.aggregate
    print(f"{'mean':<16}" + "".join(f"{agg[m]:>14.4f}" for m in METRIC_NAMES))
    return 0


_COMMANDS = {
    "synth": cmd_synth,
    "build-priors": cmd_build_priors,
    "augment": cmd_augment,
    "train": cmd_train,
    "infer": cmd_infer,
    "evaluate": cmd_evaluate,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=None, help="YAML config file")
    common.add_argument("--root", type=Path, default=Path("."),
                        help="base directory for all relative paths")
    common.add_argument("--seed", type=int, default=None, help="global seed")
    common.add_argument("--out", default=None, help="output directory (relative to root)")

    dataset = argparse.ArgumentParser(add_help=False)
    dataset.add_argument("--dataset", default=None, help="dataset path (relative to root)")
    dataset.add_argument("--layout", choices=data_mod.LAYOUTS, default=None)
    dataset.add_argument("--split", choices=data_mod.SPLITS, default=None)
    dataset.add_argument("--class-scheme", dest="class_scheme",
                         choices=data_mod.CLASS_SCHEMES, default=None)

    parser = argparse.ArgumentParser(
        prog="samaug",
        description="Prior-map input augmentation pipeline: synth, build-priors, "
                    "augment, train, infer, evaluate.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic dataset")
    p.add_argument("--n-train", dest="n_train", type=int, default=None)
    p.add_argument("--n-test", dest="n_test", type=int, default=None)
    p.add_argument("--image-size", dest="image_size", type=int, default=None)
    p.add_argument("--blobs-per-image", dest="blobs_per_image", type=int, default=None)
    p.add_argument("--dilate-px", dest="dilate_px", type=int, default=None)
    p.add_argument("--drop-prob", dest="drop_prob", type=float, default=None)
    p.add_argument("--stability", nargs=2, type=float, default=None,
                   metavar=("LO", "HI"))
    p.add_argument("--noise-sigma", dest="noise_sigma", type=float, default=None)

    p = sub.add_parser("build-priors", parents=[common, dataset],
                       help="rasterize mask sets into cached prior maps")
    p.add_argument("--strict", action="store_true", default=None,
                   help="fail instead of warning when mask sets are missing")

    sub.add_parser("augment", parents=[common, dataset],
                   help="export fused images as 8-bit PNGs for inspection")

    p = sub.add_parser("train", parents=[common, dataset], help="train a model")
    p.add_argument("--arch", choices=sorted(MODEL_REGISTRY), default=None)
    p.add_argument("--base-channels", dest="base_channels", type=int, default=None)
    p.add_argument("--beta", type=float, default=None)
    p.add_argument("--lambda", dest="lam", type=float, default=None)
    p.add_argument("--loss", choices=("spatial-cross-entropy", "dice"), default=None)
    p.add_argument("--batch-size", dest="batch_size", type=int, default=None)
    p.add_argument("--crop-size", dest="crop_size", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--iters", type=int, default=None)

    p = sub.add_parser("infer", parents=[common, dataset],
                       help="write per-image probability maps")
    p.add_argument("--strategy", choices=STRATEGIES, default=None)
    p.add_argument("--checkpoint", default=None, help="checkpoint path (relative to root)")

    p = sub.add_parser("evaluate", parents=[common, dataset],
                       help="score predictions against ground truth")
    p.add_argument("--predictions", default=None,
                   help="directory of probability maps (relative to root)")
    p.add_argument("--per-image-csv", dest="per_image_csv", action="store_true",
                   default=None)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        raw = None
        if args.config is not None:
            config_path = Path(args.config)
            if not config_path.is_file():
                raise ConfigError(f"config file does not exist: {config_path}")
            raw = yaml.safe_load(config_path.read_text())
        cfg = build_run_config(raw, args)
        return _COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"samaug: configuration error: {exc}", file=sys.stderr)
        return 2
    except (FileNotFoundError, ValueError, RuntimeError, MaskFormatError) as exc:
        print(f"samaug: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
