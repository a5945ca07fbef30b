"""Command-line entry point: ``bfseg <subcommand> ...``.

Subcommands: synth, train, eval, predict, mask-pyramid, complexity.
Exit status is 0 on success, 2 on usage errors and 1 on runtime failures.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .complexity import count_lightfpn, count_unet_reference
from .data import SynthConfig, generate_dataset, load_dataset, save_dataset
from .errors import BFSegError
from .io import read_png, sha256_file, to_uint8, write_png, write_text_atomic
from .label_pyramid import build_mask_pyramid
from .losses import SupervisionMode
from .metrics import binarize, confusion
from .model import MAX_STRIDE, ModelConfig
from .ops import sigmoid
from .training import TrainConfig, evaluate, load_model, save_model, train

log = logging.getLogger("bfseg")

MODE_NAMES = {"none": "off", "ori": "conventional", "lenient": "lenient"}
DISTILL_NAMES = {"off": "off", "on": "lenient"}

# key=value config file keys -> (section, type)
TRAIN_KEYS = {
    "mode": str,
    "distill": str,
    "epochs": int,
    "seed": int,
    "batch_size": int,
    "initial_lr": float,
    "lr_decay_factor": float,
    "patience_epochs": int,
    "weight_decay": float,
    "augment": "bool",
    "base_channels": int,
    "width": int,
    "activation": str,
}
SYNTH_KEYS = {
    "size": int,
    "count_min": int,
    "count_max": int,
    "size_min": int,
    "size_max": int,
    "noise": float,
    "rotation": "bool",
    "seed": int,
    "n_train": int,
    "n_val": int,
}


class UsageError(Exception):
    pass


def _parse_bool(text):
    v = str(text).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise UsageError(f"not a boolean: {text!r}")


def read_config_file(path, allowed: dict) -> dict:
    """Parse a flat ``key = value`` file; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        key, value = (part.strip() for part in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in allowed:
            raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
        kind = allowed[key]
        try:
            out[key] = _parse_bool(value) if kind == "bool" else kind(value)
        except ValueError as e:
            raise UsageError(f"{path}:{lineno}: {e}") from None
    return out


def _resolve(args, file_cfg: dict, defaults: dict) -> dict:
    """Flags override config-file keys, which override defaults."""
    resolved = dict(defaults)
    resolved.update(file_cfg)
    for key in defaults:
        value = getattr(args, key, None)
        if value is not None:
            resolved[key] = value
    return resolved


def _synth_config(d: dict) -> SynthConfig:
    return SynthConfig(
        size=d["size"],
        count_range=(d["count_min"], d["count_max"]),
        size_range=(d["size_min"], d["size_max"]),
        noise=d["noise"],
        rotation=d["rotation"],
        seed=d["seed"],
    )


SYNTH_DEFAULTS = {
    "size": 64,
    "count_min": 2,
    "count_max": 6,
    "size_min": 4,
    "size_max": 20,
    "noise": 0.06,
    "rotation": False,
    "seed": 0,
    "n_train": 200,
    "n_val": 50,
}


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------


def cmd_synth(args):
    file_cfg = read_config_file(args.config, SYNTH_KEYS) if args.config else {}
    d = _resolve(args, file_cfg, {**SYNTH_DEFAULTS, "n": 100})
    samples = generate_dataset(_synth_config(d), d["n"], prefix=args.prefix)
    save_dataset(samples, args.out)
    print(f"wrote {len(samples)} samples to {args.out}")
    return 0


def _load_split(root: Path):
    train_dir, val_dir = root / "train", root / "val"
    if not train_dir.is_dir() or not val_dir.is_dir():
        raise BFSegError(f"{root} must contain train/ and val/ dataset directories")
    return load_dataset(train_dir), load_dataset(val_dir)


def _input_digests(paths):
    digests = {}
    for p in paths:
        p = Path(p)
        files = sorted(x for x in p.rglob("*") if x.is_file()) if p.is_dir() else [p]
        for f in files:
            digests[str(f)] = sha256_file(f)
    return digests


def cmd_train(args):
    if not args.data and not args.synth_config:
        raise UsageError("train needs --data or --synth-config")
    train_defaults = {
        "mode": "lenient",
        "distill": "on",
        "epochs": 20,
        "seed": 0,
        "batch_size": 16,
        "initial_lr": 1e-3,
        "lr_decay_factor": 0.7,
        "patience_epochs": 3,
        "weight_decay": 5e-4,
        "augment": True,
        "base_channels": 16,
        "width": 64,
        "activation": "gelu",
    }
    file_cfg = read_config_file(args.config, TRAIN_KEYS) if args.config else {}
    cfg = _resolve(args, file_cfg, train_defaults)
    if cfg["mode"] not in MODE_NAMES or cfg["distill"] not in DISTILL_NAMES:
        raise UsageError(f"bad --mode/--distill: {cfg['mode']}/{cfg['distill']}")

    inputs = []
    synth = None
    if args.data:
        train_set, val_set = _load_split(Path(args.data))
        inputs.append(args.data)
    else:
        synth = _resolve(argparse.Namespace(), read_config_file(args.synth_config, SYNTH_KEYS), SYNTH_DEFAULTS)
        base = _synth_config(synth)
        train_set = generate_dataset(base, synth["n_train"], "train")
        val_set = generate_dataset(replace(base, seed=base.seed + 1), synth["n_val"], "val")
        inputs.append(args.synth_config)

    mode = SupervisionMode(MODE_NAMES[cfg["mode"]], DISTILL_NAMES[cfg["distill"]])
    model_cfg = ModelConfig(
        base_channels=cfg["base_channels"], width=cfg["width"], activation=cfg["activation"], seed=cfg["seed"]
    )
    train_cfg = TrainConfig(
        initial_lr=cfg["initial_lr"],
        lr_decay_factor=cfg["lr_decay_factor"],
        patience_epochs=cfg["patience_epochs"],
        weight_decay=cfg["weight_decay"],
        epochs=cfg["epochs"],
        batch_size=cfg["batch_size"],
        seed=cfg["seed"],
        mode=mode,
        augment=cfg["augment"],
    )

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {
        "artifact_version": __version__,
        "command": "train",
        "config": {"train": train_cfg.to_dict(), "model": model_cfg.to_dict(), "synth": synth},
        "seed": cfg["seed"],
        "inputs": _input_digests(inputs),
        "started": datetime.now(timezone.utc).isoformat(),
        "finished": None,
    }
    write_text_atomic(out / "manifest.json", json.dumps(manifest, indent=2, sort_keys=True))

    log_lines = []

    def on_epoch(record):
        log_lines.append(json.dumps(record.to_dict(), sort_keys=True) + "\n")
        write_text_atomic(out / "train_log.jsonl", "".join(log_lines))

    result = train(model_cfg, train_cfg, train_set, val_set, on_epoch=on_epoch)
    if not log_lines:
        write_text_atomic(out / "train_log.jsonl", "")
    save_model(out / "best.ckpt", result.model, {"best_epoch": result.best_epoch})
    report = evaluate(result.model, val_set)
    write_text_atomic(out / "val_report.txt", report.format() + "\n")
    manifest["finished"] = datetime.now(timezone.utc).isoformat()
    write_text_atomic(out / "manifest.json", json.dumps(manifest, indent=2, sort_keys=True))
    print(report.format())
    return 0


def cmd_eval(args):
    model = load_model(args.ckpt)
    samples = load_dataset(args.data)
    report = evaluate(model, samples)
    print(report.format())
    if args.out:
        write_text_atomic(args.out, report.format() + "\n")
    return 0


def _check_image_size(shape, path):
    h, w = shape[:2]
    if h % MAX_STRIDE or w % MAX_STRIDE:
        nh, nw = max(MAX_STRIDE, h // MAX_STRIDE * MAX_STRIDE), max(MAX_STRIDE, w // MAX_STRIDE * MAX_STRIDE)
        raise BFSegError(f"{path}: size {h}x{w} is not divisible by {MAX_STRIDE}; crop or resize to e.g. {nh}x{nw}")


def agreement_overlay(pred, truth) -> np.ndarray:
    """RGBA image: TP green, FN blue, FP red, TN transparent."""
    pred = np.asarray(pred).astype(bool)
    truth = np.asarray(truth).astype(bool)
    rgba = np.zeros(pred.shape + (4,), dtype=np.uint8)
    rgba[pred & truth] = (0, 255, 0, 255)
    rgba[~pred & truth] = (0, 0, 255, 255)
    rgba[pred & ~truth] = (255, 0, 0, 255)
    return rgba


def cmd_predict(args):
    if args.overlay and not args.label:
        raise UsageError("--overlay requires --label")
    model = load_model(args.ckpt)
    image = read_png(args.image, "RGB").astype(np.float64) / 255.0
    _check_image_size(image.shape, args.image)
    logits = model.forward(image[None]).final[0]
    pred = binarize(logits)
    out = Path(args.out)
    write_png(out / "mask.png", pred * np.uint8(255))
    write_png(out / "prob.png", to_uint8(sigmoid(logits.astype(np.float64))))
    if args.label:
        truth = (read_png(args.label, "L") >= 128).astype(np.uint8)
        write_png(out / "overlay.png", agreement_overlay(pred, truth))
        c = confusion(pred, truth)
        print(json.dumps(c.to_dict(), sort_keys=True))
    print(f"wrote predictions to {out}")
    return 0


def cmd_mask_pyramid(args):
    raw = read_png(args.label, "L")
    y = (raw >= 128).astype(np.uint8)
    pyramid = build_mask_pyramid(y)
    out = Path(args.out)
    for s in pyramid.strides:
        level = pyramid[s]
        write_png(out / f"ydown_s{s}.png", to_uint8(level.soft_label))
        write_png(out / f"mask_s{s}.png", level.mask * np.uint8(255))
        print(f"stride {s}: {level.n_pure} pure, {level.n_hybrid} hybrid")
    return 0


def cmd_complexity(args):
    try:
        profile = tuple(int(v) for v in args.profile.split(","))
    except ValueError:
        raise UsageError(f"--profile must be comma-separated integers, got {args.profile!r}") from None
    light = count_lightfpn(profile, args.width, args.size)
    unet = count_unet_reference(profile, args.size)
    print(light.format())
    print()
    print(unet.format())
    print()
    print(f"params ratio unet/lightfpn: {unet.total_params / light.total_params:.2f}")
    print(f"macs ratio unet/lightfpn: {unet.total_macs / light.total_macs:.2f}")
    return 0


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bfseg", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic dataset (images/, labels/)")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int)
    p.add_argument("--config", help="key=value synthetic config file")
    p.add_argument("--prefix", default="scene")
    p.add_argument("--size", type=int)
    p.add_argument("--count-min", dest="count_min", type=int)
    p.add_argument("--count-max", dest="count_max", type=int)
    p.add_argument("--size-min", dest="size_min", type=int)
    p.add_argument("--size-max", dest="size_max", type=int)
    p.add_argument("--noise", type=float)
    p.add_argument("--rotation", action="store_const", const=True)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train the model")
    p.add_argument("--data", help="directory with train/ and val/ datasets")
    p.add_argument("--synth-config", dest="synth_config", help="key=value synthetic data config")
    p.add_argument("--config", help="key=value training config file")
    p.add_argument("--mode", choices=sorted(MODE_NAMES))
    p.add_argument("--distill", choices=sorted(DISTILL_NAMES))
    p.add_argument("--epochs", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--base-channels", dest="base_channels", type=int)
    p.add_argument("--width", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", help="also write the report here")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="predict a building mask for one image")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--label", help="ground truth, enables the agreement overlay")
    p.add_argument("--overlay", action="store_true", help="require the agreement overlay")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("mask-pyramid", help="export soft labels and purity masks")
    p.add_argument("--label", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_mask_pyramid)

    p = sub.add_parser("complexity", help="decoder parameter / FLOP tables")
    p.add_argument("--profile", default="96,192,384,768")
    p.add_argument("--size", type=int, default=512)
    p.add_argument("--width", type=int, default=64)
    p.set_defaults(func=cmd_complexity)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except UsageError as e:
        parser.print_usage(sys.stderr)
        print(f"bfseg {args.command}: error: {e}", file=sys.stderr)
        return 2
    except (BFSegError, OSError, ValueError) as e:
        print(f"bfseg {args.command}: error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
