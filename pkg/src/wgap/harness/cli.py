"""Command-line entry point.

Commands::

    train-surrogate   train the surrogate and transfer classifiers
    train-attack      train a perturbation generator against the surrogate
    generate          write clean / adversarial / residual images
    evaluate          fooling-ratio report under the configured defenses
    dwt               per-subband energy table of an image file
    report            pretty-print a report CSV

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from ..attack import IdentityGenerator, craft, evaluate_attack, make_perturber, train_attack
from ..metrics import relative_l2, ssim_dissimilarity
from ..neural import ClassifierNet, accuracy, train_classifier
from ..numerics import Prng
from ..wavelet import decompose, make_filterbank
from .config import ConfigError, RunConfig, load_config
from .data import Dataset, load_idx, synth_dataset
from .imageio import export_residual, read_image, write_image
from .models import load_classifier, load_generator, save_classifier, save_generator
from .report import read_report, summarize, write_loss_log, write_report, write_samples

log = logging.getLogger("wgap")

SURROGATE_CKPT = "surrogate.ckpt"
TRANSFER_CKPT = "transfer_target.ckpt"
GENERATOR_CKPT = "generator.ckpt"


def load_data(cfg: RunConfig) -> tuple[Dataset, Dataset]:
    if cfg["dataset"] == "synthetic":
        train = synth_dataset(cfg["seed"], cfg["n_train_per_class"], split="train")
        test = synth_dataset(cfg["seed"], cfg["n_test_per_class"], split="test")
    elif cfg["dataset"] == "idx":
        paths = [cfg.get(k) for k in ("train_images", "train_labels", "test_images", "test_labels")]
        if None in paths:
            raise ConfigError("dataset = idx needs train_images, train_labels, test_images, test_labels")
        train = load_idx(paths[0], paths[1], split="train")
        test = load_idx(paths[2], paths[3], split="test")
    else:
        raise ConfigError(f"unknown dataset {cfg['dataset']!r} (expected synthetic or idx)")
    return train, test.subset(min(len(test), cfg["eval_samples"]))


def attack_data(cfg: RunConfig) -> Dataset:
    """Generator training set: a larger synthetic draw, or the IDX train split."""
    if cfg["dataset"] == "synthetic":
        return synth_dataset(cfg["seed"], cfg["attack_train_per_class"], split="train")
    return load_data(cfg)[0]


def _out(args, cfg: RunConfig | None = None) -> Path:
    out = Path(args.out or (cfg["out_dir"] if cfg else "runs/default"))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _config(args) -> RunConfig:
    if args.config is None:
        raise ConfigError(f"{args.command} needs --config PATH")
    overrides = {"seed": args.seed}
    return load_config(args.config, overrides)


def cmd_train_surrogate(args) -> int:
    cfg = _config(args)
    out = _out(args, cfg)
    train, test = load_data(cfg)
    C, size = train.images.shape[1], train.images.shape[2]
    root = Prng(cfg["seed"]).child("classifiers")
    rows = []
    for variant, fname in (("surrogate", SURROGATE_CKPT), ("transfer_target", TRANSFER_CKPT)):
        net = ClassifierNet(variant, C, size, train.num_classes, root.child(f"{variant}/init"))
        hist = train_classifier(
            net,
            train.images,
            train.labels,
            root.child(f"{variant}/batches"),
            epochs=cfg["classifier_epochs"],
            batch_size=cfg["classifier_batch_size"],
            lr=cfg["classifier_lr"],
            test=(test.images, test.labels),
        )
        save_classifier(out / fname, net)
        rows += [(variant, h["epoch"], h["loss"], h["train_acc"], h["test_acc"]) for h in hist]
        log.info("%s test accuracy %.4f -> %s", variant, hist[-1]["test_acc"], out / fname)
    lines = ["variant,epoch,loss,train_acc,test_acc"] + [",".join(map(repr, r)).replace("'", "") for r in rows]
    (out / "classifier_log.csv").write_text("\n".join(lines) + "\n")
    return 0


def cmd_train_attack(args) -> int:
    cfg = _config(args)
    out = _out(args, cfg)
    train = attack_data(cfg)
    surrogate = load_classifier(out / SURROGATE_CKPT)
    gen, rows = train_attack(train, surrogate, cfg.attack())
    save_generator(out / GENERATOR_CKPT, gen)
    write_loss_log(out / "loss_log.csv", rows)
    log.info("generator -> %s", out / GENERATOR_CKPT)
    return 0


def _generator(args, cfg: RunConfig, channels: int):
    if getattr(args, "identity_generator", False):
        return IdentityGenerator(cfg.attack().generator_channels(channels))
    return load_generator(_out(args, cfg) / GENERATOR_CKPT)


def cmd_generate(args) -> int:
    cfg = _config(args)
    out = _out(args, cfg)
    _, test = load_data(cfg)
    acfg = cfg.attack()
    x = test.images[: cfg["generate_count"]]
    gen = _generator(args, cfg, x.shape[1])
    x_adv = craft(make_perturber(gen, acfg), x)
    img_dir = out / "images"
    img_dir.mkdir(exist_ok=True)
    ext = "pgm" if x.shape[1] == 1 else "ppm"
    for i, (a, b) in enumerate(zip(x, x_adv)):
        write_image(img_dir / f"{i:03d}_clean.{ext}", a)
        write_image(img_dir / f"{i:03d}_adv.{ext}", b)
        export_residual(img_dir / f"{i:03d}_residual.{ext}", a, b, cfg["residual_gain"])
    log.info("wrote %d image triples to %s", len(x), img_dir)
    return 0


def cmd_evaluate(args) -> int:
    cfg = _config(args)
    out = _out(args, cfg)
    _, test = load_data(cfg)
    acfg = cfg.attack()
    gen = _generator(args, cfg, test.images.shape[1])
    models = {
        "surrogate": load_classifier(out / SURROGATE_CKPT),
        "transfer_target": load_classifier(out / TRANSFER_CKPT),
    }
    for name, net in models.items():
        log.info("%s clean accuracy %.4f", name, accuracy(net, test.images, test.labels))
    reports = evaluate_attack(gen, models, test, acfg, cfg.defenses())
    write_report(out / "report.csv", reports)
    x_adv = craft(make_perturber(gen, acfg), test.images)
    rel = np.atleast_1d(relative_l2(x_adv, test.images))
    ssim_d = np.atleast_1d(ssim_dissimilarity(x_adv, test.images, acfg.ssim))
    write_samples(out / "samples.csv", test.labels, rel, ssim_d)
    log.info("report -> %s (mean rel L2 %.4f)", out / "report.csv", rel.mean())
    return 0


def cmd_dwt(args) -> int:
    img = read_image(args.input)
    p = decompose(img, args.levels, make_filterbank(args.wavelet))
    energies = p.energies()
    total = float(np.sum(img**2))
    print(f"{'subband':8s} {'energy':>16s} {'fraction':>10s}")
    for key, e in energies.items():
        print(f"{key:8s} {e:16.9f} {e / total if total else 0.0:10.6f}")
    print(f"{'sum':8s} {sum(energies.values()):16.9f}")
    print(f"{'image':8s} {total:16.9f}")
    return 0


def cmd_report(args) -> int:
    path = Path(args.input) if args.input else _out(args) / "report.csv"
    print(summarize(read_report(path)))
    return 0


COMMANDS = {
    "train-surrogate": cmd_train_surrogate,
    "train-attack": cmd_train_attack,
    "generate": cmd_generate,
    "evaluate": cmd_evaluate,
    "dwt": cmd_dwt,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS, help="key = value run configuration")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="override the config seed")
    common.add_argument("--out", default=argparse.SUPPRESS, help="output directory")
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)

    parser = argparse.ArgumentParser(prog="wgap", description="Wavelet-domain adversarial perturbation toolkit.", parents=[common])
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", required=True)
    sub.add_parser("train-surrogate", parents=[common], help="train surrogate and transfer classifiers")
    sub.add_parser("train-attack", parents=[common], help="train the perturbation generator")
    sub.add_parser("generate", parents=[common], help="write adversarial and residual images").add_argument(
        "--identity-generator", action="store_true", help="use the pass-through generator"
    )
    sub.add_parser("evaluate", parents=[common], help="write report.csv and samples.csv").add_argument(
        "--identity-generator", action="store_true", help="use the pass-through generator"
    )
    p = sub.add_parser("dwt", parents=[common], help="print subband energies of a PGM/PPM image")
    p.add_argument("--input", required=True)
    p.add_argument("--wavelet", default="db2")
    p.add_argument("--levels", type=int, default=1)
    sub.add_parser("report", parents=[common], help="print a report CSV").add_argument("--input")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    for key, default in (("config", None), ("seed", None), ("out", None), ("verbose", False)):
        if not hasattr(args, key):
            setattr(args, key, default)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s", stream=sys.stderr
    )
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"wgap: config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - report and map to exit 1
        print(f"wgap: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
