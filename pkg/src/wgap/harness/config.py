"""Plain-text ``key = value`` run configuration.

Blank lines and ``#`` comments are ignored.  Unknown keys are rejected and the
keys in :data:`REQUIRED` must be present.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from ..attack import AttackConfig
from ..defense import DefenseSpec


class ConfigError(ValueError):
    pass


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _float(text: str) -> float:
    # allow simple ratios such as 10/255
    if "/" in text:
        num, den = text.split("/", 1)
        return float(num) / float(den)
    return float(text)


def _list(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


# key -> (parser, default); default None means "no value"
SCHEMA: dict[str, tuple] = {
    # attack
    "mode": (str, None),
    "wavelet": (str, None),
    "j0": (int, None),
    "epsilon": (_float, None),
    "penalty_l": (_float, 10.0),
    "distance": (str, "relative"),
    "additive": (_bool, False),
    "epochs": (int, 80),
    "iterations_per_epoch": (int, 50),
    "batch_size": (int, 16),
    "clamp_output": (_bool, True),
    "gen_filters": (int, 16),
    "gen_blocks": (int, 2),
    "lr": (_float, 1e-3),
    "beta1": (_float, 0.5),
    "beta2": (_float, 0.999),
    "time_magnitude": (_float, 10 / 255),
    # data
    "dataset": (str, "synthetic"),
    "n_train_per_class": (int, 100),
    "attack_train_per_class": (int, 300),
    "n_test_per_class": (int, 50),
    "train_images": (str, None),
    "train_labels": (str, None),
    "test_images": (str, None),
    "test_labels": (str, None),
    "eval_samples": (int, 500),
    # classifiers
    "classifier_epochs": (int, 5),
    "classifier_batch_size": (int, 16),
    "classifier_lr": (_float, 1e-3),
    # defenses
    "defenses": (_list, ["jpeg", "randomization", "wavelet_denoise"]),
    "jpeg_quality": (int, 75),
    "rand_min_ratio": (_float, 0.85),
    "denoise_tau": (_float, 0.05),
    "denoise_levels": (int, 1),
    "denoise_wavelet": (str, "haar"),
    # run
    "seed": (int, 0),
    "out_dir": (str, "runs/default"),
    "residual_gain": (_float, 5.0),
    "generate_count": (int, 8),
}

REQUIRED = ("mode", "wavelet", "j0", "epsilon")


@dataclass
class RunConfig:
    values: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.values[key]

    def get(self, key, default=None):
        v = self.values.get(key)
        return default if v is None else v

    def attack(self) -> AttackConfig:
        v = self.values
        return AttackConfig(
            mode=v["mode"],
            wavelet_name=v["wavelet"],
            j0=v["j0"],
            epsilon=v["epsilon"],
            penalty_l=v["penalty_l"],
            epochs=v["epochs"],
            iterations_per_epoch=v["iterations_per_epoch"],
            batch_size=v["batch_size"],
            seed=v["seed"],
            clamp_output=v["clamp_output"],
            distance=v["distance"],
            additive=v["additive"],
            gen_filters=v["gen_filters"],
            gen_blocks=v["gen_blocks"],
            lr=v["lr"],
            beta1=v["beta1"],
            beta2=v["beta2"],
            time_magnitude=v["time_magnitude"],
        )

    def defenses(self) -> list[DefenseSpec]:
        v = self.values
        return [
            DefenseSpec(
                kind=k,
                quality=v["jpeg_quality"],
                min_ratio=v["rand_min_ratio"],
                tau=v["denoise_tau"],
                levels=v["denoise_levels"],
                wavelet=v["denoise_wavelet"],
                seed=v["seed"],
            )
            for k in v["defenses"]
        ]


def parse_config(text: str, overrides: dict | None = None, source: str = "<config>") -> RunConfig:
    raw: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in SCHEMA:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        raw[key] = value
    values = {}
    for key, (parse, default) in SCHEMA.items():
        if key in raw:
            try:
                values[key] = parse(raw[key])
            except ValueError as exc:
                raise ConfigError(f"{source}: bad value for {key!r}: {exc}") from None
        else:
            values[key] = default
    for key, value in (overrides or {}).items():
        if value is not None:
            values[key] = value
    for key in REQUIRED:
        if values.get(key) is None:
            raise ConfigError(f"{source}: missing required key {key!r}")
    cfg = RunConfig(values)
    try:
        cfg.attack()
        cfg.defenses()
    except ValueError as exc:
        raise ConfigError(f"{source}: {exc}") from None
    return cfg


def load_config(path, overrides: dict | None = None) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, overrides, str(path))
