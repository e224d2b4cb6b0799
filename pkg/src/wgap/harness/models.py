"""Save and restore networks with enough metadata to rebuild them.

Architecture hyperparameters ride along as 0-d tensors under ``meta/`` so a
checkpoint stays a plain tensor dictionary.
"""

from __future__ import annotations

import numpy as np

from ..neural import ClassifierNet, GeneratorNet, load_checkpoint, save_checkpoint
from ..numerics import Prng

VARIANTS = ("surrogate", "transfer_target")


class CheckpointMismatchError(ValueError):
    pass


def _meta(tensors: dict, key: str) -> int:
    try:
        return int(tensors[f"meta/{key}"])
    except KeyError:
        raise CheckpointMismatchError(f"checkpoint lacks meta/{key}") from None


def save_generator(path, gen: GeneratorNet) -> None:
    tensors = {
        "meta/kind": np.array(0.0),
        "meta/channels": np.array(float(gen.channels)),
        "meta/filters": np.array(float(gen.filters)),
        "meta/blocks": np.array(float(gen.blocks)),
        "meta/depth": np.array(float(gen.depth)),
    }
    tensors.update(gen.parameters())
    save_checkpoint(path, tensors)


def load_generator(path) -> GeneratorNet:
    t = load_checkpoint(path)
    if _meta(t, "kind") != 0:
        raise CheckpointMismatchError(f"{path} is not a generator checkpoint")
    gen = GeneratorNet(_meta(t, "channels"), Prng(0), _meta(t, "filters"), _meta(t, "blocks"), _meta(t, "depth"))
    gen.load_parameters({k: v for k, v in t.items() if not k.startswith("meta/")})
    return gen


def save_classifier(path, net: ClassifierNet) -> None:
    tensors = {
        "meta/kind": np.array(1.0),
        "meta/variant": np.array(float(VARIANTS.index(net.variant))),
        "meta/channels": np.array(float(net.channels)),
        "meta/size": np.array(float(net.size)),
        "meta/classes": np.array(float(net.num_classes)),
    }
    tensors.update(net.parameters())
    save_checkpoint(path, tensors)


def load_classifier(path) -> ClassifierNet:
    t = load_checkpoint(path)
    if _meta(t, "kind") != 1:
        raise CheckpointMismatchError(f"{path} is not a classifier checkpoint")
    net = ClassifierNet(
        VARIANTS[_meta(t, "variant")], _meta(t, "channels"), _meta(t, "size"), _meta(t, "classes"), Prng(0)
    )
    net.load_parameters({k: v for k, v in t.items() if not k.startswith("meta/")})
    return net
