"""Wavelet-domain generative perturbations, the budget-conditioned loss and training.

Wavelet mode: decompose to level ``j0``, feed the stacked level-``j0`` detail
blocks to the generator, rescale its tanh output by the per-sample max-abs of
those details, swap them in, and reconstruct.  The approximation and every
other level are untouched, so the image-domain change equals the change in
the swapped coefficients (orthonormal, periodized bank).

Time mode: the generator sees the image itself; its output is rescaled so its
max-abs equals ``time_magnitude`` and added to the image.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .defense import DefenseSpec, apply_defense
from .metrics import (
    PROB_FLOOR,
    EvalReport,
    SsimParams,
    cross_entropy,
    fooling_ratio,
    relative_l2,
    ssim_dissimilarity,
    ssim_dissimilarity_grad,
)
from .neural import AdamState, ClassifierNet, GeneratorNet, adam_step, generator_depth
from .numerics import Prng, clamp01, gaussian_sample
from .wavelet import (
    FilterBank,
    ShapeError,
    decompose,
    make_filterbank,
    reconstruct,
    replace_details,
    split_details,
    stack_details,
)

log = logging.getLogger(__name__)

MODES = ("wavelet", "time")


@dataclass
class AttackConfig:
    mode: str = "wavelet"
    wavelet_name: str = "db2"
    j0: int = 1
    epsilon: float = 0.1
    penalty_l: float = 10.0
    epochs: int = 80
    iterations_per_epoch: int = 50
    batch_size: int = 16
    seed: int = 0
    clamp_output: bool = True
    distance: str = "relative"
    additive: bool = False
    gen_filters: int = 16
    gen_blocks: int = 2
    lr: float = 1e-3
    beta1: float = 0.5
    beta2: float = 0.999
    time_magnitude: float = 10.0 / 255.0
    ssim: SsimParams = field(default_factory=SsimParams)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be > 0")
        if self.j0 < 1:
            raise ValueError("j0 must be >= 1")
        if self.penalty_l < 0:
            raise ValueError("penalty_l must be >= 0")
        if self.distance not in ("relative", "absolute"):
            raise ValueError("distance must be 'relative' or 'absolute'")

    @property
    def filterbank(self) -> FilterBank:
        return make_filterbank(self.wavelet_name)

    def generator_channels(self, image_channels: int) -> int:
        return 3 * image_channels if self.mode == "wavelet" else image_channels


@dataclass
class AdversarialBatch:
    originals: np.ndarray
    adversarials: np.ndarray
    clean_labels: np.ndarray
    adv_labels: np.ndarray
    rel_l2: np.ndarray


class IdentityGenerator:
    """Stand-in generator that reproduces its input after the max-abs rescale.

    In wavelet mode the swapped-in details equal the originals, so the attack
    is the identity.  Used as a test fixture and by ``evaluate --identity-generator``.
    """

    def __init__(self, channels: int):
        self.channels = channels

    def forward(self, x):
        s = np.abs(x).max(axis=(1, 2, 3), keepdims=True)
        return np.divide(x, s, out=np.zeros_like(x), where=s > 0)

    def backward(self, grad):
        return grad

    def named_params(self, prefix=""):
        return iter(())

    def parameters(self):
        return {}


class ZeroGenerator(IdentityGenerator):
    def forward(self, x):
        return np.zeros_like(x)


def build_generator(cfg: AttackConfig, image_channels: int, rng: Prng, image_size: int | None = None) -> GeneratorNet:
    """Generator sized for the attack; the encoder depth follows the map it will see."""
    depth = 2
    if image_size is not None:
        extent = image_size // 2**cfg.j0 if cfg.mode == "wavelet" else image_size
        depth = generator_depth(extent)
    return GeneratorNet(cfg.generator_channels(image_channels), rng, cfg.gen_filters, cfg.gen_blocks, depth)


def _as_batch(x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 3:
        return x[None], True
    if x.ndim != 4:
        raise ShapeError(f"expected (C, H, W) or (N, C, H, W), got {x.shape}")
    return x, False


class WaveletPerturber:
    """Differentiable wavelet-mode perturbation around a generator."""

    def __init__(self, gen, fb: FilterBank, j0: int, clamp: bool = True, additive: bool = False):
        self.gen, self.fb, self.j0, self.clamp, self.additive = gen, fb, j0, clamp, additive
        self._cache = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        p = decompose(x, self.j0, self.fb)
        stack = stack_details(p.level(self.j0))
        s = np.abs(stack).max(axis=(1, 2, 3), keepdims=True)
        out = self.gen.forward(stack)
        new = s * out + (stack if self.additive else 0.0)
        raw = reconstruct(replace_details(p, self.j0, split_details(new)), self.fb)
        self._cache = (s, raw)
        return clamp01(raw) if self.clamp else raw

    def backward(self, grad: np.ndarray) -> np.ndarray:
        """Push ``dloss/dx_adv`` into the generator; returns ``dloss/dgenerator_output``."""
        s, raw = self._cache
        if self.clamp:
            grad = np.where((raw >= 0.0) & (raw <= 1.0), grad, 0.0)
        # reconstruct() is orthonormal, so its adjoint is decompose()
        g_stack = stack_details(decompose(grad, self.j0, self.fb).level(self.j0))
        g_out = s * g_stack
        self.gen.backward(g_out)
        return g_out


class TimePerturber:
    """Additive image-domain perturbation with max-abs normalisation."""

    def __init__(self, gen, magnitude: float, clamp: bool = True):
        self.gen, self.magnitude, self.clamp = gen, magnitude, clamp
        self._cache = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        out = self.gen.forward(x)
        flat = np.abs(out).reshape(len(out), -1)
        arg = flat.argmax(axis=1)
        M = flat[np.arange(len(out)), arg].reshape(-1, 1, 1, 1)
        pert = np.divide(self.magnitude * out, M, out=np.zeros_like(out), where=M > 0)
        raw = x + pert
        self._cache = (out, M, arg, raw)
        return clamp01(raw) if self.clamp else raw

    def backward(self, grad: np.ndarray) -> np.ndarray:
        out, M, arg, raw = self._cache
        if self.clamp:
            grad = np.where((raw >= 0.0) & (raw <= 1.0), grad, 0.0)
        n = len(out)
        safe = np.where(M > 0, M, 1.0)
        g_out = self.magnitude * grad / safe
        # d(max|out|)/d(out) is sign(out) at the arg-max entry
        inner = (grad * out).reshape(n, -1).sum(axis=1)
        flat = g_out.reshape(n, -1)
        sign = np.sign(out.reshape(n, -1)[np.arange(n), arg])
        flat[np.arange(n), arg] -= self.magnitude * inner * sign / safe.reshape(-1) ** 2
        g_out = np.where(M > 0, flat.reshape(out.shape), 0.0)
        self.gen.backward(g_out)
        return g_out


def make_perturber(gen, cfg: AttackConfig, clamp: bool | None = None):
    clamp = cfg.clamp_output if clamp is None else clamp
    if cfg.mode == "wavelet":
        return WaveletPerturber(gen, cfg.filterbank, cfg.j0, clamp, cfg.additive)
    return TimePerturber(gen, cfg.time_magnitude, clamp)


def perturb_wavelet(x, gen, fb: FilterBank, j0: int, clamp: bool = True, additive: bool = False) -> np.ndarray:
    xb, single = _as_batch(x)
    H, W = xb.shape[-2:]
    if H % 2**j0 or W % 2**j0:
        raise ShapeError(f"{H}x{W} is not divisible by 2^{j0}")
    out = WaveletPerturber(gen, fb, j0, clamp, additive).forward(xb)
    return out[0] if single else out


def perturb_time(x, gen, magnitude: float, clamp: bool = True) -> np.ndarray:
    xb, single = _as_batch(x)
    out = TimePerturber(gen, magnitude, clamp).forward(xb)
    return out[0] if single else out


def random_baseline(x, epsilon, rng: Prng, clamp: bool = True) -> np.ndarray:
    """Gaussian direction scaled to relative L2 ``epsilon`` (per sample for batches)."""
    xb, single = _as_batch(x)
    n = len(xb)
    eps = np.broadcast_to(np.asarray(epsilon, dtype=np.float64), (n,)).reshape(n, 1, 1, 1)
    norms = np.sqrt((xb**2).sum(axis=(1, 2, 3), keepdims=True))
    if np.any(norms == 0):
        from .metrics import DegenerateInputError

        raise DegenerateInputError("random_baseline needs a non-zero image")
    u = gaussian_sample(rng, xb.size).reshape(xb.shape)
    u /= np.sqrt((u**2).sum(axis=(1, 2, 3), keepdims=True))
    raw = xb + eps * norms * u
    out = clamp01(raw) if clamp else raw
    return out[0] if single else out


def _distance(x_adv, x, cfg: AttackConfig) -> np.ndarray:
    if cfg.distance == "relative":
        return np.atleast_1d(relative_l2(x_adv, x))
    return np.sqrt(((x_adv - x) ** 2).reshape(len(x), -1).sum(axis=1))


def wgap_loss(x_adv, x, p_adv, ll: int, cfg: AttackConfig) -> float:
    """Cross-entropy toward the least-likely class, plus ``penalty_l * (1 - SSIM)`` over budget."""
    h = cross_entropy(p_adv, ll)
    x_adv = np.asarray(x_adv, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    dist = float(_distance(x_adv[None], x[None], cfg)[0])
    if dist > cfg.epsilon:
        return h + cfg.penalty_l * ssim_dissimilarity(x_adv, x, cfg.ssim)
    return h


@dataclass
class LossTerms:
    loss: float
    per_sample: np.ndarray
    over_budget: np.ndarray
    distance: np.ndarray
    grad_x_adv: np.ndarray
    grad_probs: np.ndarray


def wgap_loss_batch(x_adv, x, probs, ll, cfg: AttackConfig) -> LossTerms:
    """Batch mean of :func:`wgap_loss` with gradients for the SSIM and probability inputs."""
    n = len(x)
    rows = np.arange(n)
    p_ll = probs[rows, ll]
    h = -np.log(np.maximum(p_ll, PROB_FLOOR))
    dist = _distance(x_adv, x, cfg)
    over = dist > cfg.epsilon
    d = np.atleast_1d(ssim_dissimilarity(x_adv, x, cfg.ssim))
    per = h + np.where(over, cfg.penalty_l * d, 0.0)
    g_probs = np.zeros_like(probs)
    # the floor only keeps the reported value finite; the gradient uses the true
    # -1/p so samples whose target sits below the floor still get a training signal
    g_probs[rows, ll] = -1.0 / np.maximum(p_ll, np.finfo(np.float64).tiny) / n
    g_x = np.zeros_like(x_adv)
    if np.any(over) and cfg.penalty_l > 0:
        g_x[over] = cfg.penalty_l * ssim_dissimilarity_grad(x_adv[over], x[over], cfg.ssim) / n
    return LossTerms(float(per.mean()), per, over, dist, g_x, g_probs)


def _check_surrogate(surrogate, images: np.ndarray, labels: np.ndarray | None) -> None:
    if not isinstance(surrogate, ClassifierNet):
        raise TypeError("surrogate must be a ClassifierNet")
    if images.shape[1:] != (surrogate.channels, surrogate.size, surrogate.size):
        raise ValueError(
            f"surrogate expects {(surrogate.channels, surrogate.size, surrogate.size)} images, "
            f"dataset has {images.shape[1:]}"
        )
    if labels is not None:
        probe = slice(0, min(len(images), 200))
        acc = np.mean(surrogate.predict(images[probe]).argmax(1) == labels[probe])
        if acc < 2.0 / surrogate.num_classes:
            raise ValueError(f"surrogate accuracy {acc:.3f} is near chance; train it first")


def train_attack(dataset, surrogate: ClassifierNet, cfg: AttackConfig, generator=None):
    """Train a generator against a frozen surrogate.

    Returns ``(generator, log_rows)``; each row has epoch, iteration, loss,
    branch_taken (fraction of the batch over budget) and mean_rel_l2.
    """
    images, labels = dataset.images, dataset.labels
    if len(images) == 0:
        raise ValueError("empty dataset")
    _check_surrogate(surrogate, images, labels)
    rng = Prng(cfg.seed).child(f"attack/{cfg.mode}/j{cfg.j0}")
    gen = generator if generator is not None else build_generator(cfg, images.shape[1], rng.child("init"), min(images.shape[2:]))
    perturber = make_perturber(gen, cfg)
    ll_all = surrogate.predict(images).argmin(axis=1)
    params = gen.parameters()
    state = AdamState(cfg.lr, cfg.beta1, cfg.beta2)
    rows = []
    for epoch in range(1, cfg.epochs + 1):
        for it in range(1, cfg.iterations_per_epoch + 1):
            idx = rng.child(f"batch/{epoch}/{it}").integers(0, len(images), cfg.batch_size)
            x = images[idx]
            x_adv = perturber.forward(x)
            probs = surrogate.forward(x_adv)
            terms = wgap_loss_batch(x_adv, x, probs, ll_all[idx], cfg)
            g_x = surrogate.backward(terms.grad_probs) + terms.grad_x_adv
            perturber.backward(g_x)
            adam_step(state, params, gen.gradients())
            rel = np.atleast_1d(relative_l2(x_adv, x))
            rows.append({
                "epoch": epoch,
                "iteration": it,
                "loss": terms.loss,
                "branch_taken": float(terms.over_budget.mean()),
                "mean_rel_l2": float(rel.mean()),
            })
        last = rows[-cfg.iterations_per_epoch :]
        log.info(
            "attack %s j0=%d epoch %d: loss %.4f rel_l2 %.4f",
            cfg.mode, cfg.j0, epoch,
            np.mean([r["loss"] for r in last]), np.mean([r["mean_rel_l2"] for r in last]),
        )
    return gen, rows


def craft(perturber, images: np.ndarray, batch: int = 64) -> np.ndarray:
    return np.concatenate([perturber.forward(images[i : i + batch]) for i in range(0, len(images), batch)])


def _report(name, defense, clean, adv, truth, rel, ssim_d) -> EvalReport:
    return EvalReport(
        model_name=name,
        defense=defense,
        fooling_ratio=fooling_ratio(clean, adv),
        fool_vs_truth=float(np.mean(adv != truth)),
        mean_rel_l2=float(np.mean(rel)),
        mean_ssim_d=float(np.mean(ssim_d)),
        n_samples=len(adv),
    )


def evaluate_attack(
    generator,
    models: dict[str, ClassifierNet],
    dataset,
    cfg: AttackConfig,
    defenses: list[DefenseSpec] | None = None,
    include_random: bool = True,
) -> list[EvalReport]:
    """Fooling ratio, mean relative L2 and mean SSIM dissimilarity per model and defense.

    With a defense, the defended classifier is ``model(defense(.))`` and the
    fooling reference is its prediction on the defended clean image.  When
    ``include_random`` is set, each row gets a control row (model name suffixed
    ``@random``) from Gaussian noise matched per sample to the attack's
    realized relative L2.
    """
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    x = dataset.images
    perturber = make_perturber(generator, cfg)
    x_adv = craft(perturber, x)
    attacks = [("", x_adv)]
    rel = np.atleast_1d(relative_l2(x_adv, x))
    if include_random:
        rnd = random_baseline(x, rel, Prng(cfg.seed).child("eval/random"), clamp=cfg.clamp_output)
        attacks.append(("@random", rnd))
    reports = []
    for name, model in models.items():
        for spec in [None] + list(defenses or []):
            label = "none" if spec is None else spec.label

            def view(imgs):
                if spec is None:
                    return imgs
                return apply_defense(spec, imgs, Prng(spec.seed).child(f"defense/{spec.kind}"))

            clean = model.predict(view(x)).argmax(1)
            for suffix, xa in attacks:
                adv = model.predict(view(xa)).argmax(1)
                r = np.atleast_1d(relative_l2(xa, x))
                d = np.atleast_1d(ssim_dissimilarity(xa, x, cfg.ssim))
                reports.append(_report(name + suffix, label, clean, adv, dataset.labels, r, d))
    return reports


def adversarial_batch(perturber, model: ClassifierNet, images: np.ndarray) -> AdversarialBatch:
    x_adv = craft(perturber, images)
    return AdversarialBatch(
        originals=images,
        adversarials=x_adv,
        clean_labels=model.predict(images).argmax(1),
        adv_labels=model.predict(x_adv).argmax(1),
        rel_l2=np.atleast_1d(relative_l2(x_adv, images)),
    )


def budget_transfer(epsilon: float, fb: FilterBank, j0: int) -> float:
    """Detail-coefficient budget equivalent to an image-domain L2 budget.

    For an orthonormal periodized bank the level-``j0`` synthesis is an
    isometry, so the two budgets coincide.
    """
    if epsilon < 0:
        raise ValueError("epsilon must be >= 0")
    return float(epsilon)


def match_time_magnitude(gen, images: np.ndarray, target: float, cfg: AttackConfig, iters: int = 40) -> AttackConfig:
    """Time-mode config whose max-abs magnitude gives mean relative L2 ``target`` on ``images``.

    The perturbation direction is fixed by the generator, so the realized
    distance grows monotonically with the magnitude; bisect on it.
    """
    if cfg.mode != "time":
        raise ValueError("match_time_magnitude needs a time-mode config")
    if target <= 0:
        raise ValueError("target must be > 0")

    def realized(m: float) -> float:
        out = craft(TimePerturber(gen, m, cfg.clamp_output), images)
        return float(np.mean(relative_l2(out, images)))

    lo, hi = 0.0, max(cfg.time_magnitude, 1e-3)
    while realized(hi) < target:
        hi *= 2.0
        if hi > 1.0:
            raise ValueError(f"cannot reach mean relative L2 {target} with magnitude <= 1")
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if realized(mid) < target else (lo, mid)
    return replace(cfg, time_magnitude=0.5 * (lo + hi))
