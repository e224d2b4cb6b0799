"""Acceptance suite: one test per criterion, summarised as PASS/FAIL lines.

The expensive pieces (classifier training, four generator trainings) are
session fixtures shared by the attack criteria.  Run on its own with

    pytest tests/test_acceptance.py -v

or directly as a script.
"""

import csv
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from wgap.attack import AttackConfig, craft, evaluate_attack, make_perturber, match_time_magnitude, train_attack
from wgap.defense import DefenseSpec
from wgap.harness.cli import main as cli_main
from wgap.harness.data import synth_dataset
from wgap.harness.report import write_samples
from wgap.metrics import relative_l2, ssim_dissimilarity
from wgap.neural import ClassifierNet, GeneratorNet, Sequential, accuracy, grad_check, train_classifier
from wgap.numerics import Prng
from wgap.wavelet import decompose, make_filterbank, reconstruct, replace_details

from test_attack import _composite
from test_neural import LAYER_CASES, away_from_zero, linear_loss

TESTS = Path(__file__).parent
SEED = 0

# Attack settings shared by every trained generator below.
ATTACK = dict(
    wavelet_name="db2",
    epsilon=0.1,
    penalty_l=10.0,
    lr=1e-3,
    epochs=80,
    iterations_per_epoch=50,
    batch_size=16,
    seed=SEED,
)
ATTACK_TRAIN_PER_CLASS = 300
JPEG = DefenseSpec("jpeg", quality=75)


def criterion(number, title):
    return pytest.mark.criterion(number, title)


def note(request, text):
    request.node.acceptance_detail = text


# ---- shared fixtures -----------------------------------------------------------


@pytest.fixture(scope="session")
def data():
    return synth_dataset(SEED, 100, split="train"), synth_dataset(SEED, 50, split="test")


@pytest.fixture(scope="session")
def classifiers(data):
    train, test = data
    root = Prng(SEED).child("acceptance/classifiers")
    out = {}
    for variant in ("surrogate", "transfer_target"):
        net = ClassifierNet(variant, 1, 32, 10, root.child(f"{variant}/init"))
        t0 = time.process_time()
        train_classifier(net, train.images, train.labels, root.child(f"{variant}/batches"), epochs=5, batch_size=16)
        out[variant] = (net, time.process_time() - t0, accuracy(net, test.images, test.labels))
    return out


@pytest.fixture(scope="session")
def attack_train():
    return synth_dataset(SEED, ATTACK_TRAIN_PER_CLASS, split="train")


def _train(attack_train, classifiers, **kw):
    cfg = AttackConfig(**{**ATTACK, **kw})
    t0 = time.process_time()
    gen, _ = train_attack(attack_train, classifiers["surrogate"][0], cfg)
    return gen, cfg, time.process_time() - t0


@pytest.fixture(scope="session")
def wgap_j1(attack_train, classifiers, data):
    gen, cfg, seconds = _train(attack_train, classifiers, mode="wavelet", j0=1)
    models = {k: v[0] for k, v in classifiers.items()}
    reports = evaluate_attack(gen, models, data[1], cfg, [JPEG])
    return gen, cfg, seconds, {(r.model_name, r.defense): r for r in reports}


def _surrogate_fooling(attack_train, classifiers, data, j0):
    gen, cfg, _ = _train(attack_train, classifiers, mode="wavelet", j0=j0)
    return evaluate_attack(gen, {"surrogate": classifiers["surrogate"][0]}, data[1], cfg, include_random=False)[0]


@pytest.fixture(scope="session")
def wgap_j2(attack_train, classifiers, data):
    return _surrogate_fooling(attack_train, classifiers, data, 2)


@pytest.fixture(scope="session")
def wgap_j3(attack_train, classifiers, data):
    return _surrogate_fooling(attack_train, classifiers, data, 3)


# ---- exact property criteria ----------------------------------------------------


@criterion(1, "perfect reconstruction")
def test_perfect_reconstruction(request):
    r = np.random.default_rng(1)
    combos = [(c, n, w, j) for c in (1, 3) for n in (32, 64) for w in ("haar", "db2") for j in (1, 2, 3)]
    t0 = time.perf_counter()
    worst = 0.0
    for i in range(100):
        c, n, w, j = combos[i % len(combos)]
        fb = make_filterbank(w)
        x = r.uniform(size=(c, n, n))
        worst = max(worst, float(np.max(np.abs(reconstruct(decompose(x, j, fb), fb) - x))))
    elapsed = time.perf_counter() - t0
    note(request, f"max err {worst:.2e}, {elapsed:.2f} s")
    assert worst < 1e-9 and elapsed < 10


@criterion(2, "detail-perturbation isometry")
def test_isometry(request):
    r = np.random.default_rng(2)
    worst = 0.0
    for i in range(100):
        j0 = 1 + i % 3
        fb = make_filterbank(("haar", "db2")[i % 2])
        x = r.uniform(size=(1 + 2 * (i % 2), 32, 32))
        p = decompose(x, j0, fb)
        delta = [r.normal(scale=0.05, size=d.shape) for d in p.level(j0)]
        new = [d + e for d, e in zip(p.level(j0), delta)]
        x_new = reconstruct(replace_details(p, j0, new), fb)
        gap = abs(np.linalg.norm(x_new - x) - np.sqrt(sum(np.sum(e**2) for e in delta)))
        worst = max(worst, gap)
    note(request, f"max gap {worst:.2e}")
    assert worst < 1e-9


@criterion(3, "filter-bank identities")
def test_filterbank_identities(request):
    worst = 0.0
    for name in ("haar", "db2"):
        fb = make_filterbank(name)
        h, g, L = fb.h, fb.g, len(fb.h)
        errs = [abs(h.sum() - np.sqrt(2)), abs(np.sum(h**2) - 1)]
        errs += [abs(np.dot(h[2 * m :], h[: L - 2 * m])) for m in range(1, L // 2)]
        errs += [abs(g[n] - (-1) ** n * h[L - 1 - n]) for n in range(L)]
        worst = max(worst, max(errs))
    note(request, f"max deviation {worst:.2e}")
    assert worst < 1e-12


@criterion(4, "gradient checks")
def test_gradient_checks(request):
    t0 = time.perf_counter()
    worst = 0.0
    for name in sorted(LAYER_CASES):
        layer, shape = LAYER_CASES[name](Prng(1).child(name))
        net = layer if isinstance(layer, Sequential) else Sequential([layer])
        x = away_from_zero(shape, 2)
        rep = grad_check(net, linear_loss(net.forward(x).shape), x, tolerance=1e-3, step=1e-4)
        worst = max(worst, rep.max_rel_error)
    for net, x in (
        (GeneratorNet(3, Prng(4), filters=2, blocks=1), np.random.default_rng(5).normal(size=(1, 3, 8, 8))),
        (ClassifierNet("surrogate", 1, 8, 4, Prng(6)), np.random.default_rng(7).uniform(size=(2, 1, 8, 8))),
        (ClassifierNet("transfer_target", 1, 8, 4, Prng(8)), np.random.default_rng(9).uniform(size=(2, 1, 8, 8))),
    ):
        rep = grad_check(net, linear_loss(net.forward(x).shape), x)
        worst = max(worst, rep.max_rel_error)
    for mode, eps in (("wavelet", 1e-3), ("wavelet", 10.0), ("time", 1e-3)):
        worst = max(worst, _composite_error(mode, eps))
    elapsed = time.perf_counter() - t0
    note(request, f"max rel err {worst:.2e}, {elapsed:.1f} s")
    assert worst < 1e-3 and elapsed < 60


def _composite_error(mode, epsilon, h=1e-4):
    gen, loss, _ = _composite(mode, epsilon)
    analytic = {k: v.copy() for k, v in gen.gradients().items()}
    floor = 1e-6 * max(np.linalg.norm(g) for g in analytic.values())
    worst = 0.0
    for name, arr in gen.parameters().items():
        flat = arr.reshape(-1)
        idx = np.random.default_rng(0).permutation(flat.size)[:20]
        num = np.empty(len(idx))
        for j, i in enumerate(idx):
            old = flat[i]
            flat[i] = old + h
            up = loss().loss
            flat[i] = old - h
            down = loss().loss
            flat[i] = old
            num[j] = (up - down) / (2 * h)
        a = analytic[name].reshape(-1)[idx]
        worst = max(worst, np.linalg.norm(a - num) / max(np.linalg.norm(a), np.linalg.norm(num), floor))
    return worst


@criterion(5, "metric closed forms")
def test_metric_closed_forms(request):
    proc = subprocess.run(
        [sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider", str(TESTS / "test_metrics.py")],
        capture_output=True,
        text=True,
    )
    note(request, proc.stdout.strip().splitlines()[-1] if proc.stdout.strip() else "no output")
    assert proc.returncode == 0, proc.stdout


# ---- desk-scale trend criteria ----------------------------------------------------


@criterion(6, "surrogate quality gate")
def test_surrogate_quality(request, classifiers):
    _, seconds, acc = classifiers["surrogate"]
    note(request, f"test acc {acc:.3f}, {seconds:.0f} s CPU")
    assert acc >= 0.95 and seconds < 600


@criterion(7, "attack efficacy on the surrogate")
def test_attack_efficacy(request, wgap_j1):
    _, _, seconds, rep = wgap_j1
    fool = rep[("surrogate", "none")].fooling_ratio
    rnd = rep[("surrogate@random", "none")].fooling_ratio
    note(request, f"fooling {fool:.3f} vs random {rnd:.3f}, train {seconds / 60:.1f} min CPU")
    assert fool >= 0.60 and fool - rnd >= 0.30 and seconds <= 1800


@criterion(8, "transfer to the unseen classifier")
def test_transfer(request, wgap_j1, classifiers):
    rep = wgap_j1[3]
    fool = rep[("transfer_target", "none")].fooling_ratio
    rnd = rep[("transfer_target@random", "none")].fooling_ratio
    note(request, f"fooling {fool:.3f} vs random {rnd:.3f}, target clean acc {classifiers['transfer_target'][2]:.3f}")
    assert fool >= rnd + 0.15


@criterion(9, "scale ordering J1 >= J3")
def test_scale_ordering(request, wgap_j1, wgap_j2, wgap_j3):
    j1 = wgap_j1[3][("surrogate", "none")].fooling_ratio
    j2, j3 = wgap_j2.fooling_ratio, wgap_j3.fooling_ratio
    monotone = "monotone" if j1 >= j2 >= j3 else "not monotone"
    note(request, f"J1 {j1:.3f}, J2 {j2:.3f}, J3 {j3:.3f} ({monotone}, reported only)")
    assert j1 >= j3


@criterion(10, "defense trend under JPEG q75")
def test_defense_trend(request, wgap_j1, attack_train, classifiers, data):
    test = data[1]
    w = wgap_j1[3][("surrogate", JPEG.label)]
    gen, cfg, _ = _train(attack_train, classifiers, mode="time", j0=1)
    matched = match_time_magnitude(gen, test.images, w.mean_rel_l2, cfg)
    g0, g = evaluate_attack(gen, {"surrogate": classifiers["surrogate"][0]}, test, matched, [JPEG], include_random=False)
    w0 = wgap_j1[3][("surrogate", "none")]
    note(
        request,
        f"under JPEG: WGAP {w.fooling_ratio:.3f} at L2 {w.mean_rel_l2:.4f}, GAP {g.fooling_ratio:.3f} at L2 "
        f"{g.mean_rel_l2:.4f}; undefended: WGAP {w0.fooling_ratio:.3f}, GAP {g0.fooling_ratio:.3f}; "
        f"GAP max-abs {matched.time_magnitude:.4f}",
    )
    assert abs(g.mean_rel_l2 - w.mean_rel_l2) <= 0.2 * w.mean_rel_l2
    assert w.fooling_ratio >= g.fooling_ratio


@criterion(11, "budget behaviour")
def test_budget(request, wgap_j1, data, tmp_path):
    gen, cfg, _, rep = wgap_j1
    test = data[1]
    x_adv = craft(make_perturber(gen, cfg), test.images)
    rel = np.atleast_1d(relative_l2(x_adv, test.images))
    write_samples(tmp_path / "samples.csv", test.labels, rel, ssim_dissimilarity(x_adv, test.images))
    rows = list(csv.DictReader(open(tmp_path / "samples.csv")))
    emitted = np.array([float(r["rel_l2"]) for r in rows])
    mean = rep[("surrogate", "none")].mean_rel_l2
    note(
        request,
        f"mean rel L2 {mean:.4f} vs limit {1.5 * ATTACK['epsilon']:.3f}, "
        f"per-sample p10/p50/p90 {np.percentile(emitted, 10):.4f}/{np.median(emitted):.4f}/{np.percentile(emitted, 90):.4f}",
    )
    assert len(emitted) == len(test) and abs(emitted.mean() - mean) < 1e-12
    assert mean <= 1.5 * ATTACK["epsilon"]


TINY_RUN = """\
mode = wavelet
wavelet = db2
j0 = 1
epsilon = 0.1
penalty_l = 10
epochs = 1
iterations_per_epoch = 3
batch_size = 4
gen_filters = 4
gen_blocks = 1
n_train_per_class = 20
attack_train_per_class = 20
n_test_per_class = 3
classifier_epochs = 2
classifier_batch_size = 16
defenses = jpeg, randomization, wavelet_denoise
"""


def _pipeline(out: Path, cfg: Path) -> dict[str, bytes]:
    for cmd in ("train-surrogate", "train-attack", "evaluate"):
        assert cli_main([cmd, "--config", str(cfg), "--out", str(out)]) == 0
    return {p.name: p.read_bytes() for p in sorted(out.iterdir()) if p.suffix in (".ckpt", ".csv")}


@criterion(12, "determinism of end-to-end runs")
def test_determinism(request, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(TINY_RUN)
    a = _pipeline(tmp_path / "a", cfg)
    b = _pipeline(tmp_path / "b", cfg)
    note(request, f"{len(a)} files compared")
    assert set(a) == {
        "surrogate.ckpt", "transfer_target.ckpt", "generator.ckpt",
        "classifier_log.csv", "loss_log.csv", "report.csv", "samples.csv",
    }
    assert a == b
    cfg.write_text(TINY_RUN + "seed = 1\n")
    assert _pipeline(tmp_path / "c", cfg)["generator.ckpt"] != a["generator.ckpt"]


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
