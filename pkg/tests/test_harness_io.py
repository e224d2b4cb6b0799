import struct

import numpy as np
import pytest

from wgap.harness.config import REQUIRED, ConfigError, parse_config
from wgap.harness.data import (
    IMAGE_MAGIC,
    LABEL_MAGIC,
    SYNTH_CLASSES,
    Dataset,
    IdxFormatError,
    load_idx,
    synth_dataset,
    write_idx,
)
from wgap.harness.imageio import ImageFormatError, export_residual, read_image, residual_image, write_image
from wgap.harness.models import (
    CheckpointMismatchError,
    load_classifier,
    load_generator,
    save_classifier,
    save_generator,
)
from wgap.harness.report import REPORT_HEADER, read_report, summarize, write_loss_log, write_report, write_samples
from wgap.metrics import EvalReport
from wgap.neural import ClassifierNet, GeneratorNet
from wgap.numerics import Prng

MINIMAL = "mode = wavelet\nwavelet = db2\nj0 = 1\nepsilon = 0.1\n"


# ---- IDX ----------------------------------------------------------------


def _idx_pair(tmp_path, n=5, rows=28, cols=28, seed=0):
    r = np.random.default_rng(seed)
    imgs = r.integers(0, 256, size=(n, rows, cols), dtype=np.uint8)
    labels = r.integers(0, 10, size=n, dtype=np.uint8)
    ip, lp = tmp_path / "img.idx", tmp_path / "lbl.idx"
    write_idx(ip, lp, imgs, labels)
    return ip, lp, imgs, labels


def test_idx_roundtrip_and_padding(tmp_path):
    ip, lp, imgs, labels = _idx_pair(tmp_path)
    ds = load_idx(ip, lp)
    assert len(ds) == 5 and ds.images.shape == (5, 1, 32, 32)
    assert np.array_equal(ds.labels, labels)
    assert np.allclose(ds.images[:, 0, 2:30, 2:30] * 255, imgs)
    border = ds.images.copy()
    border[:, :, 2:30, 2:30] = 0
    assert not border.any()


def test_idx_all_zero(tmp_path):
    ip, lp = tmp_path / "i", tmp_path / "l"
    write_idx(ip, lp, np.zeros((3, 28, 28), np.uint8), [4, 5, 6])
    ds = load_idx(ip, lp)
    assert not ds.images.any() and list(ds.labels) == [4, 5, 6]


def test_idx_header_layout(tmp_path):
    ip, lp, _, _ = _idx_pair(tmp_path, n=2)
    assert struct.unpack(">IIII", ip.read_bytes()[:16]) == (IMAGE_MAGIC, 2, 28, 28)
    assert struct.unpack(">II", lp.read_bytes()[:8]) == (LABEL_MAGIC, 2)


def test_idx_bad_magic(tmp_path):
    ip, lp, _, _ = _idx_pair(tmp_path)
    ip.write_bytes(struct.pack(">I", 0x1234) + ip.read_bytes()[4:])
    with pytest.raises(IdxFormatError, match="0x00000803.*0x00001234"):
        load_idx(ip, lp)


def test_idx_truncated(tmp_path):
    ip, lp, _, _ = _idx_pair(tmp_path)
    ip.write_bytes(ip.read_bytes()[:-10])
    with pytest.raises(IdxFormatError, match="offset"):
        load_idx(ip, lp)
    ip2, lp2, _, _ = _idx_pair(tmp_path)
    lp2.write_bytes(lp2.read_bytes()[:6])
    with pytest.raises(IdxFormatError, match="offset 0"):
        load_idx(ip2, lp2)


def test_idx_count_mismatch(tmp_path):
    ip, lp, _, _ = _idx_pair(tmp_path, n=3)
    lp.write_bytes(struct.pack(">II", LABEL_MAGIC, 2) + b"\x01\x02")
    with pytest.raises(IdxFormatError, match="count mismatch"):
        load_idx(ip, lp)


def test_idx_ignores_trailing_bytes(tmp_path):
    ip, lp, imgs, _ = _idx_pair(tmp_path, n=2)
    ip.write_bytes(ip.read_bytes() + b"\xff" * 100)
    assert len(load_idx(ip, lp)) == 2


# ---- synthetic data -----------------------------------------------------


def test_synth_balance_and_range():
    ds = synth_dataset(0, 10)
    assert len(ds) == 100 and ds.images.shape == (100, 1, 32, 32)
    assert np.array_equal(np.bincount(ds.labels), np.full(10, 10))
    assert ds.images.min() >= 0 and ds.images.max() <= 1
    assert len(SYNTH_CLASSES) == ds.num_classes == 10


def test_synth_deterministic_and_seed_dependent():
    a, b, c = synth_dataset(3, 4), synth_dataset(3, 4), synth_dataset(4, 4)
    assert np.array_equal(a.images, b.images)
    assert not np.array_equal(a.images, c.images)
    assert np.array_equal(a.labels, c.labels)


def test_synth_prefix_stable():
    small, big = synth_dataset(1, 3), synth_dataset(1, 6)
    assert np.array_equal(small.images, big.images[:30])


def test_synth_splits_differ():
    assert not np.array_equal(synth_dataset(0, 2).images, synth_dataset(0, 2, split="test").images)


def test_synth_rejects_empty():
    with pytest.raises(ValueError):
        synth_dataset(0, 0)


def test_dataset_invariants():
    with pytest.raises(ValueError):
        Dataset(np.zeros((2, 1, 4, 4)), np.zeros(3, int), 2)
    with pytest.raises(ValueError):
        Dataset(np.zeros((1, 1, 4, 4)), np.array([5]), 2)
    with pytest.raises(ValueError):
        Dataset(np.full((1, 1, 4, 4), 2.0), np.array([0]), 2)


# ---- images -------------------------------------------------------------


@pytest.mark.parametrize("channels", [1, 3])
def test_image_roundtrip(tmp_path, channels):
    img = np.random.default_rng(channels).uniform(size=(channels, 5, 7))
    path = tmp_path / "x.img"
    write_image(path, img)
    back = read_image(path)
    assert back.shape == img.shape
    assert np.max(np.abs(back - img)) <= 1 / 255 + 1e-12
    assert path.read_bytes()[:2] == (b"P5" if channels == 1 else b"P6")


def test_image_constant_half(tmp_path):
    write_image(tmp_path / "h.pgm", np.full((1, 3, 3), 0.5))
    vals = set((read_image(tmp_path / "h.pgm") * 255).round().astype(int).ravel())
    assert vals <= {127, 128} and len(vals) == 1


def test_image_header_with_comment(tmp_path):
    path = tmp_path / "c.pgm"
    path.write_bytes(b"P5\n# made by hand\n2 1\n255\n\x00\xff")
    assert np.array_equal(read_image(path), [[[0.0, 1.0]]])


def test_image_errors(tmp_path):
    path = tmp_path / "t.pgm"
    write_image(path, np.zeros((1, 4, 4)))
    path.write_bytes(path.read_bytes()[:-3])
    with pytest.raises(ImageFormatError):
        read_image(path)
    path.write_bytes(b"P2\n1 1\n255\n0")
    with pytest.raises(ImageFormatError):
        read_image(path)
    with pytest.raises(ValueError):
        write_image(path, np.full((1, 2, 2), 1.5))


def test_residual_examples(tmp_path):
    x = np.full((1, 4, 4), 0.25)
    assert not residual_image(x, x).any()
    xa = x.copy()
    xa[0, 1, 2] += 0.0625
    res = export_residual(tmp_path / "r.pgm", x, xa, 8.0)
    assert res[0, 1, 2] == pytest.approx(0.5) and res.sum() == pytest.approx(0.5)
    assert read_image(tmp_path / "r.pgm")[0, 1, 2] == pytest.approx(128 / 255)
    xb = x + np.where(np.arange(16).reshape(1, 4, 4) % 2, 0.01, 0.0)
    sat = residual_image(x, xb, 1e6)
    assert set(np.unique(sat)) == {0.0, 1.0}
    with pytest.raises(ValueError):
        residual_image(x, np.zeros((1, 2, 2)))
    with pytest.raises(ValueError):
        residual_image(x, x, 0.0)


# ---- config -------------------------------------------------------------


def test_config_parses_and_defaults():
    cfg = parse_config("# run\n" + MINIMAL + "penalty_l = 3 # inline\nadditive = yes\ntime_magnitude = 8/255\n")
    a = cfg.attack()
    assert (a.mode, a.wavelet_name, a.j0, a.epsilon) == ("wavelet", "db2", 1, 0.1)
    assert a.penalty_l == 3.0 and a.additive is True
    assert a.time_magnitude == pytest.approx(8 / 255)
    assert [d.kind for d in cfg.defenses()] == ["jpeg", "randomization", "wavelet_denoise"]


@pytest.mark.parametrize("key", REQUIRED)
def test_config_missing_key_named(key):
    text = "\n".join(line for line in MINIMAL.splitlines() if not line.startswith(key))
    with pytest.raises(ConfigError, match=key):
        parse_config(text)


def test_config_rejects_unknown_and_malformed():
    with pytest.raises(ConfigError, match="unknown key 'colour'"):
        parse_config(MINIMAL + "colour = red\n")
    with pytest.raises(ConfigError, match="expected 'key = value'"):
        parse_config(MINIMAL + "just words\n")
    with pytest.raises(ConfigError, match="j0"):
        parse_config(MINIMAL.replace("j0 = 1", "j0 = one"))
    with pytest.raises(ConfigError):
        parse_config(MINIMAL.replace("epsilon = 0.1", "epsilon = -1"))
    with pytest.raises(ConfigError):
        parse_config(MINIMAL + "defenses = jpeg, blur\n")


def test_config_overrides():
    cfg = parse_config(MINIMAL + "seed = 4\n", {"seed": 9})
    assert cfg["seed"] == 9 and cfg.attack().seed == 9
    assert parse_config(MINIMAL + "seed = 4\n", {"seed": None})["seed"] == 4


# ---- reports ------------------------------------------------------------


def test_report_header_and_roundtrip(tmp_path):
    reps = [EvalReport("surrogate", 0.25, 0.09, 0.1, 8, "none", 0.3), EvalReport("s@random", 0.0, 0.09, 0.05, 8)]
    text = write_report(tmp_path / "r.csv", reps)
    assert text.splitlines()[0] == ",".join(REPORT_HEADER)
    assert text.splitlines()[0] == "model,defense,fooling_ratio,fool_vs_truth,mean_rel_l2,mean_ssim_d,n"
    rows = read_report(tmp_path / "r.csv")
    assert rows[0]["model"] == "surrogate" and float(rows[0]["fooling_ratio"]) == 0.25
    assert "surrogate" in summarize(rows)


def test_samples_and_loss_log(tmp_path):
    text = write_samples(tmp_path / "s.csv", [3, 1], [0.1, 0.2], [0.01, 0.02])
    assert text.splitlines() == ["index,label,rel_l2,ssim_d", "0,3,0.1,0.01", "1,1,0.2,0.02"]
    log = write_loss_log(None, [{"epoch": 1, "iteration": 1, "loss": 2.5, "branch_taken": 0.0, "mean_rel_l2": 0.1}])
    assert log.splitlines() == ["epoch,iteration,loss,branch_taken,mean_rel_l2", "1,1,2.5,0.0,0.1"]


def test_read_report_rejects_other_header(tmp_path):
    (tmp_path / "bad.csv").write_text("a,b\n1,2\n")
    with pytest.raises(ValueError):
        read_report(tmp_path / "bad.csv")


# ---- model checkpoints ---------------------------------------------------


def test_generator_checkpoint_roundtrip(tmp_path):
    gen = GeneratorNet(3, Prng(1), filters=2, blocks=1, depth=1)
    save_generator(tmp_path / "g.ckpt", gen)
    back = load_generator(tmp_path / "g.ckpt")
    x = np.random.default_rng(0).normal(size=(1, 3, 8, 8))
    assert (back.channels, back.filters, back.blocks, back.depth) == (3, 2, 1, 1)
    assert np.array_equal(back.forward(x), gen.forward(x))


def test_classifier_checkpoint_roundtrip(tmp_path):
    net = ClassifierNet("transfer_target", 1, 16, 4, Prng(2))
    save_classifier(tmp_path / "c.ckpt", net)
    back = load_classifier(tmp_path / "c.ckpt")
    x = np.random.default_rng(0).uniform(size=(2, 1, 16, 16))
    assert back.variant == "transfer_target"
    assert np.array_equal(back.forward(x), net.forward(x))
    with pytest.raises(CheckpointMismatchError):
        load_generator(tmp_path / "c.ckpt")


def test_checkpoint_keeps_scalar_rank(tmp_path):
    from wgap.neural import load_checkpoint, save_checkpoint

    save_checkpoint(tmp_path / "s.ckpt", {"s": np.array(3.0)})
    assert load_checkpoint(tmp_path / "s.ckpt")["s"].shape == ()
