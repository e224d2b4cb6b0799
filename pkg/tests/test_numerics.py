import numpy as np
import pytest

from wgap.numerics import EmptyRequestError, Prng, as_tensor, clamp01, gaussian_sample, prng_stream


def test_same_seed_same_stream():
    assert np.array_equal(prng_stream(42).uniform(100), prng_stream(42).uniform(100))


def test_different_seeds_differ():
    assert prng_stream(1).uniform(1)[0] != prng_stream(2).uniform(1)[0]


def test_uniform_range_and_mean():
    u = prng_stream(7).uniform(100_000)
    assert u.min() >= 0.0 and u.max() < 1.0
    assert abs(u.mean() - 0.5) < 0.01


def test_gaussian_moments():
    z = gaussian_sample(prng_stream(3), 100_000)
    assert abs(z.mean()) < 0.02
    assert abs(z.var() - 1.0) < 0.03


def test_gaussian_deterministic_and_single():
    a = gaussian_sample(prng_stream(9), 33)
    b = gaussian_sample(prng_stream(9), 33)
    assert np.array_equal(a, b)
    one = gaussian_sample(prng_stream(9), 1)
    assert one.shape == (1,) and np.isfinite(one[0])


def test_gaussian_empty_request():
    with pytest.raises(EmptyRequestError):
        gaussian_sample(prng_stream(0), 0)


def test_children_are_independent_of_consumption_order():
    root = Prng(5)
    a_first = root.child("a").uniform(4)
    root.child("b").uniform(1000)
    assert np.array_equal(root.child("a").uniform(4), a_first)
    assert not np.array_equal(root.child("a").uniform(4), root.child("b").uniform(4))


def test_child_does_not_advance_parent():
    p, q = Prng(11), Prng(11)
    p.child("x").uniform(10)
    assert np.array_equal(p.uniform(5), q.uniform(5))


def test_normal_shape():
    assert Prng(0).normal((2, 3, 4)).shape == (2, 3, 4)


def test_clamp01_examples():
    assert np.array_equal(clamp01([-0.5, 0.5, 1.5]), [0.0, 0.5, 1.0])
    inside = np.array([0.0, 0.3, 1.0])
    assert np.array_equal(clamp01(inside), inside)
    assert np.array_equal(clamp01([-1.0, -2.0]), [0.0, 0.0])


def test_clamp01_idempotent():
    x = Prng(1).normal((5, 5)) * 3
    once = clamp01(x)
    assert np.array_equal(clamp01(once), once)


def test_as_tensor_rejects_nonfinite():
    with pytest.raises(ValueError):
        as_tensor([1.0, np.nan])
    assert as_tensor([1, 2]).dtype == np.float64
