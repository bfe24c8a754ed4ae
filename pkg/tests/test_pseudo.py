import itertools

import numpy as np
import pytest

from occgan.data import load_mnist5k, make_occ_protocol
from occgan.models import Generator
from occgan.ndcore import ShapeError, Tensor
from occgan.phase1 import Phase1Config, make_models, run_phase1
from occgan.pseudo import Fusion, FusionMode, fuse, reconstruct_pseudo, sample_groups, sample_pseudo_batch


class IdentityStub:
    """Generator stand-in whose encoder and decoder are the identity map."""

    def encode(self, x):
        return Tensor(np.asarray(x, dtype=np.float64))

    decode = encode
    forward = encode


class CountingStub:
    """Wraps a generator and counts every method access."""

    def __init__(self, inner):
        self.inner, self.calls = inner, 0

    def __getattr__(self, name):
        self.calls += 1
        return getattr(self.inner, name)


def linear_generator(seed=0):
    return Generator(10, 3, (7,), seed=seed, activation="identity", output_activation="identity")


def test_fusion_mode_validation():
    with pytest.raises(ValueError):
        FusionMode(Fusion.EARLY, k=1)
    assert FusionMode("late").mode is Fusion.LATE
    with pytest.raises(ValueError):
        FusionMode("middle")


def test_early_fusion_through_identity():
    out = fuse(IdentityStub(), [np.array([1.0, 0.0]), np.array([0.0, 1.0])], "early")
    np.testing.assert_array_equal(out, [0.5, 0.5])


@pytest.mark.parametrize("mode", list(Fusion))
def test_identical_inputs_reduce_to_plain_reconstruction(mode):
    g = Generator(10, 3, (7,), seed=1)
    x = np.random.default_rng(0).uniform(size=(4, 10))
    out = fuse(g, [x, x.copy(), x.copy()], FusionMode(mode, 3))
    np.testing.assert_allclose(out, g.reconstruct(x), rtol=0, atol=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_late_equals_latent_for_linear_generator(seed):
    g = linear_generator(seed)
    rng = np.random.default_rng(seed)
    samples = [rng.uniform(size=(6, 10)) for _ in range(3)]
    late = fuse(g, samples, FusionMode(Fusion.LATE, 3))
    latent = fuse(g, samples, FusionMode(Fusion.LATENT, 3))
    np.testing.assert_allclose(late, latent, rtol=0, atol=1e-10)
    early = fuse(g, samples, FusionMode(Fusion.EARLY, 3))
    np.testing.assert_allclose(early, latent, rtol=0, atol=1e-10)  # affine maps commute with the mean


@pytest.mark.parametrize("mode", list(Fusion))
def test_fusion_is_permutation_invariant(mode):
    g = Generator(10, 3, (7,), seed=2)
    rng = np.random.default_rng(1)
    samples = [rng.uniform(size=(5, 10)) for _ in range(3)]
    ref = fuse(g, samples, FusionMode(mode, 3))
    for perm in itertools.permutations(range(3)):
        np.testing.assert_allclose(fuse(g, [samples[i] for i in perm], FusionMode(mode, 3)), ref, atol=1e-12)


def test_fusion_errors():
    g = Generator(10, 3, (7,), seed=0)
    x = np.zeros(10)
    with pytest.raises(ValueError):
        fuse(g, [x], "latent")
    with pytest.raises(ValueError):
        fuse(g, [x, x], "latent", indices=[4, 4])
    with pytest.raises(ShapeError):
        fuse(g, [x, np.zeros(9)], "latent")


def test_reconstruct_pseudo_uses_new_generator_only():
    g_new = Generator(10, 3, (7,), seed=3)
    p_o = np.random.default_rng(0).uniform(size=(4, 10))
    out = reconstruct_pseudo(g_new, p_o)
    np.testing.assert_array_equal(out, g_new.forward(p_o).data)
    assert np.all((out >= 0) & (out <= 1))


def test_pseudo_batch_touches_old_generator_only_for_fusion():
    g_old = CountingStub(Generator(10, 3, (7,), seed=1))
    g_new = CountingStub(Generator(10, 3, (7,), seed=2))
    data = np.random.default_rng(0).uniform(size=(20, 10))
    for mode in Fusion:
        g_old.calls = g_new.calls = 0
        sample_pseudo_batch(data, g_old, g_new, FusionMode(mode), 6, np.random.default_rng(1))
        # one forward for early/late, encode + decode for latent; the new generator once
        assert g_old.calls == (2 if mode is Fusion.LATENT else 1)
        assert g_new.calls == 1


def test_groups_are_distinct_and_seeded():
    a = sample_groups(50, 4, 500, np.random.default_rng(3))
    b = sample_groups(50, 4, 500, np.random.default_rng(3))
    np.testing.assert_array_equal(a, b)
    assert all(len(set(row)) == 4 for row in a)
    small = sample_groups(5, 3, 200, np.random.default_rng(0))
    assert all(len(set(row)) == 3 for row in small)
    with pytest.raises(ValueError):
        sample_groups(2, 3, 1, np.random.default_rng(0))


def test_group_sampling_is_uniform():
    groups = sample_groups(100, 2, 10_000, np.random.default_rng(0))
    freq = np.bincount(groups.ravel(), minlength=100) / len(groups)
    assert np.all(np.abs(freq - 2 / 100) <= 0.005)


def test_sample_pseudo_batch_matches_manual_pipeline():
    g_old, g_new = Generator(10, 3, (7,), seed=4), Generator(10, 3, (7,), seed=5)
    data = np.random.default_rng(0).uniform(size=(30, 10))
    mode = FusionMode(Fusion.LATENT, 2)
    p_o, p_n, groups = sample_pseudo_batch(data, g_old, g_new, mode, 8, np.random.default_rng(7))
    for row, po, pn in zip(groups, p_o, p_n):
        expect = fuse(g_old, [data[i] for i in row], mode, indices=list(row))
        np.testing.assert_allclose(po, expect, atol=1e-12)
        np.testing.assert_allclose(pn, g_new.reconstruct(po[None])[0], atol=1e-12)


@pytest.mark.slow
def test_pseudo_samples_are_not_copies_on_mnist():
    train, _ = make_occ_protocol(load_mnist5k(), inliers=[0], rng=np.random.default_rng(0))
    data = train.samples
    g, d = make_models(data.shape[1], 16, (256, 64), (128, 64), np.random.default_rng(0))
    res = run_phase1(data, Phase1Config(eta=6.0, max_epochs=300), g, d, noise_rng=np.random.default_rng(1),
                     sampling_rng=np.random.default_rng(2), reference_rng=np.random.default_rng(3))
    pair = res.pair
    rng = np.random.default_rng(4)
    _, p_n, groups = sample_pseudo_batch(data, pair.g_old, pair.g_new, FusionMode(), 64, rng)
    for j in range(2):
        copy = pair.g_new.reconstruct(data[groups[:, j]])
        assert np.mean(np.abs(p_n - copy)) >= 0.01
