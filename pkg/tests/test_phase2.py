import numpy as np
import pytest

from occgan.models import Discriminator, Generator, SnapshotPair, snapshot
from occgan.ndcore import Adam, GradientTape, Tensor
from occgan.phase1 import LabeledBatch
from occgan.phase2 import (
    ABLATIONS,
    TARGET,
    Phase2Config,
    SourceFlags,
    build_phase2_batch,
    phase2_loss,
    phase2_step,
    run_phase2,
)
from occgan.pseudo import FusionMode

DIM = 10


def make_pair(seed=0):
    g_old = Generator(DIM, 3, (8,), seed=seed, version_tag="old")
    g_new = Generator(DIM, 3, (8,), seed=seed + 1, version_tag="new")
    return SnapshotPair(g_old, g_new, 2.0, 1.0, 1.25)


def data(n=40, seed=0):
    return np.random.default_rng(seed).uniform(size=(n, DIM))


def test_labels_follow_source_convention():
    cfg = Phase2Config(batch_size=5, sources=SourceFlags(use_Po_direct=True))
    batch = build_phase2_batch(data(), make_pair(), FusionMode(), cfg, np.random.default_rng(0))
    assert len(batch) == 5 * 5
    for tag, target in zip(batch.source_tag, batch.targets):
        assert target == TARGET[tag]
    assert [TARGET[t] for t in ("X", "Xn", "Xo", "Pn", "Po")] == [0, 0, 1, 1, 1]
    assert [batch.source_tag[i] for i in range(0, 25, 5)] == ["X", "Xn", "Xo", "Pn", "Po"]


def test_batch_contents_and_determinism():
    pair, x = make_pair(), data()
    cfg = Phase2Config(batch_size=6)
    a = build_phase2_batch(x, pair, FusionMode(), cfg, np.random.default_rng(3))
    b = build_phase2_batch(x, pair, FusionMode(), cfg, np.random.default_rng(3))
    np.testing.assert_array_equal(a.inputs, b.inputs)
    good = a.inputs[a.source_tag == "X"]
    np.testing.assert_allclose(a.inputs[a.source_tag == "Xn"], pair.g_new.reconstruct(good), atol=1e-12)
    np.testing.assert_allclose(a.inputs[a.source_tag == "Xo"], pair.g_old.reconstruct(good), atol=1e-12)


def test_config_rejects_one_sided_sources():
    with pytest.raises(ValueError):
        Phase2Config(sources=SourceFlags(use_Xo=False, use_Pn=False))
    with pytest.raises(ValueError):
        Phase2Config(sources=SourceFlags(use_X=False, use_Xn=False))
    with pytest.raises(ValueError):
        Phase2Config(alpha=1.5)


def test_every_ablation_is_constructible():
    expected = {
        "Xn+Xo": ("Xn", "Xo"),
        "X+Xn+Xo": ("X", "Xn", "Xo"),
        "X+Xn+Pn": ("X", "Xn", "Pn"),
        "X+Xn+Xo+Po": ("X", "Xn", "Xo", "Po"),
        "X+Xn+Pn+Po": ("X", "Xn", "Pn", "Po"),
        "full": ("X", "Xn", "Xo", "Pn"),
    }
    for name, tags in expected.items():
        cfg = Phase2Config(sources=ABLATIONS[name])
        assert cfg.sources.enabled() == tags
        w = cfg.weights()
        assert set(w) == set(tags)


def test_default_weights():
    w = Phase2Config().weights()
    assert w == pytest.approx({"X": 0.1, "Xn": 0.9, "Xo": 0.001, "Pn": 0.999})


def _grads(d, batch, cfg):
    for p in d.parameters():
        p.grad = None
    with GradientTape() as tape:
        loss = phase2_loss(d, batch, cfg)
    tape.backward(loss)
    return [p.grad.copy() for p in d.parameters()]


def test_unit_weights_isolate_raw_and_old_terms():
    pair, x = make_pair(), data()
    d = Discriminator(DIM, (6,), seed=0)
    full = build_phase2_batch(x, pair, FusionMode(), Phase2Config(batch_size=4), np.random.default_rng(0))
    keep = np.isin(full.source_tag, ["X", "Xo"])
    reduced = LabeledBatch(full.inputs[keep], full.targets[keep], full.source_tag[keep])
    cfg = Phase2Config(alpha=1.0, beta=1.0, batch_size=4)
    for a, b in zip(_grads(d, full, cfg), _grads(d, reduced, cfg)):
        np.testing.assert_array_equal(a, b)


def test_loss_matches_weighted_log_terms():
    # independent closed form of the weighted objective on one batch
    pair, x = make_pair(), data()
    d = Discriminator(DIM, (6,), seed=4)
    cfg = Phase2Config(batch_size=5)
    batch = build_phase2_batch(x, pair, FusionMode(), cfg, np.random.default_rng(1))
    s = d.score(batch.inputs).data
    expect = 0.0
    for tag, w in cfg.weights().items():
        m = batch.source_tag == tag
        expect -= w * np.mean(np.log(1 - s[m]) if TARGET[tag] == 0 else np.log(s[m]))
    assert phase2_loss(d, batch, cfg).item() == pytest.approx(expect, rel=1e-12)


def test_generators_stay_frozen():
    pair, x = make_pair(), data()
    before = pair.hashes()
    d = Discriminator(DIM, (6,), seed=0)
    cfg = Phase2Config(iterations=30, log_every=10, batch_size=8, probe_size=16)
    run_phase2(x, pair, d, cfg, FusionMode(), rng=np.random.default_rng(0))
    assert pair.hashes() == before


def test_zero_iterations_leave_discriminator_unchanged():
    d = Discriminator(DIM, (6,), seed=0)
    h = d.param_hash()
    res = run_phase2(data(), make_pair(), d, Phase2Config(iterations=0), FusionMode(), rng=np.random.default_rng(0))
    assert d.param_hash() == h and res.trace == [] and res.steps == 0


def test_trace_length_and_callbacks(tmp_path):
    seen = []
    cfg = Phase2Config(iterations=23, log_every=5, batch_size=4, probe_size=8)
    res = run_phase2(data(), make_pair(), Discriminator(DIM, (6,), seed=0), cfg, FusionMode(),
                     rng=np.random.default_rng(0), on_interval=lambda i, d: seen.append(i))
    assert [r.iteration for r in res.trace] == [1, 2, 3, 4] == seen
    res.write_csv(tmp_path / "t.csv")
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "iteration,mean_good,std_good,mean_bad,std_bad,auc_probe" and len(lines) == 5


class ConstantGenerator:
    """Maps every input to a fixed vector; used to build a separable toy setup."""

    def __init__(self, value):
        self.value = value

    def reconstruct(self, x):
        return np.full(np.shape(x), self.value)

    def forward(self, x):
        return Tensor(self.reconstruct(np.asarray(getattr(x, "data", x))))

    encode = forward
    decode = forward

    def param_hash(self):
        return str(self.value)


def test_toy_separable_training():
    # good examples near the zero vector, bad examples near the one vector
    rng = np.random.default_rng(0)
    x = rng.uniform(0, 0.05, size=(64, DIM))
    pair = SnapshotPair(ConstantGenerator(1.0), ConstantGenerator(0.02), 2.0, 1.0, 1.25)
    d = Discriminator(DIM, (16, 8), seed=0)
    cfg = Phase2Config(iterations=500, log_every=100, batch_size=16, lr_d=1e-3, probe_size=32,
                       sources=SourceFlags(use_Xn=False, use_Pn=False))
    run_phase2(x, pair, d, cfg, FusionMode(), rng=rng)
    good = d.score(rng.uniform(0, 0.05, size=(50, DIM))).data
    bad = d.score(rng.uniform(0.95, 1.0, size=(50, DIM))).data
    assert bad.mean() > 0.9 and good.mean() < 0.1
    assert bad.mean() - good.mean() > 0.5


def test_phase2_step_updates_only_discriminator():
    pair, x = make_pair(), data()
    d = Discriminator(DIM, (6,), seed=0)
    d0 = snapshot(d)
    cfg = Phase2Config(batch_size=4)
    batch = build_phase2_batch(x, pair, FusionMode(), cfg, np.random.default_rng(0))
    loss = phase2_step(d, batch, cfg, Adam(d.parameters(), lr=1e-3))
    assert np.isfinite(loss) and d.param_hash() != d0.param_hash()
