"""Adversarial denoising-autoencoder training and old/new generator selection."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Iterator

import numpy as np

from .ndcore import Adam, GradientTape, NumericFailure, ShapeError, Tensor, log, sqdiff
from .models import Discriminator, Generator, SnapshotPair, snapshot

logger = logging.getLogger(__name__)

SOURCE_REAL = "X"
SOURCE_FAKE = "G(X~)"


class EtaUnreachable(RuntimeError):
    """Phase one hit ``max_epochs`` before the loss ratio exceeded eta."""

    def __init__(self, result: "Phase1Result"):
        self.result = result
        super().__init__(
            f"loss ratio never exceeded eta={result.pair.eta} within the epoch cap "
            f"(best ratio {result.best_ratio:.4f})"
        )


@dataclass
class Phase1Config:
    lambda_: float = 0.2
    sigma: float = 0.15
    lr_g: float = 1e-3
    lr_d: float = 1e-4
    p_burn_in: int = 1
    eta: float = 1.25
    max_epochs: int = 100
    batch_size: int = 128
    seed: int = 0
    reference_size: int = 256
    allow_eta_below_one: bool = False

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")
        if self.p_burn_in < 0:
            raise ValueError("p_burn_in must be non-negative")
        if self.max_epochs <= 0 or self.batch_size <= 0 or self.reference_size <= 0:
            raise ValueError("max_epochs, batch_size and reference_size must be positive")
        if self.p_burn_in >= self.max_epochs:
            raise ValueError("p_burn_in must be smaller than max_epochs")
        if self.eta <= 0:
            raise ValueError("eta must be positive")
        if self.eta < 1 and not self.allow_eta_below_one:
            raise ValueError("eta < 1 requires allow_eta_below_one=True")


@dataclass
class LabeledBatch:
    """Discriminator inputs with their quasi ground-truth targets."""

    inputs: np.ndarray
    targets: np.ndarray
    source_tag: np.ndarray

    def __post_init__(self):
        n = len(self.inputs)
        if len(self.targets) != n or len(self.source_tag) != n:
            raise ShapeError("inputs, targets and source_tag must have equal length")

    def __len__(self) -> int:
        return len(self.inputs)


@dataclass
class TraceRow:
    iteration: int
    l_r_live: float
    l_r_old: float
    l_r_new: float
    ratio: float
    event: str
    loss_adv: float = math.nan


@dataclass
class Phase1Trace:
    rows: list[TraceRow] = field(default_factory=list)

    FIELDS = ("iteration", "l_r_live", "l_r_old", "l_r_new", "ratio", "event")

    def append(self, row: TraceRow) -> None:
        self.rows.append(row)

    def events(self) -> list[tuple[int, str]]:
        return [(r.iteration, r.event) for r in self.rows if r.event in ("old", "new")]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(self.FIELDS)
            for r in self.rows:
                w.writerow([r.iteration, _fmt(r.l_r_live), _fmt(r.l_r_old), _fmt(r.l_r_new), _fmt(r.ratio), r.event])


def _fmt(v: float) -> str:
    return "" if v is None or (isinstance(v, float) and math.isnan(v)) else repr(float(v))


@dataclass
class Phase1Result:
    pair: SnapshotPair
    generator: Generator
    discriminator: Discriminator
    trace: Phase1Trace
    epochs: int
    iterations: int
    best_ratio: float
    trainer: "AdversarialTrainer"

    @property
    def eta_reached(self) -> bool:
        return self.pair.eta_reached


def add_noise(x, sigma: float, rng: np.random.Generator) -> np.ndarray:
    """Return ``x + N(0, sigma^2)`` elementwise; ``x`` itself is not modified."""
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    x = np.asarray(x.data if isinstance(x, Tensor) else x, dtype=np.float64)
    if sigma == 0:
        return x.copy()
    return x + rng.normal(0.0, sigma, size=x.shape)


def reconstruction_loss(g, x_clean, x_noisy) -> Tensor:
    """Batch mean of the squared l2 distance between clean inputs and ``g(x_noisy)``."""
    clean = x_clean if isinstance(x_clean, Tensor) else Tensor(x_clean)
    noisy = x_noisy if isinstance(x_noisy, Tensor) else Tensor(x_noisy)
    if clean.shape != noisy.shape:
        raise ShapeError(f"clean {clean.shape} vs noisy {noisy.shape}")
    recon = g(noisy)
    return sqdiff(clean, recon).sum(axis=1).mean()


def bce(scores: Tensor, target: float) -> Tensor:
    """Mean binary cross-entropy of clamped scores against a constant target."""
    if target == 1.0:
        return -(log(scores).mean())
    if target == 0.0:
        return -(log(1.0 - scores).mean())
    return -((log(scores) * target + log(1.0 - scores) * (1.0 - target)).mean())


def phase1_labeled_batch(x: np.ndarray, fake: np.ndarray) -> LabeledBatch:
    """Quasi ground truth for phase one: real -> 0, regenerated -> 1."""
    return LabeledBatch(
        inputs=np.concatenate([x, fake]),
        targets=np.concatenate([np.zeros(len(x)), np.ones(len(fake))]),
        source_tag=np.array([SOURCE_REAL] * len(x) + [SOURCE_FAKE] * len(fake), dtype=object),
    )


def _require_finite(value: float, what: str) -> float:
    if not math.isfinite(value):
        raise NumericFailure(f"non-finite {what}")
    return value


class AdversarialTrainer:
    """Owns a live (G, D) pair, their optimizers and the noise/sampling streams."""

    def __init__(self, g: Generator, d: Discriminator, cfg: Phase1Config,
                 noise_rng: np.random.Generator, sampling_rng: np.random.Generator):
        self.g = g
        self.d = d
        self.cfg = cfg
        self.opt_g = Adam(g.parameters(), lr=cfg.lr_g)
        self.opt_d = Adam(d.parameters(), lr=cfg.lr_d)
        self.noise_rng = noise_rng
        self.sampling_rng = sampling_rng
        self.iterations = 0
        self.last_batch: LabeledBatch | None = None

    def step(self, x: np.ndarray) -> dict[str, float]:
        """One discriminator update followed by one generator update."""
        cfg = self.cfg
        x_noisy = add_noise(x, cfg.sigma, self.noise_rng)
        fake = self.g.reconstruct(x_noisy)
        batch = phase1_labeled_batch(x, fake)
        self.last_batch = batch

        real_mask = batch.targets == 0
        with GradientTape() as tape:
            loss_d = bce(self.d.score(batch.inputs[real_mask]), 0.0) + bce(self.d.score(batch.inputs[~real_mask]), 1.0)
        tape.backward(loss_d)
        self.opt_d.step()

        with GradientTape() as tape:
            recon = self.g(x_noisy)
            l_rec = sqdiff(Tensor(x), recon).sum(axis=1).mean()
            # generator wants its output judged real (target 0)
            l_adv = bce(self.d.score(recon), 0.0)
            loss_g = l_adv + l_rec * cfg.lambda_ if cfg.lambda_ != 0 else l_adv
        tape.backward(loss_g)
        self.opt_g.step()
        self.opt_d.zero_grad()

        self.iterations += 1
        return {
            "loss_d": _require_finite(loss_d.item(), "discriminator loss"),
            "loss_adv": _require_finite(l_adv.item(), "adversarial loss"),
            "loss_rec": _require_finite(l_rec.item(), "reconstruction loss"),
        }

    def batches(self, data: np.ndarray) -> Iterator[np.ndarray]:
        order = self.sampling_rng.permutation(len(data))
        bs = self.cfg.batch_size
        for start in range(0, len(data), bs):
            yield data[order[start:start + bs]]

    def epoch(self, data: np.ndarray, callback: Callable[[dict], bool] | None = None) -> bool:
        """Train over one shuffled pass; stop early if ``callback`` returns True."""
        for xb in self.batches(data):
            losses = self.step(xb)
            if callback is not None and callback(losses):
                return True
        return False


class ReferenceBatch:
    """Fixed training subset with a fixed noise draw for comparing snapshots."""

    def __init__(self, data: np.ndarray, size: int, sigma: float, rng: np.random.Generator):
        idx = rng.choice(len(data), size=min(size, len(data)), replace=False)
        self.clean = data[np.sort(idx)]
        self.noisy = add_noise(self.clean, sigma, rng)

    def loss(self, g: Generator) -> float:
        return reconstruction_loss(g, self.clean, self.noisy).item()


def make_models(input_dim: int, latent_dim: int, g_hidden, d_hidden, init_rng: np.random.Generator,
                slope: float = 0.2) -> tuple[Generator, Discriminator]:
    g = Generator(input_dim, latent_dim, g_hidden, rng=init_rng, slope=slope)
    d = Discriminator(input_dim, d_hidden, rng=init_rng, slope=slope)
    return g, d


def run_phase1(data: np.ndarray, cfg: Phase1Config, g: Generator, d: Discriminator, *,
               noise_rng: np.random.Generator, sampling_rng: np.random.Generator,
               reference_rng: np.random.Generator, strict: bool = False) -> Phase1Result:
    """Burn in, then track the worst (old) and best (new) generator snapshots.

    Snapshots are compared on a fixed reference batch after every iteration.
    Training stops as soon as ``loss_old / loss_new > eta`` or when
    ``max_epochs`` epochs (burn-in included) have been run; in the latter case
    the returned pair is flagged, and ``EtaUnreachable`` is raised if
    ``strict``.
    """
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2 or len(data) == 0:
        raise ShapeError("phase one needs a non-empty (n, dim) array of normal samples")
    trainer = AdversarialTrainer(g, d, cfg, noise_rng, sampling_rng)
    ref = ReferenceBatch(data, cfg.reference_size, cfg.sigma, reference_rng)
    trace = Phase1Trace()

    def log_burn_in(losses: dict) -> bool:
        trace.append(TraceRow(trainer.iterations, losses["loss_rec"], math.nan, math.nan, math.nan,
                              "burn-in", losses["loss_adv"]))
        return False

    for _ in range(cfg.p_burn_in):
        trainer.epoch(data, log_burn_in)

    l_live = ref.loss(g)
    state = {
        "g_old": snapshot(g, "old"), "l_old": l_live,
        "g_new": snapshot(g, "new"), "l_new": l_live,
        "best_ratio": 1.0,
    }
    trace.append(TraceRow(trainer.iterations, l_live, l_live, l_live, 1.0, "init"))

    def select(losses: dict) -> bool:
        l_cur = ref.loss(g)
        event = ""
        if l_cur > state["l_old"]:
            state["g_old"], state["l_old"] = snapshot(g, "old"), l_cur
            event = "old"
        elif l_cur < state["l_new"]:
            state["g_new"], state["l_new"] = snapshot(g, "new"), l_cur
            event = "new"
        ratio = state["l_old"] / state["l_new"]
        state["best_ratio"] = max(state["best_ratio"], ratio)
        trace.append(TraceRow(trainer.iterations, l_cur, state["l_old"], state["l_new"], ratio, event,
                              losses["loss_adv"]))
        return ratio > cfg.eta

    epochs = cfg.p_burn_in
    reached = False
    while epochs < cfg.max_epochs and not reached:
        reached = trainer.epoch(data, select)
        epochs += 1

    pair = SnapshotPair(state["g_old"], state["g_new"], state["l_old"], state["l_new"], cfg.eta, reached)
    result = Phase1Result(pair, g, d, trace, epochs, trainer.iterations, state["best_ratio"], trainer)
    if not reached:
        logger.warning("eta=%s not reached in %d epochs (best ratio %.4f)", cfg.eta, epochs, state["best_ratio"])
        if strict:
            raise EtaUnreachable(result)
    return result
