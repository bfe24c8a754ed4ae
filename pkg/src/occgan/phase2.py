"""Discriminator refinement on good versus bad quality reconstructions."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, fields
from typing import Callable

import numpy as np

from .metrics import auc as auc_metric
from .models import Discriminator, SnapshotPair
from .ndcore import Adam, GradientTape, NumericFailure, log
from .phase1 import LabeledBatch
from .pseudo import FusionMode, sample_pseudo_batch

X, XN, XO, PN, PO = "X", "Xn", "Xo", "Pn", "Po"
GOOD_SOURCES = (X, XN)
BAD_SOURCES = (XO, PN, PO)
TARGET = {X: 0, XN: 0, XO: 1, PN: 1, PO: 1}


@dataclass(frozen=True)
class SourceFlags:
    use_X: bool = True
    use_Xn: bool = True
    use_Xo: bool = True
    use_Pn: bool = True
    use_Po_direct: bool = False

    def enabled(self) -> tuple[str, ...]:
        tags = (X, XN, XO, PN, PO)
        flags = (self.use_X, self.use_Xn, self.use_Xo, self.use_Pn, self.use_Po_direct)
        return tuple(t for t, on in zip(tags, flags) if on)

    def label(self) -> str:
        return "+".join(self.enabled())


# columns of the phase-two ablation grid; "full" is the proposed configuration
ABLATIONS: dict[str, SourceFlags] = {
    "Xn+Xo": SourceFlags(use_X=False, use_Pn=False),
    "X+Xn+Xo": SourceFlags(use_Pn=False),
    "X+Xn+Pn": SourceFlags(use_Xo=False),
    "X+Xn+Xo+Po": SourceFlags(use_Pn=False, use_Po_direct=True),
    "X+Xn+Pn+Po": SourceFlags(use_Xo=False, use_Po_direct=True),
    "full": SourceFlags(),
}


@dataclass
class Phase2Config:
    alpha: float = 0.1
    beta: float = 0.001
    lr_d: float = 1e-4
    iterations: int = 5000
    log_every: int = 50
    batch_size: int = 64
    probe_size: int = 256
    seed: int = 0
    sources: SourceFlags = field(default_factory=SourceFlags)

    def __post_init__(self):
        if isinstance(self.sources, dict):
            self.sources = SourceFlags(**self.sources)
        if not (0.0 <= self.alpha <= 1.0 and 0.0 <= self.beta <= 1.0):
            raise ValueError("alpha and beta must lie in [0, 1]")
        if self.iterations < 0 or self.log_every <= 0 or self.batch_size <= 0:
            raise ValueError("iterations must be >= 0; log_every and batch_size positive")
        on = self.sources.enabled()
        if not any(s in on for s in GOOD_SOURCES) or not any(s in on for s in BAD_SOURCES):
            raise ValueError("phase two needs at least one good and one bad example source")

    def weights(self) -> dict[str, float]:
        """Per-source weights of the objective, renormalized over enabled sources.

        Good side: alpha on X, 1 - alpha on Xn. Bad side: beta on Xo and
        1 - beta on the pseudo-anomaly terms (split evenly between Pn and a
        directly-fed Po). A side with a single enabled term gives it weight 1.
        """
        on = set(self.sources.enabled())
        w: dict[str, float] = {}
        if {X, XN} <= on:
            w[X], w[XN] = self.alpha, 1.0 - self.alpha
        else:
            w.update({s: 1.0 for s in (X, XN) if s in on})
        pseudo = [s for s in (PN, PO) if s in on]
        pseudo_total = 1.0 - self.beta if XO in on and pseudo else 1.0
        if XO in on:
            w[XO] = self.beta if pseudo else 1.0
        for s in pseudo:
            w[s] = pseudo_total / len(pseudo)
        return w


class Phase2Sampler:
    """Builds labeled batches; caches the frozen generators' reconstructions."""

    def __init__(self, data: np.ndarray, pair: SnapshotPair, mode: FusionMode, cfg: Phase2Config):
        self.data = np.asarray(data, dtype=np.float64)
        self.pair = pair
        self.mode = mode
        self.cfg = cfg
        self.on = cfg.sources.enabled()
        self._xn = pair.g_new.reconstruct(self.data) if XN in self.on else None
        self._xo = pair.g_old.reconstruct(self.data) if XO in self.on else None

    def batch(self, rng: np.random.Generator) -> LabeledBatch:
        n = self.cfg.batch_size
        idx = rng.integers(0, len(self.data), size=n)
        parts: list[tuple[str, np.ndarray]] = []
        if X in self.on:
            parts.append((X, self.data[idx]))
        if XN in self.on:
            parts.append((XN, self._xn[idx]))
        if XO in self.on:
            parts.append((XO, self._xo[idx]))
        if PN in self.on or PO in self.on:
            p_o, p_n, _ = sample_pseudo_batch(self.data, self.pair.g_old, self.pair.g_new, self.mode, n, rng)
            if PN in self.on:
                parts.append((PN, p_n))
            if PO in self.on:
                parts.append((PO, p_o))
        inputs = np.concatenate([a for _, a in parts])
        tags = np.concatenate([np.full(len(a), t, dtype=object) for t, a in parts])
        targets = np.array([TARGET[t] for t in tags], dtype=np.float64)
        return LabeledBatch(inputs, targets, tags)


def build_phase2_batch(data, pair: SnapshotPair, pseudo_mode: FusionMode, cfg: Phase2Config,
                       rng: np.random.Generator) -> LabeledBatch:
    """One labeled batch with ``cfg.batch_size`` samples from every enabled source."""
    return Phase2Sampler(data, pair, pseudo_mode, cfg).batch(rng)


def phase2_loss(d: Discriminator, batch: LabeledBatch, cfg: Phase2Config):
    """Negated weighted objective: good sources push D toward 0, bad toward 1."""
    weights = cfg.weights()
    total = None
    for tag in dict.fromkeys(batch.source_tag):
        w = weights.get(tag, 0.0)
        if w == 0.0:
            continue
        scores = d.score(batch.inputs[batch.source_tag == tag])
        term = log(1.0 - scores) if TARGET[tag] == 0 else log(scores)
        term = term.mean() * (-w)
        total = term if total is None else total + term
    return total


def phase2_step(d: Discriminator, batch: LabeledBatch, cfg: Phase2Config, opt: Adam) -> float:
    """One Adam step on the discriminator only."""
    with GradientTape() as tape:
        loss = phase2_loss(d, batch, cfg)
    tape.backward(loss)
    opt.step()
    value = loss.item()
    if not math.isfinite(value):
        raise NumericFailure("non-finite phase-two loss")
    return value


@dataclass
class Phase2TraceRow:
    iteration: int
    mean_good: float
    std_good: float
    mean_bad: float
    std_bad: float
    auc_probe: float

    @property
    def margin(self) -> float:
        return self.mean_bad - self.mean_good


@dataclass
class Phase2Result:
    discriminator: Discriminator
    trace: list[Phase2TraceRow]
    steps: int

    def write_csv(self, path) -> None:
        names = [f.name for f in fields(Phase2TraceRow)]
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(names)
            for row in self.trace:
                w.writerow([row.iteration] + [repr(float(getattr(row, n))) for n in names[1:]])


class ProbeSet:
    """Fixed inliers and pseudo anomalies scored through the test-time pipeline."""

    def __init__(self, inliers: np.ndarray, pair: SnapshotPair, mode: FusionMode, train: np.ndarray,
                 size: int, rng: np.random.Generator):
        inliers = np.asarray(inliers, dtype=np.float64)
        if len(inliers) > size:
            inliers = inliers[np.sort(rng.choice(len(inliers), size=size, replace=False))]
        self.good = pair.g_new.reconstruct(inliers)
        _, self.bad, _ = sample_pseudo_batch(train, pair.g_old, pair.g_new, mode, size, rng)

    def evaluate(self, d: Discriminator, iteration: int) -> Phase2TraceRow:
        sg = d.score(self.good).data
        sb = d.score(self.bad).data
        labels = np.r_[np.zeros(len(sg)), np.ones(len(sb))]
        return Phase2TraceRow(iteration, float(sg.mean()), float(sg.std()), float(sb.mean()), float(sb.std()),
                              auc_metric(np.r_[sg, sb], labels))


def run_phase2(data, pair: SnapshotPair, d: Discriminator, cfg: Phase2Config, mode: FusionMode, *,
               rng: np.random.Generator, probe_inliers: np.ndarray | None = None,
               probe_rng: np.random.Generator | None = None,
               on_interval: Callable[[int, Discriminator], None] | None = None) -> Phase2Result:
    """Train ``d`` for ``cfg.iterations`` steps with the generators frozen.

    After every ``cfg.log_every`` steps the probe set is scored and one trace
    row appended; ``on_interval(interval_index, d)`` is called at the same
    points (1-based interval index).
    """
    data = np.asarray(data, dtype=np.float64)
    sampler = Phase2Sampler(data, pair, mode, cfg)
    probe_rng = probe_rng if probe_rng is not None else np.random.default_rng(cfg.seed + 1)
    probe = ProbeSet(data if probe_inliers is None else probe_inliers, pair, mode, data, cfg.probe_size, probe_rng)
    opt = Adam(d.parameters(), lr=cfg.lr_d)
    trace: list[Phase2TraceRow] = []
    for step in range(1, cfg.iterations + 1):
        phase2_step(d, sampler.batch(rng), cfg, opt)
        if step % cfg.log_every == 0:
            interval = step // cfg.log_every
            trace.append(probe.evaluate(d, interval))
            if on_interval is not None:
                on_interval(interval, d)
    return Phase2Result(d, trace, cfg.iterations)
