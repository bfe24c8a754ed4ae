"""Experiment configuration, seeded substreams and the end-to-end pipelines.

A run is fully determined by its :class:`ExperimentConfig` (including the root
seed). Proposed mode runs phase one, freezes the (old, new) generator pair and
refines the discriminator in phase two; baseline mode trains the plain
generator/discriminator pair with the same phase-one trainer and evaluates
the live models.
"""

from __future__ import annotations

import hashlib
import json
import logging
import subprocess
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Literal

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from . import data as data_mod
from .metrics import MetricsReport, ScoreRecord, auc, evaluate
from .models import Discriminator, Generator, SnapshotPair, snapshot
from .phase1 import AdversarialTrainer, Phase1Config, Phase1Result, make_models, run_phase1
from .phase2 import ABLATIONS, Phase2Config, Phase2Result, SourceFlags, run_phase2
from .pseudo import Fusion, FusionMode
from .scoring import gate_frames, score_records, score_samples

logger = logging.getLogger(__name__)


class ConfigError(ValueError):
    """Invalid experiment configuration; ``errors`` lists every problem found."""

    def __init__(self, errors: list[str]):
        self.errors = errors
        super().__init__("invalid configuration:\n" + "\n".join(f"  - {e}" for e in errors))


# ---------------------------------------------------------------------------
# configuration schema

class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


DatasetKind = Literal["mnist", "mnist5k", "idx", "wbcd", "csv", "kddcup", "blobs", "frames"]


class DatasetSpec(_Strict):
    kind: DatasetKind
    path: str | None = None
    labels_path: str | None = None
    schema_path: str | None = None
    inliers: list[int | str] | None = None
    outliers: list[int | str] | None = None
    outlier_ratio: float | None = None
    # fraction of inliers used for training; defaults to 0.5 for wbcd, 0.8 otherwise
    train_fraction: float | None = None
    test_path: str | None = None
    test_labels_path: str | None = None
    max_train: int | None = None
    max_rows: int | None = 20000
    # synthetic generators
    n: int = 1000
    dim: int = 16
    n_frames: int = 60
    anomaly_start: int = 40
    anomaly_stop: int = 60
    frame_height: int = 240
    frame_width: int = 360

    @field_validator("outlier_ratio")
    @classmethod
    def _ratio(cls, v):
        if v is not None and not 0.0 < v <= 1.0:
            raise ValueError("must lie in (0, 1]")
        return v

    @field_validator("train_fraction")
    @classmethod
    def _fraction(cls, v):
        if v is not None and not 0.0 < v < 1.0:
            raise ValueError("must lie in (0, 1)")
        return v

    @model_validator(mode="after")
    def _paths(self):
        needs_path = {"idx": "path", "csv": "path", "kddcup": "path"}
        if self.kind in needs_path and not self.path:
            raise ValueError(f"dataset.path is required for kind {self.kind!r}")
        if self.kind == "csv" and not self.schema_path:
            raise ValueError("dataset.schema_path is required for kind 'csv'")
        if self.inliers is not None and self.outliers is not None:
            raise ValueError("give only one of dataset.inliers / dataset.outliers")
        return self


class ModelSpec(_Strict):
    latent_dim: int | None = None
    g_hidden: list[int] = Field(default_factory=lambda: [256, 64])
    d_hidden: list[int] = Field(default_factory=lambda: [128, 64])
    slope: float = 0.2


class Phase1Settings(_Strict):
    lambda_: float = Field(0.2, alias="lambda")
    sigma: float = 0.15
    lr_g: float = 1e-3
    lr_d: float = 1e-4
    p_burn_in: int = 1
    eta: float = 1.25
    max_epochs: int = 100
    batch_size: int = 128
    reference_size: int = 256
    allow_eta_below_one: bool = False

    model_config = ConfigDict(extra="forbid", frozen=True, populate_by_name=True)

    @model_validator(mode="after")
    def _check(self):
        try:
            self.to_config(0)
        except ValueError as exc:
            raise ValueError(str(exc)) from None
        return self

    def to_config(self, seed: int) -> Phase1Config:
        return Phase1Config(lambda_=self.lambda_, sigma=self.sigma, lr_g=self.lr_g, lr_d=self.lr_d,
                            p_burn_in=self.p_burn_in, eta=self.eta, max_epochs=self.max_epochs,
                            batch_size=self.batch_size, seed=seed, reference_size=self.reference_size,
                            allow_eta_below_one=self.allow_eta_below_one)


class SourceSettings(_Strict):
    use_X: bool = True
    use_Xn: bool = True
    use_Xo: bool = True
    use_Pn: bool = True
    use_Po_direct: bool = False

    def flags(self) -> SourceFlags:
        return SourceFlags(**self.model_dump())


class Phase2Settings(_Strict):
    alpha: float = 0.1
    beta: float = 0.001
    lr_d: float = 1e-4
    iterations: int = 5000
    log_every: int = 50
    batch_size: int = 64
    probe_size: int = 256
    reset_discriminator: bool = False
    sources: SourceSettings = Field(default_factory=SourceSettings)

    @model_validator(mode="after")
    def _check(self):
        try:
            self.to_config(0)
        except ValueError as exc:
            raise ValueError(str(exc)) from None
        return self

    def to_config(self, seed: int, sources: SourceFlags | None = None) -> Phase2Config:
        return Phase2Config(alpha=self.alpha, beta=self.beta, lr_d=self.lr_d, iterations=self.iterations,
                            log_every=self.log_every, batch_size=self.batch_size, probe_size=self.probe_size,
                            seed=seed, sources=sources or self.sources.flags())


class FusionSettings(_Strict):
    mode: Fusion = Fusion.LATENT
    k: int = Field(2, ge=2)

    def fusion(self) -> FusionMode:
        return FusionMode(self.mode, self.k)


class BaselineSettings(_Strict):
    epochs: int = Field(30, ge=1)
    # evaluate the live pair every this many iterations; 0 means once per epoch
    eval_every: int = Field(0, ge=0)


class SweepSettings(_Strict):
    axis: Literal["outlier_ratio", "epoch", "eta", "p", "fusion_mode", "k"] | None = None
    values: list[Any] = Field(default_factory=list)
    seeds: list[int] = Field(default_factory=lambda: [0])


class ExperimentConfig(_Strict):
    dataset: DatasetSpec
    model: ModelSpec = Field(default_factory=ModelSpec)
    phase1: Phase1Settings = Field(default_factory=Phase1Settings)
    phase2: Phase2Settings = Field(default_factory=Phase2Settings)
    fusion: FusionSettings = Field(default_factory=FusionSettings)
    baseline: BaselineSettings = Field(default_factory=BaselineSettings)
    sweep: SweepSettings = Field(default_factory=SweepSettings)
    tau: float = Field(0.5, gt=0.0, lt=1.0)
    metrics: list[Literal["auc", "eer", "f1", "acc"]] = Field(default_factory=lambda: ["auc", "eer", "f1", "acc"])
    mode: Literal["proposed", "baseline"] = "proposed"
    seed: int = 0
    out: str | None = None

    def canonical_json(self) -> str:
        return json.dumps(self.model_dump(mode="json", by_alias=True), sort_keys=True, separators=(",", ":"))

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()

    def with_updates(self, **sections: dict) -> "ExperimentConfig":
        """Copy with nested fields replaced, e.g. ``with_updates(phase1={"eta": 1.01}, seed=3)``."""
        raw = self.model_dump(mode="json", by_alias=True)
        for key, value in sections.items():
            if isinstance(value, dict):
                raw[key] = _deep_merge(raw.get(key) or {}, value)
            else:
                raw[key] = value
        return parse_config(raw)


def _deep_merge(base: dict, upd: dict) -> dict:
    out = dict(base)
    for k, v in upd.items():
        out[k] = _deep_merge(out[k], v) if isinstance(v, dict) and isinstance(out.get(k), dict) else v
    return out


def _format_errors(exc: ValidationError) -> list[str]:
    errors = []
    for err in exc.errors():
        loc = ".".join(str(p) for p in err["loc"]) or "<root>"
        msg = err["msg"].removeprefix("Value error, ")
        errors.append(f"{loc}: {msg}")
    return errors


def parse_config(raw: dict) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError(["<root>: expected a mapping"])
    try:
        return ExperimentConfig.model_validate(raw)
    except ValidationError as exc:
        raise ConfigError(_format_errors(exc)) from None


def load_config(path) -> ExperimentConfig:
    """Read a YAML (or JSON) config file; unknown keys are errors."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError([f"config: cannot read {path}: {exc.strerror}"]) from None
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError([f"config: not valid YAML: {exc}"]) from None
    return parse_config(raw or {})


# ---------------------------------------------------------------------------
# randomness

class Streams:
    """Independent named generators derived from one root seed.

    ``get(name)`` always returns a fresh generator positioned at the start of
    that substream, so components do not perturb each other's draws.
    """

    NAMES = ("protocol", "init", "noise", "sampling", "reference", "phase2", "probe", "pseudo")

    def __init__(self, seed: int):
        self.seed = int(seed)

    def get(self, name: str) -> np.random.Generator:
        return np.random.default_rng([self.seed, zlib.crc32(name.encode("utf-8"))])


# ---------------------------------------------------------------------------
# data preparation

@dataclass
class FrameTest:
    """Frame-level test clip for patch-based scoring."""

    frames: np.ndarray
    labels: np.ndarray | None
    ids: list[str]


@dataclass
class PreparedData:
    train: data_mod.Dataset
    test: data_mod.Dataset | None
    frames: FrameTest | None = None

    @property
    def image_shape(self) -> tuple[int, int] | None:
        return self.train.image_shape


def _load_raw(spec: DatasetSpec, streams: Streams) -> data_mod.Dataset:
    if spec.kind == "mnist":
        return data_mod.load_mnist(spec.path)
    if spec.kind == "mnist5k":
        return data_mod.load_mnist5k()
    if spec.kind == "idx":
        return data_mod.load_mnist_idx(spec.path, spec.labels_path)
    if spec.kind == "wbcd":
        return data_mod.load_wbcd_original(spec.path)
    if spec.kind == "csv":
        return data_mod.load_csv_tabular(spec.path, spec.schema_path)
    if spec.kind == "kddcup":
        return data_mod.load_kddcup(spec.path, spec.max_rows, streams.get("protocol"))
    if spec.kind == "blobs":
        return data_mod.synth_blobs(spec.n, spec.dim, streams.get("protocol"))
    raise ValueError(f"unsupported dataset kind {spec.kind!r}")


def _default_roles(spec: DatasetSpec) -> dict:
    if spec.inliers is not None:
        return {"inliers": spec.inliers}
    if spec.outliers is not None:
        return {"outliers": spec.outliers}
    defaults = {"mnist": {"inliers": [0]}, "mnist5k": {"inliers": [0]}, "idx": {"inliers": [0]},
                "wbcd": {"inliers": ["benign"]}, "kddcup": {"outliers": ["normal."]},
                "blobs": {"inliers": ["inlier"]}}
    if spec.kind not in defaults:
        raise ConfigError([f"dataset.inliers: required for kind {spec.kind!r}"])
    return defaults[spec.kind]


def _prepare_frames(spec: DatasetSpec, streams: Streams) -> PreparedData:
    rng = streams.get("protocol")
    if spec.path:
        _, train_frames = data_mod.read_pgm_dir(spec.path)
        if not spec.test_path:
            raise ConfigError(["dataset.test_path: required with a PGM training directory"])
        test_ids, test_frames = data_mod.read_pgm_dir(spec.test_path)
        test_labels = None
        if spec.test_labels_path:
            test_labels = np.loadtxt(spec.test_labels_path, dtype=np.int64, ndmin=1)
            if len(test_labels) != len(test_frames):
                raise ConfigError([f"dataset.test_labels_path: {len(test_labels)} labels for "
                                   f"{len(test_frames)} frames"])
    else:
        train_frames, _ = data_mod.synth_frames(spec.n_frames, None, rng, spec.frame_height, spec.frame_width)
        anomaly = data_mod.AnomalySpec(spec.anomaly_start, spec.anomaly_stop)
        test_frames, test_labels = data_mod.synth_frames(spec.n_frames, anomaly, rng, spec.frame_height,
                                                         spec.frame_width)
        test_ids = [f"frame-{i:06d}" for i in range(len(test_frames))]
    patches = np.concatenate([g.flat() for g in gate_frames(train_frames)])
    if len(patches) == 0:
        raise ValueError("no active patches in the training clip")
    if spec.max_train is not None:
        patches = patches[np.sort(rng.permutation(len(patches))[:spec.max_train])]
    from .scoring import PATCH
    train = data_mod.Dataset(patches, np.zeros(len(patches), dtype=np.int64),
                             [data_mod.FeatureMeta("pixels", "continuous", patches.shape[1])], split="train",
                             name="frames", image_shape=(PATCH, PATCH))
    return PreparedData(train, None, FrameTest(test_frames, test_labels, list(test_ids)))


def prepare_data(spec: DatasetSpec, streams: Streams) -> PreparedData:
    """Load the dataset and build the one-class train/test protocol."""
    if spec.kind == "frames":
        return _prepare_frames(spec, streams)
    raw = _load_raw(spec, streams)
    train, test = data_mod.make_occ_protocol(
        raw, outlier_ratio=spec.outlier_ratio, rng=streams.get("protocol"),
        train_fraction=spec.train_fraction or (0.5 if spec.kind == "wbcd" else 0.8),
        max_train=spec.max_train, **_default_roles(spec))
    return PreparedData(train, test)


# ---------------------------------------------------------------------------
# pipelines

@dataclass
class Evaluation:
    records: list[ScoreRecord]
    report: MetricsReport | None
    notice: str | None = None


@dataclass
class CheckpointEval:
    """Test AUC of the evaluated pair at one point of training."""

    stage: str
    index: int
    auc: float


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    mode: str
    data: PreparedData
    evaluation: Evaluation
    series: list[CheckpointEval]
    g_eval: Generator
    d: Discriminator
    phase1: Phase1Result | None = None
    phase2: Phase2Result | None = None
    baseline_trainer: AdversarialTrainer | None = None
    extra: dict = field(default_factory=dict)

    @property
    def pair(self) -> SnapshotPair | None:
        return self.phase1.pair if self.phase1 is not None else None

    @property
    def report(self) -> MetricsReport | None:
        return self.evaluation.report


def _latent_dim(cfg: ExperimentConfig, prepared: PreparedData) -> int:
    if cfg.model.latent_dim is not None:
        return cfg.model.latent_dim
    return 16 if prepared.image_shape is not None else 4


def build_models(cfg: ExperimentConfig, prepared: PreparedData, streams: Streams) -> tuple[Generator, Discriminator]:
    return make_models(prepared.train.dim, _latent_dim(cfg, prepared), cfg.model.g_hidden, cfg.model.d_hidden,
                       streams.get("init"), slope=cfg.model.slope)


def test_ids(test: data_mod.Dataset) -> list[str]:
    return [f"{test.split}-{int(i):06d}" for i in test.source_index]


def evaluate_pair(g: Generator, d: Discriminator, prepared: PreparedData, tau: float) -> Evaluation:
    """Score the test split with ``d(g(x))`` and compute the metric suite when labels allow."""
    if prepared.frames is not None:
        ft = prepared.frames
        from .scoring import frame_score
        grids = gate_frames(ft.frames, ids=ft.ids)
        scores = [frame_score(g, d, grid) for grid in grids]
        labels = ft.labels
        records = [ScoreRecord(fid, float(s), None if labels is None else int(lab))
                   for fid, s, lab in zip(ft.ids, scores, labels if labels is not None else [None] * len(scores))]
    else:
        test = prepared.test
        records = score_records(g, d, test.samples, test.labels, test_ids(test))
    labels = [r.true_label for r in records]
    if any(lab is None for lab in labels):
        return Evaluation(records, None, "labels absent: metrics skipped")
    if len(set(labels)) < 2:
        return Evaluation(records, None, "single-class labels: metrics skipped")
    return Evaluation(records, evaluate(records, tau=tau))


class _SeriesTracker:
    """Cheap test-AUC tracking for a fixed generator (scores its output once)."""

    def __init__(self, g: Generator, prepared: PreparedData):
        self.enabled = prepared.test is not None and prepared.test.labels is not None \
            and len(set(prepared.test.labels.tolist())) == 2
        if self.enabled:
            self.recon = g.reconstruct(prepared.test.samples)
            self.labels = prepared.test.labels

    def auc(self, d: Discriminator) -> float:
        return auc(d.score(self.recon).data, self.labels)


def live_auc(g: Generator, d: Discriminator, prepared: PreparedData) -> float:
    test = prepared.test
    return auc(score_samples(g, d, test.samples), test.labels)


def run_phase_one(cfg: ExperimentConfig, prepared: PreparedData, streams: Streams | None = None,
                  strict: bool = False) -> tuple[Phase1Result, Generator, Discriminator]:
    streams = streams or Streams(cfg.seed)
    g, d = build_models(cfg, prepared, streams)
    res = run_phase1(prepared.train.samples, cfg.phase1.to_config(cfg.seed), g, d,
                     noise_rng=streams.get("noise"), sampling_rng=streams.get("sampling"),
                     reference_rng=streams.get("reference"), strict=strict)
    return res, g, d


def run_phase_two(cfg: ExperimentConfig, prepared: PreparedData, p1: Phase1Result,
                  sources: SourceFlags | None = None, streams: Streams | None = None,
                  track: bool = True) -> tuple[Phase2Result, Discriminator, list[CheckpointEval]]:
    """Refine a copy of the phase-one discriminator; ``p1`` itself is left untouched."""
    streams = streams or Streams(cfg.seed)
    if cfg.phase2.reset_discriminator:
        d = Discriminator(prepared.train.dim, cfg.model.d_hidden, rng=streams.get("init"), slope=cfg.model.slope)
    else:
        d = snapshot(p1.discriminator)
    p2cfg = cfg.phase2.to_config(cfg.seed, sources)
    tracker = _SeriesTracker(p1.pair.g_new, prepared) if track else None
    series: list[CheckpointEval] = []

    def on_interval(i: int, disc: Discriminator) -> None:
        if tracker is not None and tracker.enabled:
            series.append(CheckpointEval("phase2", i, tracker.auc(disc)))

    probe = prepared.test.samples[prepared.test.labels == 0] if prepared.test is not None else None
    res = run_phase2(prepared.train.samples, p1.pair, d, p2cfg, cfg.fusion.fusion(), rng=streams.get("phase2"),
                     probe_inliers=probe, probe_rng=streams.get("probe"), on_interval=on_interval)
    return res, d, series


def run_proposed(cfg: ExperimentConfig, prepared: PreparedData | None = None, *,
                 phase1_result: Phase1Result | None = None, sources: SourceFlags | None = None,
                 strict: bool = False) -> ExperimentResult:
    streams = Streams(cfg.seed)
    prepared = prepared or prepare_data(cfg.dataset, streams)
    p1 = phase1_result or run_phase_one(cfg, prepared, streams, strict)[0]
    p2, d, series = run_phase_two(cfg, prepared, p1, sources, streams)
    ev = evaluate_pair(p1.pair.g_new, d, prepared, cfg.tau)
    return ExperimentResult(cfg, "proposed", prepared, ev, series, p1.pair.g_new, d, p1, p2)


def run_baseline(cfg: ExperimentConfig, prepared: PreparedData | None = None,
                 epochs: int | None = None) -> ExperimentResult:
    """Plain adversarial training of the live pair, evaluated at regular checkpoints.

    Uses the same initialization, noise and sampling streams (and trainer) as
    phase one of the proposed mode, without snapshot selection or phase two.
    """
    streams = Streams(cfg.seed)
    prepared = prepared or prepare_data(cfg.dataset, streams)
    g, d = build_models(cfg, prepared, streams)
    trainer = AdversarialTrainer(g, d, cfg.phase1.to_config(cfg.seed), streams.get("noise"), streams.get("sampling"))
    epochs = epochs or cfg.baseline.epochs
    every = cfg.baseline.eval_every
    can_track = prepared.test is not None and prepared.test.labels is not None
    series: list[CheckpointEval] = []

    def maybe_eval(_losses: dict) -> bool:
        if every and can_track and trainer.iterations % every == 0:
            series.append(CheckpointEval("baseline-iter", trainer.iterations, live_auc(g, d, prepared)))
        return False

    data = prepared.train.samples
    for epoch in range(1, epochs + 1):
        trainer.epoch(data, maybe_eval)
        if not every and can_track:
            series.append(CheckpointEval("baseline-epoch", epoch, live_auc(g, d, prepared)))
    ev = evaluate_pair(g, d, prepared, cfg.tau)
    return ExperimentResult(cfg, "baseline", prepared, ev, series, g, d, baseline_trainer=trainer)


def run_experiment(cfg: ExperimentConfig, strict: bool = False) -> ExperimentResult:
    if cfg.mode == "baseline":
        return run_baseline(cfg)
    return run_proposed(cfg, strict=strict)


# ---------------------------------------------------------------------------
# ablation grid

ABLATION_FIELDS = ("configuration", "seed", "auc", "g_old_hash", "g_new_hash", "error")


@dataclass
class AblationCell:
    configuration: str
    seed: int
    auc: float | None
    g_old_hash: str
    g_new_hash: str
    error: str | None = None

    def as_csv(self) -> list:
        return [self.configuration, self.seed, "" if self.auc is None else repr(self.auc),
                self.g_old_hash, self.g_new_hash, self.error or ""]


def run_ablation(cfg: ExperimentConfig, seeds: list[int], cells: dict[str, SourceFlags] | None = None,
                 prepared_by_seed: dict | None = None) -> list[AblationCell]:
    """Phase-two source ablations sharing one phase-one snapshot pair per seed.

    The ``phase-one`` row evaluates the live generator/discriminator at the end
    of phase one.
    """
    cells = cells if cells is not None else ABLATIONS
    out: list[AblationCell] = []
    for seed in seeds:
        c = cfg.with_updates(seed=seed)
        streams = Streams(seed)
        prepared = (prepared_by_seed or {}).get(seed) or prepare_data(c.dataset, streams)
        p1, g_live, d_live = run_phase_one(c, prepared, streams)
        h_old, h_new = p1.pair.hashes()
        out.append(AblationCell("phase-one", seed, evaluate_pair(g_live, d_live, prepared, c.tau).report.auc,
                                h_old, h_new))
        for name, flags in cells.items():
            try:
                r = run_proposed(c, prepared, phase1_result=p1, sources=flags)
                out.append(AblationCell(name, seed, r.report.auc, *p1.pair.hashes()))
            except Exception as exc:  # noqa: BLE001 - the grid records failures and continues
                logger.warning("ablation cell %s seed %d failed: %s", name, seed, exc)
                out.append(AblationCell(name, seed, None, h_old, h_new, f"{type(exc).__name__}: {exc}"))
    return out


# ---------------------------------------------------------------------------
# manifest

def git_revision() -> str:
    try:
        out = subprocess.run(["git", "rev-parse", "HEAD"], cwd=Path(__file__).resolve().parent,
                             capture_output=True, text=True, timeout=10)
    except (OSError, subprocess.SubprocessError):
        return "unknown"
    return out.stdout.strip() if out.returncode == 0 else "unknown"


def build_manifest(result: ExperimentResult, outputs: list[str] | None = None) -> dict:
    cfg = result.config
    man: dict[str, Any] = {
        "config": json.loads(cfg.canonical_json()),
        "config_hash": cfg.config_hash(),
        "seed": cfg.seed,
        "mode": result.mode,
        "git_revision": git_revision(),
        "p_burn_in": cfg.phase1.p_burn_in,
        "eta": cfg.phase1.eta,
        "train_digest": result.data.train.digest(),
        "d_hash": result.d.param_hash(),
        "g_eval_hash": result.g_eval.param_hash(),
        "outputs": sorted(outputs or []),
    }
    if result.phase1 is not None:
        p1 = result.phase1
        man.update({
            "eta_achieved": p1.pair.ratio,
            "eta_reached": p1.pair.eta_reached,
            "best_ratio": p1.best_ratio,
            "phase1_epochs": p1.epochs,
            "phase1_iterations": p1.iterations,
            "loss_old": p1.pair.loss_old,
            "loss_new": p1.pair.loss_new,
            "g_old_hash": p1.pair.g_old.param_hash(),
            "g_new_hash": p1.pair.g_new.param_hash(),
        })
    return man


def dump_json(obj, path) -> None:
    Path(path).write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n")


def series_table(series: list[CheckpointEval]) -> list[dict]:
    return [{"stage": s.stage, "index": s.index, "auc": s.auc} for s in series]


def resolve_ablation(name: str) -> SourceFlags:
    if name not in ABLATIONS:
        raise ConfigError([f"ablation: unknown configuration {name!r}; known: {sorted(ABLATIONS)}"])
    return ABLATIONS[name]


SweepFn = Callable[[object, int], MetricsReport]
