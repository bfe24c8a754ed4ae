"""Two-phase adversarial one-class novelty detection on a small numpy autodiff core."""

from .metrics import MetricsReport, ScoreRecord, auc, eer, evaluate
from .models import Discriminator, Generator, SnapshotPair, snapshot
from .phase1 import EtaUnreachable, Phase1Config, run_phase1
from .phase2 import ABLATIONS, Phase2Config, SourceFlags, run_phase2
from .pseudo import Fusion, FusionMode, fuse, reconstruct_pseudo, sample_pseudo_batch
from .scoring import classify, extract_patches, frame_score, motion_gate, score_sample

__version__ = "0.1.0"

__all__ = [
    "ABLATIONS",
    "Discriminator",
    "EtaUnreachable",
    "Fusion",
    "FusionMode",
    "Generator",
    "MetricsReport",
    "Phase1Config",
    "Phase2Config",
    "ScoreRecord",
    "SnapshotPair",
    "SourceFlags",
    "auc",
    "classify",
    "eer",
    "evaluate",
    "extract_patches",
    "frame_score",
    "fuse",
    "motion_gate",
    "reconstruct_pseudo",
    "run_phase1",
    "run_phase2",
    "sample_pseudo_batch",
    "score_sample",
    "snapshot",
]
