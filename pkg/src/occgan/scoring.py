"""Anomaly scores, threshold classification and patch-based frame scoring."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .metrics import ScoreRecord

PATCH = 45
MOTION_DELTA = 0.05
MOTION_FRACTION = 0.20
NORMAL, ANOMALY = "normal", "anomaly"


def score_samples(g_new, d, x) -> np.ndarray:
    """``d(g_new(x))`` for a batch; no noise is added at test time."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    return d.score(g_new.forward(x)).data.copy()


def score_sample(g_new, d, x) -> float:
    return float(score_samples(g_new, d, np.asarray(x, dtype=np.float64).reshape(1, -1))[0])


def score_records(g_new, d, x, labels=None, ids: Sequence[str] | None = None,
                  batch_size: int = 1024) -> list[ScoreRecord]:
    x = np.asarray(x, dtype=np.float64)
    scores = np.concatenate([score_samples(g_new, d, x[i:i + batch_size]) for i in range(0, len(x), batch_size)]) \
        if len(x) else np.empty(0)
    ids = list(ids) if ids is not None else [f"{i:06d}" for i in range(len(x))]
    labs = [None] * len(x) if labels is None else [int(v) for v in labels]
    return [ScoreRecord(sid, float(s), lab) for sid, s, lab in zip(ids, scores, labs)]


def classify(score: float, tau: float = 0.5) -> str:
    """Normal iff ``score < tau``."""
    if not 0.0 < tau < 1.0:
        raise ValueError(f"tau must lie in (0, 1), got {tau}")
    return NORMAL if score < tau else ANOMALY


@dataclass
class FrameGrid:
    """Non-overlapping square patches tiling the top-left of a frame."""

    frame_id: str
    patches: np.ndarray  # (n, size, size)
    positions: list[tuple[int, int]]  # (row, col) patch-grid coordinates
    size: int = PATCH
    active_mask: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.active_mask is None:
            self.active_mask = np.ones(len(self.patches), dtype=bool)

    def __len__(self) -> int:
        return len(self.patches)

    def flat(self, active_only: bool = True) -> np.ndarray:
        p = self.patches[self.active_mask] if active_only else self.patches
        return p.reshape(len(p), self.size * self.size)

    def reassemble(self) -> np.ndarray:
        rows = 1 + max(r for r, _ in self.positions)
        cols = 1 + max(c for _, c in self.positions)
        out = np.zeros((rows * self.size, cols * self.size))
        for (r, c), p in zip(self.positions, self.patches):
            out[r * self.size:(r + 1) * self.size, c * self.size:(c + 1) * self.size] = p
        return out


def extract_patches(frame, frame_id: str = "", size: int = PATCH,
                    expected_shape: tuple[int, int] | None = None) -> FrameGrid:
    """Cut a 2-D grayscale frame into ``size x size`` tiles; ragged edges are dropped."""
    frame = np.asarray(frame, dtype=np.float64)
    if frame.ndim != 2:
        raise ValueError(f"expected a 2-D grayscale frame, got shape {frame.shape}")
    if expected_shape is not None and frame.shape != tuple(expected_shape):
        raise ValueError(f"expected frame of shape {tuple(expected_shape)}, got {frame.shape}")
    n_rows, n_cols = frame.shape[0] // size, frame.shape[1] // size
    if n_rows == 0 or n_cols == 0:
        raise ValueError(f"frame {frame.shape} is smaller than one {size}x{size} patch")
    tiles = frame[:n_rows * size, :n_cols * size].reshape(n_rows, size, n_cols, size).swapaxes(1, 2)
    patches = tiles.reshape(n_rows * n_cols, size, size).copy()
    positions = [(r, c) for r in range(n_rows) for c in range(n_cols)]
    return FrameGrid(frame_id, patches, positions, size)


def motion_gate(patch_now, patch_neighbor, delta: float = MOTION_DELTA, fraction: float = MOTION_FRACTION) -> bool:
    """Active iff at least ``fraction`` of pixels change by more than ``delta``."""
    a = np.asarray(patch_now, dtype=np.float64)
    b = np.asarray(patch_neighbor, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"patch shapes differ: {a.shape} vs {b.shape}")
    changed = int(np.count_nonzero(np.abs(a - b) > delta))
    # integer comparison avoids float round-off exactly at the boundary
    return changed >= math.ceil(fraction * a.size - 1e-9)


def gate_frames(frames: Sequence[np.ndarray], size: int = PATCH, delta: float = MOTION_DELTA,
                fraction: float = MOTION_FRACTION, ids: Sequence[str] | None = None) -> list[FrameGrid]:
    """Patch every frame and mark patches that moved versus a neighboring frame.

    The neighbor is the previous frame; the first frame uses the next one.
    """
    grids = [extract_patches(f, ids[i] if ids else f"{i:06d}", size) for i, f in enumerate(frames)]
    if len(grids) < 2:
        return grids
    for i, grid in enumerate(grids):
        other = grids[i - 1] if i > 0 else grids[1]
        grid.active_mask = np.array([motion_gate(p, q, delta, fraction) for p, q in zip(grid.patches, other.patches)])
    return grids


def frame_score(g_new, d, grid: FrameGrid) -> float:
    """Maximum patch score over active patches; 0 when nothing moved."""
    if not grid.active_mask.any():
        return 0.0
    # score the whole grid in one batch so a patch's score does not depend on which others are active
    scores = score_samples(g_new, d, grid.flat(active_only=False))
    return float(scores[grid.active_mask].max())


def score_frames(g_new, d, frames: Sequence[np.ndarray], **gate_kw) -> np.ndarray:
    return np.array([frame_score(g_new, d, grid) for grid in gate_frames(frames, **gate_kw)])
