"""Pseudo-anomaly synthesis by fusing normal samples through the old generator."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .ndcore import ShapeError


class Fusion(str, enum.Enum):
    EARLY = "early"
    LATE = "late"
    LATENT = "latent"


@dataclass(frozen=True)
class FusionMode:
    mode: Fusion = Fusion.LATENT
    k: int = 2

    def __post_init__(self):
        object.__setattr__(self, "mode", Fusion(self.mode))
        if self.k < 2:
            raise ValueError(f"fusion needs k >= 2 samples, got {self.k}")


def _as_array(x) -> np.ndarray:
    return np.asarray(getattr(x, "data", x), dtype=np.float64)


def _fuse_stack(g_old, stack: np.ndarray, mode: Fusion) -> np.ndarray:
    """Fuse along axis 0 of ``stack`` with shape ``(k, batch, dim)``."""
    k, n, dim = stack.shape
    if mode is Fusion.EARLY:
        return g_old.forward(stack.mean(axis=0)).data
    if mode is Fusion.LATE:
        recon = g_old.forward(stack.reshape(k * n, dim)).data
        return recon.reshape(k, n, dim).mean(axis=0)
    latents = g_old.encode(stack.reshape(k * n, dim)).data
    return g_old.decode(latents.reshape(k, n, -1).mean(axis=0)).data


def fuse(g_old, samples: Sequence, mode: FusionMode | Fusion | str = Fusion.LATENT,
         indices: Sequence[int] | None = None) -> np.ndarray:
    """Build pseudo anomalies from ``k`` samples (or ``k`` aligned batches).

    early:  g_old(mean(x_1..x_k))
    late:   mean(g_old(x_1)..g_old(x_k))
    latent: g_old.decode(mean(g_old.encode(x_1)..g_old.encode(x_k)))

    ``indices`` are the dataset positions the samples were drawn from; when
    given they must be pairwise distinct.
    """
    fm = mode if isinstance(mode, FusionMode) else FusionMode(Fusion(mode), max(2, len(samples)))
    arrs = [_as_array(s) for s in samples]
    if len(arrs) < 2:
        raise ValueError(f"fusion needs at least 2 samples, got {len(arrs)}")
    if indices is not None:
        if len(indices) != len(arrs):
            raise ValueError("one index per sample is required")
        if len(set(indices)) != len(indices):
            raise ValueError(f"fused sample indices must be distinct, got {list(indices)}")
    shape = arrs[0].shape
    if any(a.shape != shape for a in arrs):
        raise ShapeError("all fused samples must share a shape")
    single = len(shape) == 1
    stack = np.stack([a.reshape(1, -1) if single else a for a in arrs])
    out = _fuse_stack(g_old, stack, fm.mode)
    return out[0] if single else out


def reconstruct_pseudo(g_new, p_o) -> np.ndarray:
    """Regenerate pseudo anomalies with the new generator; no noise is added."""
    return g_new.forward(_as_array(p_o)).data


def sample_groups(n: int, k: int, count: int, rng: np.random.Generator) -> np.ndarray:
    """``count`` index groups of size ``k``, distinct within a group, independent across groups."""
    if n < k:
        raise ValueError(f"need at least {k} samples to fuse, dataset has {n}")
    if 2 * k > n:
        return np.stack([rng.choice(n, size=k, replace=False) for _ in range(count)]).reshape(count, k)
    # redraw whole rows that contain a repeat: uniform over distinct k-tuples
    groups = rng.integers(0, n, size=(count, k))
    while True:
        s = np.sort(groups, axis=1)
        bad = (s[:, 1:] == s[:, :-1]).any(axis=1)
        if not bad.any():
            return groups
        groups[bad] = rng.integers(0, n, size=(int(bad.sum()), k))


def sample_pseudo_batch(data: np.ndarray, g_old, g_new, mode: FusionMode, batch_size: int,
                        rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Draw ``batch_size`` fusion groups and return ``(p_o, p_n, groups)``."""
    groups = sample_groups(len(data), mode.k, batch_size, rng)
    stack = np.stack([data[groups[:, j]] for j in range(mode.k)])
    p_o = _fuse_stack(g_old, stack, mode.mode)
    p_n = reconstruct_pseudo(g_new, p_o)
    return p_o, p_n, groups
