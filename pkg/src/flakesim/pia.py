"""Patch-wise perceptual contrast (PIA) maps and the derived substrate mask.

Images here are linear-RGB float arrays of shape ``(H, W, 3)`` in [0, 1].
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .colorimetry import ColorSystem, delta_e, estimate_background, rgb_to_lab


class PiaDomainError(ValueError):
    pass


def _as_patch(patch) -> tuple[int, int]:
    if np.ndim(patch) == 0:
        return int(patch), int(patch)
    h, w = patch
    return int(h), int(w)


def patch_edges(size: int, step: int) -> np.ndarray:
    """Patch boundaries along one axis; the last patch keeps its true (smaller) extent."""
    return np.append(np.arange(0, size, step), size)


def _lower_median(block: np.ndarray, axis: int) -> np.ndarray:
    k = (block.shape[axis] - 1) // 2
    return np.take(np.partition(block, k, axis=axis), k, axis=axis)


def _tiled_medians(region: np.ndarray, ph: int, pw: int) -> np.ndarray:
    """Medians of a region exactly tiled by ``ph x pw`` patches -> ``(nr, nc, C)``."""
    H, W, C = region.shape
    nr, nc = H // ph, W // pw
    blocks = region.reshape(nr, ph, nc, pw, C).transpose(0, 2, 1, 3, 4).reshape(nr, nc, ph * pw, C)
    return _lower_median(blocks, axis=2)


def patch_medians(image: np.ndarray, patch) -> np.ndarray:
    """Per-channel lower median of every patch -> ``(n_rows, n_cols, 3)``."""
    h, w = _as_patch(patch)
    H, W, C = image.shape
    fh, fw = (H // h) * h, (W // w) * w
    nr, nc = len(patch_edges(H, h)) - 1, len(patch_edges(W, w)) - 1
    out = np.empty((nr, nc, C), dtype=float)
    if fh and fw:
        out[: fh // h, : fw // w] = _tiled_medians(image[:fh, :fw], h, w)
    if fw < W and fh:
        out[: fh // h, -1:] = _tiled_medians(image[:fh, fw:], h, W - fw)
    if fh < H and fw:
        out[-1:, : fw // w] = _tiled_medians(image[fh:, :fw], H - fh, w)
    if fh < H and fw < W:
        out[-1, -1] = _lower_median(image[fh:, fw:].reshape(-1, C), axis=0)
    return out


@dataclass(frozen=True, eq=False)
class PatchScores:
    scores: np.ndarray  # (n_rows, n_cols) delta E per patch
    row_edges: np.ndarray
    col_edges: np.ndarray
    background: np.ndarray  # linear RGB

    def __len__(self):
        return self.scores.size

    def expand(self, values: np.ndarray | None = None) -> np.ndarray:
        """Broadcast per-patch values to the pixel grid."""
        values = self.scores if values is None else values
        rows = np.repeat(np.arange(len(self.row_edges) - 1), np.diff(self.row_edges))
        cols = np.repeat(np.arange(len(self.col_edges) - 1), np.diff(self.col_edges))
        return values[rows[:, None], cols[None, :]]


def patch_scores(image, patch, system: ColorSystem, roi=None) -> PatchScores:
    """Delta E between each patch's median color and the image background.

    ``roi`` (x, y, w, h) restricts only the background estimate.
    """
    img = np.asarray(image, dtype=float)
    if img.ndim != 3 or img.shape[0] == 0 or img.shape[1] == 0:
        raise PiaDomainError(f"expected a non-empty (H, W, 3) image, got shape {img.shape}")
    H, W = img.shape[:2]
    h, w = _as_patch(patch)
    if not (1 <= h <= H and 1 <= w <= W):
        raise PiaDomainError(f"patch {(h, w)} does not fit a {H}x{W} image")
    bg = estimate_background(img, roi)
    scores = delta_e(rgb_to_lab(patch_medians(img, (h, w)), system), rgb_to_lab(bg, system))
    return PatchScores(np.asarray(scores, dtype=float), patch_edges(H, h), patch_edges(W, w), bg)


def normalize_scores(a: np.ndarray) -> np.ndarray:
    """Min-max normalisation; a constant input maps to all zeros."""
    a = np.asarray(a, dtype=float)
    lo, hi = a.min(), a.max()
    if hi == lo:
        return np.zeros_like(a)
    return (a - lo) / (hi - lo)


@dataclass(frozen=True, eq=False)
class PiaMap:
    values: np.ndarray  # (H, W) in [0, 1], constant per patch
    patch: tuple[int, int]
    scores: PatchScores

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def normalized_scores(self) -> np.ndarray:
        return normalize_scores(self.scores.scores)


def pia_map(image, patch, system: ColorSystem, roi=None) -> PiaMap:
    ps = patch_scores(image, patch, system, roi)
    return PiaMap(ps.expand(normalize_scores(ps.scores)), _as_patch(patch), ps)


@dataclass(frozen=True, eq=False)
class SubstrateMask:
    bits: np.ndarray  # (H, W) bool, True = clean substrate
    threshold: float
    percentile: float

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def width(self) -> int:
        return self.bits.shape[1]


def nearest_rank(values, p: float) -> float:
    """The ceil(p/100 * N)-th smallest value (1-based)."""
    flat = np.ravel(np.asarray(values, dtype=float))
    rank = max(1, math.ceil(p / 100.0 * flat.size))
    return float(np.partition(flat, rank - 1)[rank - 1])


def substrate_mask(pmap: PiaMap | np.ndarray, percentile: float = 90.0) -> SubstrateMask:
    """Pixels whose normalised attention is below the p-th percentile.

    When the threshold equals the map minimum (all-zero map, or more than
    p% of pixels tied at the minimum) strict ``<`` would select nothing, so
    pixels at the minimum count as substrate instead.
    """
    if not 0 < percentile < 100:
        raise PiaDomainError(f"percentile must be in (0, 100), got {percentile}")
    vals = pmap.values if isinstance(pmap, PiaMap) else np.asarray(pmap, dtype=float)
    tau = nearest_rank(vals, percentile)
    bits = vals <= tau if tau == vals.min() else vals < tau
    return SubstrateMask(bits, tau, float(percentile))
