"""Frequency-mixed augmentation.

Rectangular patches of one frequency view are replaced by the co-located
pixels of another view of the same image.  Every ordered pair of perturbed
views yields one mixed image; all of them share the anchor view as the
reconstruction target and the untouched ground-truth mask.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .frequency_views import (
    ANCHOR, RADIUS_RANGE, SIGMA_RANGE, FrequencyView, GaussianParams, ParameterError,
    as_image, extract_view_bank, sample_view_params,
)

PATCH_COUNT_RANGE = (1, 4)
PATCH_FRAC_RANGE = (0.2, 0.5)


@dataclass
class MixMask:
    mask: np.ndarray  # H x W, uint8 in {0, 1}

    @property
    def coverage(self) -> float:
        return float(self.mask.mean())


@dataclass
class AugmentedSample:
    mixed: np.ndarray
    target: np.ndarray
    seg_mask: np.ndarray
    pair: tuple[int, int]
    k: int


def generate_mix_mask(rng: np.random.Generator, height: int, width: int,
                      patch_count_range=PATCH_COUNT_RANGE,
                      patch_frac_range=PATCH_FRAC_RANGE,
                      coverage_range=None, max_tries: int = 100) -> MixMask:
    """Union of axis-aligned rectangles at random positions.

    The number of rectangles is uniform over `patch_count_range` (inclusive)
    and each side is a uniform fraction of the matching image side.  With
    `coverage_range` set, masks are redrawn until their coverage falls inside it.
    """
    if height < 8 or width < 8:
        raise ParameterError(f"image too small for patch mixing: {height}x{width}")
    lo_p, hi_p = patch_count_range
    lo_f, hi_f = patch_frac_range
    if not (1 <= lo_p <= hi_p) or not (0 < lo_f <= hi_f <= 1):
        raise ParameterError(
            f"invalid patch ranges count={patch_count_range} frac={patch_frac_range}")

    for _ in range(max_tries):
        mask = np.zeros((height, width), dtype=np.uint8)
        for _ in range(int(rng.integers(lo_p, hi_p + 1))):
            ph = max(1, int(round(rng.uniform(lo_f, hi_f) * height)))
            pw = max(1, int(round(rng.uniform(lo_f, hi_f) * width)))
            top = int(rng.integers(0, height - ph + 1))
            left = int(rng.integers(0, width - pw + 1))
            mask[top:top + ph, left:left + pw] = 1
        out = MixMask(mask)
        if coverage_range is None or coverage_range[0] <= out.coverage <= coverage_range[1]:
            return out
    raise ParameterError(f"no mask with coverage in {coverage_range} after {max_tries} draws")


def _pixels(view) -> np.ndarray:
    return view.pixels if isinstance(view, FrequencyView) else np.asarray(view)


def mix_views(view_i, view_j, mask: MixMask) -> np.ndarray:
    a, b = _pixels(view_i), _pixels(view_j)
    m = mask.mask if isinstance(mask, MixMask) else np.asarray(mask)
    if a.shape != b.shape or a.shape[:2] != m.shape:
        raise ParameterError(f"shape mismatch: {a.shape}, {b.shape}, mask {m.shape}")
    # selection, not arithmetic blending: keeps M=1 / M=0 cases bit-exact
    return np.where(m.astype(bool)[:, :, None], a, b)


def enumerate_pairs(n: int) -> list[tuple[int, int, int]]:
    """Ordered pairs (i, j), i != j over 1..n, densely numbered k = 1..n(n-1)."""
    if n < 2:
        raise ParameterError(f"need at least 2 views to form pairs, got {n}")
    pairs = [(i, j) for i in range(1, n + 1) for j in range(1, n + 1) if i != j]
    return [(i, j, k) for k, (i, j) in enumerate(pairs, start=1)]


def build_training_samples(image, seg_mask, anchor: GaussianParams = ANCHOR,
                           rng: np.random.Generator | None = None, n_views: int = 3,
                           subsample: int | None = None,
                           perturbed: list[GaussianParams] | None = None,
                           radius_range=RADIUS_RANGE, sigma_range=SIGMA_RANGE,
                           patch_count_range=PATCH_COUNT_RANGE,
                           patch_frac_range=PATCH_FRAC_RANGE) -> list[AugmentedSample]:
    if rng is None:
        rng = np.random.default_rng()
    arr = as_image(image)
    seg_mask = np.asarray(seg_mask)
    if seg_mask.shape != arr.shape[:2]:
        raise ParameterError(f"mask shape {seg_mask.shape} does not match image {arr.shape[:2]}")
    if not np.isin(seg_mask, (0, 1)).all():
        raise ParameterError("segmentation mask must be binary")

    if perturbed is None:
        perturbed = sample_view_params(rng, n_views, radius_range, sigma_range)
    views = extract_view_bank(arr, anchor, perturbed)
    target = views[0].pixels
    pairs = enumerate_pairs(len(perturbed))
    if subsample is not None:
        if not 1 <= subsample <= len(pairs):
            raise ParameterError(f"subsample must be in [1, {len(pairs)}], got {subsample}")
        chosen = np.sort(rng.choice(len(pairs), size=subsample, replace=False))
        pairs = [pairs[c] for c in chosen]

    h, w = seg_mask.shape
    samples = []
    for i, j, k in pairs:
        mask = generate_mix_mask(rng, h, w, patch_count_range, patch_frac_range)
        samples.append(AugmentedSample(mix_views(views[i], views[j], mask), target,
                                       seg_mask, (i, j), k))
    return samples
