"""Gaussian high-pass frequency views.

A frequency view is the residual ``x - x * g(r, sigma)`` of an image after
subtracting its Gaussian-blurred copy, i.e. the image with its low-frequency
content removed.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

RADIUS_RANGE = (5, 50)
SIGMA_RANGE = (2.0, 22.0)


class ParameterError(ValueError):
    pass


@dataclass(frozen=True)
class GaussianParams:
    radius: int
    sigma: float

    def __post_init__(self):
        if int(self.radius) != self.radius or self.radius < 1:
            raise ParameterError(f"radius must be an integer >= 1, got {self.radius!r}")
        if not np.isfinite(self.sigma) or self.sigma <= 0:
            raise ParameterError(f"sigma must be positive, got {self.sigma!r}")


ANCHOR = GaussianParams(27, 9.0)


@dataclass
class FrequencyView:
    pixels: np.ndarray  # H x W x C, signed
    params: GaussianParams
    view_index: int


def _kernel_1d(params: GaussianParams) -> np.ndarray:
    u = np.arange(-params.radius, params.radius + 1, dtype=np.float64)
    k = np.exp(-(u ** 2) / (2.0 * params.sigma ** 2))
    return k / k.sum()


def build_gaussian_kernel(params: GaussianParams) -> np.ndarray:
    """Normalized (2r+1) x (2r+1) Gaussian kernel."""
    k = _kernel_1d(params)
    kernel = np.outer(k, k)
    return kernel / kernel.sum()


def as_image(image) -> np.ndarray:
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3 or arr.shape[2] not in (1, 3) or min(arr.shape[:2]) < 1:
        raise ParameterError(f"expected an H x W x C image with C in {{1, 3}}, got shape {arr.shape}")
    return arr


def gaussian_blur(image, params: GaussianParams) -> np.ndarray:
    arr = as_image(image)
    size = 2 * params.radius + 1
    if size > min(arr.shape[:2]):
        raise ParameterError(
            f"kernel size {size} exceeds image size {arr.shape[0]}x{arr.shape[1]}")
    # the 2-D kernel is an outer product, so two 1-D passes give the same result
    k = _kernel_1d(params)
    out = ndimage.correlate1d(arr, k, axis=0, mode="reflect")
    return ndimage.correlate1d(out, k, axis=1, mode="reflect")


def high_pass_view(image, params: GaussianParams, view_index: int = 0) -> FrequencyView:
    arr = as_image(image)
    return FrequencyView(arr - gaussian_blur(arr, params), params, view_index)


def sample_view_params(rng: np.random.Generator, count: int,
                       radius_range=RADIUS_RANGE, sigma_range=SIGMA_RANGE) -> list[GaussianParams]:
    """Draw `count` parameter pairs: integer radius and real sigma, both uniform.

    Small images need a narrower `radius_range` so the kernel still fits.
    """
    if count < 2:
        raise ParameterError(f"need at least 2 perturbed views, got {count}")
    if not (1 <= radius_range[0] <= radius_range[1]) or not (0 < sigma_range[0] <= sigma_range[1]):
        raise ParameterError(f"invalid ranges radius={radius_range} sigma={sigma_range}")
    radii = rng.integers(radius_range[0], radius_range[1] + 1, size=count)
    sigmas = rng.uniform(sigma_range[0], sigma_range[1], size=count)
    return [GaussianParams(int(r), float(s)) for r, s in zip(radii, sigmas)]


def extract_view_bank(image, anchor: GaussianParams,
                      perturbed: list[GaussianParams]) -> list[FrequencyView]:
    """Anchor view at index 0 followed by one view per perturbed parameter set."""
    if not perturbed:
        raise ParameterError("perturbed parameter list is empty")
    arr = as_image(image)
    views = [high_pass_view(arr, anchor, 0)]
    views += [high_pass_view(arr, p, n) for n, p in enumerate(perturbed, start=1)]
    return views
