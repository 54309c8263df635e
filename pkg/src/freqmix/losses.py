"""Reconstruction (L1), segmentation (BCE) and combined objectives.

The sums over the K mixed samples are realized as means over the samples in
the batch, so the loss scale does not depend on the number of views.
"""
from __future__ import annotations

from dataclasses import dataclass

import torch


@dataclass
class LossConfig:
    alpha: float = 1.0
    bce_epsilon: float = 1e-7

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError(f"alpha must be non-negative, got {self.alpha}")
        if not 0 < self.bce_epsilon <= 1e-3:
            raise ValueError(f"bce_epsilon must lie in (0, 1e-3], got {self.bce_epsilon}")


@dataclass
class LossTerms:
    total: torch.Tensor
    sel: torch.Tensor
    seg: torch.Tensor


def _check_shapes(a: torch.Tensor, b: torch.Tensor):
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {tuple(a.shape)} vs {tuple(b.shape)}")


def reconstruction_loss(recon: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    _check_shapes(recon, target)
    per_sample = (target - recon).abs().flatten(1).mean(dim=1)
    return per_sample.mean()


def segmentation_loss(seg_prob: torch.Tensor, mask: torch.Tensor, eps: float = 1e-7) -> torch.Tensor:
    _check_shapes(seg_prob, mask)
    if not ((mask == 0) | (mask == 1)).all():
        raise ValueError("segmentation mask must be binary")
    p = seg_prob.clamp(eps, 1 - eps)
    bce = -(mask * torch.log(p) + (1 - mask) * torch.log(1 - p))
    return bce.flatten(1).mean(dim=1).mean()


def total_loss(recon, seg_prob, target, mask, cfg: LossConfig | None = None,
               use_ssl: bool = True) -> LossTerms:
    """L_sel + alpha * L_seg.  With `use_ssl` off, L_sel is reported but not optimized."""
    cfg = cfg or LossConfig()
    sel = reconstruction_loss(recon, target)
    seg = segmentation_loss(seg_prob, mask, cfg.bce_epsilon)
    total = cfg.alpha * seg
    if use_ssl:
        total = sel + total
    else:
        sel = sel.detach()
    return LossTerms(total, sel, seg)
