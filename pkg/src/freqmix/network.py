"""Coupled encoder / dual-decoder network.

The encoder E and the reconstruction decoder D_sel form a plain U-Net.  The
segmentation decoder D_seg never sees encoder skips directly: at every level
it concatenates its own upsampled features with the same-resolution D_sel
features, passes them through channel + spatial attention, then a conv block.

Tensors are NCHW throughout.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import torch
import torch.nn as nn


class ShapeError(ValueError):
    pass


# smooth default keeps the objective differentiable for finite-difference checks
ACTIVATIONS = {"silu": nn.SiLU, "relu": nn.ReLU}


@dataclass
class ModelConfig:
    depth: int = 4
    base_channels: int = 8
    in_channels: int = 3
    image_size: int = 64
    attention_enabled: bool = True
    max_channels: int = 512
    reduction: int = 8
    spatial_kernel: int = 7
    norm: str = "instance"
    activation: str = "silu"

    def __post_init__(self):
        if self.depth < 2:
            raise ValueError(f"depth must be >= 2, got {self.depth}")
        if self.base_channels < 4:
            raise ValueError(f"base_channels must be >= 4, got {self.base_channels}")
        if self.image_size % (2 ** self.depth):
            raise ValueError(f"image_size {self.image_size} not divisible by 2**{self.depth}")
        if self.in_channels not in (1, 3):
            raise ValueError(f"in_channels must be 1 or 3, got {self.in_channels}")
        if self.norm not in ("instance", "batch", "none"):
            raise ValueError(f"unknown norm {self.norm!r}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")

    def channels(self, level: int) -> int:
        return min(self.base_channels * 2 ** level, self.max_channels)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class ForwardOutput:
    recon: torch.Tensor
    seg_prob: torch.Tensor
    encoder_features: list[torch.Tensor] = field(default_factory=list)
    sel_features: list[torch.Tensor] = field(default_factory=list)
    seg_features: list[torch.Tensor] = field(default_factory=list)


def _norm(kind: str, ch: int) -> nn.Module:
    if kind == "instance":
        return nn.InstanceNorm2d(ch, affine=True)
    if kind == "batch":
        return nn.BatchNorm2d(ch)
    return nn.Identity()


class ConvBlock(nn.Sequential):
    def __init__(self, c_in: int, c_out: int, norm: str = "instance", activation: str = "silu"):
        bias = norm == "none"
        act = ACTIVATIONS[activation]
        super().__init__(
            nn.Conv2d(c_in, c_out, 3, padding=1, bias=bias), _norm(norm, c_out), act(),
            nn.Conv2d(c_out, c_out, 3, padding=1, bias=bias), _norm(norm, c_out), act(),
        )


class ChannelAttention(nn.Module):
    def __init__(self, channels: int, reduction: int = 8, activation: str = "silu"):
        super().__init__()
        hidden = max(1, channels // reduction)
        self.mlp = nn.Sequential(
            nn.Conv2d(channels, hidden, 1, bias=False),
            ACTIVATIONS[activation](),
            nn.Conv2d(hidden, channels, 1, bias=False),
        )

    def forward(self, x):
        avg = self.mlp(x.mean(dim=(2, 3), keepdim=True))
        mx = self.mlp(x.amax(dim=(2, 3), keepdim=True))
        return torch.sigmoid(avg + mx)


class SpatialAttention(nn.Module):
    def __init__(self, kernel_size: int = 7):
        super().__init__()
        self.conv = nn.Conv2d(2, 1, kernel_size, padding=kernel_size // 2, bias=False)

    def forward(self, x):
        desc = torch.cat([x.mean(dim=1, keepdim=True), x.amax(dim=1, keepdim=True)], dim=1)
        return torch.sigmoid(self.conv(desc))


class CBAM(nn.Module):
    """Channel gate followed by spatial gate."""

    def __init__(self, channels: int, reduction: int = 8, kernel_size: int = 7, activation: str = "silu"):
        super().__init__()
        self.channel = ChannelAttention(channels, reduction, activation)
        self.spatial = SpatialAttention(kernel_size)
        self.gates_open = False  # test hook: both gates forced to 1

    def forward(self, x):
        if self.gates_open:
            return x
        x = x * self.channel(x)
        return x * self.spatial(x)


class CoupledNetwork(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        L, ch = config.depth, config.channels
        block = lambda c_in, c_out: ConvBlock(c_in, c_out, config.norm, config.activation)  # noqa: E731

        self.enc = nn.ModuleList([block(config.in_channels, ch(0))])
        self.enc.extend(block(ch(l - 1), ch(l)) for l in range(1, L + 1))
        self.pool = nn.AvgPool2d(2)

        # decoder step d (1..L) works at resolution level r = L - d
        levels = [L - d for d in range(1, L + 1)]
        self.sel_up = nn.ModuleList(nn.ConvTranspose2d(ch(r + 1), ch(r), 2, stride=2) for r in levels)
        self.sel_blocks = nn.ModuleList(block(2 * ch(r), ch(r)) for r in levels)
        self.sel_head = nn.Conv2d(ch(0), config.in_channels, 1)

        self.seg_up = nn.ModuleList(nn.ConvTranspose2d(ch(r + 1), ch(r), 2, stride=2) for r in levels)
        if config.attention_enabled:
            self.seg_att = nn.ModuleList(
                CBAM(2 * ch(r), config.reduction, config.spatial_kernel, config.activation) for r in levels)
        else:
            self.seg_att = nn.ModuleList(nn.Identity() for _ in levels)
        self.seg_blocks = nn.ModuleList(block(2 * ch(r), ch(r)) for r in levels)
        self.seg_head = nn.Conv2d(ch(0), 1, 1)

    def set_attention_gates_open(self, flag: bool = True):
        for m in self.modules():
            if isinstance(m, CBAM):
                m.gates_open = flag

    def forward_encoder(self, x: torch.Tensor) -> list[torch.Tensor]:
        """Returns L+1 feature maps; level l has spatial size image_size / 2**l."""
        cfg = self.config
        if x.ndim != 4 or x.shape[1] != cfg.in_channels or x.shape[2:] != (cfg.image_size, cfg.image_size):
            raise ShapeError(f"expected N x {cfg.in_channels} x {cfg.image_size} x {cfg.image_size},"
                             f" got {tuple(x.shape)}")
        feats = [self.enc[0](x)]
        for block in self.enc[1:]:
            feats.append(block(self.pool(feats[-1])))
        return feats

    def forward_decoder_sel(self, enc_feats: list[torch.Tensor]):
        L = self.config.depth
        if len(enc_feats) != L + 1:
            raise ShapeError(f"expected {L + 1} encoder feature maps, got {len(enc_feats)}")
        f = enc_feats[L]
        sel_feats = []
        for d in range(1, L + 1):
            up = self.sel_up[d - 1](f)
            skip = enc_feats[L - d]
            if up.shape[2:] != skip.shape[2:]:
                raise ShapeError(f"skip size {tuple(skip.shape)} does not match {tuple(up.shape)}")
            f = self.sel_blocks[d - 1](torch.cat([up, skip], dim=1))
            sel_feats.append(f)
        return self.sel_head(f), sel_feats

    def forward_decoder_seg(self, bottleneck: torch.Tensor, sel_feats: list[torch.Tensor]):
        L = self.config.depth
        if len(sel_feats) != L:
            raise ShapeError(f"expected {L} reconstruction-decoder feature maps, got {len(sel_feats)}")
        f = bottleneck
        seg_feats = []
        for d in range(1, L + 1):
            x = torch.cat([self.seg_up[d - 1](f), sel_feats[d - 1]], dim=1)
            f = self.seg_blocks[d - 1](self.seg_att[d - 1](x))
            seg_feats.append(f)
        return torch.sigmoid(self.seg_head(f)), seg_feats

    def forward(self, x: torch.Tensor) -> ForwardOutput:
        enc = self.forward_encoder(x)
        recon, sel = self.forward_decoder_sel(enc)
        seg, segf = self.forward_decoder_seg(enc[-1], sel)
        return ForwardOutput(recon, seg, enc, sel, segf)


def build_network(config: ModelConfig, seed: int = 0) -> CoupledNetwork:
    """Fan-in scaled default initialization, reproducible from `seed`."""
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        return CoupledNetwork(config)


def parameter_count(net: nn.Module) -> int:
    return sum(p.numel() for p in net.parameters())
