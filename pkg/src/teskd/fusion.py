"""Top-down fusion of a teacher lateral feature with the coarser student feature."""
from __future__ import annotations

import enum

import torch
import torch.nn.functional as F
from torch import nn

from .errors import ConfigError, ShapeError


class FusionVariant(str, enum.Enum):
    MIXED = "mixed"
    ADD_ONLY = "add_only"
    CONCAT_ONLY = "concat_only"
    NO_CONNECTION = "no_connection"

    @classmethod
    def parse(cls, value) -> "FusionVariant":
        if isinstance(value, cls):
            return value
        try:
            return cls(value)
        except ValueError:
            raise ConfigError(
                f"fusion.variant must be one of {[v.value for v in cls]}, got {value!r}"
            ) from None


class ConvBlock(nn.Module):
    """1x1 conv -> batch norm -> ReLU."""

    def __init__(self, cin, cout):
        super().__init__()
        self.conv = nn.Conv2d(cin, cout, kernel_size=1, bias=False)
        self.norm = nn.BatchNorm2d(cout)
        self.act = nn.ReLU(inplace=False)

    def forward(self, x):
        return self.act(self.norm(self.conv(x)))


class UpsampleBlock(nn.Module):
    """Nearest-neighbour 2x upsampling followed by a :class:`ConvBlock`."""

    def __init__(self, cin, cout):
        super().__init__()
        self.block = ConvBlock(cin, cout)

    def forward(self, x):
        return self.block(F.interpolate(x, scale_factor=2, mode="nearest"))


class FusionBlock(nn.Module):
    """Builds student feature ``S_b`` from teacher lateral ``T_b`` and ``S_{b+1}``.

    Every variant outputs ``top_channels`` channels at the lateral's
    resolution. Modules a variant does not use are not created, so the
    parameter count reflects what is actually trained.
    """

    def __init__(self, lateral_channels: int, top_channels: int, variant="mixed"):
        super().__init__()
        self.variant = FusionVariant.parse(variant)
        self.lateral_channels = lateral_channels
        self.top_channels = top_channels
        self.top_transform = UpsampleBlock(top_channels, top_channels)
        if self.variant is not FusionVariant.NO_CONNECTION:
            self.lateral_transform = ConvBlock(lateral_channels, top_channels)
        if self.variant in (FusionVariant.MIXED, FusionVariant.CONCAT_ONLY):
            self.post_concat_conv = ConvBlock(2 * top_channels, top_channels)

    def _check(self, lateral, top):
        if lateral.shape[1] != self.lateral_channels or top.shape[1] != self.top_channels:
            raise ShapeError(
                f"fusion block expects lateral/top channels "
                f"({self.lateral_channels}, {self.top_channels}), "
                f"got ({lateral.shape[1]}, {top.shape[1]})"
            )
        if lateral.shape[0] != top.shape[0] or (
            lateral.shape[2] != 2 * top.shape[2] or lateral.shape[3] != 2 * top.shape[3]
        ):
            raise ShapeError(
                f"top feature {list(top.shape)} must have exactly half the spatial size "
                f"of lateral feature {list(lateral.shape)}"
            )

    def forward(self, lateral: torch.Tensor, top: torch.Tensor) -> torch.Tensor:
        self._check(lateral, top)
        up = self.top_transform(top)
        v = self.variant
        if v is FusionVariant.NO_CONNECTION:
            return up
        lat = self.lateral_transform(lateral)
        if v is FusionVariant.ADD_ONLY:
            return lat + up
        if v is FusionVariant.CONCAT_ONLY:
            return self.post_concat_conv(torch.cat([lat, up], dim=1))
        return self.post_concat_conv(torch.cat([lat + up, up], dim=1))


def mfm_fuse(block: FusionBlock, lateral: torch.Tensor, top: torch.Tensor, variant=None):
    """Functional entry point; ``variant`` must match the block if given."""
    if variant is not None and FusionVariant.parse(variant) is not block.variant:
        raise ConfigError(
            f"block was built for variant '{block.variant.value}', "
            f"called with '{FusionVariant.parse(variant).value}'"
        )
    return block(lateral, top)
