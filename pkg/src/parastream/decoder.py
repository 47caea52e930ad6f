"""Semantic decoder: multi-scale latents from the conventional
reconstruction, fused with the semantic features by SNR-conditioned
per-pixel aggregation, then upsampled back to an image.

The latent pyramid u_0..u_L comes from a dense entry block followed by
L stride-2 stages. Reconstruction starts at v_0 = s_hat and repeats
v_l = up(aggregate(v_{l-1}, u_{L+1-l}, snr)) until v_L is the image.
Each aggregation stage owns its parameters; nothing is shared between
scales.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import DimensionError, Tensor
from .layers import (
    GDN,
    Conv2d,
    ConvTranspose2d,
    Embedding,
    Linear,
    Module,
    ModuleList,
    PReLU,
    leaky_relu,
)

LATENT_WIDTHS = (16, 32, 64, 64, 32)
UP_WIDTHS = (64, 64, 32, 3)
SNR_LEVELS = 21
SNR_EMBED_DIM = 32
RESIDUAL_SCALE = 0.2


class DenseBlock(Module):
    """Three convs with dense connections and a scaled residual."""

    def __init__(self, channels, growth, rng):
        super().__init__()
        self.conv1 = Conv2d(channels, growth, 3, rng)
        self.conv2 = Conv2d(channels + growth, growth, 3, rng)
        self.conv3 = Conv2d(channels + 2 * growth, channels, 3, rng)

    def __call__(self, x: Tensor) -> Tensor:
        g1 = leaky_relu(self.conv1(x))
        g2 = leaky_relu(self.conv2(ad.concat([x, g1], axis=1)))
        out = self.conv3(ad.concat([x, g1, g2], axis=1))
        return x + RESIDUAL_SCALE * out


class RRDB(Module):
    """Residual-in-residual stack of three dense blocks."""

    def __init__(self, channels, growth, rng):
        super().__init__()
        self.block1 = DenseBlock(channels, growth, rng)
        self.block2 = DenseBlock(channels, growth, rng)
        self.block3 = DenseBlock(channels, growth, rng)

    def __call__(self, x: Tensor) -> Tensor:
        out = self.block3(self.block2(self.block1(x)))
        return x + RESIDUAL_SCALE * out


class DownStage(Module):
    """Two (conv + GDN + LeakyReLU) stages, the first at stride 2."""

    def __init__(self, c_in, c_out, rng):
        super().__init__()
        self.conv1 = Conv2d(c_in, c_out, 3, rng, stride=2)
        self.gdn1 = GDN(c_out)
        self.conv2 = Conv2d(c_out, c_out, 3, rng)
        self.gdn2 = GDN(c_out)

    def __call__(self, x: Tensor) -> Tensor:
        x = leaky_relu(self.gdn1(self.conv1(x)))
        return leaky_relu(self.gdn2(self.conv2(x)))


class PagNet(Module):
    """Per-pixel SNR-conditioned aggregation of two equal-shape streams.

    Each stream's features pass a 3x3 conv, are gated channel-wise by a
    projected SNR embedding, and are reduced to one logit per pixel by a
    fully-connected layer shared between the two streams. The softmax
    over the stream axis yields weights that sum to one per pixel.
    """

    def __init__(self, channels, rng, embed_dim=SNR_EMBED_DIM, levels=SNR_LEVELS):
        super().__init__()
        self.conv_v = Conv2d(channels, channels, 3, rng)
        self.conv_u = Conv2d(channels, channels, 3, rng)
        self.snr_embed = Embedding(levels, embed_dim, rng)
        self.proj = Linear(embed_dim, channels, rng)
        self.fc = Linear(channels, 1, rng)
        self.levels = levels

    def _logit(self, features: Tensor, gate: Tensor) -> Tensor:
        gated = features * gate
        batch, channels, height, width = gated.data.shape
        flat = gated.transpose(0, 2, 3, 1)
        logit = self.fc(flat)  # [B,H,W,1]
        return logit.transpose(0, 3, 1, 2)

    def stream_weights(self, v: Tensor, u: Tensor, snr_db) -> Tensor:
        if v.data.shape != u.data.shape:
            raise DimensionError(
                f"stream shapes differ: {v.data.shape} vs {u.data.shape}"
            )
        level = int(np.clip(np.round(snr_db), 0, self.levels - 1))
        embed = self.proj(self.snr_embed([level]))
        gate = embed.reshape(1, -1, 1, 1)
        logits = ad.concat(
            [self._logit(self.conv_v(v), gate), self._logit(self.conv_u(u), gate)],
            axis=1,
        )
        return ad.softmax_per_pixel(logits)  # [B,2,H,W]

    def __call__(self, v: Tensor, u: Tensor, snr_db) -> Tensor:
        weights = self.stream_weights(v, u, snr_db)
        return weights[:, 0:1] * v + weights[:, 1:2] * u


class UpBlock(Module):
    """Stride-2 transpose conv (exact doubling) + inverse GDN + activation."""

    def __init__(self, c_in, c_out, rng, last=False):
        super().__init__()
        self.tconv = ConvTranspose2d(c_in, c_out, 4, rng, stride=2, padding=1)
        self.gdn = GDN(c_out, inverse=True)
        if not last:
            self.act = PReLU(c_out)
        self.last = last

    def __call__(self, x: Tensor) -> Tensor:
        x = self.gdn(self.tconv(x))
        if self.last:
            return ad.sigmoid(x)
        return self.act(x)


class SemanticDecoder(Module):
    def __init__(
        self,
        rng,
        latent_widths=LATENT_WIDTHS,
        up_widths=UP_WIDTHS,
        growth=16,
        c_in=3,
    ):
        super().__init__()
        levels = len(up_widths)
        if len(latent_widths) != levels + 1:
            raise ValueError("need one more latent width than up widths")
        for i in range(levels - 1):
            if up_widths[i] != latent_widths[levels - 1 - i]:
                raise ValueError(
                    f"up width {i} must equal latent width {levels - 1 - i} "
                    "so the aggregation streams match"
                )
        self.latent_widths = tuple(latent_widths)
        self.up_widths = tuple(up_widths)
        self.entry = Conv2d(c_in, latent_widths[0], 3, rng)
        self.rrdb = RRDB(latent_widths[0], growth, rng)
        self.extractors = ModuleList(
            [
                DownStage(latent_widths[i], latent_widths[i + 1], rng)
                for i in range(levels)
            ]
        )
        agg_channels = [latent_widths[-1]] + list(up_widths[: levels - 1])
        self.pagnets = ModuleList([PagNet(c, rng) for c in agg_channels])
        self.ups = ModuleList(
            [
                UpBlock(agg_channels[i], up_widths[i], rng, last=(i == levels - 1))
                for i in range(levels)
            ]
        )

    def extract_latents(self, x_c: Tensor):
        """u_0..u_L, u_0 at image scale and each u_l at half the previous."""
        u = [self.rrdb(self.entry(x_c))]
        for stage in self.extractors:
            u.append(stage(u[-1]))
        return u

    def __call__(self, x_c: Tensor, s_hat: Tensor, snr_db) -> Tensor:
        latents = self.extract_latents(x_c)
        levels = len(self.ups)
        if s_hat.data.shape[1:] != latents[levels].data.shape[1:]:
            raise DimensionError(
                f"semantic features {s_hat.data.shape[1:]} must match the "
                f"deepest latent {latents[levels].data.shape[1:]}"
            )
        v = s_hat
        for level in range(1, levels + 1):
            fused = self.pagnets[level - 1](v, latents[levels + 1 - level], snr_db)
            v = self.ups[level - 1](fused)
        return v
