"""Conditional rate adaptation for the semantic stream.

The residual hyperprior r parameterizes a Gaussian entropy model for
the quantized semantic features s. Per-patch entropies (one patch = one
spatial position, all channels) are ceiled into a discrete rate set W,
and paired per-rate FC banks stretch or shrink each patch vector to its
allotted dimension. CBR accounting converts real dimensions to complex
symbols and charges a 5-bit-per-patch side channel for the rate map.

All log quantities are base 2 (bits).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .layers import Conv2d, Linear, Module, ModuleList, leaky_relu

RATE_SET = tuple(range(4, 129, 4))
RHO = 0.2
SIGMA_FLOOR = 1e-6
LIKELIHOOD_FLOOR = 1e-12
SIDE_BITS_PER_PATCH = 5  # ceil(log2 |W|)
_INV_LN2 = 1.0 / math.log(2.0)
_INV_ROOT2 = 1.0 / math.sqrt(2.0)


def quantize(t: Tensor, mode: str, rng=None) -> Tensor:
    """Additive U(-1/2,1/2) noise in train mode; round-half-away-from-zero
    (as a detached offset, so graphs stay connected) in test mode."""
    if mode == "train":
        if rng is None:
            raise ValueError("train-mode quantization needs an rng")
        return t + Tensor(rng.uniform(-0.5, 0.5, size=t.data.shape))
    if mode == "test":
        rounded = np.copysign(np.floor(np.abs(t.data) + 0.5), t.data)
        return t + Tensor(rounded - t.data)
    raise ValueError(f"mode must be 'train' or 'test', got {mode!r}")


def _clamp_min(t: Tensor, floor: float) -> Tensor:
    return t + ad.leaky_relu(floor - t, 0.0)


def _std_normal_cdf(x: Tensor) -> Tensor:
    return 0.5 * (1.0 + ad.erf(x * _INV_ROOT2))


def likelihood(s_tilde: Tensor, mu: Tensor, sigma: Tensor) -> Tensor:
    """P(s̃) under N(mu, sigma^2) convolved with U(-1/2,1/2): the CDF
    difference across the unit bin, floored at 1e-12."""
    upper = _std_normal_cdf((s_tilde - mu + 0.5) / sigma)
    lower = _std_normal_cdf((s_tilde - mu - 0.5) / sigma)
    return _clamp_min(upper - lower, LIKELIHOOD_FLOOR)


class HyperSynthesis(Module):
    """conv - LeakyReLU - conv mapping r̃ to (mu, sigma) for s̃."""

    def __init__(self, c_r, c_s, rng, hidden=None):
        super().__init__()
        hidden = c_r if hidden is None else hidden
        self.conv1 = Conv2d(c_r, hidden, 3, rng)
        self.conv2 = Conv2d(hidden, 2 * c_s, 3, rng)
        self.c_s = c_s

    def __call__(self, r_tilde: Tensor):
        out = self.conv2(leaky_relu(self.conv1(r_tilde)))
        mu = out[:, : self.c_s]
        sigma = ad.softplus(out[:, self.c_s :]) + SIGMA_FLOOR
        return mu, sigma


class FactorizedPrior(Module):
    """Learned per-channel CDF for the hyperprior: a 1-3-3-1 stack of
    monotone affine layers with bounded tanh gates, squashed by a final
    sigmoid. Nonnegative weights (softplus) and |gate| < 1 keep every
    channel's CDF strictly increasing."""

    _UNIT_SLOPE_RAW = math.log(math.expm1((1.0 / 9.0) ** (1.0 / 3.0)))

    def __init__(self, channels, rng):
        super().__init__()
        raw = self._UNIT_SLOPE_RAW
        self.w1 = Tensor(np.full((channels, 1, 3), raw), requires_grad=True)
        self.b1 = Tensor(rng.uniform(-0.5, 0.5, (channels, 1, 3)), requires_grad=True)
        self.a1 = Tensor(np.zeros((channels, 1, 3)), requires_grad=True)
        self.w2 = Tensor(np.full((channels, 3, 3), raw), requires_grad=True)
        self.b2 = Tensor(rng.uniform(-0.5, 0.5, (channels, 1, 3)), requires_grad=True)
        self.a2 = Tensor(np.zeros((channels, 1, 3)), requires_grad=True)
        self.w3 = Tensor(np.full((channels, 3, 1), raw), requires_grad=True)
        self.b3 = Tensor(np.zeros((channels, 1, 1)), requires_grad=True)
        self.channels = channels

    def cdf(self, x: Tensor) -> Tensor:
        """x: [B,C,L,1] -> CDF values in (0,1), same shape."""
        y = x @ ad.softplus(self.w1) + self.b1
        y = y + ad.tanh(self.a1) * ad.tanh(y)
        y = y @ ad.softplus(self.w2) + self.b2
        y = y + ad.tanh(self.a2) * ad.tanh(y)
        return ad.sigmoid(y @ ad.softplus(self.w3) + self.b3)

    def __call__(self, r_tilde: Tensor) -> Tensor:
        """Elementwise likelihood of r̃ [B,C,H,W] under the prior."""
        batch, channels, height, width = r_tilde.data.shape
        if channels != self.channels:
            raise ValueError(
                f"prior built for {self.channels} channels, got {channels}"
            )
        flat = r_tilde.reshape(batch, channels, height * width, 1)
        p = self.cdf(flat + 0.5) - self.cdf(flat - 0.5)
        return _clamp_min(p, LIKELIHOOD_FLOOR).reshape(
            batch, channels, height, width
        )


def rate_term(s_tilde, r_tilde, mu, sigma, prior: FactorizedPrior) -> Tensor:
    """Total bits: -sum log2 p(s̃ | entropy model) - sum log2 p(r̃ | prior)."""
    p_s = likelihood(s_tilde, mu, sigma)
    p_r = prior(r_tilde)
    return -(ad.log(p_s).sum() + ad.log(p_r).sum()) * _INV_LN2


@dataclass
class RateAllocation:
    """Per-patch entropies alpha [B,H,W], their ceilings into W, and the
    count of patches clamped at max(W)."""

    alpha: np.ndarray
    alpha_bar: np.ndarray
    clamped: int
    rate_set: tuple

    @property
    def k_s(self):
        return self.alpha.shape[1] * self.alpha.shape[2]

    def totals(self):
        """Sum of allotted dimensions per image, [B]."""
        return self.alpha_bar.sum(axis=(1, 2))

    def indices(self):
        """alpha_bar as indices into the rate set, [B,H,W]."""
        return np.searchsorted(self.rate_set, self.alpha_bar)


def allocate_rates(p_s, rho=RHO, rate_set=RATE_SET) -> RateAllocation:
    """Ceiling allocation: alpha_i = -rho * sum_channels log2 p; the patch
    rate is the smallest w in the set with w >= alpha_i, clamped at the
    largest w (clamp occurrences counted, not raised)."""
    p = p_s.data if isinstance(p_s, Tensor) else np.asarray(p_s)
    rates = np.asarray(rate_set)
    if p.ndim != 4:
        raise ValueError("expected likelihoods shaped [B,C,H,W]")
    alpha = -rho * np.log2(p).sum(axis=1)
    idx = np.searchsorted(rates, alpha, side="left")
    clamped = int((idx == len(rates)).sum())
    alpha_bar = rates[np.minimum(idx, len(rates) - 1)]
    return RateAllocation(
        alpha=alpha, alpha_bar=alpha_bar, clamped=clamped, rate_set=tuple(rate_set)
    )


class RateBanks(Module):
    """Paired per-rate FC banks plus learned rate tokens.

    The encoder adds the token of the patch's rate to the patch vector
    and maps it through the bank of that rate; the decoder bank maps the
    received reals back to the embedding dimension. Banks initialize to
    truncated identities so the square case starts as a perfect round
    trip; tokens initialize to zero.
    """

    def __init__(self, c_s, rng, rate_set=RATE_SET):
        super().__init__()
        self.c_s = c_s
        self.rate_set = tuple(rate_set)
        self.tokens = Tensor(
            np.zeros((len(self.rate_set), c_s)), requires_grad=True
        )
        enc, dec = [], []
        for w in self.rate_set:
            fwd = Linear(c_s, w, rng)
            fwd.weight.data = np.eye(c_s, w)
            inv = Linear(w, c_s, rng)
            inv.weight.data = np.eye(w, c_s)
            enc.append(fwd)
            dec.append(inv)
        self.enc = ModuleList(enc)
        self.dec = ModuleList(dec)

    def encode(self, s_tilde: Tensor, alloc: RateAllocation):
        """Flatten patches, add rate tokens, stretch each to its rate.

        Returns one real-valued Tensor [sum(alpha_bar)] per image, in
        raster patch order.
        """
        batch, channels, height, width = s_tilde.data.shape
        if channels != self.c_s:
            raise ValueError(f"banks built for {self.c_s} channels, got {channels}")
        if alloc.alpha_bar.shape != (batch, height, width):
            raise ValueError("allocation grid does not match the feature grid")
        idx = alloc.indices().reshape(batch, height * width)
        patches = s_tilde.transpose(0, 2, 3, 1).reshape(
            batch, height * width, channels
        )
        vectors = patches + self.tokens[idx]
        outs = []
        for b in range(batch):
            parts = [
                self.enc[idx[b, p]](vectors[b, p : p + 1]).reshape(-1)
                for p in range(height * width)
            ]
            outs.append(ad.concat(parts, axis=0))
        return outs

    def decode(self, reals: Tensor, alloc_row: np.ndarray) -> Tensor:
        """Inverse-map one image's reals back to a [1,C,H,W] feature grid.

        alloc_row is that image's alpha_bar grid [H,W]; a length mismatch
        between the symbol stream and sum(alpha_bar) is a hard error.
        """
        height, width = alloc_row.shape
        widths = alloc_row.reshape(-1)
        total = int(widths.sum())
        if reals.data.shape != (total,):
            raise ValueError(
                f"semantic payload holds {reals.data.shape} reals, "
                f"allocation expects ({total},)"
            )
        indices = np.searchsorted(self.rate_set, widths)
        offsets = np.concatenate([[0], np.cumsum(widths)])
        parts = []
        for p in range(height * width):
            segment = reals[offsets[p] : offsets[p + 1]].reshape(1, -1)
            parts.append(self.dec[indices[p]](segment))
        grid = ad.concat(parts, axis=0).reshape(1, height, width, self.c_s)
        return grid.transpose(0, 3, 1, 2)


def cbr(alloc_totals, m: int, k: int) -> float:
    """Channel bandwidth ratio (ceil(sum(alpha_bar)/2) + m) / k with the
    semantic dimensions paired into complex symbols."""
    if k == 0:
        raise ValueError("source dimension k must be positive")
    return (math.ceil(int(alloc_totals) / 2) + m) / k


def cbr_real_dims(alloc_totals, m: int, k: int) -> float:
    """Diagnostic variant counting semantic real dimensions directly."""
    if k == 0:
        raise ValueError("source dimension k must be positive")
    return (int(alloc_totals) + m) / k


def side_channel_symbols(k_s: int) -> int:
    """QPSK symbols to convey the per-patch rate map out of band."""
    return math.ceil(SIDE_BITS_PER_PATCH * k_s / 2)


def pack_rate_indices(indices) -> bytes:
    """Pack rate-set indices (5 bits each, big-endian) into bytes."""
    bits = []
    for value in np.asarray(indices).reshape(-1):
        if not 0 <= value < 32:
            raise ValueError("rate index out of 5-bit range")
        bits.extend((int(value) >> shift) & 1 for shift in range(4, -1, -1))
    while len(bits) % 8:
        bits.append(0)
    out = bytearray()
    for i in range(0, len(bits), 8):
        byte = 0
        for bit in bits[i : i + 8]:
            byte = (byte << 1) | bit
        out.append(byte)
    return bytes(out)


def unpack_rate_indices(blob: bytes, count: int) -> np.ndarray:
    """Inverse of pack_rate_indices for `count` indices."""
    if len(blob) * 8 < count * SIDE_BITS_PER_PATCH:
        raise ValueError("side-channel blob too short")
    bits = []
    for byte in blob:
        bits.extend((byte >> shift) & 1 for shift in range(7, -1, -1))
    out = np.empty(count, dtype=np.int64)
    for i in range(count):
        value = 0
        for bit in bits[i * 5 : i * 5 + 5]:
            value = (value << 1) | bit
        out[i] = value
    return out
