"""Wireless channel simulation shared by both transmit streams.

Models z_hat = h * z + n with AWGN or block Rayleigh fading. All
randomness flows through counter-based generators keyed on
(seed, trial), so realizations are reproducible and trials can run in
any order. For a fading draw, gains are sampled before noise.
"""

from dataclasses import dataclass

import numpy as np

from .rng import make_rng

KINDS = ("awgn", "rayleigh_block")


@dataclass(frozen=True)
class ChannelConfig:
    kind: str = "awgn"
    snr_db: float = 10.0
    power: float = 1.0
    block_len: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}")
        if self.power <= 0:
            raise ValueError("power must be positive")
        if self.block_len < 1:
            raise ValueError("block_len must be at least 1")


@dataclass(frozen=True)
class ChannelRealization:
    h: np.ndarray
    n: np.ndarray
    sigma2: float


def normalize_power(z, power=1.0):
    """Scale z so its average symbol power is exactly `power`.

    The zero vector passes through unchanged.
    """
    z = np.asarray(z, dtype=np.complex128)
    if z.size == 0:
        raise ValueError("cannot normalize an empty vector")
    current = np.vdot(z, z).real
    if current == 0.0:
        return z
    return z * np.sqrt(power * z.size / current)


def snr_to_sigma2(snr_db, power=1.0):
    """Noise power sigma2 = power * 10^(-snr_db / 10)."""
    if power <= 0:
        raise ValueError("power must be positive")
    return power * 10.0 ** (-snr_db / 10.0)


def draw_realization(cfg, length, trial=0):
    """Sample gains and noise for `length` symbols at trial index `trial`."""
    rng = make_rng(cfg.seed, trial)
    sigma2 = snr_to_sigma2(cfg.snr_db, cfg.power)
    if cfg.kind == "awgn":
        h = np.ones(length, dtype=np.complex128)
    else:
        blocks = -(-length // cfg.block_len)
        g = (rng.standard_normal(blocks) + 1j * rng.standard_normal(blocks))
        h = np.repeat(g / np.sqrt(2.0), cfg.block_len)[:length]
    noise = rng.standard_normal(length) + 1j * rng.standard_normal(length)
    n = np.sqrt(sigma2 / 2.0) * noise
    return ChannelRealization(h=h, n=n, sigma2=sigma2)


def transmit(z, cfg, trial=0):
    """Pass power-normalized symbols through the configured channel."""
    z = np.asarray(z, dtype=np.complex128)
    real = draw_realization(cfg, z.shape[-1], trial)
    return real.h * z + real.n, real
