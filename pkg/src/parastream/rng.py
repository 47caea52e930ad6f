"""Seed derivation for reproducible experiments.

Every random draw in the package goes through a Philox4x64-10 counter
generator keyed as ``key = (seed << 64) | substream``, so realizations
are portable across platforms and independent across substreams. Trial
parallelism derives one substream per trial.
"""

from __future__ import annotations

import numpy as np


def make_rng(seed: int, substream: int = 0) -> np.random.Generator:
    if seed < 0 or substream < 0:
        raise ValueError("seed and substream must be non-negative")
    return np.random.Generator(np.random.Philox(key=(int(seed) << 64) | int(substream)))
