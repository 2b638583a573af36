"""Fixed-point encoding for the masked aggregation path.

Weights are scaled to 64-bit integers so that additive noise cancels
bit-exactly; int64 arithmetic wraps modulo 2**64, which preserves exact
cancellation even on overflow. Values return to floats only after unmasking.
"""

from __future__ import annotations

import numpy as np

SCALE_BITS = 24
SCALE = 1 << SCALE_BITS
DEFAULT_NOISE_BITS = 40


def encode(values: np.ndarray) -> np.ndarray:
    """Scale real-valued weights to int64 fixed point."""
    return np.round(np.asarray(values, dtype=np.float64) * SCALE).astype(np.int64)


def decode(words: np.ndarray) -> np.ndarray:
    """Return fixed-point words to float64 weights."""
    return np.asarray(words, dtype=np.float64) / SCALE


def generate_noise(length: int, seed: int, width_bits: int = DEFAULT_NOISE_BITS) -> np.ndarray:
    """Seeded uniform noise over [-2^width_bits, 2^width_bits) fixed-point units.

    The width is configurable so the noise magnitude can be matched to the
    expected magnitude of the masked sums.
    """
    rng = np.random.default_rng(seed)
    lo, hi = -(1 << width_bits), 1 << width_bits
    return rng.integers(lo, hi, size=length, dtype=np.int64)
