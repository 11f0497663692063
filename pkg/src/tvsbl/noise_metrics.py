"""Seeded Gaussian noise at an exact target SNR, and the SNR / relative error
metrics used to score restorations."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import UndefinedMetricError

__all__ = ["NoisyObservation", "snr", "relative_error", "add_noise", "make_rng"]


def make_rng(seed: int) -> np.random.Generator:
    """PCG64 generator; the stream for a given seed is stable across platforms."""
    return np.random.Generator(np.random.PCG64(seed))


@dataclass(frozen=True, eq=False)
class NoisyObservation:
    data: np.ndarray
    clean: Optional[np.ndarray]
    noise: Optional[np.ndarray]
    achieved_snr: float
    seed: Optional[int]


def snr(x, n) -> float:
    """``20 log10(||x|| / ||n||)`` in decibels."""
    nn = np.linalg.norm(np.ravel(n))
    if nn == 0:
        raise UndefinedMetricError("SNR is undefined for a zero noise vector")
    return 20.0 * np.log10(np.linalg.norm(np.ravel(x)) / nn)


def relative_error(estimate, truth) -> float:
    t = np.ravel(np.asarray(truth, dtype=float))
    tn = np.linalg.norm(t)
    if tn == 0:
        raise UndefinedMetricError("relative error is undefined for a zero reference")
    return float(np.linalg.norm(np.ravel(estimate) - t) / tn)


def add_noise(x, target_snr: float, seed: int) -> NoisyObservation:
    """Add white Gaussian noise scaled so that ``snr(x, noise) == target_snr``.

    The noise direction comes from a PCG64 stream seeded with ``seed``; only
    its norm is set analytically.
    """
    x = np.asarray(x, dtype=float)
    xn = np.linalg.norm(x)
    if xn == 0:
        raise UndefinedMetricError("cannot scale noise to an SNR for a zero signal")
    if not np.isfinite(target_snr):
        raise ValueError(f"target SNR must be finite, got {target_snr}")
    z = make_rng(seed).standard_normal(x.shape)
    noise = z * (xn / (np.linalg.norm(z) * 10.0 ** (target_snr / 20.0)))
    return NoisyObservation(x + noise, x, noise, snr(x, noise), seed)
