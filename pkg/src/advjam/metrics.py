"""Trace summaries: trailing moving averages and empirical PDF/CDF tables."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def moving_average(values, window: int) -> np.ndarray:
    """Trailing mean over ``window`` slots; the first slots average what exists."""
    x = np.asarray(values, dtype=np.float64)
    if x.size == 0:
        raise ValueError("empty trace")
    if window < 1:
        raise ValueError("window must be positive")
    csum = np.concatenate([[0.0], np.cumsum(x)])
    idx = np.arange(1, x.size + 1)
    lo = np.maximum(idx - window, 0)
    return (csum[idx] - csum[lo]) / (idx - lo)


@dataclass
class Histogram:
    bin_lower: np.ndarray
    pdf: np.ndarray  # probability mass per bin
    cdf: np.ndarray

    @property
    def bin_width(self) -> float:
        return float(self.bin_lower[1] - self.bin_lower[0]) if len(self.bin_lower) > 1 else float("nan")


def empirical_pdf_cdf(values, bin_width: float = 0.1, from_slot: int = 0) -> Histogram:
    """Fixed-width histogram over ``[0, max]`` of ``values[from_slot:]``."""
    x = np.asarray(values, dtype=np.float64)[from_slot:]
    if x.size == 0:
        raise ValueError("empty trace")
    if np.any(x < 0):
        raise ValueError("sum rates must be nonnegative")
    # the small offset keeps values sitting exactly on a bin edge in that bin
    idx = np.floor(x / bin_width + 1e-9).astype(np.int64)
    counts = np.bincount(idx, minlength=int(idx.max()) + 1)
    pdf = counts / x.size
    return Histogram(np.arange(len(counts)) * bin_width, pdf, np.cumsum(counts) / x.size)
