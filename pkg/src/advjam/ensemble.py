"""Snapshot ensembles with minimum transition correlation.

While the central unit retrains under attack, it saves one network per
fixed-length interval together with a count tensor of the victims'
channel-to-channel transitions in that interval, keyed by the (integer
binned) sum rate of the earlier slot. Intervals whose transition counts
overlap least with the others are kept, and the users then cycle through
those networks on a fixed period.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import qnet
from .channel import NONE
from .config import ConfigError


@dataclass
class TransitionMatrix:
    """Counts indexed ``[previous channel, current channel, reward bin]``."""

    counts: np.ndarray
    interval: int = 0

    @classmethod
    def empty(cls, n_channels: int, reward_bins: int, interval: int = 0) -> "TransitionMatrix":
        return cls(np.zeros((n_channels, n_channels, reward_bins), dtype=np.int64), interval)

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def reward_bin(sum_rate: float, reward_bins: int) -> int:
    return int(min(max(np.floor(sum_rate), 0), reward_bins - 1))


def accumulate_transition(matrix: TransitionMatrix, prev_channels, cur_channels,
                          prev_sum_rate: float) -> TransitionMatrix:
    """Count each victim that transmitted in both slots; updates in place."""
    r = reward_bin(prev_sum_rate, matrix.counts.shape[2])
    for a1, a2 in zip(prev_channels, cur_channels):
        if a1 != NONE and a2 != NONE:
            matrix.counts[a1, a2, r] += 1
    return matrix


def correlation(m1: TransitionMatrix | np.ndarray, m2: TransitionMatrix | np.ndarray) -> float:
    """Sum of the element-wise product of two count tensors."""
    a = m1.counts if isinstance(m1, TransitionMatrix) else np.asarray(m1)
    b = m2.counts if isinstance(m2, TransitionMatrix) else np.asarray(m2)
    if a.shape != b.shape:
        raise ValueError(f"transition matrix shapes differ: {a.shape} vs {b.shape}")
    return float(np.sum(a.astype(np.float64) * b))


def correlation_table(matrices) -> np.ndarray:
    """Pairwise correlations, shape ``(n, n)``."""
    flat = np.stack([(m.counts if isinstance(m, TransitionMatrix) else np.asarray(m)).ravel()
                     for m in matrices]).astype(np.float64)
    return flat @ flat.T


@dataclass
class Snapshot:
    interval: int
    params: qnet.QNetworkParams
    matrix: TransitionMatrix


@dataclass
class SnapshotLibrary:
    snapshots: list[Snapshot] = field(default_factory=list)

    def add(self, interval: int, params: qnet.QNetworkParams, matrix: TransitionMatrix) -> None:
        if self.snapshots and interval <= self.snapshots[-1].interval:
            raise ValueError("snapshot intervals must strictly increase")
        self.snapshots.append(Snapshot(interval, qnet.clone_params(params), matrix))

    def __len__(self):
        return len(self.snapshots)

    @property
    def intervals(self) -> list[int]:
        return [s.interval for s in self.snapshots]

    @property
    def matrices(self) -> list[TransitionMatrix]:
        return [s.matrix for s in self.snapshots]


@dataclass
class EnsembleSchedule:
    intervals: list[int]
    models: list[qnet.QNetworkParams]
    reload_period: int

    @property
    def dwell(self) -> int:
        return self.reload_period // len(self.models)


def correlation_scores(matrices) -> np.ndarray:
    """Each matrix's summed correlation with every other matrix."""
    table = correlation_table(matrices)
    return table.sum(axis=1) - np.diag(table)


def select_intervals(matrices, intervals, n_ensemble: int, exclude_after: int | None = None) -> list[int]:
    """The ``n_ensemble`` candidate intervals with the lowest correlation scores.

    Candidates are the intervals ``<= exclude_after``; ties go to the earlier
    interval and the result is returned in interval order.
    """
    intervals = list(intervals)
    keep = [i for i, n in enumerate(intervals) if exclude_after is None or n <= exclude_after]
    if n_ensemble > len(keep):
        raise ConfigError(f"need {n_ensemble} intervals but only {len(keep)} are eligible")
    scores = correlation_scores([matrices[i] for i in keep])
    order = sorted(range(len(keep)), key=lambda i: (scores[i], intervals[keep[i]]))
    return sorted(intervals[keep[i]] for i in order[:n_ensemble])


def select_ensemble(library: SnapshotLibrary, n_ensemble: int, reload_period: int,
                    exclude_after: int | None = None) -> EnsembleSchedule:
    chosen = select_intervals(library.matrices, library.intervals, n_ensemble, exclude_after)
    by_interval = {s.interval: s.params for s in library.snapshots}
    return EnsembleSchedule(chosen, [by_interval[n] for n in chosen], reload_period)


def reload_tick(schedule: EnsembleSchedule, offset: int) -> qnet.QNetworkParams | None:
    """Model to load at ``offset`` slots into the ensemble phase, if any.

    A fresh copy is returned so local training never touches the stored model.
    """
    dwell = schedule.dwell
    if offset % dwell:
        return None
    k = (offset // dwell) % len(schedule.models)
    return qnet.clone_params(schedule.models[k])


def model_index(schedule: EnsembleSchedule, offset: int) -> int:
    return (offset // schedule.dwell) % len(schedule.models)


def detect_collapse(no_transmission, sum_rates, window: int, fraction: float = 0.5,
                    rate_floor: float = 1.0, n_users: int = 1) -> bool:
    """Collapse test over the last ``window`` slots.

    ``no_transmission`` is either a ``(slots, K)`` flag array or a per-slot
    count of silent victims out of ``n_users``. Fires when silent actions
    make up more than ``fraction`` of all victim actions, or the mean sum
    rate drops below ``rate_floor``.
    """
    silent = np.asarray(no_transmission, dtype=float)
    rates = np.asarray(sum_rates, dtype=float)
    if len(rates) < window or len(silent) < window:
        raise ValueError(f"need at least {window} slots, have {min(len(rates), len(silent))}")
    silent = silent[-window:]
    per_slot = silent.shape[1] if silent.ndim == 2 else n_users
    frac = silent.sum() / (window * per_slot)
    return bool(frac > fraction or rates[-window:].mean() < rate_floor)


class CollapseMonitor:
    """Running-sum version of :func:`detect_collapse` for use inside the slot loop."""

    def __init__(self, window: int, n_users: int, fraction: float, rate_floor: float):
        self.window = window
        self.n_users = n_users
        self.fraction = fraction
        self.rate_floor = rate_floor
        self._silent = np.zeros(window)
        self._rates = np.zeros(window)
        self._n = 0
        self._silent_sum = 0.0
        self._rate_sum = 0.0

    def update(self, n_silent: int, sum_rate: float) -> bool:
        i = self._n % self.window
        self._silent_sum += n_silent - self._silent[i]
        self._rate_sum += sum_rate - self._rates[i]
        self._silent[i] = n_silent
        self._rates[i] = sum_rate
        self._n += 1
        if self._n < self.window:
            return False
        frac = self._silent_sum / (self.window * self.n_users)
        return bool(frac > self.fraction or self._rate_sum / self.window < self.rate_floor)
