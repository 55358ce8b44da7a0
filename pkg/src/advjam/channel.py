"""Time-varying multichannel interference channel with a jammer.

Gains are stored as a complex array ``gains[receiver, transmitter, channel]``
of shape ``(K+1, K+1, N_c)``. Index ``K`` on the receiver axis is the
jammer's listening receiver; index ``K`` on the transmitter axis is the
jammer's transmitter. Every link, jammer links included, follows the same
first-order Gauss-Markov recursion with correlation ``J0(2 pi f_d T)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import ConfigError, ScenarioConfig

NONE = -1  # channel index of a silent transmitter


def bessel_j0(x: float, terms: int = 40) -> float:
    """Zeroth-order Bessel function of the first kind by its power series.

    Accurate to ~1e-15 for ``|x| < 10``; the fading argument is far smaller
    in practice.
    """
    x = float(x)
    if abs(x) > 20:
        raise ValueError("power series for J0 is only used for |x| <= 20")
    q = (x / 2.0) ** 2
    term = 1.0
    acc = [term]
    for m in range(1, terms):
        term *= -q / (m * m)
        acc.append(term)
    return math.fsum(acc)


def fading_correlation(f_d: float, slot_duration: float) -> float:
    return bessel_j0(2.0 * math.pi * f_d * slot_duration)


def cscg(rng, shape) -> np.ndarray:
    """Unit-power circularly symmetric complex Gaussian samples."""
    scale = math.sqrt(0.5)
    re = rng.normal(0.0, scale, size=shape)
    im = rng.normal(0.0, scale, size=shape)
    return re + 1j * im


@dataclass
class ChannelState:
    gains: np.ndarray
    rho: float
    slot: int = 0
    noise_power: float = 1.0

    @property
    def n_users(self) -> int:
        return self.gains.shape[0] - 1

    @property
    def n_channels(self) -> int:
        return self.gains.shape[2]

    @property
    def power_gains(self) -> np.ndarray:
        return self.gains.real ** 2 + self.gains.imag ** 2

    def copy(self) -> "ChannelState":
        return ChannelState(self.gains.copy(), self.rho, self.slot, self.noise_power)


@dataclass
class TransmitDecision:
    """What every transmitter does in one slot.

    ``channels[k]`` is ``NONE`` for a silent victim, whose power must be 0.
    ``jammed`` is empty (jammer listening or absent) or holds exactly K_a
    distinct channels, each jammed at ``jam_power``.
    """

    channels: np.ndarray
    powers: np.ndarray
    jammed: tuple[int, ...] = ()
    jam_power: float = 0.0

    def __post_init__(self):
        self.channels = np.asarray(self.channels, dtype=np.int64)
        self.powers = np.asarray(self.powers, dtype=np.float64)
        self.jammed = tuple(int(c) for c in self.jammed)
        if len(set(self.jammed)) != len(self.jammed):
            raise ValueError(f"duplicate jammed channels: {self.jammed}")
        silent = self.channels == NONE
        if np.any(self.powers[silent] != 0):
            raise ValueError("silent transmitter with nonzero power")

    @property
    def transmitting(self) -> np.ndarray:
        return self.channels != NONE


def init_channel(config: ScenarioConfig, rng) -> ChannelState:
    if config.n_users < 1 or config.n_channels < 1:
        raise ConfigError("need at least one user and one channel")
    k1 = config.n_users + 1
    gains = cscg(rng, (k1, k1, config.n_channels))
    return ChannelState(gains, fading_correlation(config.f_d, config.slot_duration),
                        0, config.noise_power)


def evolve(state: ChannelState, rng) -> ChannelState:
    """One Gauss-Markov step: ``h <- rho h + sqrt(1 - rho^2) e``."""
    rho = state.rho
    innovation = cscg(rng, state.gains.shape)
    gains = rho * state.gains + math.sqrt(max(0.0, 1.0 - rho * rho)) * innovation
    return ChannelState(gains, rho, state.slot + 1, state.noise_power)


def sinr(state: ChannelState, decision: TransmitDecision, k: int) -> float:
    """SINR of victim ``k``; NaN when ``k`` is silent (its rate is then 0)."""
    c = int(decision.channels[k])
    if c == NONE:
        return math.nan
    g = state.power_gains
    jammer = state.n_users
    signal = decision.powers[k] * g[k, k, c]
    denom = state.noise_power
    for j in range(len(decision.channels)):
        if j != k and decision.channels[j] == c:
            denom += decision.powers[j] * g[k, j, c]
    if c in decision.jammed:
        denom += decision.jam_power * g[k, jammer, c]
    return float(signal / denom)


def rates(state: ChannelState, decision: TransmitDecision) -> tuple[np.ndarray, float]:
    """Per-victim Shannon rates and their sum (bits/s/Hz)."""
    g = state.power_gains
    channels = decision.channels
    powers = decision.powers
    n = len(channels)
    jammer = state.n_users
    jammed = decision.jammed
    out = np.zeros(n)
    for k in range(n):
        c = channels[k]
        if c == NONE:
            continue
        denom = state.noise_power
        for j in range(n):
            if j != k and channels[j] == c:
                denom += powers[j] * g[k, j, c]
        if c in jammed:
            denom += decision.jam_power * g[k, jammer, c]
        out[k] = math.log2(1.0 + powers[k] * g[k, k, c] / denom)
    return out, float(out.sum())


def measure_interference(state: ChannelState, decision: TransmitDecision) -> np.ndarray:
    """Interference plus noise seen by the jammer's receiver on each channel."""
    g = state.power_gains
    jammer = state.n_users
    levels = np.full(state.n_channels, state.noise_power)
    for j, c in enumerate(decision.channels):
        if c != NONE:
            levels[c] += decision.powers[j] * g[jammer, j, c]
    return levels
