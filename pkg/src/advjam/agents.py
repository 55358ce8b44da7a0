"""Victim and jammer policies: action codecs, observations, exploration.

Victim actions index ``channel * N_p + level`` for the ``N_c * N_p``
transmit choices, with the last index meaning "no transmission". Jammer
actions index the ``C(N_c, K_a)`` channel subsets in lexicographic order.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import qnet
from .channel import NONE


class Mode(enum.IntEnum):
    """What the jammer does in a slot."""

    OFF = 0            # not yet active, or no attacker at all
    LISTEN = 1
    GREEDY_ATTACK = 2
    EXPLORE_ATTACK = 3
    RANDOM = 4         # baseline random jammer
    IDEAL = 5          # oracle jammer


# ---------------------------------------------------------------- victims

def n_victim_actions(n_channels: int, n_power_levels: int) -> int:
    return n_channels * n_power_levels + 1


def encode_victim_action(channel: int | None, level: int | None,
                         n_channels: int, n_power_levels: int) -> int:
    """Index of (channel, power level); ``None`` for both means no transmission."""
    if channel is None:
        return n_channels * n_power_levels
    if not (0 <= channel < n_channels and 0 <= level < n_power_levels):
        raise ValueError(f"invalid victim action ({channel}, {level})")
    return channel * n_power_levels + level


def decode_victim_action(action: int, n_channels: int, n_power_levels: int):
    """``(channel, level)`` or ``(None, None)`` for the no-transmission action."""
    n = n_channels * n_power_levels
    if action == n:
        return None, None
    if not 0 <= action < n:
        raise ValueError(f"victim action {action} out of range")
    return divmod(int(action), n_power_levels)


def victim_transmission(action: int, n_channels: int, power_levels) -> tuple[int, float]:
    """Channel index (or ``NONE``) and transmit power in watts."""
    channel, level = decode_victim_action(action, n_channels, len(power_levels))
    if channel is None:
        return NONE, 0.0
    return channel, float(power_levels[level])


def victim_observation(rate: float, channel: int, power: float, n_channels: int) -> np.ndarray:
    """Own rate followed by own transmit power on each channel."""
    obs = np.zeros(1 + n_channels)
    obs[0] = rate
    if channel != NONE:
        obs[1 + channel] = power
    return obs


def greedy(q: np.ndarray) -> int:
    # np.argmax returns the first maximum, i.e. ties go to the lowest index
    return int(np.argmax(q))


def victim_act(params: qnet.QNetworkParams, history: np.ndarray, eps: float, rng) -> int:
    """Epsilon-greedy victim action."""
    if eps > 0 and rng.random() < eps:
        return int(rng.integers(params.n_actions))
    return greedy(qnet.forward(params, history))


def push_history(history: np.ndarray, obs: np.ndarray) -> np.ndarray:
    """Drop the oldest observation and append ``obs`` as the newest."""
    out = np.empty_like(history)
    out[:-1] = history[1:]
    out[-1] = obs
    return out


# ---------------------------------------------------------------- schedules

@dataclass
class LinearSchedule:
    """Linear ramp from ``start`` to ``end`` over ``horizon`` slots, then flat."""

    start: float
    end: float
    horizon: int

    def value(self, t: int) -> float:
        if t <= 0:
            return self.start
        if t >= self.horizon:
            return self.end
        return self.start + (self.end - self.start) * (t / self.horizon)


# ---------------------------------------------------------------- jammer

@lru_cache(maxsize=None)
def jam_subsets(n_channels: int, n_jammed: int) -> tuple[tuple[int, ...], ...]:
    return tuple(itertools.combinations(range(n_channels), n_jammed))


@lru_cache(maxsize=None)
def _subset_index(n_channels: int, n_jammed: int) -> dict:
    return {s: i for i, s in enumerate(jam_subsets(n_channels, n_jammed))}


def decode_attacker_action(action: int, n_channels: int, n_jammed: int) -> tuple[int, ...]:
    return jam_subsets(n_channels, n_jammed)[action]


def encode_attacker_action(channels, n_channels: int, n_jammed: int) -> int:
    key = tuple(sorted(int(c) for c in channels))
    try:
        return _subset_index(n_channels, n_jammed)[key]
    except KeyError:
        raise ValueError(f"{key} is not a {n_jammed}-subset of {n_channels} channels") from None


def attacker_observation(sum_rate: float, jammed, n_channels: int) -> np.ndarray:
    obs = np.zeros(1 + n_channels)
    obs[0] = sum_rate
    for c in jammed:
        obs[1 + c] = 1.0
    return obs


def attacker_reward(sum_rate: float) -> float:
    return -sum_rate


def attacker_mode_select(listen_eps: float, eps: float, last_mode: Mode, rng) -> Mode:
    """Listen with probability ``listen_eps`` (never twice running), else attack.

    An attacking slot explores a random subset with probability ``eps`` and
    otherwise exploits the network.
    """
    if last_mode != Mode.LISTEN and rng.random() < listen_eps:
        return Mode.LISTEN
    if rng.random() < eps:
        return Mode.EXPLORE_ATTACK
    return Mode.GREEDY_ATTACK


def attacker_act_attacking(params: qnet.QNetworkParams, history: np.ndarray, mode: Mode, rng) -> int:
    if mode == Mode.EXPLORE_ATTACK:
        return int(rng.integers(params.n_actions))
    if mode == Mode.GREEDY_ATTACK:
        return greedy(qnet.forward(params, history))
    raise ValueError(f"attacker is not attacking in mode {mode!r}")


def top_channels(measurements, n_jammed: int) -> tuple[int, ...]:
    """The ``n_jammed`` channels with the largest readings, ties to lower index."""
    order = np.argsort(-np.asarray(measurements, dtype=float), kind="stable")
    return tuple(sorted(int(c) for c in order[:n_jammed]))


def attacker_listen(measurements, n_jammed: int, sum_rate: float):
    """Turn a listening slot into a training transition.

    Returns the pseudo action (loudest channels), the pseudo reward 0 and the
    observation to record, whose jam indicators are all zero.
    """
    n_channels = len(measurements)
    action = encode_attacker_action(top_channels(measurements, n_jammed), n_channels, n_jammed)
    return action, 0.0, attacker_observation(sum_rate, (), n_channels)


def random_attacker(rng, n_channels: int, n_jammed: int) -> tuple[int, ...]:
    subsets = jam_subsets(n_channels, n_jammed)
    return subsets[int(rng.integers(len(subsets)))]


def ideal_attacker(victim_channels, n_channels: int, n_jammed: int) -> tuple[int, ...]:
    """Jam the victims' current channels, padding with the lowest free channels."""
    chosen = []
    for c in victim_channels:
        c = int(c)
        if c != NONE and c not in chosen:
            chosen.append(c)
    chosen = chosen[:n_jammed]
    for c in range(n_channels):
        if len(chosen) >= n_jammed:
            break
        if c not in chosen:
            chosen.append(c)
    return tuple(sorted(chosen))
