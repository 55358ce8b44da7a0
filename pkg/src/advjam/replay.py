"""Bounded FIFO replay of (history, action, reward, next history) transitions."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class TransitionRecord:
    history: np.ndarray
    action: int
    reward: float
    next_history: np.ndarray


@dataclass
class Minibatch:
    histories: np.ndarray       # (m, N, I)
    actions: np.ndarray         # (m,)
    rewards: np.ndarray         # (m,)
    next_histories: np.ndarray  # (m, N, I)

    def __len__(self):
        return len(self.actions)

    def records(self) -> list[TransitionRecord]:
        return [TransitionRecord(h, int(a), float(r), n) for h, a, r, n in
                zip(self.histories, self.actions, self.rewards, self.next_histories)]


class ReplayHistory:
    """Ring buffer holding at most ``capacity`` transitions, evicting oldest first."""

    def __init__(self, capacity: int, history_len: int, width: int):
        if capacity < 1:
            raise ValueError("replay capacity must be positive")
        self.capacity = capacity
        self._hist = np.zeros((capacity, history_len, width))
        self._next = np.zeros((capacity, history_len, width))
        self._actions = np.zeros(capacity, dtype=np.int64)
        self._rewards = np.zeros(capacity)
        self._head = 0  # next write position
        self._size = 0
        self.pushed = 0

    def __len__(self):
        return self._size

    def push(self, history, action: int, reward: float, next_history) -> None:
        i = self._head
        self._hist[i] = history
        self._next[i] = next_history
        self._actions[i] = action
        self._rewards[i] = reward
        self._head = (i + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)
        self.pushed += 1

    def push_record(self, record: TransitionRecord) -> None:
        self.push(record.history, record.action, record.reward, record.next_history)

    def _order(self) -> np.ndarray:
        start = (self._head - self._size) % self.capacity
        return (start + np.arange(self._size)) % self.capacity

    def records(self) -> list[TransitionRecord]:
        """Stored transitions, oldest first."""
        idx = self._order()
        return Minibatch(self._hist[idx], self._actions[idx], self._rewards[idx],
                         self._next[idx]).records()

    def take(self, idx) -> Minibatch:
        idx = np.asarray(idx)
        return Minibatch(self._hist[idx], self._actions[idx], self._rewards[idx], self._next[idx])

    def clear(self) -> None:
        self._head = 0
        self._size = 0


def sample_minibatch(replay: ReplayHistory, m: int, rng) -> Minibatch:
    """Draw ``m`` transitions uniformly with replacement."""
    if len(replay) == 0:
        raise ValueError("cannot sample from an empty replay history")
    return replay.take(rng.integers(0, len(replay), size=m))
