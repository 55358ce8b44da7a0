"""Recurrent dueling Q-network written directly against numpy/numba.

The network runs one LSTM layer over an observation history (oldest first,
zero initial state), then feeds the last hidden state to two small ReLU
heads: a scalar state value and one advantage per action. Q-values are
``V + A(a) - mean(A)``.

All parameters live in one flat float64 vector; the individual tensors are
views into it. This keeps SGD updates, gradient clipping, cloning and
snapshotting trivial. The flat order (also the snapshot payload order) is::

    Wx (I, 4H)   Wh (H, 4H)   b (4H)              LSTM, gate order i f g o
    Wv1 (H, D)   bv1 (D)      wv2 (D)   bv2 (1)   value head
    Wa1 (H, D)   ba1 (D)      Wa2 (D, A) ba2 (A)  advantage head
"""

from __future__ import annotations

import functools
import math
import struct
from dataclasses import dataclass

import numpy as np
from llvmlite import ir
from numba import njit, types
from numba.extending import intrinsic

TENSORS = ("Wx", "Wh", "b", "Wv1", "bv1", "wv2", "bv2", "Wa1", "ba1", "Wa2", "ba2")

SNAPSHOT_MAGIC = b"ADVJAMQN"
SNAPSHOT_VERSION = 1
_HEADER = struct.Struct("<8sI5Iqq")  # magic, version, I, H, D, A, N, interval, slot


class TrainingDivergence(FloatingPointError):
    """Loss or parameters became non-finite during a training step."""


class SnapshotFormatError(ValueError):
    """A serialized network could not be decoded."""

    def __init__(self, message: str, offset: int):
        self.offset = offset
        super().__init__(f"{message} at byte offset {offset}")


def tensor_shapes(n_inputs: int, n_hidden: int, n_duel: int, n_actions: int):
    I, H, D, A = n_inputs, n_hidden, n_duel, n_actions
    return {
        "Wx": (I, 4 * H), "Wh": (H, 4 * H), "b": (4 * H,),
        "Wv1": (H, D), "bv1": (D,), "wv2": (D,), "bv2": (1,),
        "Wa1": (H, D), "ba1": (D,), "Wa2": (D, A), "ba2": (A,),
    }


@functools.lru_cache(maxsize=None)
def _layout(n_inputs, n_hidden, n_duel, n_actions):
    """(name, start, stop, shape) for every tensor, plus the total size."""
    shapes = tensor_shapes(n_inputs, n_hidden, n_duel, n_actions)
    out = []
    offset = 0
    for name in TENSORS:
        n = math.prod(shapes[name])
        out.append((name, offset, offset + n, shapes[name]))
        offset += n
    return tuple(out), offset


def n_params(n_inputs, n_hidden, n_duel, n_actions) -> int:
    return _layout(n_inputs, n_hidden, n_duel, n_actions)[1]


def _split(flat, dims4) -> tuple[np.ndarray, ...]:
    layout, _ = _layout(*dims4)
    return tuple(flat[a:b].reshape(shape) for _, a, b, shape in layout)


@dataclass(eq=False)
class QNetworkParams:
    n_inputs: int
    n_hidden: int
    n_duel: int
    n_actions: int
    history_len: int
    flat: np.ndarray

    def __post_init__(self):
        size = n_params(self.n_inputs, self.n_hidden, self.n_duel, self.n_actions)
        self.flat = np.ascontiguousarray(self.flat, dtype=np.float64)
        if self.flat.shape != (size,):
            raise ValueError(f"expected {size} parameters, got {self.flat.shape}")
        self._tensors = _split(self.flat, self.dims[:4])
        self._views = dict(zip(TENSORS, self._tensors))

    def __getattr__(self, name):
        views = self.__dict__.get("_views")
        if views is not None and name in views:
            return views[name]
        raise AttributeError(name)

    @property
    def dims(self) -> tuple[int, int, int, int, int]:
        return (self.n_inputs, self.n_hidden, self.n_duel, self.n_actions, self.history_len)

    def tensors(self) -> tuple[np.ndarray, ...]:
        return self._tensors

    def __eq__(self, other):
        if not isinstance(other, QNetworkParams):
            return NotImplemented
        return self.dims == other.dims and np.array_equal(self.flat, other.flat)


def init_params(n_inputs: int, n_actions: int, rng, n_hidden: int = 20, n_duel: int = 10,
                history_len: int = 10, scale: float = 0.1, forget_bias: float = 1.0) -> QNetworkParams:
    """Small uniform weights, zero biases, forget-gate bias ``forget_bias``."""
    flat = np.zeros(n_params(n_inputs, n_hidden, n_duel, n_actions))
    params = QNetworkParams(n_inputs, n_hidden, n_duel, n_actions, history_len, flat)
    for name in ("Wx", "Wh", "Wv1", "wv2", "Wa1", "Wa2"):
        view = params._views[name]
        view[...] = rng.uniform(-scale, scale, size=view.shape)
    params.b[n_hidden:2 * n_hidden] = forget_bias
    return params


def zero_params(n_inputs, n_actions, n_hidden=20, n_duel=10, history_len=10) -> QNetworkParams:
    return QNetworkParams(n_inputs, n_hidden, n_duel, n_actions, history_len,
                          np.zeros(n_params(n_inputs, n_hidden, n_duel, n_actions)))


def clone_params(params: QNetworkParams) -> QNetworkParams:
    return QNetworkParams(*params.dims, params.flat.copy())


# --------------------------------------------------------------------------
# numba kernels

# math.exp/math.tanh are scalar libm calls and dominate the cost of these
# tiny networks. _exp is a branchless range-reduced polynomial (relative
# error < 1e-15) that LLVM can inline and vectorise.

@intrinsic
def _bits_to_float(typingctx, x):
    sig = types.float64(types.int64)

    def codegen(context, builder, signature, args):
        return builder.bitcast(args[0], ir.DoubleType())

    return sig, codegen


_LOG2E = 1.4426950408889634
_LN2_HI = 6.93147180369123816490e-01
_LN2_LO = 1.90821492927058770002e-10


@njit(cache=True, fastmath=True, inline="always")
def _exp(x):
    x = min(max(x, -700.0), 700.0)
    n = math.floor(x * _LOG2E + 0.5)
    r = (x - n * _LN2_HI) - n * _LN2_LO
    p = 1.0 / 479001600.0
    p = p * r + 1.0 / 39916800.0
    p = p * r + 1.0 / 3628800.0
    p = p * r + 1.0 / 362880.0
    p = p * r + 1.0 / 40320.0
    p = p * r + 1.0 / 5040.0
    p = p * r + 1.0 / 720.0
    p = p * r + 1.0 / 120.0
    p = p * r + 1.0 / 24.0
    p = p * r + 1.0 / 6.0
    p = p * r + 0.5
    p = p * r + 1.0
    p = p * r + 1.0
    return p * _bits_to_float((np.int64(n) + 1023) << 52)


@njit(cache=True, fastmath=True, inline="always")
def _sigmoid(x):
    return 1.0 / (1.0 + _exp(-x))


@njit(cache=True, fastmath=True, inline="always")
def _tanh(x):
    return 1.0 - 2.0 / (1.0 + _exp(2.0 * x))


@njit(cache=True, fastmath=True)
def _exp_recip(z, scale, out):
    """out = 1 / (1 + exp(scale * z)) over flat arrays, in two vectorisable passes."""
    for k in range(z.size):
        out[k] = _exp(scale[k] * z[k])
    for k in range(z.size):
        out[k] = 1.0 / (1.0 + out[k])


@njit(cache=True, fastmath=True)
def _forward_cache(Wx, Wh, b, Wv1, bv1, wv2, bv2, Wa1, ba1, Wa2, ba2,
                   XT, HS, CS, TC, GT, ZV, ZA, Q):
    """Batch-major forward pass keeping every intermediate needed for BPTT.

    XT is (N, B, I). Fills hidden states HS and cell states CS (N+1, B, H),
    tanh(cell) TC (N, B, H), activated gates GT (N, B, 4H), rectified head
    activations ZV/ZA (B, D) and Q-values Q (B, A).
    """
    N, B, I = XT.shape
    H = Wh.shape[0]
    G = 4 * H
    D = Wv1.shape[1]
    A = Wa2.shape[1]
    # sigmoid gates use exp(-z); the tanh gate uses exp(2z)
    scale = np.empty((B, G))
    for s in range(B):
        for g in range(G):
            scale[s, g] = 2.0 if 2 * H <= g < 3 * H else -1.0
    flat_scale = scale.reshape(B * G)
    Z = np.empty((B, G))
    flat_z = Z.reshape(B * G)
    HS[0] = 0.0
    CS[0] = 0.0
    for t in range(N):
        np.dot(XT[t], Wx, Z)
        Zh = np.dot(HS[t], Wh)
        for s in range(B):
            for g in range(G):
                Z[s, g] += Zh[s, g] + b[g]
        _exp_recip(flat_z, flat_scale, GT[t].reshape(B * G))
        for s in range(B):
            for j in range(H):
                GT[t, s, 2 * H + j] = 1.0 - 2.0 * GT[t, s, 2 * H + j]
            for j in range(H):
                CS[t + 1, s, j] = GT[t, s, H + j] * CS[t, s, j] + GT[t, s, j] * GT[t, s, 2 * H + j]
        c = CS[t + 1].reshape(B * H)
        tc = TC[t].reshape(B * H)
        for k in range(B * H):
            tc[k] = _exp(2.0 * c[k])
        for k in range(B * H):
            tc[k] = 1.0 - 2.0 / (1.0 + tc[k])
        for s in range(B):
            for j in range(H):
                HS[t + 1, s, j] = GT[t, s, 3 * H + j] * TC[t, s, j]

    h = HS[N]
    np.dot(h, Wv1, ZV)
    np.dot(h, Wa1, ZA)
    for s in range(B):
        for d in range(D):
            ZV[s, d] = max(ZV[s, d] + bv1[d], 0.0)
            ZA[s, d] = max(ZA[s, d] + ba1[d], 0.0)
    V = np.dot(ZV, wv2)
    np.dot(ZA, Wa2, Q)
    for s in range(B):
        mean = 0.0
        for a in range(A):
            Q[s, a] += ba2[a]
            mean += Q[s, a]
        mean /= A
        v = V[s] + bv2[0]
        for a in range(A):
            Q[s, a] = v + Q[s, a] - mean


@njit(cache=True, fastmath=True)
def _backward(Wx, Wh, b, Wv1, bv1, wv2, bv2, Wa1, ba1, Wa2, ba2,
              XT, HS, CS, TC, GT, ZV, ZA, dQ,
              gWx, gWh, gb, gWv1, gbv1, gwv2, gbv2, gWa1, gba1, gWa2, gba2):
    """Accumulate parameter gradients given dLoss/dQ for the first len(dQ) rows."""
    B, A = dQ.shape
    N = XT.shape[0]
    H = Wh.shape[0]
    G = 4 * H
    D = Wv1.shape[1]
    h = np.ascontiguousarray(HS[N, :B])
    zv = np.ascontiguousarray(ZV[:B])
    za = np.ascontiguousarray(ZA[:B])

    dV = np.empty(B)
    dAdv = np.empty((B, A))
    for s in range(B):
        tot = 0.0
        for a in range(A):
            tot += dQ[s, a]
        dV[s] = tot
        for a in range(A):
            dAdv[s, a] = dQ[s, a] - tot / A
    gbv2[0] += dV.sum()
    gwv2 += np.dot(zv.T, dV)
    gWa2 += np.dot(za.T, dAdv)
    for a in range(A):
        for s in range(B):
            gba2[a] += dAdv[s, a]
    dHa = np.dot(dAdv, Wa2.T)
    dHv = np.empty((B, D))
    for s in range(B):
        for d in range(D):
            dHv[s, d] = dV[s] * wv2[d] if zv[s, d] > 0.0 else 0.0
            if za[s, d] <= 0.0:
                dHa[s, d] = 0.0
    gWv1 += np.dot(h.T, dHv)
    gWa1 += np.dot(h.T, dHa)
    for d in range(D):
        for s in range(B):
            gbv1[d] += dHv[s, d]
            gba1[d] += dHa[s, d]
    dh = np.dot(dHv, Wv1.T) + np.dot(dHa, Wa1.T)

    dc = np.zeros((B, H))
    dZ = np.empty((B, G))
    for t in range(N - 1, -1, -1):
        for s in range(B):
            for j in range(H):
                ig = GT[t, s, j]
                fg = GT[t, s, H + j]
                gg = GT[t, s, 2 * H + j]
                og = GT[t, s, 3 * H + j]
                tc = TC[t, s, j]
                dct = dc[s, j] + dh[s, j] * og * (1.0 - tc * tc)
                dZ[s, j] = dct * gg * ig * (1.0 - ig)
                dZ[s, H + j] = dct * CS[t, s, j] * fg * (1.0 - fg)
                dZ[s, 2 * H + j] = dct * ig * (1.0 - gg * gg)
                dZ[s, 3 * H + j] = dh[s, j] * tc * og * (1.0 - og)
                dc[s, j] = dct * fg
        for s in range(B):
            for g in range(G):
                gb[g] += dZ[s, g]
        gWx += np.dot(np.ascontiguousarray(XT[t, :B]).T, dZ)
        gWh += np.dot(np.ascontiguousarray(HS[t, :B]).T, dZ)
        if t > 0:
            dh = np.dot(dZ, Wh.T)


# --------------------------------------------------------------------------
# public API

def _as_time_major(params: QNetworkParams, histories) -> np.ndarray:
    X = np.asarray(histories, dtype=np.float64)
    if X.ndim != 3 or X.shape[1:] != (params.history_len, params.n_inputs):
        raise ValueError(f"history batch shape {X.shape} does not match "
                         f"(N, I) = ({params.history_len}, {params.n_inputs})")
    return np.ascontiguousarray(X.transpose(1, 0, 2))


def _forward(params: QNetworkParams, XT: np.ndarray):
    N, B, _ = XT.shape
    H, D, A = params.n_hidden, params.n_duel, params.n_actions
    cache = (np.empty((N + 1, B, H)), np.empty((N + 1, B, H)), np.empty((N, B, H)),
             np.empty((N, B, 4 * H)), np.empty((B, D)), np.empty((B, D)), np.empty((B, A)))
    _forward_cache(*params.tensors(), XT, *cache)
    return cache


def forward_batch(params: QNetworkParams, histories: np.ndarray) -> np.ndarray:
    """Q-values for a batch of histories shaped ``(B, N, I)``; returns ``(B, A)``."""
    return _forward(params, _as_time_major(params, histories))[-1]


def forward(params: QNetworkParams, history: np.ndarray) -> np.ndarray:
    """Q-values for one history of shape ``(N, I)``."""
    history = np.asarray(history, dtype=np.float64)
    if history.ndim != 2:
        raise ValueError(f"history must be 2-D, got shape {history.shape}")
    return forward_batch(params, history[None])[0]


def state_value(params: QNetworkParams, histories: np.ndarray) -> np.ndarray:
    """Output of the value head alone, for each history in a batch."""
    HS = _forward(params, _as_time_major(params, histories))[0]
    hidden = np.maximum(HS[-1] @ params.Wv1 + params.bv1, 0.0)
    return hidden @ params.wv2 + params.bv2[0]


def _backprop(params: QNetworkParams, XT, cache, dQ) -> np.ndarray:
    grad = np.zeros_like(params.flat)
    HS, CS, TC, GT, ZV, ZA, _ = cache
    _backward(*params.tensors(), XT, HS, CS, TC, GT, ZV, ZA, np.ascontiguousarray(dQ),
              *_split(grad, params.dims[:4]))
    return grad


def _squared_error(Q, actions, targets):
    rows = np.arange(len(actions))
    err = Q[rows, actions] - targets
    dQ = np.zeros_like(Q)
    dQ[rows, actions] = 2.0 * err / len(actions)
    return float(np.mean(err * err)), dQ


def _check_actions(params, actions):
    actions = np.asarray(actions, dtype=np.int64)
    if actions.ndim != 1 or len(actions) == 0:
        raise ValueError("empty batch")
    if actions.min() < 0 or actions.max() >= params.n_actions:
        raise ValueError("action index out of range")
    return actions


def loss_and_grad(params: QNetworkParams, histories, actions, targets) -> tuple[float, np.ndarray]:
    """Mean squared error of ``Q(history, action)`` against fixed targets, and its gradient."""
    actions = _check_actions(params, actions)
    XT = _as_time_major(params, histories)
    cache = _forward(params, XT)
    loss, dQ = _squared_error(cache[-1], actions, np.asarray(targets, dtype=np.float64))
    return loss, _backprop(params, XT, cache, dQ)


def td_targets(params: QNetworkParams, rewards, next_histories, gamma: float) -> np.ndarray:
    """One-step targets ``r + gamma * max_a' Q(next, a')`` (treated as constants)."""
    rewards = np.asarray(rewards, dtype=np.float64)
    if gamma == 0.0:
        return rewards.copy()
    return rewards + gamma * forward_batch(params, next_histories).max(axis=1)


def train_step(params: QNetworkParams, batch, gamma: float, lr: float,
               clip: float | None = 5.0) -> float:
    """One SGD step on a minibatch, updating ``params`` in place; returns the loss.

    ``batch`` is anything with ``histories``, ``actions``, ``rewards`` and
    ``next_histories`` arrays (see :class:`advjam.replay.Minibatch`). The
    bootstrap term uses the current parameters with no gradient through it.
    """
    if not 0 <= gamma < 1:
        raise ValueError("gamma must lie in [0, 1)")
    if lr <= 0:
        raise ValueError("learning rate must be positive")
    actions = _check_actions(params, batch.actions)
    m = len(actions)
    rewards = np.asarray(batch.rewards, dtype=np.float64)
    # one forward pass over histories and next histories together
    XT = _as_time_major(params, np.concatenate([batch.histories, batch.next_histories]))
    cache = _forward(params, XT)
    Q = cache[-1]
    targets = rewards + gamma * Q[m:].max(axis=1) if gamma > 0 else rewards
    loss, dQ = _squared_error(Q[:m], actions, targets)
    grad = _backprop(params, XT, cache, dQ)
    if not math.isfinite(loss) or not np.all(np.isfinite(grad)):
        raise TrainingDivergence(f"non-finite loss {loss}")
    if clip is not None:
        norm = math.sqrt(float(grad @ grad))
        if norm > clip:
            grad *= clip / norm
    params.flat -= lr * grad
    return loss


# --------------------------------------------------------------------------
# snapshots

def serialize_params(params: QNetworkParams, interval: int = -1, slot: int = -1) -> bytes:
    header = _HEADER.pack(SNAPSHOT_MAGIC, SNAPSHOT_VERSION, *params.dims, interval, slot)
    return header + params.flat.astype("<f8").tobytes()


def deserialize_params(data: bytes) -> tuple[QNetworkParams, int, int]:
    """Decode a snapshot; returns ``(params, interval, slot)``."""
    if len(data) < _HEADER.size:
        raise SnapshotFormatError(f"truncated header ({len(data)} of {_HEADER.size} bytes)", len(data))
    magic, version, I, H, D, A, N, interval, slot = _HEADER.unpack_from(data, 0)
    if magic != SNAPSHOT_MAGIC:
        raise SnapshotFormatError(f"bad magic {magic!r}", 0)
    if version != SNAPSHOT_VERSION:
        raise SnapshotFormatError(f"unsupported snapshot version {version}", 8)
    if min(I, H, D, A, N) < 1:
        raise SnapshotFormatError("nonpositive dimension in header", 12)
    size = n_params(I, H, D, A)
    expected = _HEADER.size + 8 * size
    if len(data) != expected:
        raise SnapshotFormatError(
            f"payload length mismatch: expected {expected} bytes, got {len(data)}",
            min(len(data), expected))
    flat = np.frombuffer(data, dtype="<f8", count=size, offset=_HEADER.size).astype(np.float64)
    return QNetworkParams(I, H, D, A, N, flat), interval, slot
