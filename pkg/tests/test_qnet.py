import numpy as np
import pytest

from advjam import qnet
from advjam.replay import Minibatch, ReplayHistory, sample_minibatch


def reference_q(p, history):
    """Per-sample numpy LSTM plus dueling heads, written independently of the kernels."""
    H = p.n_hidden
    sig = lambda z: 1.0 / (1.0 + np.exp(-z))
    h = np.zeros(H)
    c = np.zeros(H)
    for x in history:
        z = x @ p.Wx + h @ p.Wh + p.b
        i, f, g, o = sig(z[:H]), sig(z[H:2 * H]), np.tanh(z[2 * H:3 * H]), sig(z[3 * H:])
        c = f * c + i * g
        h = o * np.tanh(c)
    v = np.maximum(h @ p.Wv1 + p.bv1, 0) @ p.wv2 + p.bv2[0]
    adv = np.maximum(h @ p.Wa1 + p.ba1, 0) @ p.Wa2 + p.ba2
    return v + adv - adv.mean()


def small(rng, n_inputs=3, n_actions=4, hidden=4, duel=3, n=3, scale=0.5):
    p = qnet.init_params(n_inputs, n_actions, rng, n_hidden=hidden, n_duel=duel, history_len=n, scale=scale)
    p.flat += rng.uniform(-0.2, 0.2, size=p.flat.shape)  # nonzero biases too
    return p


def numeric_grad(p, h, a, y, eps=1e-5):
    g = np.empty_like(p.flat)
    for i in range(len(g)):
        old = p.flat[i]
        p.flat[i] = old + eps
        up, _ = qnet.loss_and_grad(p, h, a, y)
        p.flat[i] = old - eps
        down, _ = qnet.loss_and_grad(p, h, a, y)
        p.flat[i] = old
        g[i] = (up - down) / (2 * eps)
    return g


def test_forward_matches_reference():
    rng = np.random.default_rng(0)
    p = qnet.init_params(5, 21, rng, scale=0.4)
    p.flat += rng.uniform(-0.1, 0.1, size=p.flat.shape)
    hist = rng.normal(size=(6, 10, 5)) * 3
    q = qnet.forward_batch(p, hist)
    for b in range(6):
        np.testing.assert_allclose(q[b], reference_q(p, hist[b]), rtol=1e-10, atol=1e-10)
    np.testing.assert_allclose(qnet.forward(p, hist[2]), q[2], rtol=0, atol=1e-12)


def test_zero_network_gives_zero_q():
    p = qnet.zero_params(5, 21)
    assert np.array_equal(qnet.forward(p, np.random.default_rng(1).normal(size=(10, 5))), np.zeros(21))


def test_dueling_identity():
    rng = np.random.default_rng(2)
    for _ in range(20):
        p = qnet.init_params(5, 21, rng, scale=0.5)
        hist = rng.normal(size=(4, 10, 5))
        q = qnet.forward_batch(p, hist)
        v = qnet.state_value(p, hist)
        assert np.max(np.abs((q - v[:, None]).sum(axis=1))) < 1e-9
        adv_max = (q - v[:, None]).max(axis=1)
        assert np.allclose(q.max(axis=1) - (v + adv_max), 0.0)


def test_advantage_bias_shift_leaves_q_unchanged():
    rng = np.random.default_rng(3)
    p = qnet.init_params(5, 21, rng, scale=0.5)
    hist = rng.normal(size=(3, 10, 5))
    before = qnet.forward_batch(p, hist)
    p.ba2[:] += 2.75
    np.testing.assert_allclose(qnet.forward_batch(p, hist), before, atol=1e-12)


def test_dimension_mismatch_rejected():
    p = qnet.init_params(5, 21, np.random.default_rng(0))
    with pytest.raises(ValueError):
        qnet.forward(p, np.zeros((10, 4)))
    with pytest.raises(ValueError):
        qnet.forward(p, np.zeros((9, 5)))


def test_init_layout():
    p = qnet.init_params(5, 21, np.random.default_rng(4))
    H = p.n_hidden
    assert p.Wx.shape == (5, 4 * H) and p.Wh.shape == (H, 4 * H)
    assert np.all(np.abs(p.Wx) <= 0.1)
    assert np.all(p.b[H:2 * H] == 1.0) and np.all(p.b[:H] == 0) and np.all(p.b[2 * H:] == 0)
    assert np.all(p.ba2 == 0) and np.all(p.bv1 == 0)


@pytest.mark.parametrize("seed", range(20))
def test_gradient_matches_finite_differences(seed):
    rng = np.random.default_rng(100 + seed)
    p = small(rng, n_inputs=int(rng.integers(2, 5)), n_actions=3, hidden=4, duel=3, n=3)
    h = rng.normal(size=(5, 3, p.n_inputs))
    a = rng.integers(3, size=5)
    y = rng.normal(size=5) * 2
    _, grad = qnet.loss_and_grad(p, h, a, y)
    num = numeric_grad(p, h, a, y)
    rel = np.max(np.abs(grad - num)) / np.max(np.abs(num))
    assert rel < 1e-4


def test_train_step_zero_case_is_noop():
    p = qnet.zero_params(3, 4, n_hidden=4, n_duel=3, history_len=3)
    before = p.flat.copy()
    rng = np.random.default_rng(5)
    batch = Minibatch(rng.normal(size=(4, 3, 3)), np.array([0, 1, 2, 3]), np.zeros(4), rng.normal(size=(4, 3, 3)))
    loss = qnet.train_step(p, batch, gamma=0.0, lr=0.1)
    assert loss == 0.0
    assert np.array_equal(p.flat, before)


def test_train_step_is_one_sgd_step():
    rng = np.random.default_rng(6)
    p = small(rng, n=3)
    batch = Minibatch(rng.normal(size=(4, 3, 3)), rng.integers(4, size=4), rng.normal(size=4),
                      rng.normal(size=(4, 3, 3)))
    targets = qnet.td_targets(p, batch.rewards, batch.next_histories, 0.9)
    loss, grad = qnet.loss_and_grad(p, batch.histories, batch.actions, targets)
    expected = p.flat - 0.01 * grad
    got = qnet.train_step(p, batch, 0.9, 0.01, clip=None)
    assert got == pytest.approx(loss, rel=1e-12)
    np.testing.assert_allclose(p.flat, expected, rtol=1e-12, atol=1e-14)


def test_gradient_clipping_caps_step_norm():
    rng = np.random.default_rng(7)
    p = small(rng, n=3)
    before = p.flat.copy()
    batch = Minibatch(rng.normal(size=(4, 3, 3)), rng.integers(4, size=4), np.full(4, 500.0),
                      rng.normal(size=(4, 3, 3)))
    qnet.train_step(p, batch, 0.0, 1.0, clip=5.0)
    assert np.linalg.norm(p.flat - before) == pytest.approx(5.0, rel=1e-9)


def test_single_transition_converges_to_reward():
    rng = np.random.default_rng(8)
    p = small(rng, n=3)
    h = rng.normal(size=(1, 3, 3))
    batch = Minibatch(h, np.array([2]), np.array([1.7]), h)
    for _ in range(3000):
        qnet.train_step(p, batch, 0.0, 0.05)
    assert qnet.forward(p, h[0])[2] == pytest.approx(1.7, abs=1e-3)


def test_non_finite_loss_raises():
    p = small(np.random.default_rng(9), n=3)
    batch = Minibatch(np.zeros((1, 3, 3)), np.array([0]), np.array([np.inf]), np.zeros((1, 3, 3)))
    with pytest.raises(qnet.TrainingDivergence):
        qnet.train_step(p, batch, 0.5, 0.1)


def test_train_step_is_deterministic():
    rng = np.random.default_rng(10)
    p1 = qnet.init_params(5, 21, rng)
    p2 = qnet.clone_params(p1)
    r = ReplayHistory(100, 10, 5)
    for i in range(50):
        r.push(rng.normal(size=(10, 5)), i % 21, float(i), rng.normal(size=(10, 5)))
    for p in (p1, p2):
        b = sample_minibatch(r, 16, np.random.default_rng(11))
        qnet.train_step(p, b, 0.9, 0.04)
    assert p1 == p2


def test_clone_is_deep():
    p = qnet.init_params(5, 21, np.random.default_rng(12))
    c = qnet.clone_params(p)
    p.Wx[0, 0] += 1.0
    assert c.Wx[0, 0] != p.Wx[0, 0]


def test_snapshot_round_trip_is_bit_identical():
    p = qnet.init_params(5, 21, np.random.default_rng(13))
    p.flat[3] = np.nextafter(1.0, 2.0)
    q, interval, slot = qnet.deserialize_params(qnet.serialize_params(p, 4, 99))
    assert q == p and (interval, slot) == (4, 99)
    assert q.flat.tobytes() == p.flat.tobytes()


def test_snapshot_format_errors():
    p = qnet.init_params(5, 21, np.random.default_rng(14))
    data = qnet.serialize_params(p)
    with pytest.raises(qnet.SnapshotFormatError) as err:
        qnet.deserialize_params(data[:44])  # header only
    assert err.value.offset >= 0
    with pytest.raises(qnet.SnapshotFormatError):
        qnet.deserialize_params(data[:20])
    with pytest.raises(qnet.SnapshotFormatError):
        qnet.deserialize_params(b"NOTMAGIC" + data[8:])
    bumped = bytearray(data)
    bumped[8] = 2
    with pytest.raises(qnet.SnapshotFormatError, match="version"):
        qnet.deserialize_params(bytes(bumped))
