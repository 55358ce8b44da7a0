import math

import numpy as np
import pytest
from scipy.special import j0

from advjam.channel import (NONE, ChannelState, TransmitDecision, bessel_j0, cscg, evolve,
                            fading_correlation, init_channel, measure_interference, rates, sinr)
from advjam.config import ConfigError, ScenarioConfig


def unit_state(n_users=2, n_channels=4, rho=1.0):
    """All links with |h|^2 = 1."""
    gains = np.ones((n_users + 1, n_users + 1, n_channels), dtype=complex)
    return ChannelState(gains, rho, 0, 1.0)


def brute_rates(g, channels, powers, jammed, jam_power, noise):
    # straight-line reimplementation used as the oracle
    out = []
    K = len(channels)
    for k in range(K):
        c = channels[k]
        if c == NONE:
            out.append(0.0)
            continue
        den = noise
        for j in range(K):
            if j != k and channels[j] == c:
                den = den + powers[j] * g[k][j][c]
        if c in jammed:
            den = den + jam_power * g[k][K][c]
        out.append(math.log2(1.0 + powers[k] * g[k][k][c] / den))
    return out


@pytest.mark.parametrize("x", [0.0, 1e-3, 0.0251327, 0.5, 2.0, 7.5])
def test_bessel_series_matches_scipy(x):
    assert bessel_j0(x) == pytest.approx(j0(x), abs=1e-12)


def test_rho_for_table_values():
    rho = fading_correlation(0.2, 0.02)
    assert rho == pytest.approx(j0(2 * math.pi * 0.2 * 0.02), abs=1e-12)
    assert rho == pytest.approx(0.999842, abs=5e-7)


def test_static_environment_has_unit_rho():
    assert fading_correlation(0.0, 0.02) == 1.0


def test_initial_draws_have_unit_power():
    g = cscg(np.random.default_rng(0), 100_000)
    assert np.mean(np.abs(g) ** 2) == pytest.approx(1.0, abs=0.02)
    assert np.var(g.real) == pytest.approx(0.5, rel=0.05)
    assert np.var(g.imag) == pytest.approx(0.5, rel=0.05)


def test_init_channel_shape_and_slot():
    cfg = ScenarioConfig()
    st = init_channel(cfg, np.random.default_rng(1))
    assert st.gains.shape == (3, 3, 4)
    assert st.slot == 0
    assert st.rho == fading_correlation(cfg.f_d, cfg.slot_duration)


def test_init_channel_rejects_bad_dimensions():
    cfg = ScenarioConfig()
    object.__setattr__(cfg, "n_users", 0)
    with pytest.raises(ConfigError):
        init_channel(cfg, np.random.default_rng(0))


def test_evolve_rho_one_is_identity():
    st = ChannelState(cscg(np.random.default_rng(2), (3, 3, 4)), 1.0)
    nxt = evolve(st, np.random.default_rng(3))
    assert np.array_equal(nxt.gains, st.gains)
    assert nxt.slot == 1


def test_evolve_rho_zero_is_pure_innovation():
    st = ChannelState(cscg(np.random.default_rng(2), (3, 3, 4)), 0.0)
    rng = np.random.default_rng(4)
    nxt = evolve(st, rng)
    assert np.array_equal(nxt.gains, cscg(np.random.default_rng(4), (3, 3, 4)))


def test_evolve_keeps_variance_and_shape():
    rng = np.random.default_rng(5)
    st = ChannelState(cscg(rng, (3, 3, 4)), fading_correlation(0.2, 0.02))
    re = []
    for _ in range(20000):
        st = evolve(st, rng)
        re.append(st.gains[0, 0].real)
    assert st.gains.shape == (3, 3, 4)
    # correlated samples: a loose band is all that 2e4 steps support
    assert np.var(np.concatenate(re)) == pytest.approx(0.5, rel=0.25)


def test_sinr_single_transmitter():
    st = unit_state()
    d = TransmitDecision([0, NONE], [6.3, 0.0])
    assert sinr(st, d, 0) == pytest.approx(6.3, abs=1e-12)


def test_sinr_shared_channel():
    st = unit_state()
    d = TransmitDecision([1, 1], [6.3, 6.3])
    assert sinr(st, d, 0) == pytest.approx(6.3 / 7.3, abs=1e-12)


def test_sinr_jammed_channel():
    st = unit_state()
    d = TransmitDecision([2, NONE], [6.3, 0.0], jammed=(2, 3), jam_power=6.3)
    assert sinr(st, d, 0) == pytest.approx(0.863013698630137, abs=1e-12)


def test_sinr_silent_is_nan_and_rate_zero():
    st = unit_state()
    d = TransmitDecision([NONE, NONE], [0.0, 0.0])
    assert math.isnan(sinr(st, d, 0))
    r, total = rates(st, d)
    assert np.array_equal(r, [0.0, 0.0]) and total == 0.0


def test_rate_at_sinr_6_3():
    st = unit_state()
    r, _ = rates(st, TransmitDecision([0, NONE], [6.3, 0.0]))
    assert r[0] == pytest.approx(2.86789646399265, abs=1e-12)


def test_rates_match_bruteforce_on_random_instances():
    rng = np.random.default_rng(7)
    cfg = ScenarioConfig()
    for _ in range(1000):
        st = ChannelState(cscg(rng, (3, 3, 4)), 0.9, 0, 1.0)
        ch = rng.integers(-1, 4, size=2)
        pw = np.where(ch == NONE, 0.0, rng.choice(cfg.power_levels, size=2))
        jammed = tuple(rng.choice(4, 2, replace=False)) if rng.random() < 0.6 else ()
        d = TransmitDecision(ch, pw, jammed, 6.3)
        got, total = rates(st, d)
        g = (np.abs(st.gains) ** 2).tolist()
        want = brute_rates(g, ch.tolist(), pw.tolist(), jammed, 6.3, 1.0)
        assert np.max(np.abs(got - want)) < 1e-12
        assert abs(total - sum(want)) < 1e-12


def test_jamming_monotonicity():
    rng = np.random.default_rng(8)
    for _ in range(200):
        st = ChannelState(cscg(rng, (3, 3, 4)), 0.9)
        d0 = TransmitDecision([0, 1], [6.3, 2.52])
        same = TransmitDecision([0, 1], [6.3, 2.52], (0, 2), 6.3)
        other = TransmitDecision([0, 1], [6.3, 2.52], (2, 3), 6.3)
        assert sinr(st, same, 0) <= sinr(st, d0, 0)
        assert sinr(st, other, 0) == sinr(st, d0, 0)


def test_sum_rate_invariant_under_relabeling():
    rng = np.random.default_rng(9)
    g = cscg(rng, (3, 3, 4))
    swapped = g[[1, 0, 2]][:, [1, 0, 2]]
    a = rates(ChannelState(g, 1.0), TransmitDecision([2, 2], [6.3, 3.78], (2, 0), 6.3))[1]
    b = rates(ChannelState(swapped, 1.0), TransmitDecision([2, 2], [3.78, 6.3], (2, 0), 6.3))[1]
    assert a == pytest.approx(b, abs=1e-12)


def test_measure_interference():
    st = unit_state()
    assert np.array_equal(measure_interference(st, TransmitDecision([NONE, NONE], [0, 0])), np.ones(4))
    m = measure_interference(st, TransmitDecision([2, NONE], [6.3, 0.0]))
    assert m == pytest.approx([1.0, 1.0, 7.3, 1.0])
    both = measure_interference(st, TransmitDecision([1, 1], [6.3, 6.3]))
    single = measure_interference(st, TransmitDecision([1, 3], [6.3, 6.3]))
    assert both[1] > single[3]


def test_decision_validation():
    with pytest.raises(ValueError):
        TransmitDecision([0, 1], [1.0, 1.0], jammed=(1, 1))
    with pytest.raises(ValueError):
        TransmitDecision([NONE, 1], [1.0, 1.0])
