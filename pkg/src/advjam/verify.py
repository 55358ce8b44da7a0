"""Fast self-checks of the invariants the simulator relies on.

Each check returns ``(name, ok, detail)``. :func:`run_all` is what the
``verify`` subcommand executes; it takes a few seconds.
"""

from __future__ import annotations

import math

import numpy as np

from . import agents, qnet
from .channel import NONE, TransmitDecision, cscg, evolve, fading_correlation, init_channel, rates
from .config import ScenarioConfig, preset
from .ensemble import TransitionMatrix, accumulate_transition, correlation
from .replay import ReplayHistory


def _brute_rates(g, channels, powers, jammed, jam_power, noise):
    k_users = len(channels)
    out = []
    for k in range(k_users):
        if channels[k] == NONE:
            out.append(0.0)
            continue
        c = channels[k]
        interference = sum(powers[j] * g[k, j, c] for j in range(k_users) if j != k and channels[j] == c)
        jam = jam_power * g[k, k_users, c] if c in jammed else 0.0
        out.append(math.log2(1 + powers[k] * g[k, k, c] / (noise + interference + jam)))
    return out


def check_rates(n: int = 200, seed: int = 1):
    rng = np.random.default_rng(seed)
    cfg = ScenarioConfig()
    state = init_channel(cfg, rng)
    worst = 0.0
    for _ in range(n):
        state = evolve(state, rng)
        ch = rng.integers(-1, cfg.n_channels, size=cfg.n_users)
        pw = np.where(ch == NONE, 0.0, rng.choice(cfg.power_levels, size=cfg.n_users))
        jammed = tuple(sorted(rng.choice(cfg.n_channels, cfg.n_jammed, replace=False))) if rng.random() < 0.7 else ()
        dec = TransmitDecision(ch, pw, jammed, cfg.jam_power)
        got, total = rates(state, dec)
        want = _brute_rates(state.power_gains, ch, pw, jammed, cfg.jam_power, cfg.noise_power)
        worst = max(worst, float(np.max(np.abs(got - want))), abs(total - math.fsum(want)))
    return "rates", worst < 1e-12, f"max abs error {worst:.2e}"


def check_codecs():
    ok = all(agents.encode_victim_action(*agents.decode_victim_action(a, 4, 5), 4, 5) == a for a in range(21))
    ok &= all(agents.encode_attacker_action(agents.decode_attacker_action(a, 4, 2), 4, 2) == a
              for a in range(6))
    return "action codecs", bool(ok), "victim 21, attacker 6 actions"


def check_dueling(seed: int = 2):
    rng = np.random.default_rng(seed)
    p = qnet.init_params(5, 21, rng, scale=0.5)
    hist = rng.normal(size=(8, 10, 5))
    q = qnet.forward_batch(p, hist)
    v = qnet.state_value(p, hist)
    dev = float(np.max(np.abs((q - v[:, None]).sum(axis=1))))
    return "dueling identity", dev < 1e-9, f"max |sum(Q - V)| {dev:.1e}"


def check_gradient(trials: int = 5, seed: int = 3):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        p = qnet.init_params(3, 4, rng, n_hidden=4, n_duel=3, history_len=3, scale=0.5)
        h = rng.normal(size=(4, 3, 3))
        a = rng.integers(4, size=4)
        y = rng.normal(size=4)
        _, grad = qnet.loss_and_grad(p, h, a, y)
        num = np.empty_like(grad)
        for i in range(len(grad)):
            old = p.flat[i]
            p.flat[i] = old + 1e-5
            up, _ = qnet.loss_and_grad(p, h, a, y)
            p.flat[i] = old - 1e-5
            down, _ = qnet.loss_and_grad(p, h, a, y)
            p.flat[i] = old
            num[i] = (up - down) / 2e-5
        worst = max(worst, float(np.max(np.abs(grad - num)) / max(np.max(np.abs(num)), 1e-12)))
    return "BPTT gradient", worst < 1e-4, f"max relative error {worst:.1e}"


def check_snapshot(seed: int = 4):
    p = qnet.init_params(5, 21, np.random.default_rng(seed))
    q, interval, slot = qnet.deserialize_params(qnet.serialize_params(p, 7, 1234))
    ok = q == p and (interval, slot) == (7, 1234)
    return "snapshot round trip", bool(ok), "bit-identical"


def check_replay():
    r = ReplayHistory(5, 2, 1)
    for i in range(8):
        r.push(np.full((2, 1), i), 0, float(i), np.full((2, 1), i + 1))
    rewards = [rec.reward for rec in r.records()]
    return "replay FIFO", rewards == [3.0, 4.0, 5.0, 6.0, 7.0], f"kept {rewards}"


def check_fading(chains: int = 4000, lag: int = 50, seed: int = 5):
    rng = np.random.default_rng(seed)
    rho = fading_correlation(0.2, 0.02)
    h0 = cscg(rng, chains)
    h = h0.copy()
    for _ in range(lag):
        h = rho * h + math.sqrt(1 - rho * rho) * cscg(rng, chains)
    p0 = float(np.mean(np.abs(h0) ** 2))
    p1 = float(np.mean(np.abs(h) ** 2))
    corr = float(np.real(np.mean(h * np.conj(h0)))) / math.sqrt(p0 * p1)
    ok = abs(corr - rho ** lag) < 0.05 and abs(p0 - 1) < 0.1 and abs(p1 - 1) < 0.1
    return "fading statistics", ok, f"lag-{lag} corr {corr:.4f} vs {rho ** lag:.4f}, power {p1:.3f}"


def check_transitions(seed: int = 6):
    rng = np.random.default_rng(seed)
    k_users, n_channels, t_e = 2, 4, 50
    m = TransitionMatrix.empty(n_channels, 16)
    prev = None
    for _ in range(t_e):
        cur = rng.integers(n_channels, size=k_users)
        if prev is not None:
            accumulate_transition(m, prev, cur, float(rng.uniform(0, 15)))
        prev = cur
    a = rng.integers(0, 5, size=(4, 4, 16))
    b = rng.integers(0, 5, size=(4, 4, 16))
    ok = m.total == k_users * (t_e - 1) and correlation(a, b) == correlation(b, a)
    return "transition counts", ok, f"total {m.total} vs {k_users * (t_e - 1)}"


def check_determinism():
    from .experiment import Phase, World
    cfg = preset("desk").replace(seed=11)
    traces = []
    for _ in range(2):
        w = World(cfg, attacker="dqn")
        w.set_phase(Phase.TRAIN)
        w.run(60)
        w.activate_attacker()
        w.run(60)
        traces.append(w.trace)
    ok = all(np.array_equal(getattr(traces[0], c), getattr(traces[1], c))
             for c in ("sum_rate", "actions", "attacker_action", "attacker_mode"))
    return "seeded determinism", ok, "two short runs compared"


def check_schedules():
    s = agents.LinearSchedule(1.0, 0.1, 1000)
    ok = s.value(0) == 1.0 and s.value(1000) == 0.1 and s.value(5000) == 0.1
    rng = np.random.default_rng(7)
    last = agents.Mode.OFF
    for _ in range(2000):
        mode = agents.attacker_mode_select(0.9, 0.1, last, rng)
        ok &= not (mode == last == agents.Mode.LISTEN)
        last = mode
    return "schedules and listening", bool(ok), "endpoints exact, no back-to-back listening"


CHECKS = (check_rates, check_codecs, check_dueling, check_gradient, check_snapshot, check_replay,
          check_fading, check_transitions, check_schedules, check_determinism)


def run_all():
    return [check() for check in CHECKS]
