"""
Channel statistics and what they allow
======================================

Before training anything it helps to know what the fading channel can give.
This script checks the Gauss-Markov fading against its Bessel correlation,
then estimates two ceilings by Monte Carlo: the sum rate of a user pair that
always knows the channel, and the rate a user keeps while being jammed.

Run with ``python3 demos/channel_and_bounds.py``; it takes a few seconds.
"""

import itertools
import math

import numpy as np

from advjam.channel import NONE, ChannelState, TransmitDecision, cscg, evolve, fading_correlation, rates
from advjam.config import ScenarioConfig

cfg = ScenarioConfig()
rng = np.random.default_rng(0)

# slot-to-slot correlation for the default Doppler and slot length
rho = fading_correlation(cfg.f_d, cfg.slot_duration)
print(f"rho = J0(2 pi f_d T) = {rho:.10f}")

# evolve a bundle of independent channels and measure the lag-1 correlation
state = ChannelState(cscg(rng, (200, 3, 3, 4)), rho)
cross = power = 0.0
for _ in range(20_000):
    nxt = evolve(state, rng)
    cross += np.real(np.vdot(state.gains, nxt.gains))
    power += np.vdot(state.gains, state.gains).real
    state = nxt
print(f"empirical lag-1 correlation {cross / power:.6f}, mean |h|^2 {power / (20_000 * state.gains.size):.4f}")

# coherence: how many slots until the correlation drops to one half
print(f"correlation falls to 0.5 after about {math.log(0.5) / math.log(rho):.0f} slots")

# %%
# Ceiling with full channel knowledge
# -----------------------------------
# Two users, four channels, five power levels. With perfect knowledge the best
# move is to sit on distinct channels at full power (sharing only adds
# interference), so the ceiling is the best distinct pair.

K, C = cfg.n_users, cfg.n_channels
draws = 20_000
best = np.empty(draws)
for i in range(draws):
    g = np.abs(cscg(rng, (K + 1, K + 1, C))) ** 2
    direct = [np.log2(1 + cfg.p_max * g[k, k]) for k in range(K)]
    best[i] = max(direct[0][a] + direct[1][b] for a, b in itertools.permutations(range(C), 2))
print(f"full-knowledge sum rate: mean {best.mean():.3f}, std {best.std():.3f}")

# brute force over every joint action on a few instances agrees
for _ in range(5):
    g = cscg(rng, (K + 1, K + 1, C))
    st = ChannelState(g, 1.0)
    top = 0.0
    for chans in itertools.product([NONE, *range(C)], repeat=K):
        for pw in itertools.product(cfg.power_levels, repeat=K):
            d = TransmitDecision(list(chans), [0.0 if c == NONE else p for c, p in zip(chans, pw)], (), 0.0)
            top = max(top, rates(st, d)[1])
    gg = np.abs(g) ** 2
    pair = max(np.log2(1 + cfg.p_max * gg[0, 0, a]) + np.log2(1 + cfg.p_max * gg[1, 1, b])
               for a, b in itertools.permutations(range(C), 2))
    print(f"  brute force {top:.4f}  distinct-pair rule {pair:.4f}")

# %%
# Rate under jamming
# ------------------
# A user whose channel carries a jammer of equal power still gets something,
# because the jammer's own link fades too.

x = rng.exponential(size=500_000)
y = rng.exponential(size=500_000)
jammed = np.log2(1 + cfg.p_max * x / (1 + cfg.jam_power * y))
print(f"rate of one jammed user: {jammed.mean():.3f} (clean: {np.log2(1 + cfg.p_max * x).mean():.3f})")

# if the user may pick the best of its four channels and all four happen to be jammed
xs = rng.exponential(size=(200_000, C))
ys = rng.exponential(size=(200_000, C))
print(f"best of {C} jammed channels: {np.log2(1 + cfg.p_max * xs / (1 + cfg.jam_power * ys)).max(axis=1).mean():.3f}")
