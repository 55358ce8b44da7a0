"""
Two users learning to share four channels
=========================================

Both users start from the same randomly initialised LSTM dueling Q-network,
trained centrally from a shared replay memory, and each then acts on its own
observations. After training the policy is frozen and tested with no
exploration. The fixed (f_d = 0) environment is run as a reference.

``python3 demos/baseline.py [seed]`` uses the desk preset (durations / 10),
about a minute per environment on one core.
"""

import sys

import numpy as np

from advjam import experiment
from advjam.config import preset

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 0
cfg = preset("desk").replace(seed=seed)

for f_d in (cfg.f_d, 0.0):
    res = experiment.scenario_baseline(cfg.replace(f_d=f_d), progress_every=0)
    tr = res.trace
    t0 = res.boundaries["test"]
    ma = tr.moving_average(cfg.ma_window)
    print(f"\nf_d = {f_d}")
    # the learning curve, sampled every 5000 slots
    for t in range(4999, t0, 5000):
        print(f"  slot {t + 1:6d}  moving average {ma[t]:.2f}")
    test = tr.sum_rate[t0:]
    print(f"  test phase mean {test.mean():.3f}")

    # how the users spend the test phase
    acts = tr.actions[t0:]
    silent = acts == cfg.n_victim_actions - 1
    ch = tr.channels[t0:]
    shared = (ch[:, 0] == ch[:, 1]) & (ch[:, 0] >= 0)
    print(f"  silent actions {silent.mean():.1%}, both users on one channel {shared.mean():.1%}")

    h = tr.histogram(cfg.hist_bin_width, t0)
    for q in (0.1, 0.5, 0.9):
        print(f"  sum rate below {h.bin_lower[np.searchsorted(h.cdf, q)] + cfg.hist_bin_width:.1f} "
              f"in {q:.0%} of test slots")
