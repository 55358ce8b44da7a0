"""
Retraining under attack, then the ensemble defense
==================================================

Under a learning jammer the users are retrained centrally with a larger
learning rate. The run is cut into snapshot intervals; each interval keeps a
copy of the network and a count tensor of (previous channel, channel, reward
bin) transitions. Snapshots whose transition counts overlap least with the
others are picked, and the users cycle through them, each one keeping its own
copy and training it locally.

``python3 demos/ensemble_defense.py [seed]``; roughly ten minutes at desk scale.
"""

import sys

import numpy as np

from advjam import experiment
from advjam.config import preset
from advjam.ensemble import correlation_scores

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 0
cfg = preset("desk").replace(seed=seed)
victims = experiment.train_victims(cfg)
res = experiment.scenario_ensemble(cfg, victims, progress_every=0)
tr, b = res.trace, res.boundaries

print(f"retraining slots {b['retrain']}..{b['ensemble']}, collapse detected at {res.collapse_slot}")
lib = res.library
eligible = [m for m in lib.matrices if m.interval <= res.exclude_after]
scores = correlation_scores(eligible)
order = np.argsort(scores, kind="stable")
print("lowest scores:", ", ".join(f"{eligible[i].interval}:{scores[i]:.3g}" for i in order[:cfg.n_ensemble]))
print("ensemble intervals:", res.schedule.intervals)

# sum rate per phase, the ensemble phase split into reload periods
print(f"\nattacked, before retraining  {tr.sum_rate[:b['retrain']].mean():.2f}")
print(f"retraining                   {tr.sum_rate[b['retrain']:b['ensemble']].mean():.2f}")
for p in range(cfg.n_reload_periods):
    lo = b["ensemble"] + p * cfg.t_reload
    print(f"ensemble period {p + 1}            {tr.sum_rate[lo:lo + cfg.t_reload].mean():.2f}")
