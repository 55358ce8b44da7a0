"""
Four jammers against the same frozen users
==========================================

The victims are trained once without any attacker and then frozen. Each
attacker gets the same channel realisation (fading draws come from their own
stream) and starts at the same slot:

* none: the reference;
* random: two channels chosen uniformly each slot;
* ideal: jams exactly the channels the users occupy in that slot;
* dqn: the learning jammer, alternating listening and attacking.

``python3 demos/attack_comparison.py [seed]``; about two minutes at desk scale.
"""

import sys

from advjam import experiment
from advjam.config import preset

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 0
cfg = preset("desk").replace(seed=seed)
victims = experiment.train_victims(cfg)

start = cfg.t_attack_start
settled = start + cfg.attacker_t_train  # attacker exploration has ended
print(f"attack starts at slot {start}, scored from slot {settled} to {cfg.t_attack_end}")

post = {}
for kind in ("none", "random", "ideal", "dqn"):
    tr = experiment.scenario_attack(cfg.replace(attacker=kind), victims).trace
    pre, post[kind] = tr.sum_rate[:start].mean(), tr.sum_rate[settled:].mean()
    print(f"{kind:>6}: before {pre:.2f}  after {post[kind]:.2f}  ({post[kind] / pre - 1:+.0%})")

gap = post["none"] - post["ideal"]
if gap > 0:
    print(f"\nthe learning jammer achieves {(post['none'] - post['dqn']) / gap:.0%} of the ideal jammer's damage")
