"""Slot-level simulation of victims, jammer and defense, and the four scenarios.

A :class:`World` owns everything that evolves during a run: the channel,
the victims' networks, histories and replay, and the jammer. Each call to
:meth:`World.run_slot` advances the shared clock by one slot:

1. every victim and the jammer decide from what they saw up to the
   previous slot (nobody sees another's current choice);
2. the fading evolves one step;
3. rates and the sum rate are computed, jamming included;
4. observations are appended, replay is updated and the active phase's
   training steps run;
5. the slot is recorded in the :class:`MetricsTrace`.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import agents, qnet
from .agents import Mode
from .channel import ChannelState, TransmitDecision, evolve, init_channel, measure_interference, rates
from .config import ScenarioConfig
from .ensemble import (CollapseMonitor, EnsembleSchedule, SnapshotLibrary, TransitionMatrix,
                       accumulate_transition, model_index, reload_tick, select_ensemble)
from .metrics import empirical_pdf_cdf, moving_average
from .replay import ReplayHistory, sample_minibatch
from .rng import StreamFactory

log = logging.getLogger(__name__)


class Phase(enum.IntEnum):
    TRAIN = 0      # central training with decaying exploration
    TEST = 1       # frozen parameters, greedy
    RETRAIN = 2    # central retraining under attack
    ENSEMBLE = 3   # local training plus periodic reloads


class MetricsTrace:
    """Per-slot record of a run, stored in growable numpy columns."""

    COLUMNS = ("sum_rate", "phase", "attacker_mode", "attacker_action", "model")

    def __init__(self, n_users: int, capacity: int = 1024):
        self.n_users = n_users
        self._n = 0
        self._cap = 0
        self._cols: dict[str, np.ndarray] = {}
        self._spec = {
            "sum_rate": ((), np.float64), "phase": ((), np.int8),
            "attacker_mode": ((), np.int8), "attacker_action": ((), np.int32),
            "model": ((), np.int32),
            "rates": ((n_users,), np.float64), "actions": ((n_users,), np.int32),
            "channels": ((n_users,), np.int32), "powers": ((n_users,), np.float64),
        }
        self._grow(capacity)
        self.jammed: list[tuple[int, ...]] = []

    def _grow(self, capacity):
        for name, (shape, dtype) in self._spec.items():
            new = np.zeros((capacity,) + shape, dtype=dtype)
            if name in self._cols:
                new[:self._n] = self._cols[name][:self._n]
            self._cols[name] = new
        self._cap = capacity

    def append(self, sum_rate, rates, actions, channels, powers, phase, mode, attacker_action,
               jammed, model=-1):
        if self._n == self._cap:
            self._grow(2 * self._cap)
        i = self._n
        c = self._cols
        c["sum_rate"][i] = sum_rate
        c["rates"][i] = rates
        c["actions"][i] = actions
        c["channels"][i] = channels
        c["powers"][i] = powers
        c["phase"][i] = phase
        c["attacker_mode"][i] = mode
        c["attacker_action"][i] = attacker_action
        c["model"][i] = model
        self.jammed.append(jammed)
        self._n += 1

    def __len__(self):
        return self._n

    def __getattr__(self, name):
        cols = self.__dict__.get("_cols")
        if cols is not None and name in cols:
            return cols[name][:self._n]
        raise AttributeError(name)

    def moving_average(self, window: int) -> np.ndarray:
        return moving_average(self.sum_rate, window)

    def histogram(self, bin_width: float = 0.1, from_slot: int = 0):
        return empirical_pdf_cdf(self.sum_rate, bin_width, from_slot)

    def mean_rate(self, start: int = 0, stop: int | None = None) -> float:
        return float(np.mean(self.sum_rate[start:stop]))

    def no_transmission(self, no_tx_action: int) -> np.ndarray:
        """Number of silent victims per slot."""
        return (self.actions == no_tx_action).sum(axis=1)


class DqnAttacker:
    """The learning jammer: listen/attack modes, replay and per-slot training."""

    def __init__(self, config: ScenarioConfig, streams: StreamFactory, start_slot: int):
        self.config = config
        self.n_channels = config.n_channels
        self.n_jammed = config.n_jammed
        n_actions = len(agents.jam_subsets(config.n_channels, config.n_jammed))
        width = 1 + config.n_channels
        self.params = qnet.init_params(width, n_actions, streams["attacker-init"],
                                       config.lstm_hidden, config.duel_hidden, config.history_len,
                                       config.init_scale, config.forget_bias)
        self.history = np.zeros((config.history_len, width))
        self.replay = ReplayHistory(config.replay_capacity, config.history_len, width)
        self.eps = agents.LinearSchedule(config.attacker_eps0, config.attacker_eps1, config.attacker_t_train)
        self.listen_eps = agents.LinearSchedule(config.listen_eps0, config.listen_eps1, config.attacker_t_train)
        self.start_slot = start_slot
        self.last_mode = Mode.OFF
        self.mode_rng = streams["attacker-mode"]
        self.explore_rng = streams["attacker-explore"]
        self.replay_rng = streams["attacker-replay"]
        self.losses = 0.0

    def decide(self, slot: int) -> tuple[Mode, int, tuple[int, ...]]:
        t = slot - self.start_slot
        mode = agents.attacker_mode_select(self.listen_eps.value(t), self.eps.value(t),
                                           self.last_mode, self.mode_rng)
        if mode == Mode.LISTEN:
            return mode, -1, ()
        action = agents.attacker_act_attacking(self.params, self.history, mode, self.explore_rng)
        return mode, action, agents.decode_attacker_action(action, self.n_channels, self.n_jammed)

    def observe(self, mode: Mode, action: int, sum_rate: float, measurements=None) -> None:
        if mode == Mode.LISTEN:
            action, reward, obs = agents.attacker_listen(measurements, self.n_jammed, sum_rate)
        else:
            jammed = agents.decode_attacker_action(action, self.n_channels, self.n_jammed)
            reward = agents.attacker_reward(sum_rate)
            obs = agents.attacker_observation(sum_rate, jammed, self.n_channels)
        nxt = agents.push_history(self.history, obs)
        self.replay.push(self.history, action, reward, nxt)
        self.history = nxt
        self.last_mode = mode
        cfg = self.config
        # the jammer keeps training for as long as it is active
        if len(self.replay) >= cfg.minibatch:
            batch = sample_minibatch(self.replay, cfg.minibatch, self.replay_rng)
            self.losses = qnet.train_step(self.params, batch, cfg.attacker_gamma, cfg.attacker_lr,
                                          cfg.grad_clip)


@dataclass
class SlotInfo:
    slot: int
    phase: Phase
    actions: np.ndarray
    channels: np.ndarray
    powers: np.ndarray
    rates: np.ndarray
    sum_rate: float
    mode: Mode
    jammed: tuple[int, ...]
    gains: np.ndarray | None = None


class World:
    """Everything that evolves during one seeded run."""

    def __init__(self, config: ScenarioConfig, victim_params: qnet.QNetworkParams | None = None,
                 attacker: str | None = None, log_gains: bool = False):
        self.config = config
        cfg = config
        self.streams = StreamFactory(cfg.seed)
        self.channel: ChannelState = init_channel(cfg, self.streams["fading"])
        self.n_inputs = 1 + cfg.n_channels
        self.n_actions = cfg.n_victim_actions
        self.no_tx = self.n_actions - 1
        self.power_levels = np.array(cfg.power_levels)
        if victim_params is None:
            victim_params = qnet.init_params(self.n_inputs, self.n_actions, self.streams["victim-init"],
                                             cfg.lstm_hidden, cfg.duel_hidden, cfg.history_len,
                                             cfg.init_scale, cfg.forget_bias)
        else:
            victim_params = qnet.clone_params(victim_params)
        self.victim_params = victim_params
        self.local_params: list[qnet.QNetworkParams] | None = None
        self.histories = np.zeros((cfg.n_users, cfg.history_len, self.n_inputs))
        self.replay = ReplayHistory(cfg.replay_capacity, cfg.history_len, self.n_inputs)
        self.local_replays: list[ReplayHistory] | None = None
        self.attacker_type = cfg.attacker if attacker is None else attacker
        self.attacker: DqnAttacker | None = None
        self.attack_start: int | None = None
        self.phase = Phase.TEST
        self.phase_slot = 0  # slots elapsed in the current phase
        self.model = -1
        self.slot = 0
        self.trace = MetricsTrace(cfg.n_users)
        self.log_gains = log_gains
        self.gains_log: list[np.ndarray] = []
        self.decisions_log: list[TransmitDecision] = []
        self.boundaries: dict[str, int] = {}
        self.slot_hooks: list[Callable[[SlotInfo], None]] = []

    # ------------------------------------------------------------ phases

    def set_phase(self, phase: Phase, label: str | None = None) -> None:
        self.phase = phase
        self.phase_slot = 0
        self.boundaries[label or phase.name.lower()] = self.slot
        if phase == Phase.ENSEMBLE:
            cfg = self.config
            self.local_replays = [ReplayHistory(cfg.replay_capacity, cfg.history_len, self.n_inputs)
                                  for _ in range(cfg.n_users)]

    def activate_attacker(self) -> None:
        self.attack_start = self.slot
        self.boundaries["attack"] = self.slot
        if self.attacker_type == "dqn":
            self.attacker = DqnAttacker(self.config, self.streams, self.slot)

    def _victim_eps_lr(self) -> tuple[float, float | None]:
        cfg = self.config
        if self.phase == Phase.TRAIN:
            return agents.LinearSchedule(cfg.eps0, cfg.eps1, cfg.t_train).value(self.phase_slot), cfg.victim_lr
        if self.phase == Phase.RETRAIN:
            return cfg.retrain_eps, cfg.retrain_lr
        if self.phase == Phase.ENSEMBLE:
            return cfg.ensemble_eps, cfg.ensemble_lr
        return cfg.test_eps, None

    # ------------------------------------------------------------ slot

    def _victim_actions(self, eps: float) -> np.ndarray:
        cfg = self.config
        rng = self.streams["victim-explore"]
        explore = rng.random(cfg.n_users) < eps if eps > 0 else np.zeros(cfg.n_users, dtype=bool)
        randoms = rng.integers(self.n_actions, size=cfg.n_users) if eps > 0 else None
        actions = np.empty(cfg.n_users, dtype=np.int64)
        if not explore.all():
            if self.local_params is None:
                q = qnet.forward_batch(self.victim_params, self.histories)
            else:
                q = np.stack([qnet.forward(p, h) for p, h in zip(self.local_params, self.histories)])
            actions[:] = np.argmax(q, axis=1)
        if randoms is not None:
            actions[explore] = randoms[explore]
        return actions

    def run_slot(self) -> SlotInfo:
        cfg = self.config
        t = self.slot
        eps, lr = self._victim_eps_lr()

        # 1. simultaneous decisions
        actions = self._victim_actions(eps)
        channels = np.empty(cfg.n_users, dtype=np.int64)
        powers = np.empty(cfg.n_users)
        for k, a in enumerate(actions):
            channels[k], powers[k] = agents.victim_transmission(int(a), cfg.n_channels, self.power_levels)

        mode, att_action, jammed = Mode.OFF, -1, ()
        if self.attack_start is not None:
            if self.attacker is not None:
                mode, att_action, jammed = self.attacker.decide(t)
            elif self.attacker_type == "random":
                mode = Mode.RANDOM
                jammed = agents.random_attacker(self.streams["random-attacker"], cfg.n_channels, cfg.n_jammed)
            elif self.attacker_type == "ideal":
                mode = Mode.IDEAL
                jammed = agents.ideal_attacker(channels, cfg.n_channels, cfg.n_jammed)
            if jammed and att_action < 0:
                att_action = agents.encode_attacker_action(jammed, cfg.n_channels, cfg.n_jammed)

        # 2. fading
        self.channel = evolve(self.channel, self.streams["fading"])

        # 3. rates
        decision = TransmitDecision(channels, powers, jammed, cfg.jam_power if jammed else 0.0)
        victim_rates, sum_rate = rates(self.channel, decision)
        if self.log_gains:
            self.gains_log.append(self.channel.gains.copy())
            self.decisions_log.append(decision)

        # 4. observations, replay, training
        for k in range(cfg.n_users):
            obs = agents.victim_observation(victim_rates[k], channels[k], powers[k], cfg.n_channels)
            nxt = agents.push_history(self.histories[k], obs)
            if lr is not None:
                replay = self.replay if self.local_replays is None else self.local_replays[k]
                replay.push(self.histories[k], actions[k], sum_rate, nxt)
            self.histories[k] = nxt
        if lr is not None:
            rng = self.streams["victim-replay"]
            if self.local_params is None:
                if len(self.replay) >= cfg.minibatch:
                    batch = sample_minibatch(self.replay, cfg.minibatch, rng)
                    qnet.train_step(self.victim_params, batch, cfg.gamma, lr, cfg.grad_clip)
            else:
                for params, replay in zip(self.local_params, self.local_replays):
                    if len(replay) >= cfg.minibatch:
                        batch = sample_minibatch(replay, cfg.minibatch, rng)
                        qnet.train_step(params, batch, cfg.gamma, lr, cfg.grad_clip)
        if self.attacker is not None:
            measurements = measure_interference(self.channel, decision) if mode == Mode.LISTEN else None
            self.attacker.observe(mode, att_action, sum_rate, measurements)

        # 5. record
        self.trace.append(sum_rate, victim_rates, actions, channels, powers, self.phase, mode,
                          att_action, jammed, self.model)
        info = SlotInfo(t, self.phase, actions, channels, powers, victim_rates, sum_rate, mode, jammed,
                        self.gains_log[-1] if self.log_gains else None)
        for hook in self.slot_hooks:
            hook(info)
        self.slot += 1
        self.phase_slot += 1
        return info

    def run(self, n_slots: int, before_slot: Callable[["World"], bool] | None = None,
            progress_every: int = 0) -> int:
        """Run up to ``n_slots`` slots; ``before_slot`` returning True stops early."""
        for i in range(n_slots):
            if before_slot is not None and before_slot(self):
                return i
            self.run_slot()
            if progress_every and self.slot % progress_every == 0:
                tail = self.trace.sum_rate[-progress_every:]
                log.info("slot %d phase %s mean sum rate %.3f", self.slot, self.phase.name, tail.mean())
        return n_slots


@dataclass
class ScenarioResult:
    config: ScenarioConfig
    trace: MetricsTrace
    boundaries: dict[str, int]
    victim_params: qnet.QNetworkParams
    attacker_params: qnet.QNetworkParams | None = None
    library: SnapshotLibrary | None = None
    schedule: EnsembleSchedule | None = None
    collapse_slot: int | None = None
    exclude_after: int | None = None
    extra: dict = field(default_factory=dict)

    def manifest(self) -> dict:
        out = {"config": self.config.as_dict(), "seed": self.config.seed,
               "boundaries": dict(self.boundaries), "slots": len(self.trace)}
        if self.collapse_slot is not None:
            out["collapse_slot"] = self.collapse_slot
        if self.exclude_after is not None:
            out["exclude_after"] = self.exclude_after
        if self.schedule is not None:
            out["ensemble_intervals"] = list(self.schedule.intervals)
        return out


def _result(world: World, **kw) -> ScenarioResult:
    attacker = world.attacker.params if world.attacker is not None else None
    return ScenarioResult(world.config, world.trace, dict(world.boundaries), world.victim_params,
                          attacker, **kw)


def scenario_baseline(config: ScenarioConfig, progress_every: int = 0) -> ScenarioResult:
    """Train the victims centrally, then freeze and test them with no attacker."""
    world = World(config, attacker="none")
    world.set_phase(Phase.TRAIN)
    world.run(config.t_train, progress_every=progress_every)
    world.set_phase(Phase.TEST)
    world.run(config.t_test, progress_every=progress_every)
    world.boundaries["end"] = world.slot
    return _result(world)


def train_victims(config: ScenarioConfig, progress_every: int = 0) -> qnet.QNetworkParams:
    world = World(config, attacker="none")
    world.set_phase(Phase.TRAIN)
    world.run(config.t_train, progress_every=progress_every)
    return world.victim_params


def _attack_world(config, victim_params, progress_every, log_gains=False) -> World:
    if victim_params is None:
        victim_params = train_victims(config, progress_every)
    world = World(config, victim_params, log_gains=log_gains)
    world.set_phase(Phase.TEST)
    return world


def _attack_until(world: World, stop: int, progress_every: int) -> None:
    cfg = world.config

    def arm(w: World) -> bool:
        if w.attack_start is None and w.attacker_type != "none" and w.slot >= cfg.t_attack_start:
            w.activate_attacker()
        return False

    world.run(stop - world.slot, before_slot=arm, progress_every=progress_every)


def scenario_attack(config: ScenarioConfig, victim_params: qnet.QNetworkParams | None = None,
                    progress_every: int = 0, log_gains: bool = False) -> ScenarioResult:
    """Well-trained, frozen victims; the configured jammer switches on at ``t_attack_start``."""
    world = _attack_world(config, victim_params, progress_every, log_gains)
    _attack_until(world, config.t_attack_end, progress_every)
    world.boundaries["end"] = world.slot
    result = _result(world)
    result.extra["world"] = world
    return result


def exclusion_interval(collapse_slot: int | None, retrain_start: int, interval_len: int,
                       n_intervals: int) -> int:
    """Last interval eligible for the ensemble: the one in which collapse was first detected."""
    if collapse_slot is None:
        return n_intervals - 1
    return int(min((collapse_slot - retrain_start) // interval_len, n_intervals - 1))


def _retrain(world: World, progress_every: int) -> tuple[SnapshotLibrary, int | None]:
    """Central retraining with per-interval snapshots and transition counts."""
    cfg = world.config
    interval_len = cfg.interval_len
    library = SnapshotLibrary()
    monitor = CollapseMonitor(cfg.collapse_window, cfg.n_users, cfg.collapse_fraction,
                              cfg.collapse_rate_floor)
    world.set_phase(Phase.RETRAIN)
    retrain_start = world.slot
    state = {"matrix": None, "prev": None, "collapse": None}

    def on_slot(info: SlotInfo) -> None:
        offset = info.slot - retrain_start
        n, pos = divmod(offset, interval_len)
        if pos == 0:
            state["matrix"] = TransitionMatrix.empty(cfg.n_channels, cfg.reward_bins, n)
        elif state["prev"] is not None:
            prev_channels, prev_rate = state["prev"]
            accumulate_transition(state["matrix"], prev_channels, info.channels, prev_rate)
        state["prev"] = (info.channels.copy(), info.sum_rate)
        if pos == interval_len - 1:
            library.add(n, world.victim_params, state["matrix"])
        n_silent = int(np.sum(info.actions == world.no_tx))
        if monitor.update(n_silent, info.sum_rate) and state["collapse"] is None:
            state["collapse"] = info.slot

    def stop(w: World) -> bool:
        return cfg.stop_on_collapse and state["collapse"] is not None

    world.slot_hooks.append(on_slot)
    try:
        world.run(interval_len * cfg.n_snapshots, before_slot=stop, progress_every=progress_every)
    finally:
        world.slot_hooks.remove(on_slot)
    if state["collapse"] is not None:
        world.boundaries["collapse"] = state["collapse"]
        log.info("collapse detected at slot %d", state["collapse"])
    return library, state["collapse"]


def scenario_retrain_collapse(config: ScenarioConfig, victim_params: qnet.QNetworkParams | None = None,
                              progress_every: int = 0) -> ScenarioResult:
    """Attack, then central retraining until ``t_retrain`` slots pass or collapse is detected."""
    world = _attack_world(config, victim_params, progress_every)
    _attack_until(world, config.t_retrain_start, progress_every)
    library, collapse = _retrain(world, progress_every)
    world.boundaries["end"] = world.slot
    exclude = exclusion_interval(collapse, world.boundaries["retrain"], config.interval_len,
                                 len(library))
    result = _result(world, library=library, collapse_slot=collapse, exclude_after=exclude)
    result.extra["world"] = world
    return result


def scenario_ensemble(config: ScenarioConfig, victim_params: qnet.QNetworkParams | None = None,
                      progress_every: int = 0) -> ScenarioResult:
    """Retraining as above, then users cycle through the selected snapshots."""
    result = scenario_retrain_collapse(config, victim_params, progress_every)
    world: World = result.extra.pop("world")
    schedule = select_ensemble(result.library, config.n_ensemble, config.t_reload, result.exclude_after)
    world.set_phase(Phase.ENSEMBLE)
    start = world.slot
    world.local_params = [None] * config.n_users

    def reload(w: World) -> bool:
        offset = w.slot - start
        params = reload_tick(schedule, offset)
        if params is not None:
            w.local_params = [qnet.clone_params(params) for _ in range(config.n_users)]
            w.model = schedule.intervals[model_index(schedule, offset)]
        return False

    world.run(config.n_reload_periods * config.t_reload, before_slot=reload, progress_every=progress_every)
    world.boundaries["end"] = world.slot
    return _result(world, library=result.library, schedule=schedule,
                   collapse_slot=result.collapse_slot, exclude_after=result.exclude_after)
