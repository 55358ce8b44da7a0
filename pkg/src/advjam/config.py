"""Scenario configuration: defaults, presets, validation and the text format.

The text format is one ``key = value`` pair per line. ``#`` starts a
comment. Keys are the field names of :class:`ScenarioConfig`; the special
key ``preset`` (``full`` or ``desk``) is applied before any other key in
the same file regardless of where it appears.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any, Iterable, Mapping

ATTACKER_TYPES = ("none", "random", "ideal", "dqn")

# Durations shrunk by the desk-scale preset. Window sizes, replay capacity
# and the collapse window are left alone.
SCALED_DURATIONS = (
    "t_train",
    "t_test",
    "attacker_t_train",
    "t_attack_start",
    "t_attack_end",
    "t_retrain_start",
    "t_retrain",
    "t_reload",
)
DESK_SCALE = 10


class ConfigError(ValueError):
    """Invalid configuration, optionally pinned to a key and line number."""

    def __init__(self, message: str, key: str | None = None, line: int | None = None):
        self.key = key
        self.line = line
        where = []
        if key is not None:
            where.append(f"key {key!r}")
        if line is not None:
            where.append(f"line {line}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)


@dataclass
class ScenarioConfig:
    # channel and victims
    f_d: float = 0.2
    slot_duration: float = 0.02
    noise_power: float = 1.0
    n_users: int = 2
    n_channels: int = 4
    p_max: float = 6.3
    n_power_levels: int = 5
    gamma: float = 0.9
    victim_lr: float = 0.04
    lstm_hidden: int = 20
    duel_hidden: int = 10
    eps0: float = 1.0
    eps1: float = 0.1
    t_train: int = 500_000
    t_test: int = 200_000
    test_eps: float = 0.0

    # attacker
    n_jammed: int = 2
    jam_power: float = 6.3
    attacker_gamma: float = 0.9
    attacker_lr: float = 0.2
    attacker_eps0: float = 1.0
    attacker_eps1: float = 0.1
    listen_eps0: float = 0.25
    listen_eps1: float = 0.025
    attacker_t_train: int = 20_000

    # retraining and ensemble
    retrain_lr: float = 0.4
    retrain_eps: float = 0.05
    t_retrain: int = 1_450_000
    n_snapshots: int = 72
    n_ensemble: int = 8
    t_reload: int = 720_000
    ensemble_lr: float = 0.4
    ensemble_eps: float = 0.05
    n_reload_periods: int = 3

    # learning machinery
    history_len: int = 10
    replay_capacity: int = 10_000
    minibatch: int = 16
    grad_clip: float = 5.0
    init_scale: float = 0.1
    forget_bias: float = 1.0

    # transition statistics and collapse detection
    reward_bins: int = 16
    collapse_fraction: float = 0.5
    collapse_rate_floor: float = 1.0
    collapse_window: int = 20_000
    stop_on_collapse: bool = True

    # metrics
    ma_window: int = 1000
    hist_bin_width: float = 0.1

    # run control
    seed: int = 0
    attacker: str = "dqn"
    t_attack_start: int = 50_000
    t_attack_end: int = 200_000
    t_retrain_start: int = 100_000

    preset: str = "full"

    def __post_init__(self):
        self.validate()

    @property
    def n_victim_actions(self) -> int:
        return self.n_channels * self.n_power_levels + 1

    @property
    def power_levels(self) -> list[float]:
        return [i * self.p_max / self.n_power_levels for i in range(1, self.n_power_levels + 1)]

    @property
    def interval_len(self) -> int:
        """Snapshot interval length; a remainder of the retraining run is discarded."""
        return self.t_retrain // self.n_snapshots

    @property
    def dwell(self) -> int:
        return self.t_reload // self.n_ensemble

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)

    def as_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    def validate(self) -> None:
        def need(cond, msg, key):
            if not cond:
                raise ConfigError(msg, key=key)

        need(self.n_users >= 1, "K must be at least 1", "n_users")
        need(self.n_channels >= 1, "N_c must be at least 1", "n_channels")
        need(self.n_power_levels >= 1, "N_p must be at least 1", "n_power_levels")
        need(1 <= self.n_jammed, "K_a must be at least 1", "n_jammed")
        need(self.n_jammed <= self.n_channels, "K_a exceeds N_c", "n_jammed")
        for name in ("f_d", "slot_duration"):
            need(getattr(self, name) >= 0, "must be nonnegative", name)
        for name in ("noise_power", "p_max", "jam_power"):
            need(getattr(self, name) > 0, "must be positive", name)
        for name in ("gamma", "attacker_gamma"):
            need(0 <= getattr(self, name) < 1, "discount must lie in [0, 1)", name)
        for name in ("victim_lr", "attacker_lr", "retrain_lr", "ensemble_lr", "grad_clip"):
            need(getattr(self, name) > 0, "must be positive", name)
        for name in ("eps0", "eps1", "attacker_eps0", "attacker_eps1", "listen_eps0",
                     "listen_eps1", "retrain_eps", "test_eps", "ensemble_eps", "collapse_fraction"):
            need(0 <= getattr(self, name) <= 1, "probability must lie in [0, 1]", name)
        for name in ("lstm_hidden", "duel_hidden", "history_len", "replay_capacity",
                     "minibatch", "reward_bins", "collapse_window", "ma_window",
                     "n_snapshots", "n_ensemble", "n_reload_periods") + SCALED_DURATIONS:
            need(getattr(self, name) > 0, "must be positive", name)
        need(self.hist_bin_width > 0, "must be positive", "hist_bin_width")
        need(self.attacker in ATTACKER_TYPES,
             f"attacker must be one of {', '.join(ATTACKER_TYPES)}", "attacker")
        need(self.n_ensemble <= self.n_snapshots, "N_e exceeds N_s", "n_ensemble")
        need(self.t_reload < self.t_retrain, "T_reload must be shorter than T_retrain", "t_reload")
        need(self.t_retrain >= self.n_snapshots * 2, "T_retrain too short for N_s intervals", "t_retrain")
        need(self.t_reload >= self.n_ensemble, "T_reload shorter than N_e slots", "t_reload")
        need(self.t_attack_start < self.t_retrain_start,
             "phase boundaries must increase (attack start < retrain start)", "t_retrain_start")
        need(self.t_attack_start < self.t_attack_end,
             "phase boundaries must increase (attack start < attack end)", "t_attack_end")
        need(self.preset in ("full", "desk"), "preset must be full or desk", "preset")


def desk_scale(config: ScenarioConfig | None = None) -> ScenarioConfig:
    """Shrink every phase duration by a factor of ten."""
    config = config or ScenarioConfig()
    if config.preset == "desk":
        return config
    changes = {name: getattr(config, name) // DESK_SCALE for name in SCALED_DURATIONS}
    return dataclasses.replace(config, preset="desk", **changes)


def preset(name: str) -> ScenarioConfig:
    if name == "full":
        return ScenarioConfig()
    if name == "desk":
        return desk_scale()
    raise ConfigError("preset must be full or desk", key="preset")


_FIELD_TYPES = {f.name: f.type for f in fields(ScenarioConfig)}


def _convert(key: str, raw: str, line: int | None):
    kind = _FIELD_TYPES[key]
    raw = raw.strip()
    try:
        if kind == "bool":
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if kind == "int":
            value = float(raw)
            if value != int(value):
                raise ValueError(raw)
            return int(value)
        if kind == "float":
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(f"cannot parse {raw!r} as {kind}", key=key, line=line) from None


def parse_pairs(lines: Iterable[str]) -> list[tuple[str, str, int]]:
    pairs = []
    for lineno, text in enumerate(lines, start=1):
        text = text.split("#", 1)[0].strip()
        if not text:
            continue
        if "=" not in text:
            raise ConfigError("expected 'key = value'", line=lineno)
        key, value = (s.strip() for s in text.split("=", 1))
        if key not in _FIELD_TYPES:
            raise ConfigError("unknown key", key=key, line=lineno)
        pairs.append((key, value, lineno))
    return pairs


def parse_config(path: str | Path | None = None,
                 overrides: Mapping[str, str] | Iterable[str] | None = None) -> ScenarioConfig:
    """Build a config from an optional file plus ``key=value`` overrides.

    Overrides win over the file. A ``preset`` key (in the file or the
    overrides) selects the starting defaults before anything else applies.
    """
    pairs: list[tuple[str, str, int | None]] = []
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        pairs.extend(parse_pairs(path.read_text().splitlines()))
    if overrides:
        items = overrides.items() if isinstance(overrides, Mapping) else (
            _split_override(o) for o in overrides)
        for key, value in items:
            if key not in _FIELD_TYPES:
                raise ConfigError("unknown key", key=key)
            pairs.append((key, str(value), None))

    base = "full"
    for key, value, _ in pairs:
        if key == "preset":
            base = value.strip()
    values = preset(base).as_dict()
    for key, value, lineno in pairs:
        if key == "preset":
            continue
        values[key] = _convert(key, value, lineno)
    lines_by_key = {key: lineno for key, _, lineno in pairs}
    try:
        return ScenarioConfig(**values)
    except ConfigError as err:
        if err.key is not None and err.line is None and lines_by_key.get(err.key) is not None:
            raise ConfigError(str(err).split(" (")[0], key=err.key,
                              line=lines_by_key[err.key]) from None
        raise


def _split_override(text: str) -> tuple[str, str]:
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not key=value")
    key, value = text.split("=", 1)
    return key.strip(), value.strip()


def format_config(config: ScenarioConfig) -> str:
    """Render a config in the text format accepted by :func:`parse_config`."""
    out = []
    for name, value in config.as_dict().items():
        if isinstance(value, float):
            value = repr(value)
        out.append(f"{name} = {value}")
    return "\n".join(out) + "\n"
