import pytest

from advjam.config import ConfigError, ScenarioConfig, desk_scale, format_config, parse_config, preset


def test_empty_file_gives_table_defaults(tmp_path):
    path = tmp_path / "empty.cfg"
    path.write_text("")
    cfg = parse_config(path)
    assert cfg == ScenarioConfig()
    # victim table
    assert (cfg.f_d, cfg.slot_duration, cfg.noise_power, cfg.n_users, cfg.n_channels) == (0.2, 0.02, 1.0, 2, 4)
    assert (cfg.p_max, cfg.n_power_levels, cfg.gamma, cfg.victim_lr) == (6.3, 5, 0.9, 0.04)
    assert (cfg.lstm_hidden, cfg.duel_hidden, cfg.eps0, cfg.eps1) == (20, 10, 1.0, 0.1)
    assert (cfg.t_train, cfg.t_test) == (500_000, 200_000)
    # attacker table
    assert (cfg.n_jammed, cfg.jam_power, cfg.attacker_lr, cfg.attacker_t_train) == (2, 6.3, 0.2, 20_000)
    assert (cfg.attacker_eps0, cfg.attacker_eps1, cfg.listen_eps0, cfg.listen_eps1) == (1.0, 0.1, 0.25, 0.025)
    # defense table
    assert (cfg.retrain_lr, cfg.retrain_eps, cfg.t_retrain) == (0.4, 0.05, 1_450_000)
    assert (cfg.n_snapshots, cfg.n_ensemble, cfg.t_reload) == (72, 8, 720_000)


def test_power_grid():
    assert ScenarioConfig().power_levels == pytest.approx([1.26, 2.52, 3.78, 5.04, 6.3])


def test_k_a_exceeds_n_c(tmp_path):
    path = tmp_path / "bad.cfg"
    path.write_text("# jam too many\nn_jammed = 7\n")
    with pytest.raises(ConfigError, match="K_a exceeds N_c") as err:
        parse_config(path)
    assert err.value.key == "n_jammed" and err.value.line == 2


def test_override_beats_file(tmp_path):
    path = tmp_path / "a.cfg"
    path.write_text("f_d = 0.2\n")
    assert parse_config(path, ["f_d=0"]).f_d == 0.0


def test_unknown_key_and_missing_file(tmp_path):
    path = tmp_path / "a.cfg"
    path.write_text("t_train = 10\nbogus = 1\n")
    with pytest.raises(ConfigError, match="unknown key") as err:
        parse_config(path)
    assert err.value.line == 2
    with pytest.raises(ConfigError, match="not found"):
        parse_config(tmp_path / "missing.cfg")


def test_bad_values():
    with pytest.raises(ConfigError):
        parse_config(None, ["n_users=two"])
    with pytest.raises(ConfigError):
        parse_config(None, ["gamma=1.0"])
    with pytest.raises(ConfigError):
        parse_config(None, ["t_attack_start=200000"])
    with pytest.raises(ConfigError):
        parse_config(None, ["attacker=laser"])


def test_desk_preset_scales_durations_only():
    d = preset("desk")
    assert d.t_train == 50_000 and d.t_test == 20_000 and d.attacker_t_train == 2_000
    assert d.t_retrain == 145_000 and d.t_reload == 72_000 and d.t_attack_start == 5_000
    assert d.collapse_window == 20_000 and d.replay_capacity == 10_000
    assert desk_scale(d) == d
    assert parse_config(None, ["preset=desk"]) == d


def test_format_round_trip(tmp_path):
    cfg = preset("desk").replace(seed=17, f_d=0.0, attacker="random")
    path = tmp_path / "echo.cfg"
    path.write_text(format_config(cfg))
    assert parse_config(path) == cfg
