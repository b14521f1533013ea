import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from isac_slp.harness.config import (
    PROFILES,
    SCHEMA,
    ConfigError,
    ExperimentSpec,
    load_config,
    loads_config,
    parse_text,
    profile_spec,
)


def test_dbm_conversion():
    spec = loads_config("system.P_T = 30 dBm\nsystem.sigma_s2 = -90 dBm\n", profile="desk")
    assert spec.config.P_T == pytest.approx(1.0, rel=1e-12)
    assert spec.config.sigma_s2 == pytest.approx(1e-12, rel=1e-12)


@given(st.floats(-120, 60))
def test_dbm_dbw_agree(x):
    a = loads_config(f"system.P_T = {x!r} dBm", profile="desk").config.P_T
    b = loads_config(f"system.P_T = {x - 30!r} dBW", profile="desk").config.P_T
    assert a == pytest.approx(b, rel=1e-12)


def test_units():
    spec = loads_config(
        "system.delta_f = 0.12 MHz\n"
        "system.d_t = 0.5 km\n"
        "system.theta_true = 0.5 rad\n"
        "system.phi = 30\n"
        "system.gamma = 10 dB, 3\n"
        "system.K = 2\n"
        "experiment.distance_grid = 200, 0.4 km\n",
        profile="desk",
    )
    cfg = spec.config
    assert cfg.delta_f == pytest.approx(120e3)
    assert cfg.d_t == 500.0
    assert cfg.theta_true == 0.5
    assert cfg.phi == pytest.approx(math.pi / 6)
    assert spec.distance_grid == (200.0, 400.0)


def test_unknown_key_reports_key_and_line():
    with pytest.raises(ConfigError) as exc:
        loads_config("system.M = 8\n\n# comment\nsystem.bogus = 3\n", profile="desk")
    assert exc.value.key == "system.bogus"
    assert exc.value.line == 4
    assert "system.bogus" in str(exc.value) and "line 4" in str(exc.value)


def test_more_users_than_antennas():
    with pytest.raises(ConfigError) as exc:
        loads_config("system.M = 4\nsystem.K = 9\n", profile="desk")
    assert exc.value.key in ("system.K", "system.M")
    assert exc.value.line in (1, 2)


@pytest.mark.parametrize("text", [
    "system.M = eight",
    "system.P_T = 3 parsecs",
    "experiment.pfa_grid = 0.5, 0.1",
    "experiment.pfa_grid = 0.1, 1.5",
    "experiment.seed = -1",
    "experiment.schemes = proposed, magic",
    "detector.roc_grid = everywhere",
    "no equals sign",
])
def test_bad_values(text):
    with pytest.raises(ConfigError):
        loads_config(text, profile="desk")


def test_duplicate_key():
    with pytest.raises(ConfigError) as exc:
        parse_text("system.M = 4\nsystem.M = 8\n")
    assert exc.value.line == 2


def test_comments_and_blank_lines():
    entries = parse_text("# header\n\nsystem.M = 4  # trailing\n")
    assert entries == [("system.M", "4", 3)]


def test_reference_profile():
    spec = profile_spec("reference")
    cfg = spec.config
    assert (cfg.M, cfg.K, cfg.N) == (32, 8, 256)
    assert cfg.P_T == pytest.approx(1.0)
    assert cfg.sigma_si2 == pytest.approx(1e-11)
    assert cfg.theta_true == pytest.approx(math.radians(30))
    assert spec.trials == 100 and spec.mc_glrt_trials == 10_000


def test_desk_profile_delays_fit():
    spec = profile_spec("desk")
    assert all(n < spec.config.N for n in spec.check_distances())


def test_distance_beyond_block():
    spec = profile_spec("desk", distance_grid=(200.0, 5000.0))
    with pytest.raises(ConfigError) as exc:
        spec.check_distances()
    assert exc.value.key == "experiment.distance_grid"


def test_profile_key_in_file(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("profile = reference\nexperiment.trials = 3\n")
    spec = load_config(path)
    assert spec.config.M == 32 and spec.trials == 3


def test_unknown_profile():
    with pytest.raises(ConfigError):
        loads_config("profile = huge\n")


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.cfg")


def test_every_profile_key_in_schema():
    for text in PROFILES.values():
        for key, _, _ in parse_text(text):
            assert key in SCHEMA


def test_spec_is_frozen_and_echoes():
    spec = ExperimentSpec()
    with pytest.raises(Exception):
        spec.trials = 3
    echo = spec.echo()
    assert echo["config"]["M"] == spec.config.M
    assert echo["pfa_grid"] == list(spec.pfa_grid)
