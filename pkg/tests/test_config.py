import dataclasses
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from uavsem.config import (ScenarioConfig, config_from_dict, config_to_dict,
                           load_config, save_config, validate_config)


def test_default_scenario_is_valid():
    assert validate_config(ScenarioConfig()) == []


def test_slot_exceeding_inter_arrival_flagged():
    cfg = ScenarioConfig(slot_duration=25.0, arrival_rate_range=(0.05, 0.2))
    bad = validate_config(cfg)
    assert any("slot exceeds min inter-arrival" in v for v in bad)


def test_rotor_constants_must_sum_to_hover_power():
    cfg = ScenarioConfig(rotor_constants=(70.0, 40.0, 0.009, 120.0, 4.03))
    bad = validate_config(cfg)
    assert any("c1 + c2" in v for v in bad)


def test_slot_equal_to_min_inter_arrival_is_allowed():
    # 1/lambda_max = 5 s and tau = 5 s: boundary is compliant.
    assert validate_config(ScenarioConfig(slot_duration=5.0)) == []


@pytest.mark.parametrize("field,value,fragment", [
    ("uav_altitude_range", (150.0, 100.0), "z_min exceeds z_max"),
    ("compression_range", (0, 4), "d_min"),
    ("uav_tx_power", -1.0, "uav_tx_power"),
    ("coverage_angle", math.pi / 2, "coverage_angle"),
    ("modulation_order", 8, "modulation_order"),
    ("sss_weight", 1.5, "sss_weight"),
    ("reward_mode", "wrong", "reward_mode"),
])
def test_individual_violations(field, value, fragment):
    cfg = dataclasses.replace(ScenarioConfig(), **{field: value})
    assert any(fragment in v for v in validate_config(cfg))


def test_round_trip_is_field_identical(tmp_path):
    cfg = ScenarioConfig(num_gus=7, slot_duration=2.5, rng_seed=42,
                         drop_aoi_substitute=3.25,
                         noise_power_uav=3.1622776601683796e-14)
    path = tmp_path / "scenario.json"
    save_config(cfg, path)
    assert load_config(path) == cfg


def test_from_dict_rejects_unknown_keys():
    data = config_to_dict(ScenarioConfig())
    data["bogus"] = 1
    with pytest.raises(ValueError, match="bogus"):
        config_from_dict(data)


@settings(max_examples=200, deadline=None)
@given(
    tau=st.floats(1e-3, 1e3, allow_nan=False),
    lam=st.floats(1e-4, 10.0, allow_nan=False),
    c1=st.floats(0.0, 500.0),
    c2=st.floats(0.0, 500.0),
    angle=st.floats(-1.0, 3.0),
    power=st.floats(-10.0, 10.0),
)
def test_validate_config_is_total(tau, lam, c1, c2, angle, power):
    """Any finite numeric input yields a violation list, never an exception."""
    cfg = ScenarioConfig(
        slot_duration=tau,
        arrival_rate_range=(lam / 2, lam),
        rotor_constants=(c1, c2, 0.009, 120.0, 4.03),
        hover_power=c1 + c2 if c1 + c2 > 0 else 1.0,
        coverage_angle=angle,
        uav_tx_power=power,
    )
    assert isinstance(validate_config(cfg), list)
