"""Shared fixtures: reference configurations, designed plans, and one
desk-scale Monte-Carlo sweep reused by the ordering tests."""
import pytest

from beamtrain import DesignInputs, SystemConfig, design
from beamtrain.harness import (
    desk_config,
    desk_experiment_spec,
    fullscale_config,
    run_sweep,
)


@pytest.fixture(scope="session")
def config_a() -> SystemConfig:
    """128 antennas, 10 GHz carrier, 2 GHz band, 512 subcarriers, 5-200 m."""
    return SystemConfig(
        n_antennas=128,
        carrier_freq=10e9,
        bandwidth=2e9,
        n_subcarriers=512,
        distance_range=(5.0, 200.0),
    )


@pytest.fixture(scope="session")
def plan_a_base(config_a):
    return design(DesignInputs(cfg=config_a, gamma=1.0))


@pytest.fixture(scope="session")
def plan_a(config_a):
    """Config-A plan with the curvature phase-slope pinned at 0.5."""
    return design(DesignInputs(cfg=config_a, gamma=1.0, alpha_p_override=0.5))


@pytest.fixture(scope="session")
def main_cfg() -> SystemConfig:
    return fullscale_config()


@pytest.fixture(scope="session")
def main_plan(main_cfg):
    return design(DesignInputs(cfg=main_cfg, gamma=0.95, k_override=3))


@pytest.fixture(scope="session")
def desk_cfg() -> SystemConfig:
    return desk_config()


@pytest.fixture(scope="session")
def desk_plan():
    return design(desk_experiment_spec().design_inputs())


@pytest.fixture(scope="session")
def desk_sweep():
    """200-trial SNR sweep at 5/15/20 dB, all schemes, desk geometry."""
    spec = desk_experiment_spec(
        sweep_axis="snr_db", axis_values=(5.0, 15.0, 20.0), n_trials=200
    )
    return run_sweep(spec)


def sweep_rate(result, scheme: str, value: float) -> float:
    """Mean rate of one (scheme, axis value) row."""
    for row in result.rows:
        if row["scheme"] == scheme and row["axis_value"] == value:
            return row["mean_rate"]
    raise KeyError((scheme, value))
