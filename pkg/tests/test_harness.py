"""Experiment harness: sweep engine, serialization, reference patterns."""
import json
import math

import numpy as np
import pytest

from beamtrain import (
    ExperimentSpec,
    PolarLocation,
    SweepResult,
    TrainingEstimate,
    desk_config,
    desk_experiment_spec,
    dump_beam_pattern,
    fullscale_config,
    fullscale_experiment_spec,
    rate_metric,
    run_sweep,
)
from beamtrain.harness import (
    _draw_users,
    _Engine,
    _rng,
    pattern_from_csv,
    pattern_to_csv,
)

from conftest import sweep_rate


def _tiny_spec(**overrides):
    base = dict(
        cfg=desk_config(),
        gamma=0.5,
        schemes=("perfect_csi", "ongrid", "nearfield_rainbow", "farfield_rainbow"),
        sweep_axis="snr_db",
        axis_values=(10.0, 20.0),
        n_trials=10,
        master_seed=7,
        bank_angles=16,
        bank_rings=4,
    )
    base.update(overrides)
    return ExperimentSpec(**base)


# configs and specs -----------------------------------------------------------

def test_reference_configs():
    desk = desk_config()
    assert (desk.n_antennas, desk.n_subcarriers) == (64, 256)
    assert desk.carrier_freq == 30e9 and desk.bandwidth == 5e9
    assert desk.distance_range == (2.0, 10.0)
    full = fullscale_config()
    assert (full.n_antennas, full.n_subcarriers) == (256, 1024)
    assert full.distance_range == (5.0, 200.0)


def test_default_experiment_specs():
    d = desk_experiment_spec()
    assert d.gamma == 0.5 and d.sweep_axis == "snr_db"
    f = fullscale_experiment_spec()
    assert f.gamma == 0.95 and f.k_override == 3


@pytest.mark.parametrize(
    "overrides",
    [
        dict(sweep_axis="power"),
        dict(n_trials=1),
        dict(schemes=("ongrid", "magic")),
        dict(schemes=()),
        dict(axis_values=()),
        dict(sweep_axis="overhead", axis_values=(0.0, 2.0)),
        dict(sweep_axis="distance_m", axis_values=(-1.0,)),
        dict(bank_rings=0),
    ],
)
def test_spec_validation(overrides):
    with pytest.raises(ValueError):
        _tiny_spec(**overrides)


def test_spec_hash_and_round_trip():
    a = _tiny_spec()
    b = ExperimentSpec.from_dict(json.loads(json.dumps(a.to_dict())))
    assert a.spec_hash() == b.spec_hash()
    assert b.axis_values == a.axis_values
    assert a.spec_hash() != _tiny_spec(master_seed=8).spec_hash()


# user draws ------------------------------------------------------------------

def test_draw_users_respects_geometry():
    cfg = desk_config()
    users = _draw_users(cfg, _rng(3, 0), 500)
    assert np.all(users["theta"] >= cfg.angle_range[0])
    assert np.all(users["theta"] <= cfg.angle_range[1])
    assert np.all((users["r"] >= 2.0) & (users["r"] <= 10.0))
    assert np.allclose(users["alpha"], (1 - users["theta"] ** 2) / (2 * users["r"]))
    fixed = _draw_users(cfg, _rng(3, 0), 50, r_fixed=4.0)
    assert np.all(fixed["r"] == 4.0)
    again = _draw_users(cfg, _rng(3, 0), 500)
    assert np.array_equal(users["theta"], again["theta"])


# sweep engine ----------------------------------------------------------------

def test_sweep_rows_schema_and_order():
    spec = _tiny_spec()
    result = run_sweep(spec)
    assert len(result.rows) == len(spec.schemes) * len(spec.axis_values)
    for row in result.rows:
        assert set(row) == {"scheme", "axis", "axis_value", "mean_rate",
                            "stderr", "pilots_used", "n_trials"}
        assert row["axis"] == "snr_db"
        assert row["n_trials"] == 10
    # axis-major ordering, schemes in spec order inside each point
    assert [r["axis_value"] for r in result.rows[:4]] == [10.0] * 4
    assert [r["scheme"] for r in result.rows[:4]] == list(spec.schemes)
    assert result.metadata["spec_hash"] == spec.spec_hash()
    assert result.metadata["plan_K"] >= 1


def test_perfect_rows_hit_the_ceiling():
    result = run_sweep(_tiny_spec())
    for snr_db in (10.0, 20.0):
        row = next(r for r in result.rows
                   if r["scheme"] == "perfect_csi" and r["axis_value"] == snr_db)
        assert row["mean_rate"] == pytest.approx(math.log2(1 + 10 ** (snr_db / 10)))
        assert row["stderr"] <= 1e-12
        assert row["pilots_used"] == 0
    # no scheme can beat the perfect-CSI ceiling
    for row in result.rows:
        snr = 10 ** (row["axis_value"] / 10)
        assert row["mean_rate"] <= math.log2(1 + snr) + 1e-9


def test_pilot_accounting():
    spec = _tiny_spec()
    result = run_sweep(spec)
    used = {r["scheme"]: r["pilots_used"] for r in result.rows}
    assert used["farfield_rainbow"] == 1
    assert used["nearfield_rainbow"] == spec.bank_rings
    assert used["ongrid"] == result.metadata["plan_K"]


def test_sweep_is_deterministic():
    a = run_sweep(_tiny_spec())
    b = run_sweep(_tiny_spec())
    assert a.rows == b.rows


def test_sweep_csv_and_json_round_trip(tmp_path):
    result = run_sweep(_tiny_spec())
    text = result.to_csv(tmp_path / "rows.csv")
    back = SweepResult.from_csv(tmp_path / "rows.csv")
    assert back.to_csv() == text
    assert back.rows == result.rows
    payload = json.loads(result.to_json(tmp_path / "rows.json"))
    assert payload["rows"] == result.rows
    assert payload["metadata"]["master_seed"] == 7
    with pytest.raises(ValueError):
        SweepResult.from_csv("not,a,real,header\n1,2,3,4\n")


def test_distance_axis_redraws_users_per_point():
    spec = _tiny_spec(sweep_axis="distance_m", axis_values=(3.0, 8.0),
                      schemes=("perfect_csi", "ongrid"), n_trials=8)
    result = run_sweep(spec)
    assert len(result.rows) == 4
    near_rate = sweep_rate(result, "ongrid", 3.0)
    far_rate = sweep_rate(result, "ongrid", 8.0)
    assert near_rate != far_rate
    assert sweep_rate(result, "perfect_csi", 3.0) == sweep_rate(
        result, "perfect_csi", 8.0
    )


def test_overhead_axis_clamps_at_the_plan_size():
    spec = _tiny_spec(sweep_axis="overhead", axis_values=(1.0, 4.0),
                      schemes=("ongrid", "nearfield_rainbow"), n_trials=40)
    result = run_sweep(spec)
    k = result.metadata["plan_K"]
    if k == 1:  # budgets past the plan change nothing
        assert sweep_rate(result, "ongrid", 1.0) == sweep_rate(result, "ongrid", 4.0)
    # more rings help the near-field sweep
    assert sweep_rate(result, "nearfield_rainbow", 4.0) > sweep_rate(
        result, "nearfield_rainbow", 1.0
    )


def test_row_stderr_formula():
    engine = _Engine(_tiny_spec(schemes=("perfect_csi",)))
    rates = np.random.default_rng(0).uniform(1.0, 5.0, 37)
    row = engine._row("perfect_csi", 10.0, rates, 0)
    assert row["mean_rate"] == pytest.approx(rates.mean(), rel=1e-12)
    assert row["stderr"] == pytest.approx(
        rates.std(ddof=1) / math.sqrt(37), rel=1e-12
    )
    single = engine._row("perfect_csi", 10.0, [2.0], 0)
    assert single["stderr"] == 0.0


def test_stderr_shrinks_like_root_n():
    # quadrupling the trials should roughly halve the standard error for
    # schemes whose per-trial rates are well-behaved
    kwargs = dict(schemes=("exhaustive", "match_filter"), axis_values=(15.0,),
                  bank_angles=96, bank_rings=6)
    small = run_sweep(_tiny_spec(n_trials=100, master_seed=21, **kwargs))
    large = run_sweep(_tiny_spec(n_trials=400, master_seed=22, **kwargs))
    for scheme in ("exhaustive", "match_filter"):
        se_small = next(r["stderr"] for r in small.rows if r["scheme"] == scheme)
        se_large = next(r["stderr"] for r in large.rows if r["scheme"] == scheme)
        assert 1.6 <= se_small / se_large <= 2.4, scheme


def test_rates_rise_with_snr(desk_sweep):
    for scheme in ("perfect_csi", "exhaustive", "match_filter", "ongrid",
                   "aux_pair", "nearfield_rainbow", "farfield_rainbow"):
        assert sweep_rate(desk_sweep, scheme, 20.0) > sweep_rate(
            desk_sweep, scheme, 5.0
        ), scheme


# rate metric -----------------------------------------------------------------

def test_rate_metric_penalizes_mismatch(desk_cfg):
    loc = PolarLocation.from_angle_distance(0.2, 5.0)
    snr = 10**1.5
    on_target = rate_metric(desk_cfg, loc, loc, snr)
    off = PolarLocation(loc.theta + 0.05, loc.alpha)
    assert on_target == pytest.approx(math.log2(1 + snr), rel=1e-12)
    assert rate_metric(desk_cfg, loc, off, snr) < on_target
    est = TrainingEstimate(theta=loc.theta, alpha=loc.alpha, scheme="x",
                           selected=None, pilots_used=1)
    assert rate_metric(desk_cfg, loc, est, snr) == on_target


# beam pattern dump -----------------------------------------------------------

def test_beam_pattern_rows(desk_plan):
    rows, text = dump_beam_pattern(desk_plan)
    cfg = desk_plan.cfg
    assert 0 < len(rows) <= cfg.n_subcarriers * desk_plan.K
    seen = set()
    for r in rows:
        key = (r["pilot"], r["subcarrier"])
        assert key not in seen
        seen.add(key)
        assert 1 <= r["pilot"] <= desk_plan.K
        assert -1.0 <= r["theta"] <= 1.0
        if r["regime"] == "near":
            assert r["alpha"] > 0
            want_r = (1 - r["theta"] ** 2) / (2 * r["alpha"])
            assert r["distance_m"] == pytest.approx(want_r, rel=1e-12)
        else:
            assert r["alpha"] <= 0
            assert math.isinf(r["distance_m"])
    assert text.splitlines()[0] == "pilot,subcarrier,freq_hz,theta,alpha,distance_m,regime"


def test_beam_pattern_csv_round_trip(tmp_path, desk_plan):
    rows, text = dump_beam_pattern(desk_plan, out=tmp_path / "pattern.csv")
    assert (tmp_path / "pattern.csv").read_text() == text
    back = pattern_from_csv(tmp_path / "pattern.csv")
    assert pattern_to_csv(back) == text
    assert back == rows
