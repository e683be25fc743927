"""Training simulation and the six location estimators."""
import math

import numpy as np
import pytest

from beamtrain import (
    DesignInputs,
    ObservationGrid,
    PolarLocation,
    SystemConfig,
    TrainingEstimate,
    angle_beamwidth,
    aux_pair_train,
    build_match_filter_bank,
    design,
    distance_beamwidth,
    exhaustive_polar_train,
    farfield_rainbow_train,
    los_channel,
    match_filter_train,
    nearfield_rainbow_train,
    observe_plan,
    ongrid_train,
    polar_codebook,
    rainbow_sweep_params,
    serve_beamformer,
    simulate_pilot,
)
from beamtrain.arrays import approx_steering
from beamtrain.harness import fullscale_experiment_spec, rate_metric, run_sweep
from beamtrain.training import MatchFilterBank, noise_power, observe_params

NOISELESS = float("inf")


def _focus_user(plan, m, k):
    focus = plan.focus(m, k)
    return focus, PolarLocation(focus.theta, focus.alpha)


def _quad_channel(cfg, loc):
    """Channel whose phase profile matches the estimators' beam model."""
    return los_channel(cfg, loc, steering="quadratic")


# observations ---------------------------------------------------------------

def test_observation_grid_validation():
    with pytest.raises(ValueError):
        ObservationGrid(magnitudes=np.ones(4), snr=10.0)
    with pytest.raises(ValueError):
        ObservationGrid(magnitudes=-np.ones((4, 2)), snr=10.0)


def test_noise_power_calibration(desk_cfg):
    chan = los_channel(desk_cfg, PolarLocation.from_angle_distance(0.2, 5.0))
    snr = 10.0
    sigma2 = noise_power(desk_cfg, chan, snr)
    assert sigma2 == pytest.approx(desk_cfg.n_antennas * chan.beta_c**2 / snr)
    assert noise_power(desk_cfg, chan, NOISELESS) == 0.0
    with pytest.raises(ValueError):
        noise_power(desk_cfg, chan, 0.0)


def test_observe_plan_shape_and_order(desk_cfg, desk_plan):
    chan = los_channel(desk_cfg, PolarLocation.from_angle_distance(0.2, 5.0))
    obs = observe_plan(chan, desk_plan, 100.0, 3)
    assert obs.magnitudes.shape == (desk_cfg.n_subcarriers, desk_plan.K)
    assert obs.seed == 3
    # pilot columns drawn in order: column k matches the single-pilot draw
    single = simulate_pilot(chan, desk_plan, 1, 100.0, 3)
    assert np.array_equal(obs.magnitudes[:, 0], single)


def test_noiseless_magnitude_is_scaled_array_gain(desk_cfg, desk_plan):
    focus, user = _focus_user(desk_plan, 100, 1)
    chan = _quad_channel(desk_cfg, user)
    obs = observe_plan(chan, desk_plan, NOISELESS, None)
    m = focus.subcarrier
    want = math.sqrt(desk_cfg.n_antennas) * chan.path_gains[m - 1]
    assert obs.magnitudes[m - 1, 0] == pytest.approx(want, rel=1e-9)


def test_observation_determinism(desk_cfg, desk_plan):
    chan = los_channel(desk_cfg, PolarLocation.from_angle_distance(-0.3, 7.0))
    a = observe_plan(chan, desk_plan, 50.0, 11)
    b = observe_plan(chan, desk_plan, 50.0, 11)
    c = observe_plan(chan, desk_plan, 50.0, np.random.default_rng(11))
    assert np.array_equal(a.magnitudes, b.magnitudes)
    assert np.array_equal(a.magnitudes, c.magnitudes)


def test_estimate_validation_and_dict():
    with pytest.raises(ValueError):
        TrainingEstimate(theta=1.5, alpha=0.0, scheme="x", selected=None, pilots_used=1)
    with pytest.raises(ValueError):
        TrainingEstimate(theta=0.0, alpha=-0.1, scheme="x", selected=None, pilots_used=1)
    est = TrainingEstimate(theta=0.2, alpha=0.05, scheme="ongrid",
                           selected=(3, 1), pilots_used=2)
    d = est.to_dict()
    assert d["selected"] == [3, 1]
    assert d["fallback"] is False
    assert est.location == PolarLocation(0.2, 0.05)


# on-grid --------------------------------------------------------------------

def test_ongrid_recovers_exact_focus(desk_cfg, desk_plan):
    focus, user = _focus_user(desk_plan, 100, 1)
    obs = observe_plan(_quad_channel(desk_cfg, user), desk_plan, NOISELESS, None)
    est = ongrid_train(obs, desk_plan)
    assert est.selected == (100, 1)
    assert est.theta == focus.theta
    assert est.alpha == focus.alpha


def test_ongrid_tie_breaks_to_first_beam(main_plan):
    M, K = main_plan.cfg.n_subcarriers, main_plan.K
    obs = ObservationGrid(magnitudes=np.ones((M, K)), snr=1.0)
    est = ongrid_train(obs, main_plan)
    assert est.selected == (1, 1)


def test_ongrid_accuracy_under_noise(main_cfg, main_plan):
    # 100 seeded trials at 15 dB: estimate lands inside one beamwidth of
    # the user in at least 95 of them
    user = PolarLocation.from_angle_distance(0.3, 20.0)
    chan = los_channel(main_cfg, user)
    snr = 10**1.5
    w_th = angle_beamwidth(main_cfg, main_cfg.carrier_freq)
    w_al = distance_beamwidth(main_cfg, main_cfg.carrier_freq)
    hits = 0
    for i in range(100):
        obs = observe_plan(chan, main_plan, snr, np.random.default_rng((2024, i)))
        est = ongrid_train(obs, main_plan)
        if abs(est.theta - user.theta) <= w_th and abs(est.alpha - user.alpha) <= w_al:
            hits += 1
    assert hits >= 95


# aux pair -------------------------------------------------------------------

def test_aux_exact_focus_needs_no_iteration(main_cfg, main_plan):
    focus, user = _focus_user(main_plan, 300, 2)
    obs = observe_plan(_quad_channel(main_cfg, user), main_plan, NOISELESS, None)
    est = aux_pair_train(obs, main_plan)
    assert not est.fallback
    assert est.theta == pytest.approx(focus.theta, abs=1e-9)
    assert est.alpha == pytest.approx(focus.alpha, abs=1e-9)


def test_aux_beats_quantization_at_the_midpoint(main_cfg, main_plan):
    f1 = main_plan.focus(300, 2)
    f2 = main_plan.focus(301, 2)
    user = PolarLocation(0.5 * (f1.theta + f2.theta), 0.5 * (f1.alpha + f2.alpha))
    obs = observe_plan(_quad_channel(main_cfg, user), main_plan, NOISELESS, None)
    base = ongrid_train(obs, main_plan)
    est = aux_pair_train(obs, main_plan)
    base_err = math.hypot(base.theta - user.theta, base.alpha - user.alpha)
    aux_err = math.hypot(est.theta - user.theta, est.alpha - user.alpha)
    assert not est.fallback
    assert aux_err < 0.5 * base_err


def test_aux_falls_back_without_a_neighbor():
    cfg = SystemConfig(16, 30e9, 1e9, 1, distance_range=(2.0, 10.0))
    plan = design(DesignInputs(cfg=cfg))
    chan = los_channel(cfg, PolarLocation.from_angle_distance(0.2, 5.0))
    est = aux_pair_train(observe_plan(chan, plan, 100.0, 0), plan)
    assert est.fallback
    assert est.scheme == "aux_pair"
    base = ongrid_train(observe_plan(chan, plan, 100.0, 0), plan)
    assert (est.theta, est.alpha) == (base.theta, base.alpha)


def test_aux_beats_ongrid_rate_at_high_snr(main_cfg):
    # 200 users at 20 dB, full-scale geometry
    spec = fullscale_experiment_spec(
        sweep_axis="snr_db", axis_values=(20.0,), n_trials=200,
        schemes=("ongrid", "aux_pair"),
    )
    rates = {r["scheme"]: r["mean_rate"] for r in run_sweep(spec).rows}
    assert rates["aux_pair"] >= rates["ongrid"]


# match filter ---------------------------------------------------------------

def test_bank_layout_and_signature_recompute(desk_cfg, desk_plan):
    bank = build_match_filter_bank(desk_plan, 7, 3)
    M, K = desk_cfg.n_subcarriers, desk_plan.K
    assert bank.signatures.shape == (21, M * K)
    assert len(bank) == 21
    # recompute one stored signature entry from first principles
    g_idx, m, k = 13, 57, 1
    loc = bank.locations[g_idx]
    params = desk_plan.params(k)
    f = desk_cfg.subcarrier_freq(m)
    km, kc = desk_cfg.wavenumber(f), desk_cfg.wavenumber(desk_cfg.carrier_freq)
    nd = desk_cfg.element_indices() * desk_cfg.spacing
    phase = (km * loc.theta - km * params.theta_t - kc * params.theta_p) * nd
    phase = phase - (km * loc.alpha - km * params.alpha_t - kc * params.alpha_p) * nd**2
    want = abs(np.exp(1j * phase).sum()) / desk_cfg.n_antennas
    assert bank.signatures[g_idx, (m - 1) * K + (k - 1)] == pytest.approx(want, abs=1e-12)


def test_single_point_bank_at_a_focus_peaks_at_one(desk_cfg, desk_plan):
    focus, _ = _focus_user(desk_plan, 100, 1)
    bank = build_match_filter_bank(
        desk_plan, 1, 1, theta_grid=[focus.theta], alpha_grid=[focus.alpha]
    )
    sig = bank.signatures[0].reshape(desk_cfg.n_subcarriers, desk_plan.K)
    assert sig[99, 0] == pytest.approx(1.0, abs=1e-9)
    assert sig.max() == pytest.approx(1.0, abs=1e-9)


def test_match_filter_recovers_bank_grid_point(desk_cfg, desk_plan):
    bank = build_match_filter_bank(desk_plan, 9, 4)
    target = bank.locations[17]
    obs = observe_plan(_quad_channel(desk_cfg, target), desk_plan, NOISELESS, None)
    est = match_filter_train(obs, bank)
    assert est.selected == 17
    assert (est.theta, est.alpha) == (target.theta, target.alpha)
    assert est.pilots_used == desk_plan.K


def test_match_filter_swapped_signatures_swap_the_winner(desk_cfg, desk_plan):
    bank = build_match_filter_bank(desk_plan, 9, 4)
    target = bank.locations[17]
    obs = observe_plan(_quad_channel(desk_cfg, target), desk_plan, NOISELESS, None)
    swapped = bank.signatures.copy()
    swapped[[17, 23]] = swapped[[23, 17]]
    bank2 = MatchFilterBank(signatures=swapped, locations=bank.locations,
                            plan=desk_plan)
    assert match_filter_train(obs, bank2).selected == 23


def test_match_filter_zero_observation_takes_first_index(desk_cfg, desk_plan):
    bank = build_match_filter_bank(desk_plan, 3, 2)
    M, K = desk_cfg.n_subcarriers, desk_plan.K
    obs = ObservationGrid(magnitudes=np.zeros((M, K)), snr=1.0)
    assert match_filter_train(obs, bank).selected == 0


# exhaustive -----------------------------------------------------------------

def test_exhaustive_recovers_codebook_point(desk_cfg):
    book = polar_codebook(desk_cfg, 8, 2)
    target = book.locations[11]
    chan = _quad_channel(desk_cfg, target)
    est = exhaustive_polar_train(chan, book, NOISELESS, 0)
    assert est.selected == 11
    assert (est.theta, est.alpha) == (target.theta, target.alpha)
    assert est.pilots_used == len(book)


def test_exhaustive_is_seed_deterministic(desk_cfg):
    book = polar_codebook(desk_cfg, 8, 2)
    chan = los_channel(desk_cfg, PolarLocation.from_angle_distance(0.1, 6.0))
    a = exhaustive_polar_train(chan, book, 10.0, 5)
    b = exhaustive_polar_train(chan, book, 10.0, 5)
    assert a.selected == b.selected


# rainbow sweeps -------------------------------------------------------------

def test_rainbow_sweep_spans_the_visible_range(desk_cfg):
    params = rainbow_sweep_params(desk_cfg)
    f1 = desk_cfg.subcarrier_freq(1)
    fM = desk_cfg.subcarrier_freq(desk_cfg.n_subcarriers)
    g1 = desk_cfg.carrier_freq / f1
    gM = desk_cfg.carrier_freq / fM
    assert params.theta_t + g1 * params.theta_p == pytest.approx(1.0, abs=1e-9)
    assert params.theta_t + gM * params.theta_p == pytest.approx(-1.0, abs=1e-9)


def test_rainbow_rejects_zero_bandwidth():
    cfg = SystemConfig(16, 30e9, 0.0, 4, distance_range=(2.0, 10.0))
    with pytest.raises(ValueError):
        rainbow_sweep_params(cfg)


def test_near_rainbow_estimates_ring_and_angle(desk_cfg):
    rings = np.linspace(desk_cfg.alpha_min, desk_cfg.alpha_max, 8)
    user = PolarLocation(0.25, float(rings[5]))
    chan = _quad_channel(desk_cfg, user)
    est = nearfield_rainbow_train(chan, desk_cfg, 8, NOISELESS, 0)
    assert est.pilots_used == 8
    assert est.alpha in rings
    assert abs(est.theta - user.theta) <= 1.5 * angle_beamwidth(desk_cfg,
                                                                desk_cfg.carrier_freq)
    assert abs(est.alpha - user.alpha) <= (rings[1] - rings[0]) / 2 + 1e-12


def test_near_rainbow_needs_a_ring(desk_cfg):
    chan = los_channel(desk_cfg, PolarLocation.from_angle_distance(0.1, 5.0))
    with pytest.raises(ValueError):
        nearfield_rainbow_train(chan, desk_cfg, 0, 10.0, 0)


def test_far_rainbow_always_reports_zero_curvature(desk_cfg):
    user = PolarLocation.from_angle_distance(-0.4, 4000.0)
    chan = los_channel(desk_cfg, user)
    est = farfield_rainbow_train(chan, desk_cfg, NOISELESS, 0)
    assert est.alpha == 0.0
    assert est.pilots_used == 1
    assert abs(est.theta - user.theta) <= 1.5 * angle_beamwidth(desk_cfg,
                                                                desk_cfg.carrier_freq)


# serving and consistency ----------------------------------------------------

def test_serve_beamformer_is_conjugate_steering(desk_cfg):
    loc = PolarLocation.from_angle_distance(0.3, 5.0)
    est = TrainingEstimate(theta=loc.theta, alpha=loc.alpha, scheme="ongrid",
                           selected=None, pilots_used=1)
    w = serve_beamformer(desk_cfg, est, 7)
    want = np.conj(approx_steering(desk_cfg, loc, desk_cfg.subcarrier_freq(7)))
    assert np.array_equal(w, want)
    assert np.linalg.norm(w) == pytest.approx(1.0, rel=1e-12)


def test_perfect_estimate_reaches_the_rate_ceiling(desk_cfg):
    loc = PolarLocation.from_angle_distance(0.2, 6.0)
    est = TrainingEstimate(theta=loc.theta, alpha=loc.alpha, scheme="perfect_csi",
                           selected=None, pilots_used=0)
    snr = 10**2
    assert rate_metric(desk_cfg, loc, est, snr) == pytest.approx(
        math.log2(1 + snr), rel=1e-12
    )


def test_noiseless_consistency_at_a_focus(desk_cfg, desk_plan):
    # every grid-aware estimator lands on an exactly-focused user
    focus, user = _focus_user(desk_plan, 100, 1)
    chan = _quad_channel(desk_cfg, user)
    obs = observe_plan(chan, desk_plan, NOISELESS, None)

    for est in (
        ongrid_train(obs, desk_plan),
        aux_pair_train(obs, desk_plan),
        match_filter_train(
            obs,
            build_match_filter_bank(
                desk_plan, 0, 0,
                theta_grid=[focus.theta - 0.02, focus.theta, focus.theta + 0.02],
                alpha_grid=[0.8 * focus.alpha, focus.alpha, 1.2 * focus.alpha],
            ),
        ),
    ):
        assert abs(est.theta - user.theta) < 1e-6, est.scheme
        assert abs(est.alpha - user.alpha) < 1e-6, est.scheme
