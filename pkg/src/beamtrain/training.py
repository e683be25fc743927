"""Noisy beam-training simulation and location estimators.

One training run sends the plan's pilots, records per-subcarrier magnitude
observations, and estimates the user's polar location.  Estimators:

- on-grid: strongest beam's predicted focus
- aux-pair: two-beam ellipse-intersection refinement around the on-grid pick
- match-filter: correlate the observation against a signature bank
- exhaustive: sweep a full polar codebook, one pilot per codeword
- near-field rainbow: one frequency sweep per distance ring
- far-field rainbow: a single frequency sweep, distance ignored

Transmit power is fixed at 1; noise variance is calibrated so that
N_t beta_c^2 / sigma^2 equals the requested SNR at the center subcarrier.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import PolarLocation, SystemConfig
from .arrays import Channel, approx_steering
from .beamsplit import TdPsParams, ellipse_coefficients, gain_kernel
from .design import PilotPlan

TX_POWER = 1.0

SCHEME_PERFECT = "perfect_csi"
SCHEME_EXHAUSTIVE = "exhaustive"
SCHEME_MATCH = "match_filter"
SCHEME_ONGRID = "ongrid"
SCHEME_AUX = "aux_pair"
SCHEME_NEAR_RAINBOW = "nearfield_rainbow"
SCHEME_FAR_RAINBOW = "farfield_rainbow"

ALL_SCHEMES = (
    SCHEME_PERFECT,
    SCHEME_EXHAUSTIVE,
    SCHEME_MATCH,
    SCHEME_ONGRID,
    SCHEME_AUX,
    SCHEME_NEAR_RAINBOW,
    SCHEME_FAR_RAINBOW,
)


@dataclass(frozen=True)
class ObservationGrid:
    """Magnitude observations, shape (M, K): subcarriers by pilots."""

    magnitudes: np.ndarray
    snr: float
    seed: int | None = None

    def __post_init__(self):
        if self.magnitudes.ndim != 2:
            raise ValueError("magnitudes must be (M, K)")
        if np.any(self.magnitudes < 0):
            raise ValueError("magnitudes must be nonnegative")


@dataclass(frozen=True)
class TrainingEstimate:
    """Estimated user location plus selection bookkeeping."""

    theta: float
    alpha: float
    scheme: str
    selected: tuple | int | None
    pilots_used: int
    clamped: bool = False
    fallback: bool = False

    def __post_init__(self):
        if not -1.0 <= self.theta <= 1.0:
            raise ValueError("estimate theta must lie in [-1, 1]")
        if self.alpha < 0:
            raise ValueError("estimate alpha must be nonnegative")

    @property
    def location(self) -> PolarLocation:
        return PolarLocation(self.theta, self.alpha)

    def to_dict(self) -> dict:
        sel = self.selected
        if isinstance(sel, tuple):
            sel = list(sel)
        return {
            "theta": self.theta,
            "alpha": self.alpha,
            "scheme": self.scheme,
            "selected": sel,
            "pilots_used": self.pilots_used,
            "clamped": self.clamped,
            "fallback": self.fallback,
        }


def _as_rng(rng) -> tuple[np.random.Generator, int | None]:
    if isinstance(rng, np.random.Generator):
        return rng, None
    seed = None if rng is None else int(rng)
    return np.random.default_rng(seed), seed


def noise_power(cfg: SystemConfig, channel: Channel, snr: float) -> float:
    """sigma^2 with N_t beta_c^2 / sigma^2 = snr (linear); 0 when snr = inf."""
    if math.isinf(snr):
        return 0.0
    if snr <= 0:
        raise ValueError("linear snr must be positive")
    return TX_POWER * cfg.n_antennas * channel.beta_c**2 / snr


def _complex_noise(rng: np.random.Generator, sigma2: float, shape) -> np.ndarray:
    if sigma2 == 0.0:
        return np.zeros(shape, dtype=complex)
    s = math.sqrt(sigma2 / 2)
    return s * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def _pilot_matrix(cfg: SystemConfig, params: TdPsParams) -> np.ndarray:
    """Beamformers of one pilot across all subcarriers, shape (M, N_t)."""
    freqs = cfg.subcarrier_freqs()
    nd = cfg.element_indices() * cfg.spacing
    k = cfg.wavenumber(freqs)[:, None]
    kc = cfg.wavenumber(cfg.carrier_freq)
    phase = -k * (nd * params.theta_t - nd * nd * params.alpha_t)
    phase = phase - kc * (nd * params.theta_p - nd * nd * params.alpha_p)
    return np.exp(1j * phase) / np.sqrt(cfg.n_antennas)


def observe_params(
    cfg: SystemConfig, channel: Channel, params_list, snr: float, rng
) -> ObservationGrid:
    """Simulate one pilot per parameter set; magnitudes (M, len(params_list)).

    y_{m,k} = sqrt(P_t) h_m^T w_{m,k} + n_{m,k}; columns are drawn in order,
    subcarriers within a column, so a fixed seed is reproducible.
    """
    gen, seed = _as_rng(rng)
    sigma2 = noise_power(cfg, channel, snr)
    cols = []
    for params in params_list:
        w = _pilot_matrix(cfg, params)
        y = math.sqrt(TX_POWER) * np.sum(channel.per_subcarrier * w, axis=1)
        y = y + _complex_noise(gen, sigma2, y.shape)
        cols.append(np.abs(y))
    return ObservationGrid(magnitudes=np.stack(cols, axis=1), snr=snr, seed=seed)


def simulate_pilot(channel: Channel, plan: PilotPlan, k: int, snr: float, rng) -> np.ndarray:
    """Magnitude observations of pilot k (1-based) across all subcarriers."""
    grid = observe_params(plan.cfg, channel, [plan.params(k)], snr, rng)
    return grid.magnitudes[:, 0]


def observe_plan(channel: Channel, plan: PilotPlan, snr: float, rng) -> ObservationGrid:
    """All K pilots of the plan, columns in pilot order."""
    return observe_params(
        plan.cfg, channel, [plan.params(k) for k in range(1, plan.K + 1)], snr, rng
    )


def ongrid_train(obs: ObservationGrid, plan: PilotPlan) -> TrainingEstimate:
    """Strongest beam's predicted focus; ties go to smaller m, then smaller k."""
    flat = int(np.argmax(obs.magnitudes))
    m_idx, k_idx = divmod(flat, obs.magnitudes.shape[1])
    focus = plan.focus(m_idx + 1, k_idx + 1, clamp=True)
    return TrainingEstimate(
        theta=focus.theta,
        alpha=max(focus.alpha, 0.0),
        scheme=SCHEME_ONGRID,
        selected=(m_idx + 1, k_idx + 1),
        pilots_used=plan.K,
        clamped=focus.clamped or focus.alpha < 0,
    )


def aux_pair_train(
    obs: ObservationGrid,
    plan: PilotPlan,
    tol: float = 1e-8,
    max_iter: int = 50,
) -> TrainingEstimate:
    """Refine the on-grid pick by intersecting two gain ellipses.

    Takes the strongest beam and its stronger in-band neighbor on the same
    pilot, converts both magnitudes to model gains via the path-gain at the
    on-grid distance, and Newton-solves the two quadratic gain models for
    (theta, alpha).  Falls back to the on-grid answer (flagged) on a singular
    Jacobian, no convergence, or an unusable on-grid distance.
    """
    base = ongrid_train(obs, plan)
    cfg = plan.cfg
    m_hat, k_hat = base.selected
    M = cfg.n_subcarriers
    col = obs.magnitudes[:, k_hat - 1]
    neighbors = [m for m in (m_hat - 1, m_hat + 1) if 1 <= m <= M]
    if not neighbors:
        return _fallback(base)
    m_b = max(neighbors, key=lambda m: col[m - 1])
    r_hat = base.location.distance
    if not np.isfinite(r_hat) or r_hat <= 0:
        return _fallback(base)

    pair = []
    for m in (m_hat, m_b):
        f = cfg.subcarrier_freq(m)
        focus = plan.focus(m, k_hat, clamp=True)
        beta = (cfg.carrier_freq / f) * (cfg.wavelength / (4 * np.pi * r_hat))
        g = col[m - 1] / (math.sqrt(TX_POWER * cfg.n_antennas) * beta)
        g = min(max(g, 1e-6), 1.0)
        s1, s2 = ellipse_coefficients(cfg, f)
        pair.append((focus.theta, focus.alpha, s1, s2, 1.0 - g))

    # Gain 1 at the peak collapses its ellipse to a point: the system's root
    # is that focus itself, no iteration needed.
    if pair[0][4] <= 1e-12:
        return TrainingEstimate(
            theta=float(pair[0][0]),
            alpha=float(max(pair[0][1], 0.0)),
            scheme=SCHEME_AUX,
            selected=(m_hat, k_hat),
            pilots_used=plan.K,
        )

    th = 0.5 * (pair[0][0] + pair[1][0])
    al = 0.5 * (pair[0][1] + pair[1][1])
    # Damped Newton on the two residuals.  The geometry has two rough spots:
    # the midpoint start sits on the line through both centers, where the
    # Jacobian is rank-deficient (anti-parallel gradients), and noisy gains
    # can leave the ellipses tangent or disjoint so that no exact root exists.
    # lstsq with a loose rcond handles the first; backtracking on the residual
    # norm handles the second (the Newton direction always descends ||r||^2,
    # so the iterates settle on the least-squares point when the system is
    # inconsistent, and converge quadratically to a root when it is not).
    def _resid(t, a):
        return np.array(
            [s1 * (t0 - t) ** 2 + s2 * (a0 - a) ** 2 - rhs
             for t0, a0, s1, s2, rhs in pair]
        )

    th = float(th)
    al = float(al)
    converged = False
    for _ in range(max_iter):
        resid = _resid(th, al)
        norm = np.linalg.norm(resid)
        if norm < tol:
            converged = True
            break
        jac = np.array(
            [[-2 * s1 * (t0 - th), -2 * s2 * (a0 - al)]
             for t0, a0, s1, s2, rhs in pair]
        )
        if np.abs(jac).max() == 0:
            return _fallback(base)
        step = np.linalg.lstsq(jac, -resid, rcond=1e-6)[0]
        if np.linalg.norm(step) < 1e-10:
            converged = True
            break
        improved = False
        for _ in range(30):
            t_new, a_new = th + step[0], al + step[1]
            if -1.0 <= t_new <= 1.0 and a_new >= 0.0:
                if np.linalg.norm(_resid(t_new, a_new)) < norm:
                    improved = True
                    break
            step = step * 0.5
        if not improved:
            # no descent left: this is the least-squares stationary point
            converged = True
            break
        th, al = float(t_new), float(a_new)
    if not converged:
        return _fallback(base)
    # The beam pair only resolves the user along its own spacing; project the
    # root into the pair's bounding cell (one spacing of margin) so the barely
    # observable coordinate cannot absorb model error and wander off.
    dt = abs(pair[1][0] - pair[0][0])
    da = abs(pair[1][1] - pair[0][1])
    t_lo, t_hi = min(pair[0][0], pair[1][0]) - dt, max(pair[0][0], pair[1][0]) + dt
    a_lo, a_hi = min(pair[0][1], pair[1][1]) - da, max(pair[0][1], pair[1][1]) + da
    th = min(max(th, t_lo), t_hi)
    al = min(max(al, a_lo), a_hi)
    clamped = not (-1.0 <= th <= 1.0) or al < 0
    th = min(max(th, -1.0), 1.0)
    al = max(al, 0.0)
    return TrainingEstimate(
        theta=float(th),
        alpha=float(al),
        scheme=SCHEME_AUX,
        selected=(m_hat, k_hat),
        pilots_used=plan.K,
        clamped=clamped,
    )


def _fallback(base: TrainingEstimate) -> TrainingEstimate:
    return TrainingEstimate(
        theta=base.theta,
        alpha=base.alpha,
        scheme=SCHEME_AUX,
        selected=base.selected,
        pilots_used=base.pilots_used,
        clamped=base.clamped,
        fallback=True,
    )


@dataclass(frozen=True)
class MatchFilterBank:
    """Noiseless signature per grid point, flattened over (m, k).

    signatures[g] is the plan's noiseless array-gain vector at grid point g,
    laid out subcarrier-major then pilot.  Grid points are ordered angle-major
    then distance, so argmax ties resolve to smaller angle index, then smaller
    ring index.
    """

    signatures: np.ndarray
    locations: tuple
    plan: PilotPlan

    def __post_init__(self):
        if self.signatures.shape[0] != len(self.locations):
            raise ValueError("one signature per grid point required")

    def __len__(self) -> int:
        return len(self.locations)

    def unit_signatures(self) -> np.ndarray:
        norms = np.linalg.norm(self.signatures, axis=1, keepdims=True)
        return self.signatures / np.where(norms == 0, 1.0, norms)


def _grid_axes(lo, hi, n):
    if n == 1:
        return np.array([0.5 * (lo + hi)])
    return np.linspace(lo, hi, n)


def build_match_filter_bank(
    plan: PilotPlan,
    angle_samples: int,
    distance_samples: int,
    theta_grid=None,
    alpha_grid=None,
) -> MatchFilterBank:
    """Signature bank on a uniform polar grid over the served region.

    Custom theta/alpha grids may be supplied (e.g. to place a known focus on
    the grid); defaults are uniform over the config's angle range and the
    design's alpha bounds.
    """
    cfg = plan.cfg
    amin, amax = plan.inputs.alpha_bounds
    thetas = (
        _grid_axes(cfg.angle_range[0], cfg.angle_range[1], angle_samples)
        if theta_grid is None
        else np.asarray(theta_grid, dtype=float)
    )
    alphas = (
        _grid_axes(amin, amax, distance_samples)
        if alpha_grid is None
        else np.asarray(alpha_grid, dtype=float)
    )
    th = np.repeat(thetas, len(alphas))
    al = np.tile(alphas, len(thetas))
    locs = tuple(PolarLocation(float(t), float(a)) for t, a in zip(th, al))

    freqs = cfg.subcarrier_freqs()
    kc = cfg.wavenumber(cfg.carrier_freq)
    sig = np.empty((len(locs), cfg.n_subcarriers, plan.K))
    for k in range(1, plan.K + 1):
        params = plan.params(k)
        for i, f in enumerate(freqs):
            km = cfg.wavenumber(f)
            x = km * th - km * params.theta_t - kc * params.theta_p
            y = km * al - km * params.alpha_t - kc * params.alpha_p
            sig[:, i, k - 1] = gain_kernel(cfg, x, y)
    return MatchFilterBank(
        signatures=sig.reshape(len(locs), -1), locations=locs, plan=plan
    )


def match_filter_train(obs: ObservationGrid, bank: MatchFilterBank) -> TrainingEstimate:
    """Pick the grid point whose unit signature best correlates with the
    unit-normalized observation (cosine similarity); first index wins ties."""
    flat = obs.magnitudes.reshape(-1)
    norm = np.linalg.norm(flat)
    if norm > 0:
        flat = flat / norm
    scores = bank.unit_signatures() @ flat
    idx = int(np.argmax(scores))
    loc = bank.locations[idx]
    return TrainingEstimate(
        theta=loc.theta,
        alpha=loc.alpha,
        scheme=SCHEME_MATCH,
        selected=idx,
        pilots_used=bank.plan.K,
    )


def exhaustive_polar_train(channel: Channel, codebook, snr: float, rng) -> TrainingEstimate:
    """One pilot per codeword; pick the codeword with the largest power summed
    across subcarriers.  Ties go to the smaller grid index."""
    cfg = codebook.cfg
    gen, _ = _as_rng(rng)
    sigma2 = noise_power(cfg, channel, snr)
    thetas = np.array([loc.theta for loc in codebook.locations])
    alphas = np.array([loc.alpha for loc in codebook.locations])
    nd = cfg.element_indices() * cfg.spacing
    powers = np.zeros(len(codebook))
    freqs = cfg.subcarrier_freqs()
    for i, f in enumerate(freqs):
        km = cfg.wavenumber(f)
        phase = km * (np.outer(thetas, nd) - np.outer(alphas, nd * nd))
        grid = np.exp(1j * phase) / np.sqrt(cfg.n_antennas)
        y = math.sqrt(TX_POWER) * (grid.conj() @ channel.per_subcarrier[i])
        y = y + _complex_noise(gen, sigma2, y.shape)
        powers += np.abs(y) ** 2
    idx = int(np.argmax(powers))
    loc = codebook.locations[idx]
    return TrainingEstimate(
        theta=loc.theta,
        alpha=loc.alpha,
        scheme=SCHEME_EXHAUSTIVE,
        selected=idx,
        pilots_used=len(codebook),
    )


def rainbow_sweep_params(cfg: SystemConfig) -> TdPsParams:
    """Delay/phase pair whose foci sweep theta from +1 at the lowest
    subcarrier to -1 at the highest, with period integer 0."""
    f1 = cfg.subcarrier_freq(1)
    fM = cfg.subcarrier_freq(cfg.n_subcarriers)
    span = cfg.carrier_freq / f1 - cfg.carrier_freq / fM
    if span <= 0:
        raise ValueError("sweep needs nonzero bandwidth")
    theta_p = 2.0 / span
    theta_t = 1.0 - (cfg.carrier_freq / f1) * theta_p
    return TdPsParams(theta_t=theta_t, theta_p=theta_p)


def _rainbow_theta(cfg: SystemConfig, params: TdPsParams, m: int) -> float:
    f = cfg.subcarrier_freq(m)
    th = params.theta_t + (cfg.carrier_freq / f) * params.theta_p
    return min(max(th, -1.0), 1.0)


def nearfield_rainbow_train(
    channel: Channel, cfg: SystemConfig, n_rings: int, snr: float, rng
) -> TrainingEstimate:
    """One frequency sweep per distance ring; strongest (subcarrier, ring)
    wins.  Every beam of a ring shares its curvature alpha."""
    if n_rings < 1:
        raise ValueError("need at least one ring")
    base = rainbow_sweep_params(cfg)
    rings = _grid_axes(cfg.alpha_min, cfg.alpha_max, n_rings)
    params_list = [
        TdPsParams(theta_t=base.theta_t, theta_p=base.theta_p, alpha_t=float(a))
        for a in rings
    ]
    obs = observe_params(cfg, channel, params_list, snr, rng)
    flat = int(np.argmax(obs.magnitudes))
    m_idx, s_idx = divmod(flat, n_rings)
    return TrainingEstimate(
        theta=_rainbow_theta(cfg, base, m_idx + 1),
        alpha=float(rings[s_idx]),
        scheme=SCHEME_NEAR_RAINBOW,
        selected=(m_idx + 1, s_idx + 1),
        pilots_used=n_rings,
    )


def farfield_rainbow_train(
    channel: Channel, cfg: SystemConfig, snr: float, rng
) -> TrainingEstimate:
    """Single frequency sweep, curvature ignored (alpha estimate is 0)."""
    base = rainbow_sweep_params(cfg)
    obs = observe_params(cfg, channel, [base], snr, rng)
    m_idx = int(np.argmax(obs.magnitudes[:, 0]))
    return TrainingEstimate(
        theta=_rainbow_theta(cfg, base, m_idx + 1),
        alpha=0.0,
        scheme=SCHEME_FAR_RAINBOW,
        selected=(m_idx + 1, 1),
        pilots_used=1,
    )


def serve_beamformer(cfg: SystemConfig, estimate, m: int) -> np.ndarray:
    """Data beamformer for subcarrier m focused on the estimated location:
    the conjugate approximate steering vector, so a perfect estimate gives
    array gain exactly 1."""
    loc = estimate.location if isinstance(estimate, TrainingEstimate) else estimate
    return np.conj(approx_steering(cfg, loc, cfg.subcarrier_freq(m)))
