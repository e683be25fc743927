"""Link-level experiment harness: rate metric, Monte-Carlo sweeps, dumps.

Sweeps draw random users, run every requested training scheme on common
channels, and report the mean spectral efficiency of serving with the
estimated location.  Trials are vectorized; randomness is keyed by
(master seed, axis index, scheme family) so results are reproducible and
schemes are compared on identical user draws.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone

import numpy as np

from .config import PolarLocation, SystemConfig
from .arrays import PolarCodebook
from .beamsplit import InfeasibleFocusError, TdPsParams, gain_kernel
from .design import DesignInputs, PilotPlan, design
from .training import (
    ALL_SCHEMES,
    SCHEME_AUX,
    SCHEME_EXHAUSTIVE,
    SCHEME_FAR_RAINBOW,
    SCHEME_MATCH,
    SCHEME_NEAR_RAINBOW,
    SCHEME_ONGRID,
    SCHEME_PERFECT,
    TX_POWER,
    ObservationGrid,
    TrainingEstimate,
    aux_pair_train,
    build_match_filter_bank,
    rainbow_sweep_params,
    _grid_axes,
)

AXES = ("snr_db", "overhead", "distance_m")

# rng stream tags: families keep their draws stable however schemes are combined
_STREAM_USERS = 101
_STREAM_PROPOSED = 102
_STREAM_EXHAUSTIVE = 103
_STREAM_NEAR = 104
_STREAM_FAR = 105


def rate_metric(cfg: SystemConfig, true_loc: PolarLocation, estimate, snr: float) -> float:
    """Mean spectral efficiency over subcarriers, bits/s/Hz:
    (1/M) sum_m log2(1 + snr |b_m(true)^T w_m|^2), with w_m the conjugate
    steering vector at the estimated location."""
    loc = estimate.location if isinstance(estimate, TrainingEstimate) else estimate
    gains = _serving_gains(
        cfg,
        np.array([true_loc.theta]),
        np.array([true_loc.alpha]),
        np.array([loc.theta]),
        np.array([loc.alpha]),
    )
    return float(np.mean(np.log2(1.0 + snr * gains[0] ** 2)))


def _serving_gains(cfg, theta0, alpha0, theta_hat, alpha_hat):
    """Array gain per (trial, subcarrier): kernel at the polar mismatch."""
    freqs = cfg.subcarrier_freqs()
    t = len(theta0)
    out = np.empty((t, cfg.n_subcarriers))
    dth = theta0 - theta_hat
    dal = alpha0 - alpha_hat
    for i, f in enumerate(freqs):
        k = cfg.wavenumber(f)
        out[:, i] = gain_kernel(cfg, k * dth, k * dal)
    return out


@dataclass(frozen=True)
class ExperimentSpec:
    """One sweep: config, design inputs, schemes, axis, and sizes.

    bank_angles x bank_rings sizes both the exhaustive codebook and the
    match-filter bank; bank_rings is also the rainbow ring count.  snr_db is
    the operating SNR for non-SNR axes.
    """

    cfg: SystemConfig
    gamma: float = 1.0
    alpha_min: float | None = None
    alpha_max: float | None = None
    k_override: int | None = None
    alpha_p_override: float | None = None
    schemes: tuple[str, ...] = ALL_SCHEMES
    sweep_axis: str = "snr_db"
    axis_values: tuple[float, ...] = (0.0, 5.0, 10.0, 15.0, 20.0)
    n_trials: int = 200
    master_seed: int = 1
    snr_db: float = 15.0
    bank_angles: int = 192
    bank_rings: int = 8

    def __post_init__(self):
        if self.sweep_axis not in AXES:
            raise ValueError(f"sweep_axis must be one of {AXES}")
        unknown = set(self.schemes) - set(ALL_SCHEMES)
        if unknown:
            raise ValueError(f"unknown schemes: {sorted(unknown)}")
        if not self.schemes:
            raise ValueError("need at least one scheme")
        if len(self.axis_values) == 0:
            raise ValueError("need at least one axis value")
        if self.sweep_axis == "overhead" and any(v < 1 for v in self.axis_values):
            raise ValueError("overhead budgets must be >= 1")
        if self.sweep_axis == "distance_m" and any(v <= 0 for v in self.axis_values):
            raise ValueError("distances must be positive")
        if self.n_trials < 2:
            raise ValueError("n_trials must be >= 2")
        if self.bank_angles < 1 or self.bank_rings < 1:
            raise ValueError("bank dimensions must be >= 1")

    def design_inputs(self) -> DesignInputs:
        return DesignInputs(
            cfg=self.cfg,
            gamma=self.gamma,
            alpha_min=self.alpha_min,
            alpha_max=self.alpha_max,
            k_override=self.k_override,
            alpha_p_override=self.alpha_p_override,
        )

    def to_dict(self) -> dict:
        return {
            "config": self.cfg.to_dict(),
            "design": {
                "gamma": self.gamma,
                "alpha_min": self.alpha_min,
                "alpha_max": self.alpha_max,
                "k_override": self.k_override,
                "alpha_p_override": self.alpha_p_override,
            },
            "schemes": list(self.schemes),
            "sweep_axis": self.sweep_axis,
            "axis_values": list(self.axis_values),
            "n_trials": self.n_trials,
            "master_seed": self.master_seed,
            "snr_db": self.snr_db,
            "bank_angles": self.bank_angles,
            "bank_rings": self.bank_rings,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentSpec":
        cfg = SystemConfig.from_dict(data["config"])
        dsn = data.get("design", {})
        return cls(
            cfg=cfg,
            gamma=dsn.get("gamma", 1.0),
            alpha_min=dsn.get("alpha_min"),
            alpha_max=dsn.get("alpha_max"),
            k_override=dsn.get("k_override"),
            alpha_p_override=dsn.get("alpha_p_override"),
            schemes=tuple(data.get("schemes", ALL_SCHEMES)),
            sweep_axis=data.get("sweep_axis", "snr_db"),
            axis_values=tuple(data.get("axis_values", (0.0, 5.0, 10.0, 15.0, 20.0))),
            n_trials=data.get("n_trials", 200),
            master_seed=data.get("master_seed", 1),
            snr_db=data.get("snr_db", 15.0),
            bank_angles=data.get("bank_angles", 192),
            bank_rings=data.get("bank_rings", 8),
        )

    @classmethod
    def from_json(cls, source) -> "ExperimentSpec":
        text = str(source)
        if not text.lstrip().startswith("{"):
            with open(text) as fh:
                text = fh.read()
        return cls.from_dict(json.loads(text))

    def spec_hash(self) -> str:
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()[:12]


_SWEEP_COLUMNS = ("scheme", "axis", "axis_value", "mean_rate", "stderr",
                  "pilots_used", "n_trials")


@dataclass
class SweepResult:
    """Rows of (scheme, axis value) -> mean rate, plus run metadata."""

    rows: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def to_csv(self, path=None) -> str:
        lines = [",".join(_SWEEP_COLUMNS)]
        for r in self.rows:
            lines.append(
                ",".join(
                    [
                        r["scheme"],
                        r["axis"],
                        repr(float(r["axis_value"])),
                        repr(float(r["mean_rate"])),
                        repr(float(r["stderr"])),
                        str(int(r["pilots_used"])),
                        str(int(r["n_trials"])),
                    ]
                )
            )
        text = "\n".join(lines) + "\n"
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, source) -> "SweepResult":
        text = str(source)
        if "\n" not in text and "," not in text:
            with open(text) as fh:
                text = fh.read()
        lines = text.strip().splitlines()
        if lines[0] != ",".join(_SWEEP_COLUMNS):
            raise ValueError("unrecognized sweep CSV header")
        rows = []
        for line in lines[1:]:
            parts = line.split(",")
            rows.append(
                {
                    "scheme": parts[0],
                    "axis": parts[1],
                    "axis_value": float(parts[2]),
                    "mean_rate": float(parts[3]),
                    "stderr": float(parts[4]),
                    "pilots_used": int(parts[5]),
                    "n_trials": int(parts[6]),
                }
            )
        return cls(rows=rows)

    def to_json(self, path=None) -> str:
        text = json.dumps({"metadata": self.metadata, "rows": self.rows}, indent=2)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        return text

    def scheme_rates(self, scheme: str) -> list:
        return [r for r in self.rows if r["scheme"] == scheme]


def _rng(*key) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(key))


def _draw_users(cfg: SystemConfig, rng, n: int, r_fixed: float | None = None):
    """Users uniform in physical angle over the served range; distance uniform
    in [r_min, r_max] unless fixed."""
    lo, hi = np.arcsin(cfg.angle_range[0]), np.arcsin(cfg.angle_range[1])
    theta = np.sin(rng.uniform(lo, hi, n))
    if r_fixed is None:
        r = rng.uniform(*cfg.distance_range, n)
    else:
        r = np.full(n, float(r_fixed))
    alpha = (1.0 - theta**2) / (2.0 * r)
    beta_c = cfg.wavelength / (4 * np.pi * r)
    return {"theta": theta, "alpha": alpha, "r": r, "beta_c": beta_c}


def _h_rows(cfg: SystemConfig, users, f: float) -> np.ndarray:
    """Channel rows h_m for all users at frequency f, shape (T, N_t)."""
    nd = cfg.element_indices() * cfg.spacing
    r = users["r"][:, None]
    th = users["theta"][:, None]
    rn = np.sqrt(r * r + nd * nd - 2 * r * th * nd)
    beta = (cfg.carrier_freq / f) * users["beta_c"]
    return beta[:, None] * np.exp(-1j * cfg.wavenumber(f) * rn)


def _pilot_columns(cfg: SystemConfig, params_list, f: float) -> np.ndarray:
    """Beamformers of each parameter set at frequency f, shape (N_t, K)."""
    nd = cfg.element_indices() * cfg.spacing
    k = cfg.wavenumber(f)
    kc = cfg.wavenumber(cfg.carrier_freq)
    cols = []
    for p in params_list:
        phase = -k * (nd * p.theta_t - nd * nd * p.alpha_t) - kc * (
            nd * p.theta_p - nd * nd * p.alpha_p
        )
        cols.append(np.exp(1j * phase))
    return np.stack(cols, axis=1) / np.sqrt(cfg.n_antennas)


def _sweep_signal(cfg: SystemConfig, params_list, users) -> np.ndarray:
    """Noiseless pilot observations, shape (T, M, K)."""
    t = len(users["theta"])
    M = cfg.n_subcarriers
    out = np.empty((t, M, len(params_list)), dtype=complex)
    for i, f in enumerate(cfg.subcarrier_freqs()):
        h = _h_rows(cfg, users, f)
        w = _pilot_columns(cfg, params_list, f)
        out[:, i, :] = math.sqrt(TX_POWER) * (h @ w)
    return out


def _unit_noise(rng, shape) -> np.ndarray:
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2)


def _sigma(cfg: SystemConfig, users, snr_linear: float) -> np.ndarray:
    """Per-user noise std, SNR anchored at each user's center-frequency gain."""
    if math.isinf(snr_linear):
        return np.zeros_like(users["beta_c"])
    return np.sqrt(TX_POWER * cfg.n_antennas * users["beta_c"] ** 2 / snr_linear)


def _grid_phases(cfg: SystemConfig, thetas, alphas, f: float) -> np.ndarray:
    """Approximate steering matrix over grid points, shape (G, N_t)."""
    nd = cfg.element_indices() * cfg.spacing
    k = cfg.wavenumber(f)
    phase = k * (np.outer(thetas, nd) - np.outer(alphas, nd * nd))
    return np.exp(1j * phase) / np.sqrt(cfg.n_antennas)


def _exhaustive_moments(cfg: SystemConfig, locs, users, rng):
    """Accumulators (A, B, C): per-codeword power sum_m |p + sigma z|^2
    decomposes as A + 2 sigma B + sigma^2 C per user."""
    thetas = np.array([l.theta for l in locs])
    alphas = np.array([l.alpha for l in locs])
    t = len(users["theta"])
    a = np.zeros((t, len(locs)))
    b = np.zeros((t, len(locs)))
    c = np.zeros((t, len(locs)))
    for i, f in enumerate(cfg.subcarrier_freqs()):
        grid = _grid_phases(cfg, thetas, alphas, f)
        h = _h_rows(cfg, users, f)
        p = math.sqrt(TX_POWER) * (h @ grid.conj().T)
        z = _unit_noise(rng, p.shape)
        a += np.abs(p) ** 2
        b += np.real(p * np.conj(z))
        c += np.abs(z) ** 2
    return a, b, c


def _foci_tables(plan: PilotPlan):
    """Clamped focus lookup (theta, alpha) arrays of shape (M, K)."""
    M, K = plan.cfg.n_subcarriers, plan.K
    th = np.empty((M, K))
    al = np.empty((M, K))
    for k in range(1, K + 1):
        for m in range(1, M + 1):
            focus = plan.focus(m, k, clamp=True)
            th[m - 1, k - 1] = focus.theta
            al[m - 1, k - 1] = max(focus.alpha, 0.0)
    return th, al


class _Engine:
    """Precomputed state shared across axis points of one sweep."""

    def __init__(self, spec: ExperimentSpec):
        self.spec = spec
        self.cfg = spec.cfg
        self.plan = design(spec.design_inputs())
        need_proposed = bool(
            {SCHEME_ONGRID, SCHEME_AUX, SCHEME_MATCH} & set(spec.schemes)
        )
        self.plan_params = [self.plan.params(k) for k in range(1, self.plan.K + 1)]
        self.foci = _foci_tables(self.plan) if need_proposed else None
        self.bank = (
            build_match_filter_bank(self.plan, spec.bank_angles, spec.bank_rings)
            if SCHEME_MATCH in spec.schemes
            else None
        )
        if self.bank is not None:
            self._unit_sig = self.bank.unit_signatures()
        self.codebook = (
            PolarCodebook(self.cfg, spec.bank_angles, spec.bank_rings)
            if SCHEME_EXHAUSTIVE in spec.schemes
            else None
        )
        rainbow = {SCHEME_NEAR_RAINBOW, SCHEME_FAR_RAINBOW} & set(spec.schemes)
        self.rainbow_params = rainbow_sweep_params(self.cfg) if rainbow else None
        self.rings = _grid_axes(self.cfg.alpha_min, self.cfg.alpha_max, spec.bank_rings)

    # estimate extraction -------------------------------------------------

    def _ongrid(self, mags, k_budget):
        th, al = self.foci
        t = mags.shape[0]
        sub = mags[:, :, :k_budget].reshape(t, -1)
        idx = np.argmax(sub, axis=1)
        m_idx, k_idx = np.unravel_index(idx, (mags.shape[1], k_budget))
        return th[m_idx, k_idx], al[m_idx, k_idx]

    def _aux(self, mags, snr, k_budget):
        t = mags.shape[0]
        th = np.empty(t)
        al = np.empty(t)
        for i in range(t):
            obs = ObservationGrid(magnitudes=mags[i, :, :k_budget], snr=snr)
            est = aux_pair_train(obs, self.plan)
            th[i], al[i] = est.theta, est.alpha
        return th, al

    def _match(self, mags, k_budget):
        if k_budget == self.plan.K:
            unit_sig = self._unit_sig
        else:
            sig = self.bank.signatures.reshape(
                len(self.bank), self.cfg.n_subcarriers, self.plan.K
            )[:, :, :k_budget].reshape(len(self.bank), -1)
            norms = np.linalg.norm(sig, axis=1, keepdims=True)
            unit_sig = sig / np.where(norms == 0, 1.0, norms)
        t = mags.shape[0]
        flat = mags[:, :, :k_budget].reshape(t, -1)
        norms = np.linalg.norm(flat, axis=1, keepdims=True)
        flat = flat / np.where(norms == 0, 1.0, norms)
        idx = np.argmax(flat @ unit_sig.T, axis=1)
        th = np.array([self.bank.locations[i].theta for i in idx])
        al = np.array([self.bank.locations[i].alpha for i in idx])
        return th, al

    def _exhaustive(self, total, budget):
        idx = np.argmax(total[:, :budget], axis=1)
        th = np.array([self.codebook.locations[i].theta for i in idx])
        al = np.array([self.codebook.locations[i].alpha for i in idx])
        return th, al

    def _rainbow(self, mags, s_budget):
        t = mags.shape[0]
        sub = mags[:, :, :s_budget].reshape(t, -1)
        idx = np.argmax(sub, axis=1)
        m_idx, s_idx = np.unravel_index(idx, (mags.shape[1], s_budget))
        g = self.cfg.carrier_freq / self.cfg.subcarrier_freqs()[m_idx]
        th = self.rainbow_params.theta_t + g * self.rainbow_params.theta_p
        th = np.clip(th, -1.0, 1.0)
        return th, self.rings[s_idx]

    # rates ----------------------------------------------------------------

    def _rates(self, users, th_hat, al_hat, snr) -> np.ndarray:
        gains = _serving_gains(self.cfg, users["theta"], users["alpha"], th_hat, al_hat)
        return np.mean(np.log2(1.0 + snr * gains**2), axis=1)

    # sweep drivers ---------------------------------------------------------

    def run(self) -> SweepResult:
        spec = self.spec
        if spec.sweep_axis == "snr_db":
            rows = self._run_snr_axis()
        elif spec.sweep_axis == "distance_m":
            rows = self._run_distance_axis()
        else:
            rows = self._run_overhead_axis()
        meta = {
            "spec_hash": spec.spec_hash(),
            "master_seed": spec.master_seed,
            "sweep_axis": spec.sweep_axis,
            "n_trials": spec.n_trials,
            "created": datetime.now(timezone.utc).isoformat(),
            "plan_K": self.plan.K,
        }
        return SweepResult(rows=rows, metadata=meta)

    def _row(self, scheme, value, rates, pilots_used):
        rates = np.asarray(rates, dtype=float)
        se = rates.std(ddof=1) / math.sqrt(len(rates)) if len(rates) > 1 else 0.0
        return {
            "scheme": scheme,
            "axis": self.spec.sweep_axis,
            "axis_value": float(value),
            "mean_rate": float(rates.mean()),
            "stderr": float(se),
            "pilots_used": int(pilots_used),
            "n_trials": len(rates),
        }

    def full_pilots(self, scheme: str) -> int:
        if scheme == SCHEME_EXHAUSTIVE:
            return len(self.codebook)
        if scheme == SCHEME_NEAR_RAINBOW:
            return self.spec.bank_rings
        if scheme in (SCHEME_FAR_RAINBOW, SCHEME_PERFECT):
            return 1 if scheme == SCHEME_FAR_RAINBOW else 0
        return self.plan.K

    def _run_snr_axis(self):
        spec = self.spec
        t = spec.n_trials
        users = _draw_users(self.cfg, _rng(spec.master_seed, _STREAM_USERS), t)
        snrs = [10 ** (v / 10) for v in spec.axis_values]
        k = self.plan.K

        prop_schemes = [s for s in spec.schemes
                        if s in (SCHEME_ONGRID, SCHEME_AUX, SCHEME_MATCH)]
        sig = noise = None
        if prop_schemes:
            sig = _sweep_signal(self.cfg, self.plan_params, users)
            noise = _unit_noise(_rng(spec.master_seed, _STREAM_PROPOSED), sig.shape)
        moments = None
        if SCHEME_EXHAUSTIVE in spec.schemes:
            moments = _exhaustive_moments(
                self.cfg, self.codebook.locations, users,
                _rng(spec.master_seed, _STREAM_EXHAUSTIVE),
            )
        near_sig = near_noise = None
        if SCHEME_NEAR_RAINBOW in spec.schemes:
            ring_params = [
                TdPsParams(self.rainbow_params.theta_t, self.rainbow_params.theta_p,
                           alpha_t=float(a))
                for a in self.rings
            ]
            near_sig = _sweep_signal(self.cfg, ring_params, users)
            near_noise = _unit_noise(_rng(spec.master_seed, _STREAM_NEAR), near_sig.shape)
        far_sig = far_noise = None
        if SCHEME_FAR_RAINBOW in spec.schemes:
            far_sig = _sweep_signal(self.cfg, [self.rainbow_params], users)
            far_noise = _unit_noise(_rng(spec.master_seed, _STREAM_FAR), far_sig.shape)

        rows = []
        for value, snr in zip(spec.axis_values, snrs):
            sg = _sigma(self.cfg, users, snr)[:, None, None]
            for scheme in spec.schemes:
                if scheme == SCHEME_PERFECT:
                    rates = np.full(t, math.log2(1.0 + snr))
                elif scheme in (SCHEME_ONGRID, SCHEME_AUX, SCHEME_MATCH):
                    mags = np.abs(sig + sg * noise)
                    if scheme == SCHEME_ONGRID:
                        th, al = self._ongrid(mags, k)
                    elif scheme == SCHEME_AUX:
                        th, al = self._aux(mags, snr, k)
                    else:
                        th, al = self._match(mags, k)
                    rates = self._rates(users, th, al, snr)
                elif scheme == SCHEME_EXHAUSTIVE:
                    a, b, c = moments
                    s1 = sg[:, :, 0]
                    total = a + 2 * s1 * b + s1 * s1 * c
                    th, al = self._exhaustive(total, total.shape[1])
                    rates = self._rates(users, th, al, snr)
                elif scheme == SCHEME_NEAR_RAINBOW:
                    mags = np.abs(near_sig + sg * near_noise)
                    th, al = self._rainbow(mags, len(self.rings))
                    rates = self._rates(users, th, al, snr)
                else:
                    mags = np.abs(far_sig + sg * far_noise)
                    th, _ = self._rainbow(mags, 1)
                    rates = self._rates(users, th, np.zeros(t), snr)
                rows.append(self._row(scheme, value, rates, self.full_pilots(scheme)))
        return rows

    def _run_distance_axis(self):
        spec = self.spec
        snr = 10 ** (spec.snr_db / 10)
        rows = []
        for idx, r_value in enumerate(spec.axis_values):
            users = _draw_users(
                self.cfg, _rng(spec.master_seed, _STREAM_USERS, idx),
                spec.n_trials, r_fixed=r_value,
            )
            rows.extend(self._point_rows(users, snr, r_value, idx))
        return rows

    def _run_overhead_axis(self):
        spec = self.spec
        snr = 10 ** (spec.snr_db / 10)
        t = spec.n_trials
        users = _draw_users(self.cfg, _rng(spec.master_seed, _STREAM_USERS), t)
        k = self.plan.K

        mags = total = near_mags = far_mags = None
        if {SCHEME_ONGRID, SCHEME_AUX, SCHEME_MATCH} & set(spec.schemes):
            sig = _sweep_signal(self.cfg, self.plan_params, users)
            z = _unit_noise(_rng(spec.master_seed, _STREAM_PROPOSED), sig.shape)
            mags = np.abs(sig + _sigma(self.cfg, users, snr)[:, None, None] * z)
        if SCHEME_EXHAUSTIVE in spec.schemes:
            a, b, c = _exhaustive_moments(
                self.cfg, self.codebook.locations, users,
                _rng(spec.master_seed, _STREAM_EXHAUSTIVE),
            )
            s1 = _sigma(self.cfg, users, snr)[:, None]
            total = a + 2 * s1 * b + s1 * s1 * c
        if SCHEME_NEAR_RAINBOW in spec.schemes:
            ring_params = [
                TdPsParams(self.rainbow_params.theta_t, self.rainbow_params.theta_p,
                           alpha_t=float(x))
                for x in self.rings
            ]
            sig = _sweep_signal(self.cfg, ring_params, users)
            z = _unit_noise(_rng(spec.master_seed, _STREAM_NEAR), sig.shape)
            near_mags = np.abs(sig + _sigma(self.cfg, users, snr)[:, None, None] * z)
        if SCHEME_FAR_RAINBOW in spec.schemes:
            sig = _sweep_signal(self.cfg, [self.rainbow_params], users)
            z = _unit_noise(_rng(spec.master_seed, _STREAM_FAR), sig.shape)
            far_mags = np.abs(sig + _sigma(self.cfg, users, snr)[:, None, None] * z)

        rows = []
        for budget in spec.axis_values:
            budget_i = int(budget)
            for scheme in spec.schemes:
                if scheme == SCHEME_PERFECT:
                    rates = np.full(t, math.log2(1.0 + snr))
                elif scheme == SCHEME_ONGRID:
                    th, al = self._ongrid(mags, min(budget_i, k))
                    rates = self._rates(users, th, al, snr)
                elif scheme == SCHEME_AUX:
                    th, al = self._aux(mags[:, :, : min(budget_i, k)], snr,
                                       min(budget_i, k))
                    rates = self._rates(users, th, al, snr)
                elif scheme == SCHEME_MATCH:
                    th, al = self._match(mags, min(budget_i, k))
                    rates = self._rates(users, th, al, snr)
                elif scheme == SCHEME_EXHAUSTIVE:
                    th, al = self._exhaustive(total, min(budget_i, total.shape[1]))
                    rates = self._rates(users, th, al, snr)
                elif scheme == SCHEME_NEAR_RAINBOW:
                    th, al = self._rainbow(near_mags, min(budget_i, len(self.rings)))
                    rates = self._rates(users, th, al, snr)
                else:
                    th, _ = self._rainbow(far_mags, 1)
                    rates = self._rates(users, th, np.zeros(t), snr)
                rows.append(self._row(scheme, budget, rates, self.full_pilots(scheme)))
        return rows

    def _point_rows(self, users, snr, value, idx):
        spec = self.spec
        t = spec.n_trials
        sg3 = _sigma(self.cfg, users, snr)[:, None, None]
        rows = []
        mags = None
        if {SCHEME_ONGRID, SCHEME_AUX, SCHEME_MATCH} & set(spec.schemes):
            sig = _sweep_signal(self.cfg, self.plan_params, users)
            z = _unit_noise(_rng(spec.master_seed, _STREAM_PROPOSED, idx), sig.shape)
            mags = np.abs(sig + sg3 * z)
        for scheme in spec.schemes:
            if scheme == SCHEME_PERFECT:
                rates = np.full(t, math.log2(1.0 + snr))
            elif scheme == SCHEME_ONGRID:
                th, al = self._ongrid(mags, self.plan.K)
                rates = self._rates(users, th, al, snr)
            elif scheme == SCHEME_AUX:
                th, al = self._aux(mags, snr, self.plan.K)
                rates = self._rates(users, th, al, snr)
            elif scheme == SCHEME_MATCH:
                th, al = self._match(mags, self.plan.K)
                rates = self._rates(users, th, al, snr)
            elif scheme == SCHEME_EXHAUSTIVE:
                a, b, c = _exhaustive_moments(
                    self.cfg, self.codebook.locations, users,
                    _rng(spec.master_seed, _STREAM_EXHAUSTIVE, idx),
                )
                s1 = _sigma(self.cfg, users, snr)[:, None]
                total = a + 2 * s1 * b + s1 * s1 * c
                th, al = self._exhaustive(total, total.shape[1])
                rates = self._rates(users, th, al, snr)
            elif scheme == SCHEME_NEAR_RAINBOW:
                ring_params = [
                    TdPsParams(self.rainbow_params.theta_t, self.rainbow_params.theta_p,
                               alpha_t=float(x))
                    for x in self.rings
                ]
                sig = _sweep_signal(self.cfg, ring_params, users)
                z = _unit_noise(_rng(spec.master_seed, _STREAM_NEAR, idx), sig.shape)
                th, al = self._rainbow(np.abs(sig + sg3 * z), len(self.rings))
                rates = self._rates(users, th, al, snr)
            else:
                sig = _sweep_signal(self.cfg, [self.rainbow_params], users)
                z = _unit_noise(_rng(spec.master_seed, _STREAM_FAR, idx), sig.shape)
                th, _ = self._rainbow(np.abs(sig + sg3 * z), 1)
                rates = self._rates(users, th, np.zeros(t), snr)
            rows.append(self._row(scheme, value, rates, self.full_pilots(scheme)))
        return rows


def run_sweep(spec: ExperimentSpec) -> SweepResult:
    """Run the sweep described by the spec; deterministic in its master seed."""
    return _Engine(spec).run()


# beam pattern dump ---------------------------------------------------------

_PATTERN_COLUMNS = ("pilot", "subcarrier", "freq_hz", "theta", "alpha",
                    "distance_m", "regime")


def dump_beam_pattern(plan: PilotPlan, out=None):
    """Predicted focus rows for every feasible (pilot, subcarrier) pair.

    Rows carry the focus angle/curvature and the implied distance; beams whose
    curvature is nonpositive are flagged far-field.  Transition subcarriers
    with no in-range focus are skipped.  Returns (rows, csv_text).
    """
    cfg = plan.cfg
    rows = []
    for k in range(1, plan.K + 1):
        for m in range(1, cfg.n_subcarriers + 1):
            try:
                focus = plan.focus(m, k)
            except InfeasibleFocusError:
                continue
            near = focus.alpha > 0
            r = (1.0 - focus.theta**2) / (2.0 * focus.alpha) if near else math.inf
            rows.append(
                {
                    "pilot": k,
                    "subcarrier": m,
                    "freq_hz": cfg.subcarrier_freq(m),
                    "theta": focus.theta,
                    "alpha": focus.alpha,
                    "distance_m": r,
                    "regime": "near" if near else "far",
                }
            )
    text = pattern_to_csv(rows)
    if out is not None:
        with open(out, "w") as fh:
            fh.write(text)
    return rows, text


def pattern_to_csv(rows) -> str:
    lines = [",".join(_PATTERN_COLUMNS)]
    for r in rows:
        lines.append(
            ",".join(
                [
                    str(int(r["pilot"])),
                    str(int(r["subcarrier"])),
                    repr(float(r["freq_hz"])),
                    repr(float(r["theta"])),
                    repr(float(r["alpha"])),
                    repr(float(r["distance_m"])),
                    r["regime"],
                ]
            )
        )
    return "\n".join(lines) + "\n"


def pattern_from_csv(source):
    text = str(source)
    if "\n" not in text and "," not in text:
        with open(text) as fh:
            text = fh.read()
    lines = text.strip().splitlines()
    if lines[0] != ",".join(_PATTERN_COLUMNS):
        raise ValueError("unrecognized pattern CSV header")
    rows = []
    for line in lines[1:]:
        p = line.split(",")
        rows.append(
            {
                "pilot": int(p[0]),
                "subcarrier": int(p[1]),
                "freq_hz": float(p[2]),
                "theta": float(p[3]),
                "alpha": float(p[4]),
                "distance_m": float(p[5]),
                "regime": p[6],
            }
        )
    return rows


# default experiment specs ---------------------------------------------------

def desk_config() -> SystemConfig:
    """Small geometry for fast experiments: the 64-element array's Rayleigh
    distance is about 20 m, so [2, 10] m keeps users deep enough in the
    near field that ignoring wavefront curvature visibly costs rate."""
    return SystemConfig(
        n_antennas=64,
        carrier_freq=30e9,
        bandwidth=5e9,
        n_subcarriers=256,
        distance_range=(2.0, 10.0),
    )


def fullscale_config() -> SystemConfig:
    return SystemConfig(
        n_antennas=256,
        carrier_freq=30e9,
        bandwidth=5e9,
        n_subcarriers=1024,
        distance_range=(5.0, 200.0),
    )


def desk_experiment_spec(**overrides) -> ExperimentSpec:
    base = dict(
        cfg=desk_config(),
        gamma=0.5,
        schemes=ALL_SCHEMES,
        sweep_axis="snr_db",
        axis_values=(5.0, 10.0, 15.0, 20.0),
        n_trials=200,
        master_seed=1,
        bank_angles=192,
        bank_rings=8,
    )
    base.update(overrides)
    return ExperimentSpec(**base)


def fullscale_experiment_spec(**overrides) -> ExperimentSpec:
    base = dict(
        cfg=fullscale_config(),
        gamma=0.95,
        k_override=3,
        schemes=ALL_SCHEMES,
        sweep_axis="snr_db",
        axis_values=(0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0),
        n_trials=200,
        master_seed=1,
        bank_angles=1024,
        bank_rings=10,
    )
    base.update(overrides)
    return ExperimentSpec(**base)
