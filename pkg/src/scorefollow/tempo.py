"""Local-tempo tracking with a two-regime switching Kalman filter.

Local tempo v_n is seconds per tick.  The process step scales with the
elapsed note value so the model is invariant under rescaling of time and of
score time; the observation is an IOI with noise drawn from a narrow
(motor-control) or a wide (erroneous-timing) Gaussian regime.  After every
step the regime mixture is collapsed to a single Gaussian by moment matching.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

CLAMP_FACTOR = 8.0


@dataclass(frozen=True)
class TempoParams:
    v0: float  # seconds per tick, initial/reference tempo
    ticks_per_quarter: int = 480
    sigma_v: float = 0.03  # dimensionless process noise
    sigma_t1: float = 0.014  # s, motor-control regime
    sigma_t2: float = 0.16  # s, erroneous-timing regime
    xi1: float = 0.95  # weight of the narrow regime
    prior_rel_std: float = 0.1  # prior std as a fraction of v0

    def __post_init__(self):
        if self.v0 <= 0:
            raise ValueError("v0 must be positive")
        if not 0 < self.xi1 <= 1:
            raise ValueError("xi1 must be in (0, 1]")
        if min(self.sigma_v, self.sigma_t1, self.sigma_t2) <= 0:
            raise ValueError("all sigmas must be positive")
        if self.ticks_per_quarter <= 0:
            raise ValueError("ticks_per_quarter must be positive")

    @classmethod
    def from_qpm(cls, qpm: float, ticks_per_quarter: int = 480, **kw):
        """Build from a metronome mark in quarter notes per minute."""
        return cls(v0=60.0 / (qpm * ticks_per_quarter),
                   ticks_per_quarter=ticks_per_quarter, **kw)


@dataclass
class TempoState:
    mean: float  # filtered v_n, s/tick
    variance: float
    step_index: int = 0
    regime_posterior: tuple[float, float] = (1.0, 0.0)


def init(params: TempoParams) -> TempoState:
    prior_std = params.prior_rel_std * params.v0
    return TempoState(mean=params.v0, variance=prior_std * prior_std)


def _gauss_pdf(x: float, mean: float, var: float) -> float:
    return math.exp(-0.5 * (x - mean) ** 2 / var) / math.sqrt(2 * math.pi * var)


def step(state: TempoState, nu_prev: float, nu: float, dt: float,
         params: TempoParams) -> TempoState:
    """One predict/update cycle on note value ``nu`` ticks observed over ``dt`` s.

    ``nu_prev`` is the previous note value driving the tempo drift term.
    """
    if nu <= 0 or dt <= 0:
        raise ValueError("note value and IOI must be positive")
    drift_std = params.sigma_v * nu_prev * params.v0 / params.ticks_per_quarter
    mean_pred = state.mean
    var_pred = state.variance + drift_std * drift_std

    weights = (params.xi1, 1.0 - params.xi1)
    sigmas = (params.sigma_t1, params.sigma_t2)
    post_w = []
    post_mean = []
    post_var = []
    for xi, sig in zip(weights, sigmas):
        if xi == 0.0:
            post_w.append(0.0)
            post_mean.append(mean_pred)
            post_var.append(var_pred)
            continue
        innov_var = nu * nu * var_pred + sig * sig
        gain = var_pred * nu / innov_var
        residual = dt - nu * mean_pred
        post_mean.append(mean_pred + gain * residual)
        post_var.append((1.0 - gain * nu) * var_pred)
        post_w.append(xi * _gauss_pdf(dt, nu * mean_pred, innov_var))
    total = sum(post_w)
    if total <= 0.0:
        # both regimes underflowed: keep prediction, flat responsibility
        post_w = list(weights)
        total = 1.0
    post_w = [w / total for w in post_w]

    # GPB1 collapse: moment-match the two-component posterior
    mean = sum(w * m for w, m in zip(post_w, post_mean))
    var = sum(w * (v + (m - mean) ** 2)
              for w, m, v in zip(post_w, post_mean, post_var))
    var = max(var, 1e-18 * params.v0 * params.v0)
    return TempoState(mean=mean, variance=var, step_index=state.step_index + 1,
                      regime_posterior=(post_w[0], post_w[1]))


def estimate(state: TempoState, params: TempoParams) -> float:
    """Filtered tempo mean, clamped to [v0/8, 8 v0]."""
    lo = params.v0 / CLAMP_FACTOR
    hi = params.v0 * CLAMP_FACTOR
    return min(max(state.mean, lo), hi)


@dataclass
class TempoTrack:
    """Filtered tempo trajectory; one row per tempo update."""

    rows: list[tuple[int, float, float, float, float]] = field(default_factory=list)
    # (step n, time s, nu ticks, v_hat s/tick, narrow-regime posterior)

    def append(self, n: int, time_s: float, nu: float, v_hat: float,
               regime_p1: float):
        self.rows.append((n, time_s, nu, v_hat, regime_p1))

    def to_tsv(self) -> str:
        lines = ["n\ttime_s\tnu_ticks\tv_s_per_tick\tregime_p1"]
        for n, t, nu, v, p1 in self.rows:
            lines.append(f"{n}\t{t:.6f}\t{nu:g}\t{v:.9g}\t{p1:.6f}")
        return "\n".join(lines) + "\n"
