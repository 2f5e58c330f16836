import math

import numpy as np
import pytest

from scorefollow import tempo


def _kalman_step(m, P, nu_prev, nu, dt, p, sigma):
    q = p.sigma_v * nu_prev * p.v0 / p.ticks_per_quarter
    Pp = P + q * q
    S = nu * nu * Pp + sigma * sigma
    K = Pp * nu / S
    lik = math.exp(-0.5 * (dt - nu * m) ** 2 / S) / math.sqrt(2 * math.pi * S)
    return m + K * (dt - nu * m), (1 - K * nu) * Pp, lik


def single_regime_deviation(n_steps=100, seed=1):
    p = tempo.TempoParams(v0=60 / (120 * 480), xi1=1.0)
    st = tempo.init(p)
    m, P = p.v0, (p.prior_rel_std * p.v0) ** 2
    rng = np.random.default_rng(seed)
    worst = 0.0
    nu_prev = float(p.ticks_per_quarter)
    for _ in range(n_steps):
        nu = float(rng.choice([240, 480, 960]))
        dt = nu * p.v0 * (1 + 0.05 * rng.standard_normal())
        m, P, _ = _kalman_step(m, P, nu_prev, nu, dt, p, p.sigma_t1)
        st = tempo.step(st, nu_prev, nu, dt, p)
        nu_prev = nu
        worst = max(worst, abs(st.mean - m), abs(st.variance - P))
    return worst


def two_regime_relative_error(n_steps=5, seed=2):
    p = tempo.TempoParams(v0=60 / (120 * 480), xi1=0.95)
    st = tempo.init(p)
    branches = [(1.0, p.v0, (p.prior_rel_std * p.v0) ** 2)]
    rng = np.random.default_rng(seed)
    nu_prev = float(p.ticks_per_quarter)
    for _ in range(n_steps):
        nu = float(rng.choice([240, 480, 960]))
        dt = nu * p.v0 * (1 + 0.08 * rng.standard_normal())
        new = []
        for w, m, P in branches:
            for xi, sig in ((p.xi1, p.sigma_t1), (1 - p.xi1, p.sigma_t2)):
                m2, P2, lik = _kalman_step(m, P, nu_prev, nu, dt, p, sig)
                new.append((w * xi * lik, m2, P2))
        total = sum(b[0] for b in new)
        branches = [(w / total, m, P) for w, m, P in new]
        st = tempo.step(st, nu_prev, nu, dt, p)
        nu_prev = nu
    exact_mean = sum(w * m for w, m, _ in branches)
    return abs(st.mean - exact_mean) / abs(exact_mean)


def test_single_regime_matches_exact_kalman():
    assert single_regime_deviation() <= 1e-12


def test_two_regimes_match_exact_mixture():
    assert two_regime_relative_error() <= 0.02


def test_estimate_clamps():
    p = tempo.TempoParams(v0=0.001)
    assert tempo.estimate(tempo.TempoState(1.0, 1e-6), p) == 0.008
    assert tempo.estimate(tempo.TempoState(1e-9, 1e-6), p) == 0.000125


def test_step_validates_inputs():
    p = tempo.TempoParams(v0=0.001)
    st = tempo.init(p)
    with pytest.raises(ValueError):
        tempo.step(st, 480, 0, 0.5, p)
    with pytest.raises(ValueError):
        tempo.step(st, 480, 480, 0.0, p)


def test_params_validation():
    with pytest.raises(ValueError):
        tempo.TempoParams(v0=-1.0)
    with pytest.raises(ValueError):
        tempo.TempoParams(v0=0.001, xi1=0.0)


def test_from_qpm():
    p = tempo.TempoParams.from_qpm(120, 480)
    assert p.v0 == pytest.approx(60 / (120 * 480))


def test_wide_regime_takes_blame_for_outliers():
    p = tempo.TempoParams(v0=60 / (120 * 480))
    st = tempo.init(p)
    st = tempo.step(st, 480, 480, 480 * p.v0, p)
    assert st.regime_posterior[0] > 0.95
    st = tempo.step(st, 480, 480, 480 * p.v0 + 0.5, p)
    assert st.regime_posterior[1] > 0.95


def test_track_tsv():
    tr = tempo.TempoTrack()
    tr.append(3, 1.5, 480, 0.00104, 0.97)
    text = tr.to_tsv()
    assert text.splitlines()[0].startswith("n\t")
    assert "0.00104" in text
