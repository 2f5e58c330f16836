import math

import numpy as np
import pytest
from scipy.integrate import quad

from scorefollow import ioi
from scorefollow.hmm import build_self_mixture

FIT_SPECS = [
    ioi.DistSpec("gaussian", 0.085, 0.02),
    ioi.DistSpec("half_exponential", 0.0, 70.0),
    ioi.DistSpec("cauchy", 0.03, 0.04),
]


def _integral(pdf, lo):
    total, _ = quad(pdf, lo, np.inf, limit=400)
    return total


@pytest.mark.parametrize("label", sorted(ioi.default_params()))
def test_default_spec_normalized(label):
    # all IOI densities live on [truncation floor, inf) with floor >= 0
    spec = ioi.default_params()[label]
    total = _integral(lambda x: float(ioi.eval_pdf(spec, x)),
                      spec.truncation_floor or 0.0)
    assert abs(total - 1.0) <= 1e-4


@pytest.mark.parametrize("counts", [
    {"chord": 1.0},
    {"chord": 2.0, "trill": 3.0},
    {"short_app": 1.0, "chord": 2.0},
    {"trill": 5.0, "arpeggio": 1.0, "chord": 1.0},
])
def test_self_mixture_normalized(counts):
    mix = build_self_mixture(counts, ioi.default_params())
    assert abs(sum(w for w, _ in mix.components) - 1.0) <= 1e-12
    total = _integral(lambda x: float(ioi.mixture_pdf(mix, x)), 0.0)
    assert abs(total - 1.0) <= 1e-4


@pytest.mark.parametrize("spec", FIT_SPECS, ids=[s.family for s in FIT_SPECS])
def test_fit_recovery(spec):
    rng = np.random.default_rng(42)
    samples = ioi.sample(spec, rng, size=10_000)
    best, _ = ioi.fit_distribution(samples)
    assert best.family == spec.family
    if abs(spec.location) > 1e-9:
        assert abs(best.location - spec.location) / abs(spec.location) <= 0.05
    else:
        assert abs(best.location) <= 0.005
    assert abs(best.width - spec.width) / spec.width <= 0.05


def test_params_text_round_trip():
    params = ioi.default_params()
    again = ioi.parse_params_text(ioi.dump_params_text(params))
    assert again == params


def test_sample_respects_floor():
    spec = ioi.DistSpec("cauchy", 0.9, 0.6, truncation_floor=0.3)
    rng = np.random.default_rng(0)
    xs = ioi.sample(spec, rng, size=2000)
    assert float(np.min(xs)) >= 0.3


def test_batch_log_pdf_matches_eval_pdf():
    specs = FIT_SPECS + [ioi.DistSpec("cauchy", 0.9, 0.6,
                                      truncation_floor=0.3)]
    fam = np.array([ioi.FAMILIES.index(s.family) for s in specs],
                   dtype=np.int8)
    loc = np.array([s.location for s in specs])
    width = np.array([s.width for s in specs])
    floor = np.array([s.truncation_floor or 0.0 for s in specs])
    lognorm = ioi.batch_log_norm(fam, loc, width, floor)
    for dt in (0.01, 0.1, 0.5, 1.3):
        got = ioi.batch_log_pdf(fam, loc, width, floor, lognorm, dt)
        for i, s in enumerate(specs):
            p = float(ioi.eval_pdf(s, dt))
            if p > 0:
                assert got[i] == pytest.approx(math.log(p), abs=1e-9)
            else:
                # eval_pdf underflowed or the point is below the support
                assert got[i] < -600


def test_fit_rejects_degenerate_input():
    with pytest.raises(ioi.FitError):
        ioi.fit_distribution([0.5] * 50)
