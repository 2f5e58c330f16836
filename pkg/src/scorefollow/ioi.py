"""Inter-onset-interval densities: half-line Gaussian / exponential / Cauchy.

All families live on [0, inf) and are renormalized there (and again above an
optional truncation floor).  ``width`` is the standard deviation for the
Gaussian, the rate parameter for the half exponential, and the half width at
half maximum for the Cauchy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from importlib import resources

import numpy as np
from scipy import optimize, stats

FAMILIES = ("gaussian", "half_exponential", "cauchy")


@dataclass(frozen=True)
class DistSpec:
    family: str
    location: float  # seconds
    width: float  # seconds (gaussian/cauchy) or 1/seconds (half_exponential)
    truncation_floor: float | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        if self.width <= 0:
            raise ValueError("width must be positive")
        if self.truncation_floor is not None and self.truncation_floor < 0:
            raise ValueError("truncation floor must be non-negative")

    def median(self) -> float:
        """Median of the (truncated) distribution, by bisection on the CDF."""
        lo = self.truncation_floor or 0.0
        hi = max(self.location, lo) + 1.0
        while _cdf_mass(self, hi) < 0.5:
            hi *= 2
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            if _cdf_mass(self, mid) < 0.5:
                lo = mid
            else:
                hi = mid
        return 0.5 * (lo + hi)


def _raw_cdf(spec: DistSpec, x: float) -> float:
    """CDF of the untruncated full-line parent at x."""
    if spec.family == "gaussian":
        return stats.norm.cdf(x, loc=spec.location, scale=spec.width)
    if spec.family == "half_exponential":
        if x < spec.location:
            return 0.0
        return 1.0 - math.exp(-spec.width * (x - spec.location))
    return stats.cauchy.cdf(x, loc=spec.location, scale=spec.width)


def _support_floor(spec: DistSpec) -> float:
    floor = 0.0
    if spec.truncation_floor is not None:
        floor = max(floor, spec.truncation_floor)
    return floor


def _normalizer(spec: DistSpec) -> float:
    """Mass of the parent distribution above the support floor."""
    return 1.0 - _raw_cdf(spec, _support_floor(spec))


def _cdf_mass(spec: DistSpec, x: float) -> float:
    z = _normalizer(spec)
    floor = _support_floor(spec)
    if x <= floor:
        return 0.0
    return (_raw_cdf(spec, x) - _raw_cdf(spec, floor)) / z


def eval_pdf(spec: DistSpec, dt):
    """Density of the truncated, renormalized family at dt >= 0 (1/seconds)."""
    dt_arr = np.asarray(dt, dtype=float)
    if np.any(dt_arr < 0):
        raise ValueError("IOI must be non-negative")
    floor = _support_floor(spec)
    z = _normalizer(spec)
    if spec.family == "gaussian":
        pdf = stats.norm.pdf(dt_arr, loc=spec.location, scale=spec.width)
    elif spec.family == "half_exponential":
        pdf = np.where(dt_arr >= spec.location,
                       spec.width * np.exp(-spec.width *
                                           np.maximum(dt_arr - spec.location, 0)),
                       0.0)
    else:
        pdf = stats.cauchy.pdf(dt_arr, loc=spec.location, scale=spec.width)
    with np.errstate(divide="ignore", invalid="ignore"):
        pdf = np.where((dt_arr >= floor) & (z > 0), pdf / z, 0.0)
    if np.isscalar(dt) or dt_arr.ndim == 0:
        return float(pdf)
    return pdf


def sample(spec: DistSpec, rng: np.random.Generator, size=None):
    """Draw from the truncated family by inverse-CDF on the parent."""
    floor = _support_floor(spec)
    u_lo = _raw_cdf(spec, floor)
    u = rng.uniform(u_lo, 1.0, size=size)
    if spec.family == "gaussian":
        return stats.norm.ppf(u, loc=spec.location, scale=spec.width)
    if spec.family == "half_exponential":
        return spec.location - np.log1p(-u) / spec.width
    return stats.cauchy.ppf(u, loc=spec.location, scale=spec.width)


@dataclass(frozen=True)
class IoiMixture:
    components: tuple[tuple[float, DistSpec], ...]

    def __post_init__(self):
        if not self.components:
            raise ValueError("empty mixture")
        weights = [w for w, _ in self.components]
        if any(w < 0 for w in weights):
            raise ValueError("negative mixture weight")
        if abs(sum(weights) - 1.0) > 1e-9:
            raise ValueError(f"mixture weights sum to {sum(weights)}, not 1")


def mixture_pdf(mix: IoiMixture, dt):
    out = None
    for w, spec in mix.components:
        term = np.asarray(eval_pdf(spec, dt)) * w
        out = term if out is None else out + term
    if np.isscalar(dt):
        return float(out)
    return out


def mixture_sample(mix: IoiMixture, rng: np.random.Generator) -> float:
    weights = np.array([w for w, _ in mix.components])
    idx = rng.choice(len(weights), p=weights / weights.sum())
    return float(sample(mix.components[idx][1], rng))


# ---------------------------------------------------------------------------
# batch evaluation (decoder hot path; pure numpy, no scipy dispatch)

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


def batch_log_norm(fam: np.ndarray, loc: np.ndarray, width: np.ndarray,
                   floor: np.ndarray) -> np.ndarray:
    """log of the parent mass above each support floor (FAMILIES order codes)."""
    z = np.empty_like(loc)
    g = fam == 0
    h = fam == 1
    c = fam == 2
    if g.any():
        z[g] = stats.norm.cdf((loc[g] - floor[g]) / width[g])
    if h.any():
        z[h] = np.exp(-width[h] * np.maximum(floor[h] - loc[h], 0.0))
    if c.any():
        z[c] = 0.5 - np.arctan((floor[c] - loc[c]) / width[c]) / math.pi
    return np.log(z)


def batch_log_pdf(fam: np.ndarray, loc: np.ndarray, width: np.ndarray,
                  floor: np.ndarray, log_norm: np.ndarray,
                  dt: float) -> np.ndarray:
    """Vectorized log density of heterogeneous families at a common dt."""
    out = np.full(loc.shape, -np.inf)
    live = dt >= floor
    g = live & (fam == 0)
    h = live & (fam == 1) & (dt >= loc)
    c = live & (fam == 2)
    if g.any():
        u = (dt - loc[g]) / width[g]
        out[g] = -0.5 * u * u - np.log(width[g]) - _LOG_SQRT_2PI
    if h.any():
        out[h] = np.log(width[h]) - width[h] * (dt - loc[h])
    if c.any():
        u = (dt - loc[c]) / width[c]
        out[c] = -np.log(math.pi * width[c] * (1.0 + u * u))
    out[live] -= log_norm[live]
    return out


# ---------------------------------------------------------------------------
# histogram fitting

class FitError(ValueError):
    pass


def _model(family):
    def f(x, loc, width):
        return eval_pdf(DistSpec(family, loc, width), x)
    return f


def fit_distribution(samples, bins="fd"):
    """Histogram least-squares fit; returns (best DistSpec, R^2 per family).

    Each family is fit to the normalized histogram of ``samples`` and the one
    with maximal R^2 wins.
    """
    x = np.asarray(samples, dtype=float)
    if x.size < 50:
        raise FitError(f"need at least 50 samples, got {x.size}")
    if np.any(x < 0):
        raise FitError("negative IOI sample")
    if np.std(x) < 1e-12:
        raise FitError("degenerate (constant) samples")

    edges = np.histogram_bin_edges(x, bins=bins)
    counts, edges = np.histogram(x, bins=edges, density=True)
    centers = 0.5 * (edges[:-1] + edges[1:])

    med = float(np.median(x))
    guesses = {
        "gaussian": (float(np.mean(x)), float(np.std(x))),
        "half_exponential": (max(float(np.min(x)) - 1e-6, 0.0),
                             1.0 / max(float(np.mean(x) - np.min(x)), 1e-9)),
        "cauchy": (med, float(np.subtract(*np.percentile(x, [75, 25]))) / 2),
    }

    r2: dict[str, float] = {}
    specs: dict[str, DistSpec] = {}
    ss_tot = float(np.sum((counts - counts.mean()) ** 2))
    for family in FAMILIES:
        loc0, w0 = guesses[family]
        w0 = max(w0, 1e-9)
        try:
            popt, _ = optimize.curve_fit(
                _model(family), centers, counts, p0=(loc0, w0),
                bounds=((-5.0, 1e-9), (np.inf, np.inf)), maxfev=20000)
            loc = float(popt[0])
            if family == "half_exponential" and loc < 0.0:
                # the support is truncated at 0 and renormalized, so any
                # location <= 0 yields the same density; canonicalize
                loc = 0.0
            spec = DistSpec(family, loc, float(popt[1]))
            resid = counts - eval_pdf(spec, centers)
            r2[family] = 1.0 - float(np.sum(resid ** 2)) / max(ss_tot, 1e-300)
            specs[family] = spec
        except (RuntimeError, ValueError):
            r2[family] = -np.inf
    if not specs:
        raise FitError("no family could be fitted")
    best = max(specs, key=lambda fam: r2[fam])
    return specs[best], r2


# ---------------------------------------------------------------------------
# default parameters

DEFAULTS_RESOURCE = "default_ioi_params.cfg"


def parse_params_text(text: str) -> dict[str, DistSpec]:
    """Parse the key-value parameter format: name family loc width [floor]."""
    out: dict[str, DistSpec] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        toks = line.split()
        if len(toks) not in (4, 5):
            raise ValueError(f"line {lineno}: expected "
                             "'name family loc width [floor]'")
        name, family, loc, width = toks[:4]
        floor = float(toks[4]) if len(toks) == 5 else None
        out[name] = DistSpec(family, float(loc), float(width),
                             truncation_floor=floor)
    return out


def dump_params_text(params: dict[str, DistSpec]) -> str:
    lines = []
    for name, spec in params.items():
        line = f"{name} {spec.family} {spec.location:g} {spec.width:g}"
        if spec.truncation_floor is not None:
            line += f" {spec.truncation_floor:g}"
        lines.append(line)
    return "\n".join(lines) + "\n"


def default_params() -> dict[str, DistSpec]:
    """The shipped per-class IOI families (overridable via config files)."""
    text = resources.files("scorefollow").joinpath(DEFAULTS_RESOURCE).read_text()
    return parse_params_text(text)


def default_trill_period() -> float:
    """Mean trill repetition period in seconds (two strikes per repetition)."""
    return 0.17
