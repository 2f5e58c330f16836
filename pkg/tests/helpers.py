"""Shared fixtures: score generators and the dense Viterbi oracle."""
from __future__ import annotations

import math
from dataclasses import replace

import numpy as np

from scorefollow import compile_hmm, homophonize
from scorefollow import ioi, tempo
from scorefollow.hmm import IMMEDIATE, INSERTION, METRIC, SELF, SKIP
from scorefollow.match import LOG_FLOOR, MatcherConfig, NoteEvent, Session
from scorefollow.score import parse_score_text

# Each event occupies the pitch range [base, base + 11] (ornaments reach at
# most 11 semitones above the chord root).  Adjacent bases are kept >= 13
# semitones apart so consecutive events never share pitches (unambiguous
# zero-mistake round trip), and the base sequence is pseudo-random so the
# score is aperiodic and globally relocatable after jumps.
def _event_bases(n_events: int) -> list[int]:
    rng = np.random.default_rng(12345)
    bases: list[int] = []
    while len(bases) < n_events:
        b = int(rng.integers(30, 86))
        if bases and abs(b - bases[-1]) < 13:
            continue
        bases.append(b)
    return bases


def ornament_score_text(n_events: int, tpq: int = 480) -> str:
    """Single-voice score mixing plain chords, trills, graces, tremolos."""
    lines = [f"tpq {tpq}"]
    bases = _event_bases(n_events)
    for r in range(n_events):
        base = bases[r]
        t = r * tpq
        chord = f"{base},{base + 4},{base + 7}"
        if r % 10 == 3:
            lines.append(
                f"voice 0 time {t} body chord {chord} value {tpq} orn trill")
        elif r % 10 == 6:
            lines.append(
                f"voice 0 time {t} grace {base + 9} body chord {chord}"
                f" value {tpq}")
        elif r % 10 == 8:
            lines.append(
                f"voice 0 time {t} body tremolo {base},{base + 7};"
                f"{base + 4},{base + 11} value {tpq}")
        else:
            lines.append(f"voice 0 time {t} body chord {chord} value {tpq}")
    return "\n".join(lines) + "\n"


def plain_score_text(pitches: list[int], tpq: int = 480) -> str:
    lines = [f"tpq {tpq}"]
    for r, p in enumerate(pitches):
        lines.append(f"voice 0 time {r * tpq} body chord {p} value {tpq}")
    return "\n".join(lines) + "\n"


def build_model(n_events: int, **kw):
    return compile_hmm(homophonize(parse_score_text(
        ornament_score_text(n_events))), **kw)


def build_plain_model(pitches: list[int], **kw):
    return compile_hmm(homophonize(parse_score_text(
        plain_score_text(pitches))), **kw)


# ---------------------------------------------------------------------------
# dense-lattice oracle for Viterbi exactness

def run_session_with_vhats(model, stream, cfg):
    """Feed a session and record the tempo estimate used at each step."""
    s = Session(model, cfg)
    vhats = []
    for ev in stream:
        vhats.append(tempo.estimate(s.tempo_state, s.tempo_params))
        s.feed(ev)
    return s, vhats


def oracle_best_logprob(model, stream, cfg, vhats) -> float:
    """Best path log-probability by dense dynamic programming.

    Independent of the vectorized decoder: densities come from the plain
    scalar pdf helpers and the lattice is a full n x n matrix per step,
    with the uniform repeat/skip route materialized for every state pair.
    """
    if cfg.gamma_bar != model.gamma_bar:
        from scorefollow.hmm import with_gamma
        model = with_gamma(model, cfg.gamma_bar)
    n = model.n_states
    e = model.edges
    params = model.ioi_params
    skip_spec = replace(params["skip"], truncation_floor=cfg.skip_floor)

    def logpdf(spec, dt):
        p = float(ioi.eval_pdf(spec, dt))
        return max(math.log(p), LOG_FLOOR) if p > 0 else LOG_FLOOR

    def mixture_logpdf(state_idx, dt):
        p = float(ioi.mixture_pdf(model.self_mixtures[state_idx], dt))
        return max(math.log(p), LOG_FLOOR) if p > 0 else LOG_FLOOR

    seg = e["seg_starts"]
    log_gamma = math.log(cfg.gamma_bar)

    scores = model.init_logp + model.pitch_logp[:, stream[0].pitch]
    for m in range(1, len(stream)):
        dt = stream[m].onset - stream[m - 1].onset
        v_hat = vhats[m]
        b_skip = logpdf(skip_spec, dt)
        trans = np.full((n, n), -np.inf)
        # uniform repeat/skip route, materialized everywhere
        for src in range(n):
            for dst in range(n):
                trans[src, dst] = (e["log_rho_out"][src] + log_gamma
                                   + b_skip + e["log_rho_in"][dst])
        for dst in range(n):
            for pos in range(seg[dst], seg[dst + 1]):
                src = int(e["src"][pos])
                cls = int(e["class"][pos])
                if cls == SELF:
                    dens = mixture_logpdf(src, dt)
                elif cls == IMMEDIATE:
                    fam = ("trill" if model.states[dst].state_type == "TR"
                           else "short_app")
                    dens = logpdf(params[fam], dt)
                elif cls in (INSERTION, SKIP):
                    dens = b_skip
                else:
                    assert cls == METRIC
                    u = (dt - v_hat * e["dtau"][pos] - e["dev"][pos]) \
                        / cfg.delta_width
                    dens = max(-math.log(math.pi * cfg.delta_width)
                               - math.log1p(u * u), LOG_FLOOR)
                cand = e["logp"][pos] + dens
                if cand > trans[src, dst]:
                    trans[src, dst] = cand
        scores = (scores[:, None] + trans).max(axis=0) \
            + model.pitch_logp[:, stream[m].pitch]
    return float(scores.max())


def random_stream(rng, n_notes: int, pitches) -> list[NoteEvent]:
    t = 0.0
    out = []
    for i in range(n_notes):
        out.append(NoteEvent(pitch=int(rng.choice(pitches)), onset=t, index=i))
        t += float(rng.uniform(0.005, 1.2))
    return out


def tiny_config(mode: str = "offline") -> MatcherConfig:
    return (MatcherConfig() if mode == "offline"
            else MatcherConfig.online())
