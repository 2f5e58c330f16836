"""Generative performance simulator over a compiled PerformanceHmm.

Walks the score events in order under a drifting tempo, realizes each
bottom state (chord spreads, grace runs, trill alternations) with IOIs
drawn from the class-appropriate families, and injects controlled
mistakes: wrong pitches, inserted notes, deleted notes, and top-level
repeats/skips.  Ground truth is recorded per emitted note in the same
Alignment schema the matcher produces, which makes round-trip evaluation
a plain row-by-row comparison.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import ioi, midi, tempo
from .hmm import BottomState, PerformanceHmm
from .match import Alignment, AlignmentRow, NoteEvent

MIN_GAP = 1e-3  # seconds between consecutive emitted onsets
MAX_STRIKE_SPREAD = 0.04  # seconds; notes of one strike are near-simultaneous


@dataclass(frozen=True)
class SimConfig:
    seed: int = 0
    pitch_error_rate: float = 0.0
    insertion_rate: float = 0.0
    deletion_rate: float = 0.0
    skip_rate: float = 0.0  # per event-boundary probability of a jump
    skip_spans: tuple[int, ...] = (-20, -10, -5, 5, 10, 20)
    forced_jumps: tuple[tuple[int, int], ...] = ()  # (ordinal, span)
    sigma_v: float = 0.0  # per-event relative tempo drift
    trill_period_jitter: float = 0.1  # relative std of the trill period
    ioi_params: dict[str, ioi.DistSpec] | None = None

    def __post_init__(self):
        for name in ("pitch_error_rate", "insertion_rate", "deletion_rate",
                     "skip_rate"):
            r = getattr(self, name)
            if not 0.0 <= r <= 1.0:
                raise ValueError(f"{name} must be in [0, 1]")
        if self.sigma_v < 0:
            raise ValueError("sigma_v must be non-negative")


@dataclass
class SimResult:
    stream: list[NoteEvent]
    truth: Alignment
    tempo_track: tempo.TempoTrack


def _wrong_pitch(pitch: int, rng: np.random.Generator) -> int:
    choices = [q for q in (pitch - 1, pitch + 1, pitch - 12, pitch + 12)
               if 0 <= q < 128]
    return int(rng.choice(choices))


def simulate(hmm: PerformanceHmm, config: SimConfig) -> SimResult:
    rng = np.random.default_rng(config.seed)
    params = dict(config.ioi_params or hmm.ioi_params)
    chord_spec = params["chord"]
    grace_spec = params["short_app"]
    arp_spec = params["arpeggio"]

    stream: list[NoteEvent] = []
    rows: list[AlignmentRow] = []
    track = tempo.TempoTrack()

    v = hmm.v0
    t = 0.0  # performance clock
    beat = 0.0  # ideal onset time of the current event
    prev_score_time: int | None = None
    first_note = True
    forced = dict(config.forced_jumps)

    def emit(pitch: int, onset: float, st: BottomState, cls: str) -> float:
        nonlocal first_note
        onset = max(onset, (stream[-1].onset + MIN_GAP) if stream else 0.0)
        m = len(stream)
        if not first_note and rng.random() < config.deletion_rate:
            return onset
        played = pitch
        if not first_note and rng.random() < config.pitch_error_rate:
            played = _wrong_pitch(pitch, rng)
        stream.append(NoteEvent(played, onset, m))
        rows.append(AlignmentRow(
            note_index=m, onset=onset, pitch=played,
            top_index=st.top_index, sub_index=st.sub_index,
            state_type=st.state_type, score_time=st.score_time,
            transition_class=cls, logodds=0.0))
        first_note = False
        if rng.random() < config.insertion_rate:
            extra_t = onset + max(float(ioi.sample(grace_spec, rng)), MIN_GAP)
            stream.append(NoteEvent(_wrong_pitch(pitch, rng), extra_t,
                                    len(stream)))
            rows.append(AlignmentRow(
                note_index=len(stream) - 1, onset=extra_t, pitch=stream[-1].pitch,
                top_index=st.top_index, sub_index=st.sub_index,
                state_type=st.state_type, score_time=st.score_time,
                transition_class="insertion", logodds=0.0,
                unmatched=True, candidates=(st.top_index,)))
            return extra_t
        return onset

    order: list[int] = []
    I = 0
    ordinal = 0
    while I < len(hmm.events):
        order.append(I)
        span = forced.get(ordinal)
        if span is None and config.skip_rate > 0 and \
                rng.random() < config.skip_rate:
            span = int(rng.choice(config.skip_spans))
        ordinal += 1
        if span is not None:
            J = min(max(I + span, 0), len(hmm.events) - 1)
            if J != I:
                I = J
                continue
        I += 1

    for n, I in enumerate(order):
        ev = hmm.events[I]
        if config.sigma_v > 0:
            v *= math.exp(config.sigma_v * rng.standard_normal())
        if prev_score_time is None:
            beat = 0.0
        else:
            dtau = ev.score_time - prev_score_time
            if dtau <= 0:  # repeat/backward jump: resume after a short gap
                beat = t + max(float(ioi.sample(params["skip"], rng)), 0.3)
            else:
                beat = beat + v * dtau
        prev_score_time = ev.score_time
        track.append(n, beat, float(ev.end_time - ev.score_time), v, 1.0)

        t = max(beat, t + MIN_GAP) if stream else beat
        for k in range(ev.n_states):
            st = hmm.states[ev.state_offset + k]
            entry_cls = ("metric" if k == 0 and n > 0 else
                         "immediate" if k > 0 else "initial")
            if st.state_type == "TR":
                t = _emit_trill(st, t, beat, v, params, config, rng, emit)
                continue
            spec = arp_spec if st.arpeggio else chord_spec
            if st.grace_chords:
                for gi, chord in enumerate(st.grace_chords):
                    cls = entry_cls if gi == 0 else "self"
                    for pi, p in enumerate(sorted(chord)):
                        t = emit(p, t, st, cls if pi == 0 else "self")
                        t += float(ioi.sample(chord_spec, rng))
                    t += float(ioi.sample(grace_spec, rng))
            else:
                emit_pitches = st.emit_pitches or st.pitches
                for pi, p in enumerate(sorted(emit_pitches)):
                    t = emit(p, t, st, entry_cls if pi == 0 else "self")
                    t += min(float(ioi.sample(spec, rng)),
                             MAX_STRIKE_SPREAD)

    return SimResult(stream=stream, truth=Alignment(rows),
                     tempo_track=track)


def _emit_trill(st: BottomState, t: float, beat: float, v: float,
                params, config: SimConfig, rng: np.random.Generator,
                emit) -> float:
    n_bar, period, nu = st.trill_params
    end = beat + v * nu
    groups = st.trill_groups or (frozenset(st.pitches),)
    # the onset chord was emitted by the preceding SA state, so the
    # alternation picks up with the second group after a half period
    i = 1 if len(groups) > 1 else 0
    strike = period / max(len(groups), 1)
    t += max(strike, MIN_GAP)
    first = True
    while t < end or first:
        for p in sorted(groups[i % len(groups)]):
            t = emit(p, t, st, "immediate" if first else "self")
            first = False
            t += min(max(float(ioi.sample(params["chord"], rng)), MIN_GAP),
                     MAX_STRIKE_SPREAD)
        jitter = 1.0 + config.trill_period_jitter * rng.standard_normal()
        t += max(strike * max(jitter, 0.1), MIN_GAP)
        i += 1
    return t


_RATE_KEYS = {
    "pitch_error": "pitch_error_rate",
    "insertion": "insertion_rate",
    "deletion": "deletion_rate",
    "skip": "skip_rate",
    "sigma_v": "sigma_v",
    "trill_period_jitter": "trill_period_jitter",
}


def parse_rates_text(text: str) -> dict[str, float]:
    """`key value` lines (# comments) -> SimConfig keyword arguments."""
    out: dict[str, float] = {}
    for lineno, ln in enumerate(text.splitlines(), start=1):
        ln = ln.split("#", 1)[0].strip()
        if not ln:
            continue
        parts = ln.split()
        if len(parts) != 2 or parts[0] not in _RATE_KEYS:
            raise ValueError(f"line {lineno}: expected '<key> <value>' with "
                             f"key in {sorted(_RATE_KEYS)}, got {ln!r}")
        out[_RATE_KEYS[parts[0]]] = float(parts[1])
    return out


def stream_jsonl(stream: list[NoteEvent]) -> str:
    return "\n".join(json.dumps({"t": round(ev.onset, 6), "pitch": ev.pitch})
                     for ev in stream) + "\n"


def parse_stream_jsonl(text: str) -> list[NoteEvent]:
    out = []
    for ln in text.splitlines():
        if not ln.strip():
            continue
        doc = json.loads(ln)
        out.append(NoteEvent(int(doc["pitch"]), float(doc["t"]), len(out)))
    return out


def write_stream_midi(stream: list[NoteEvent], *, qpm: float = 120.0) -> bytes:
    notes = [midi.MidiNote(onset=ev.onset, pitch=ev.pitch) for ev in stream]
    return midi.write_midi(notes, qpm=qpm)
