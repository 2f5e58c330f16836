"""Merge a polyphonic score into one linear sequence of composite factors.

The pipeline is: expand notated ornaments (mordents, turns, glissandos,
cadenzas) into grace groups and chord runs, reduce per-voice redundancies,
merge all voices onto the union grid of onset times while carrying sustained
trills/tremolos across other voices' onsets, then remove redundant composite
factors.  Trills and tremolos themselves stay symbolic.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from .score import (
    BodyEvent,
    ChordEvent,
    GlissandoEvent,
    GraceGroup,
    HomophonicFactor,
    NoteValue,
    PolyphonicScore,
    RestEvent,
    TremoloEvent,
)

UPPER_NEIGHBOR = 2  # whole tone above the principal
LOWER_NEIGHBOR = -1  # semitone below

WHITE_KEYS = {0, 2, 4, 5, 7, 9, 11}

CADENZA_NOTE_TICKS_DIV = 4  # nominal cadenza small note = one sixteenth


class HomophonizeError(ValueError):
    pass


# ---------------------------------------------------------------------------
# trill part

def trill_part(body: BodyEvent | None) -> BodyEvent | None:
    """The sustained-emission part of a body event, or None if there is none."""
    if isinstance(body, TremoloEvent):
        return body
    if isinstance(body, ChordEvent) and body.trill_pitches:
        return ChordEvent(body.trill_pitches, body.value,
                          trill_pitches=body.trill_pitches)
    return None


def is_purely_trill_like(body: BodyEvent | None) -> bool:
    if isinstance(body, TremoloEvent):
        return True
    if isinstance(body, ChordEvent):
        return bool(body.trill_pitches) and body.trill_pitches == body.pitches
    return False


def _trill_content(body: BodyEvent | None) -> frozenset[int] | None:
    """Pitch content of the trill part, for containment checks."""
    tp = trill_part(body)
    if tp is None:
        return None
    if isinstance(tp, TremoloEvent):
        out: set[int] = set()
        for c in tp.chords:
            out |= c
        return frozenset(out)
    return tp.pitches


# ---------------------------------------------------------------------------
# ornament expansion

def _neighbors(principal: int) -> tuple[int, int]:
    upper = min(principal + UPPER_NEIGHBOR, 127)
    lower = max(principal + LOWER_NEIGHBOR, 0)
    return upper, lower


_ORNAMENT_RUNS = {
    # name -> (run relative to principal, attach: "grace" before the body or
    # "after" forward onto the next factor)
    "upper_mordent": (("U", "P"), "after"),
    "lower_mordent": (("L", "P"), "after"),
    "direct_turn": (("U", "P", "L"), "grace"),
    "inverted_direct_turn": (("L", "P", "U"), "grace"),
    "delayed_turn": (("U", "P", "L"), "after"),
    "inverted_delayed_turn": (("L", "P", "U"), "after"),
}


def _ornament_chords(name: str, principal: int) -> tuple[frozenset[int], ...]:
    upper, lower = _neighbors(principal)
    sym = {"U": upper, "P": principal, "L": lower}
    run, _ = _ORNAMENT_RUNS[name]
    return tuple(frozenset({sym[s]}) for s in run)


def _concat_groups(a: GraceGroup, b: GraceGroup, kind: str) -> GraceGroup:
    if not a:
        return replace(b, kind=kind)
    if not b:
        return replace(a, kind=kind)
    return GraceGroup(a.chords + b.chords, kind=kind,
                      from_ornament=a.from_ornament or b.from_ornament)


def _white_key_path(a: int, b: int) -> list[int]:
    step = 1 if b > a else -1
    path = [a]
    p = a
    while p != b:
        p += step
        if p % 12 in WHITE_KEYS or p == b:
            path.append(p)
    return path


def _black_key_path(a: int, b: int) -> list[int]:
    step = 1 if b > a else -1
    path = [a]
    p = a
    while p != b:
        p += step
        if p % 12 not in WHITE_KEYS or p == b:
            path.append(p)
    return path


def _gliss_path(a: int, b: int, scale: str) -> list[int]:
    if a == b:
        raise HomophonizeError(f"glissando with no monotone path ({a} -> {b})")
    if scale == "chromatic":
        step = 1 if b > a else -1
        return list(range(a, b + step, step))
    if scale in ("white_keys", "diatonic"):
        return _white_key_path(a, b)
    return _black_key_path(a, b)


def expand_glissando(ev: GlissandoEvent, tpq: int) -> list[tuple[int, ChordEvent]]:
    """Expand to (offset ticks, chord) pairs spanning the glissando's value."""
    starts = sorted(ev.start_pitches)
    ends = sorted(ev.end_pitches)
    if len(starts) != len(ends):
        # pair by rank against the leading voice; pad by transposition
        lead = _gliss_path(starts[0], ends[0], ev.scale)
        paths = [lead]
        for s in starts[1:]:
            paths.append([min(max(p + (s - starts[0]), 0), 127) for p in lead])
    else:
        paths = [_gliss_path(s, e, ev.scale) for s, e in zip(starts, ends)]
    k = max(len(p) for p in paths)
    # resample every path to the leading length
    chords = []
    for step in range(k):
        pitches = set()
        for p in paths:
            idx = round(step * (len(p) - 1) / (k - 1)) if k > 1 else 0
            pitches.add(p[idx])
        chords.append(frozenset(pitches))
    total = ev.value.ticks
    out = []
    for step, c in enumerate(chords):
        t0 = (step * total) // k
        t1 = ((step + 1) * total) // k
        out.append((t0, ChordEvent(c, NoteValue(max(t1 - t0, 1), tpq))))
    return out


def expand_notated_ornaments(score: PolyphonicScore) -> PolyphonicScore:
    """Rewrite mordents/turns as grace groups, expand glissandos and cadenzas.

    Trills and tremolos are left symbolic.  Idempotent on ornament-free
    scores.
    """
    tpq = score.ticks_per_quarter
    voices: list[list[HomophonicFactor]] = []
    for voice in score.voices:
        out: list[HomophonicFactor] = []
        pending_after: GraceGroup | None = None  # forward-attached ornament run
        for f in voice:
            after = f.after
            grace = f.grace
            body = f.body
            if pending_after is not None:
                after = _concat_groups(pending_after, after, "after_note")
                pending_after = None
            if isinstance(body, ChordEvent) and body.ornament:
                name = body.ornament
                principal = max(body.pitches)
                run = _ornament_chords(name, principal)
                _, attach = _ORNAMENT_RUNS[name]
                if attach == "grace":
                    group = GraceGroup(run, kind="short_appoggiatura",
                                       from_ornament=True)
                    grace = _concat_groups(grace, group, "short_appoggiatura")
                else:
                    pending_after = GraceGroup(run, kind="after_note",
                                               from_ornament=True)
                body = replace(body, ornament=None)
            if isinstance(body, GlissandoEvent):
                expansion = expand_glissando(body, tpq)
                first_off, first_chord = expansion[0]
                out.append(HomophonicFactor(
                    score_time=f.score_time + first_off, after=after,
                    grace=grace, body=first_chord, cadenza=f.cadenza))
                for off, chord in expansion[1:]:
                    out.append(HomophonicFactor(score_time=f.score_time + off,
                                                body=chord))
                continue
            out.append(HomophonicFactor(score_time=f.score_time, after=after,
                                        grace=grace, body=body,
                                        cadenza=f.cadenza))
        if pending_after is not None:
            # ornament on the final event: trailing body-less factor
            last = out[-1]
            out.append(HomophonicFactor(
                score_time=last.score_time + max(last.value_ticks, 1),
                after=pending_after))
        voices.append(out)
    voices = _expand_cadenzas(voices, tpq)
    return PolyphonicScore(tuple(tuple(v) for v in voices),
                           ticks_per_quarter=tpq,
                           metronome_qpm=score.metronome_qpm)


def _expand_cadenzas(voices, tpq):
    """Replace cadenza grace runs with chord sequences, enlarging other voices."""
    step = max(tpq // CADENZA_NOTE_TICKS_DIV, 1)
    while True:
        target = None
        for vi, voice in enumerate(voices):
            for fi, f in enumerate(voice):
                if f.cadenza and f.grace:
                    target = (vi, fi)
                    break
            if target:
                break
        if target is None:
            return voices
        vi, fi = target
        f = voices[vi][fi]
        t0 = f.score_time
        chords = [HomophonicFactor(score_time=t0 + k * step,
                                   body=ChordEvent(c, NoteValue(step, tpq)))
                  for k, c in enumerate(f.grace.chords)]
        span = len(f.grace.chords) * step
        rest_of_factor = HomophonicFactor(
            score_time=t0 + span, after=f.after,
            body=f.body, cadenza=False)
        new_voice = list(voices[vi][:fi]) + chords
        if not rest_of_factor.is_empty or f.body is not None:
            new_voice.append(rest_of_factor)
        for g in voices[vi][fi + 1:]:
            new_voice.append(replace(g, score_time=g.score_time + span))
        new_voices = []
        for wi, voice in enumerate(voices):
            if wi == vi:
                new_voices.append(new_voice)
                continue
            shifted = []
            for g in voice:
                if g.score_time >= t0:
                    shifted.append(replace(g, score_time=g.score_time + span))
                elif g.body is not None and g.score_time + g.value_ticks > t0:
                    # concurrent sustained event: enlarge across the insertion
                    body = replace(g.body, value=NoteValue(
                        g.body.value.ticks + span, tpq))
                    shifted.append(replace(g, body=body))
                else:
                    shifted.append(g)
            new_voices.append(shifted)
        voices = new_voices


# ---------------------------------------------------------------------------
# per-voice redundancy reduction

def reduce_voice_redundancies(score: PolyphonicScore) -> PolyphonicScore:
    """Merge adjacent all-empty factors and repeated identical pure trills."""
    tpq = score.ticks_per_quarter
    voices = []
    for voice in score.voices:
        out: list[HomophonicFactor] = []
        for f in voice:
            if out:
                prev = out[-1]
                both_empty = prev.is_empty and f.is_empty
                pure_dup = (
                    not f.after and not f.grace
                    and not prev.after and not prev.grace
                    and is_purely_trill_like(prev.body)
                    and is_purely_trill_like(f.body)
                    and _trill_content(prev.body) == _trill_content(f.body)
                    and type(prev.body) is type(f.body)
                )
                if both_empty or pure_dup:
                    # concatenate: extend the previous factor over this one
                    new_end = f.score_time + f.value_ticks
                    if prev.body is not None:
                        body = replace(prev.body, value=NoteValue(
                            max(new_end - prev.score_time, prev.value_ticks), tpq))
                        out[-1] = replace(prev, body=body)
                    continue
            out.append(f)
        voices.append(tuple(out))
    return PolyphonicScore(tuple(voices), ticks_per_quarter=tpq,
                           metronome_qpm=score.metronome_qpm)


# ---------------------------------------------------------------------------
# composite factors

@dataclass
class CompositeFactor:
    """All voices' components at one merged score time."""

    score_time: int
    end_time: int
    after: dict[int, GraceGroup] = field(default_factory=dict)
    grace: dict[int, GraceGroup] = field(default_factory=dict)
    bodies: dict[int, BodyEvent] = field(default_factory=dict)
    carryover: set[int] = field(default_factory=set)  # voices whose body is TR(.)
    fermata: bool = False
    cadenza: bool = False

    @property
    def is_empty(self) -> bool:
        if self.after or self.grace:
            return False
        return all(isinstance(b, RestEvent) for b in self.bodies.values())

    def has_trill(self) -> bool:
        return any(trill_part(b) is not None for b in self.bodies.values())

    def onset_body_voices(self) -> list[int]:
        return [v for v in self.bodies if v not in self.carryover]

    def trill_pitch_content(self) -> frozenset[int]:
        out: set[int] = set()
        for b in self.bodies.values():
            c = _trill_content(b)
            if c:
                out |= c
        return frozenset(out)

    def is_purely_trill_like(self) -> bool:
        if self.after or self.grace:
            return False
        bodies = [b for b in self.bodies.values()
                  if not isinstance(b, RestEvent)]
        return bool(bodies) and all(is_purely_trill_like(b) for b in bodies)

    def note_onset_count(self) -> int:
        n = 0
        for g in list(self.after.values()) + list(self.grace.values()):
            n += sum(len(c) for c in g.chords)
        for v, b in self.bodies.items():
            if v in self.carryover:
                continue
            if isinstance(b, ChordEvent):
                n += len(b.pitches)
            elif isinstance(b, TremoloEvent):
                n += sum(len(c) for c in b.chords)
        return n


@dataclass
class HomophonizedSequence:
    factors: list[CompositeFactor]
    ticks_per_quarter: int
    metronome_qpm: float | None = None

    def note_onset_count(self) -> int:
        return sum(f.note_onset_count() for f in self.factors)


def homophonize(score: PolyphonicScore) -> HomophonizedSequence:
    """Appendix-style merge of an ornament-expanded score into one sequence."""
    if not any(score.voices):
        raise HomophonizeError("empty score")
    score = expand_notated_ornaments(score)
    score = reduce_voice_redundancies(score)

    onset_times = sorted({f.score_time for voice in score.voices for f in voice})
    if not onset_times:
        raise HomophonizeError("score has no onsets")

    # tentative composites on the merged grid
    composites: list[CompositeFactor] = []
    cursors = [0] * len(score.voices)
    for idx, t in enumerate(onset_times):
        comp = CompositeFactor(score_time=t, end_time=t)
        for v, voice in enumerate(score.voices):
            while cursors[v] < len(voice) and voice[cursors[v]].score_time < t:
                cursors[v] += 1
            exact = None
            prev = None
            if cursors[v] < len(voice) and voice[cursors[v]].score_time == t:
                exact = voice[cursors[v]]
            elif cursors[v] > 0:
                prev = voice[cursors[v] - 1]
            if exact is not None:
                if exact.after:
                    comp.after[v] = exact.after
                if exact.grace:
                    comp.grace[v] = exact.grace
                if exact.body is not None:
                    comp.bodies[v] = exact.body
                if isinstance(exact.body, (ChordEvent, TremoloEvent)) and exact.body.fermata:
                    comp.fermata = True
                comp.cadenza |= exact.cadenza
            elif prev is not None:
                tp = trill_part(prev.body)
                end = prev.score_time + prev.value_ticks
                if tp is not None and t < end:
                    # clip the carried body to the remaining sounding span
                    comp.bodies[v] = replace(
                        tp, value=NoteValue(end - t, score.ticks_per_quarter))
                    comp.carryover.add(v)
        composites.append(comp)

    # tentative end times
    for idx, comp in enumerate(composites):
        if comp.has_trill():
            if idx + 1 < len(composites):
                comp.end_time = composites[idx + 1].score_time
            else:
                end = comp.score_time
                for v, b in comp.bodies.items():
                    if trill_part(b) is not None:
                        end = max(end, comp.score_time + b.value.ticks)
                comp.end_time = end
        else:
            comp.end_time = comp.score_time

    # final stage: remove redundancies
    out: list[CompositeFactor] = []
    for comp in composites:
        if out:
            prev = out[-1]
            if comp.is_empty:
                # concatenate backward; tau_end of prev unchanged
                continue
            if (not comp.after and not comp.grace
                    and comp.is_purely_trill_like()
                    and comp.trill_pitch_content() <= prev.trill_pitch_content()
                    and all(v in prev.bodies for v in comp.bodies)):
                prev.end_time = comp.end_time
                continue
        out.append(comp)
    if not out:
        raise HomophonizeError("score reduces to an empty sequence")
    return HomophonizedSequence(out, score.ticks_per_quarter,
                                metronome_qpm=score.metronome_qpm)


# ---------------------------------------------------------------------------
# debug dump / re-wrapping

def dump_sequence(seq: HomophonizedSequence) -> str:
    """Stable one-factor-per-line text dump, for golden tests and diffing."""
    lines = [f"tpq {seq.ticks_per_quarter} factors {len(seq.factors)}"]
    for i, f in enumerate(seq.factors):
        parts = [f"I={i} t={f.score_time} end={f.end_time}"]
        for v in sorted(f.after):
            parts.append(f"after[{v}]=" + ";".join(
                ",".join(map(str, sorted(c))) for c in f.after[v].chords))
        for v in sorted(f.grace):
            parts.append(f"grace[{v}]=" + ";".join(
                ",".join(map(str, sorted(c))) for c in f.grace[v].chords))
        for v in sorted(f.bodies):
            b = f.bodies[v]
            tag = "~" if v in f.carryover else ""
            if isinstance(b, ChordEvent):
                trill = ("!" + ",".join(map(str, sorted(b.trill_pitches)))
                         if b.trill_pitches else "")
                parts.append(f"y[{v}]={tag}chord "
                             + ",".join(map(str, sorted(b.pitches))) + trill)
            elif isinstance(b, RestEvent):
                parts.append(f"y[{v}]={tag}rest")
            elif isinstance(b, TremoloEvent):
                parts.append(f"y[{v}]={tag}trem " + ";".join(
                    ",".join(map(str, sorted(c))) for c in b.chords))
        if f.fermata:
            parts.append("fermata")
        lines.append("  ".join(parts))
    return "\n".join(lines) + "\n"


def sequence_signature(seq: HomophonizedSequence):
    """Onset-structure signature used for the idempotence property.

    Captures score times, end times, grace-chord pitch runs, and sounding
    body content (trill parts included, carryover marks ignored).
    """
    sig = []
    for f in seq.factors:
        # chords are flattened across voices: the per-voice packaging is not
        # preserved by wrap_as_score and carries no onset information
        afters = tuple(sorted(
            tuple(sorted(c)) for g in f.after.values() for c in g.chords))
        graces = tuple(sorted(
            tuple(sorted(c)) for g in f.grace.values() for c in g.chords))
        body_pitches: set[int] = set()
        for b in f.bodies.values():
            if isinstance(b, ChordEvent):
                body_pitches |= b.pitches
            elif isinstance(b, TremoloEvent):
                for c in b.chords:
                    body_pitches |= c
        sig.append((f.score_time, f.end_time, afters, graces,
                    tuple(sorted(body_pitches)),
                    tuple(sorted(f.trill_pitch_content()))))
    return tuple(sig)


def wrap_as_score(seq: HomophonizedSequence) -> PolyphonicScore:
    """Re-wrap composite factors as a single-voice score (for idempotence)."""
    tpq = seq.ticks_per_quarter
    factors = []
    for i, f in enumerate(seq.factors):
        after_chords: tuple[frozenset[int], ...] = ()
        grace_chords: tuple[frozenset[int], ...] = ()
        for v in sorted(f.after):
            after_chords += f.after[v].chords
        for v in sorted(f.grace):
            grace_chords += f.grace[v].chords
        pitches: set[int] = set()
        trills: set[int] = set()
        value = 0
        for v, b in f.bodies.items():
            if isinstance(b, ChordEvent):
                pitches |= b.pitches
                trills |= b.trill_pitches
            elif isinstance(b, TremoloEvent):
                for c in b.chords:
                    pitches |= c
                    trills |= c
            else:
                continue
            value = max(value, b.value.ticks)
        if f.has_trill():
            value = max(value, f.end_time - f.score_time)
        body = None
        if pitches:
            body = ChordEvent(frozenset(pitches), NoteValue(max(value, 1), tpq),
                              trill_pitches=frozenset(trills))
        elif f.bodies:
            value = max(b.value.ticks for b in f.bodies.values())
            body = RestEvent(NoteValue(max(value, 1), tpq))
        factors.append(HomophonicFactor(
            score_time=f.score_time,
            after=GraceGroup(after_chords, kind="after_note"),
            grace=GraceGroup(grace_chords, kind="short_appoggiatura"),
            body=body))
    return PolyphonicScore((tuple(factors),), ticks_per_quarter=tpq,
                           metronome_qpm=seq.metronome_qpm)
