"""MusicXML (partwise, uncompressed) to the internal score model.

Supported subset: parts/measures/notes with pitch or rest, chord grouping,
grace notes, tied notes (merged), ornaments (trill marks, mordents, turns),
two-note tremolos, glissando/slide spanners, arpeggiate marks, fermatas, and
metronome marks.  Unsupported constructs are collected as diagnostics, not
crashes.
"""

from __future__ import annotations

import math
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field

from .score import (
    ChordEvent,
    GlissandoEvent,
    GraceGroup,
    HomophonicFactor,
    NoteValue,
    PolyphonicScore,
    RestEvent,
    TremoloEvent,
)

MAX_TPQ = 960

STEP_SEMITONES = {"C": 0, "D": 2, "E": 4, "F": 5, "G": 7, "A": 9, "B": 11}

# element name -> internal ornament name
_ORNAMENT_MAP = {
    # MusicXML "inverted-mordent" has no strike-through: the plain Pralltriller
    "inverted-mordent": "upper_mordent",
    "mordent": "lower_mordent",
    "turn": "direct_turn",
    "inverted-turn": "inverted_direct_turn",
    "delayed-turn": "delayed_turn",
    "delayed-inverted-turn": "inverted_delayed_turn",
}


class MusicXmlError(ValueError):
    """Malformed document or document outside the supported subset."""


@dataclass
class ParseResult:
    score: PolyphonicScore
    diagnostics: list[str] = field(default_factory=list)
    note_count: int = 0


def _pitch_of(note: ET.Element) -> int | None:
    el = note.find("pitch")
    if el is None:
        return None
    step = el.findtext("step")
    octave = el.findtext("octave")
    alter = el.findtext("alter") or "0"
    if step is None or octave is None:
        raise MusicXmlError("pitch element missing step/octave")
    midi = 12 * (int(octave) + 1) + STEP_SEMITONES[step] + int(round(float(alter)))
    return midi


@dataclass
class _RawNote:
    """One <note>, position resolved to global ticks."""

    time: int
    pitch: int | None  # None for rests
    duration: int
    chord: bool
    grace: bool
    grace_slash: bool
    steal_following: bool
    ornament: str | None
    trill: bool
    tremolo: str | None  # "start" | "stop" | "single"
    gliss: str | None  # "start" | "stop"
    arpeggiate: bool
    fermata: bool
    tie_start: bool
    tie_stop: bool
    voice_key: tuple[str, str]
    measure_idx: int = 0


def parse_musicxml(document: bytes | str,
                   grace_kind_overrides: dict[int, str] | None = None,
                   ) -> ParseResult:
    """Parse a partwise MusicXML document into a :class:`PolyphonicScore`.

    ``grace_kind_overrides`` maps the ordinal of a grace chord (document
    order, 0-based) to ``"after_note"`` or ``"short_appoggiatura"``, letting a
    per-piece file override the classification heuristic.
    """
    try:
        root = ET.fromstring(document)
    except ET.ParseError as exc:
        raise MusicXmlError(f"malformed XML: {exc}") from exc
    if root.tag != "score-partwise":
        raise MusicXmlError(f"unsupported root element <{root.tag}>; "
                            "only score-partwise is handled")

    diagnostics: list[str] = []

    # global tick resolution: LCM of per-part divisions, capped
    divisions_seen = set()
    for div in root.iter("divisions"):
        divisions_seen.add(int(div.text))
    if not divisions_seen:
        divisions_seen = {1}
    tpq = 1
    for d in divisions_seen:
        tpq = math.lcm(tpq, d)
    if tpq > MAX_TPQ:
        diagnostics.append(f"divisions LCM {tpq} capped to {MAX_TPQ}")
        tpq = MAX_TPQ

    qpm = None
    for met in root.iter("metronome"):
        per_min = met.findtext("per-minute")
        if per_min is not None and qpm is None:
            try:
                qpm = float(per_min)
            except ValueError:
                diagnostics.append(f"unreadable per-minute {per_min!r}")

    raw_by_voice: dict[tuple[str, str], list[_RawNote]] = {}
    total_notes = 0

    for part in root.findall("part"):
        part_id = part.get("id", "P?")
        divisions = 1
        cursor = 0  # ticks
        for midx, measure in enumerate(part.findall("measure")):
            measure_start = cursor
            for el in measure:
                if el.tag == "attributes":
                    d = el.findtext("divisions")
                    if d is not None:
                        divisions = int(d)
                elif el.tag in ("backup", "forward"):
                    dur = int(el.findtext("duration") or 0)
                    ticks = round(dur * tpq / divisions)
                    cursor += ticks if el.tag == "forward" else -ticks
                elif el.tag == "note":
                    raw, ticks = _read_note(el, cursor, tpq, divisions,
                                            part_id, diagnostics)
                    if raw is not None:
                        raw.measure_idx = midx
                        raw_by_voice.setdefault(raw.voice_key, []).append(raw)
                        if raw.pitch is not None:
                            total_notes += 1
                    cursor += ticks
                elif el.tag in ("direction", "print", "harmony", "sound"):
                    pass  # notational / non-onset elements
                else:
                    diagnostics.append(f"unsupported element <{el.tag}> ignored")
            cursor = max(cursor, measure_start)

    if not raw_by_voice:
        raise MusicXmlError("document contains no notes")

    voices = []
    grace_counter = [0]
    for key in sorted(raw_by_voice):
        factors = _assemble_voice(raw_by_voice[key], tpq, diagnostics,
                                  grace_kind_overrides or {}, grace_counter)
        if factors:
            voices.append(tuple(factors))
    score = PolyphonicScore(tuple(voices), ticks_per_quarter=tpq,
                            metronome_qpm=qpm)
    return ParseResult(score=score, diagnostics=diagnostics,
                       note_count=total_notes)


def _read_note(el, cursor, tpq, divisions, part_id, diagnostics):
    """Read one <note> element; returns (_RawNote | None, cursor advance)."""
    grace_el = el.find("grace")
    grace = grace_el is not None
    duration = int(el.findtext("duration") or 0)
    ticks = 0 if grace else round(duration * tpq / divisions)
    is_chord = el.find("chord") is not None
    pitch = _pitch_of(el)
    if pitch is None and el.find("rest") is None:
        diagnostics.append(f"{part_id}: note without pitch or rest ignored")
        return None, ticks

    ornament = None
    trill = False
    tremolo = None
    gliss = None
    arpeggiate = False
    fermata = False
    notations = el.find("notations")
    if notations is not None:
        if notations.find("fermata") is not None:
            fermata = True
        if notations.find("arpeggiate") is not None:
            arpeggiate = True
        for g in notations.iter("glissando"):
            gliss = g.get("type", "start")
        for g in notations.iter("slide"):
            gliss = g.get("type", "start")
        orn_el = notations.find("ornaments")
        if orn_el is not None:
            for child in orn_el:
                tag = child.tag
                if tag == "trill-mark" or tag == "wavy-line":
                    trill = True
                elif tag in _ORNAMENT_MAP:
                    ornament = _ORNAMENT_MAP[tag]
                elif tag == "tremolo":
                    ttype = child.get("type", "single")
                    tremolo = ttype
                elif tag == "accidental-mark":
                    pass
                else:
                    diagnostics.append(f"{part_id}: unsupported ornament "
                                       f"<{tag}> ignored")

    tie_start = any(t.get("type") == "start" for t in el.findall("tie"))
    tie_stop = any(t.get("type") == "stop" for t in el.findall("tie"))

    voice_num = el.findtext("voice") or el.findtext("staff") or "1"
    raw = _RawNote(
        time=cursor if not is_chord else cursor,  # chord notes share onset
        pitch=pitch,
        duration=ticks,
        chord=is_chord,
        grace=grace,
        grace_slash=(grace and grace_el.get("slash") == "yes"),
        steal_following=(grace and grace_el.get("steal-time-following") is not None),
        ornament=ornament,
        trill=trill,
        tremolo=tremolo,
        gliss=gliss,
        arpeggiate=arpeggiate,
        fermata=fermata,
        tie_start=tie_start,
        tie_stop=tie_stop,
        voice_key=(part_id, voice_num),
    )
    return raw, (0 if is_chord else ticks)


def _assemble_voice(raws: list[_RawNote], tpq: int, diagnostics: list[str],
                    overrides: dict[int, str],
                    grace_counter: list[int]) -> list[HomophonicFactor]:
    """Group raw notes into chords, classify graces, merge ties, build factors."""
    # 1. group: a chord group is a non-grace note plus following <chord> notes;
    #    grace runs keep per-chord grouping too.
    groups: list[dict] = []
    for r in raws:
        if r.chord and groups and groups[-1]["grace"] == r.grace:
            g = groups[-1]
            if r.pitch is not None:
                g["pitches"].add(r.pitch)
                if r.trill:
                    g["trill"].add(r.pitch)
            g["fermata"] |= r.fermata
            g["arpeggiate"] |= r.arpeggiate
            g["ornament"] = g["ornament"] or r.ornament
            g["tremolo"] = g["tremolo"] or r.tremolo
            g["gliss"] = g["gliss"] or r.gliss
            g["tie_start"] |= r.tie_start
            g["tie_stop"] |= r.tie_stop
        else:
            groups.append({
                "time": r.time,
                "pitches": {r.pitch} if r.pitch is not None else set(),
                "trill": {r.pitch} if (r.trill and r.pitch is not None) else set(),
                "rest": r.pitch is None,
                "duration": r.duration,
                "grace": r.grace,
                "grace_slash": r.grace_slash,
                "steal_following": r.steal_following,
                "measure_idx": r.measure_idx,
                "ornament": r.ornament,
                "tremolo": r.tremolo,
                "gliss": r.gliss,
                "arpeggiate": r.arpeggiate,
                "fermata": r.fermata,
                "tie_start": r.tie_start,
                "tie_stop": r.tie_stop,
            })

    # 2. merge tied chord groups (start..stop) into one with summed duration
    merged: list[dict] = []
    for g in groups:
        if (merged and g["tie_stop"] and not g["grace"] and not merged[-1]["grace"]
                and merged[-1]["tie_start"] and merged[-1]["pitches"] == g["pitches"]):
            merged[-1]["duration"] += g["duration"]
            merged[-1]["tie_start"] = g["tie_start"]
            merged[-1]["fermata"] |= g["fermata"]
            continue
        merged.append(g)

    # 3. classify grace runs and attach to neighbouring principal groups
    factors: list[HomophonicFactor] = []
    pending_grace: list[dict] = []
    pending_after: list[dict] = []

    def grace_kind(g: dict) -> str:
        # slash -> short appoggiatura; steal-time-following or run ending at a
        # barline -> after note; default short appoggiatura
        ordinal = grace_counter[0]
        grace_counter[0] += 1
        if ordinal in overrides:
            return overrides[ordinal]
        if g["steal_following"]:
            return "after_note"
        return "short_appoggiatura"

    def flush_after():
        nonlocal pending_after
        if not pending_after:
            return GraceGroup(kind="after_note")
        chords = tuple(frozenset(g["pitches"]) for g in pending_after)
        pending_after = []
        return GraceGroup(chords, kind="after_note")

    gliss_open: dict | None = None

    for g in merged:
        if g["grace"]:
            if grace_kind(g) == "after_note":
                pending_after.append(g)
            else:
                pending_grace.append(g)
            continue
        # graces written before a barline (earlier measure than the principal)
        # steal time from the previous event: reclassify as after notes
        if pending_grace and any(x["measure_idx"] < g["measure_idx"]
                                 for x in pending_grace):
            pending_after.extend(
                x for x in pending_grace if x["measure_idx"] < g["measure_idx"])
            pending_grace = [x for x in pending_grace
                             if x["measure_idx"] >= g["measure_idx"]]
        after_group = flush_after()
        grace_group = GraceGroup(
            tuple(frozenset(x["pitches"]) for x in pending_grace),
            kind="short_appoggiatura",
        )
        pending_grace = []
        value = NoteValue(g["duration"], tpq)
        body = None
        if g["rest"]:
            if g["duration"] > 0:
                body = RestEvent(value)
        elif g["gliss"] == "stop" and gliss_open is not None:
            start = gliss_open
            body = None
            factors_idx = start["factor_idx"]
            old = factors[factors_idx]
            gl = GlissandoEvent(
                frozenset(start["pitches"]), frozenset(g["pitches"]),
                NoteValue(start["duration"], tpq), scale="white_keys",
            )
            factors[factors_idx] = HomophonicFactor(
                score_time=old.score_time, after=old.after, grace=old.grace,
                body=gl, cadenza=old.cadenza)
            gliss_open = None
            # target note of the glissando still sounds on its own
            body = ChordEvent(frozenset(g["pitches"]), value,
                              ornament=g["ornament"],
                              trill_pitches=frozenset(g["trill"]),
                              fermata=g["fermata"])
        elif g["tremolo"] in ("single",):
            # single-note tremolo: alternation of the chord with itself
            chords = (frozenset(g["pitches"]), frozenset(g["pitches"]))
            body = TremoloEvent(chords, value, fermata=g["fermata"])
        else:
            arp = (0, "unspecified") if g["arpeggiate"] else None
            body = ChordEvent(frozenset(g["pitches"]), value,
                              ornament=g["ornament"],
                              trill_pitches=frozenset(g["trill"]),
                              arpeggio=arp, fermata=g["fermata"])
        if body is None and not after_group and not grace_group:
            continue
        factors.append(HomophonicFactor(
            score_time=g["time"], after=after_group, grace=grace_group,
            body=body))
        if g["gliss"] == "start":
            gliss_open = dict(g)
            gliss_open["factor_idx"] = len(factors) - 1
        if g["tremolo"] == "start":
            g["factor_idx"] = len(factors) - 1

    if pending_after:
        # trailing after notes: factor with no body at the end time
        last_t = factors[-1].score_time + factors[-1].value_ticks if factors else 0
        factors.append(HomophonicFactor(
            score_time=last_t, after=flush_after()))
    if pending_grace:
        diagnostics.append("trailing grace notes with no principal; kept as "
                           "a final short-appoggiatura factor")
        last_t = factors[-1].score_time + factors[-1].value_ticks if factors else 0
        factors.append(HomophonicFactor(
            score_time=last_t,
            grace=GraceGroup(tuple(frozenset(x["pitches"]) for x in pending_grace)),
        ))

    # pair two-note tremolos (start/stop on consecutive chord factors)
    factors = _pair_tremolos(factors, merged, tpq)
    return factors


def _pair_tremolos(factors, merged, tpq):
    starts = [g for g in merged if g.get("tremolo") == "start" and "factor_idx" in g]
    stops = [g for g in merged if g.get("tremolo") == "stop"]
    out = list(factors)
    drop: set[int] = set()
    for s, e in zip(starts, stops):
        i = s["factor_idx"]
        if i + 1 >= len(out):
            continue
        a, b = out[i], out[i + 1]
        if not isinstance(a.body, ChordEvent) or not isinstance(b.body, ChordEvent):
            continue
        trem = TremoloEvent(
            (a.body.pitches, b.body.pitches),
            NoteValue(a.body.value.ticks + b.body.value.ticks, tpq),
            fermata=a.body.fermata or b.body.fermata,
        )
        out[i] = HomophonicFactor(score_time=a.score_time, after=a.after,
                                  grace=a.grace, body=trem, cadenza=a.cadenza)
        if b.after or b.grace:
            out[i + 1] = HomophonicFactor(score_time=b.score_time,
                                          after=b.after, grace=b.grace)
        else:
            drop.add(i + 1)
    return [f for j, f in enumerate(out) if j not in drop]
