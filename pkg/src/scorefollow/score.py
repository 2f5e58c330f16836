"""Score data model: voices of timed factors with grace groups and ornaments.

A score is a set of voices; each voice is a strictly time-ordered sequence of
factors.  A factor bundles after notes (attached to the previous event), short
appoggiaturas, and a body event (chord / rest / tremolo / glissando) at one
score time.  Score times are integer ticks with a global ticks-per-quarter
resolution.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace

ORNAMENTS = (
    "trill",
    "upper_mordent",
    "lower_mordent",
    "direct_turn",
    "inverted_direct_turn",
    "delayed_turn",
    "inverted_delayed_turn",
)

GLISS_SCALES = ("chromatic", "diatonic", "white_keys", "black_keys")

ARP_DIRECTIONS = ("up", "down", "unspecified")


def check_pitch(p: int) -> int:
    if not isinstance(p, int) or not 0 <= p <= 127:
        raise ValueError(f"pitch out of MIDI range [0,127]: {p!r}")
    return p


@dataclass(frozen=True)
class NoteValue:
    """Metrical duration in ticks at a given ticks-per-quarter resolution."""

    ticks: int
    ticks_per_quarter: int = 480

    def __post_init__(self):
        if self.ticks < 0:
            raise ValueError(f"negative note value: {self.ticks}")
        if self.ticks_per_quarter <= 0:
            raise ValueError("ticks_per_quarter must be positive")

    @property
    def quarters(self) -> float:
        return self.ticks / self.ticks_per_quarter


@dataclass(frozen=True)
class ChordEvent:
    """One or more simultaneous pitches with a note value.

    ``trill_pitches`` is the subset of pitches carrying a trill mark;
    ``ornament`` covers mordents and turns (chord-level, at most one).
    """

    pitches: frozenset[int]
    value: NoteValue
    ornament: str | None = None
    trill_pitches: frozenset[int] = frozenset()
    arpeggio: tuple[int, str] | None = None  # (group id, direction)
    fermata: bool = False

    def __post_init__(self):
        if not self.pitches:
            raise ValueError("chord with no pitches")
        for p in self.pitches:
            check_pitch(p)
        if self.ornament is not None and self.ornament not in ORNAMENTS:
            raise ValueError(f"unknown ornament {self.ornament!r}")
        if self.ornament == "trill":
            # a chord-level trill mark means every pitch is trilled
            object.__setattr__(self, "trill_pitches", frozenset(self.pitches))
            object.__setattr__(self, "ornament", None)
        if not self.trill_pitches <= self.pitches:
            raise ValueError("trill_pitches not a subset of pitches")
        if self.arpeggio is not None and self.arpeggio[1] not in ARP_DIRECTIONS:
            raise ValueError(f"unknown arpeggio direction {self.arpeggio[1]!r}")


@dataclass(frozen=True)
class RestEvent:
    value: NoteValue

    def __post_init__(self):
        if self.value.ticks <= 0:
            raise ValueError("rest with non-positive value")


@dataclass(frozen=True)
class TremoloEvent:
    """Unmeasured tremolo: rapid alternation of two or more pitch sets."""

    chords: tuple[frozenset[int], ...]
    value: NoteValue
    fermata: bool = False

    def __post_init__(self):
        if len(self.chords) < 2:
            raise ValueError("tremolo needs at least two chords")
        for c in self.chords:
            if not c:
                raise ValueError("tremolo with an empty chord")
            for p in c:
                check_pitch(p)


@dataclass(frozen=True)
class GlissandoEvent:
    start_pitches: frozenset[int]
    end_pitches: frozenset[int]
    value: NoteValue
    scale: str = "white_keys"

    def __post_init__(self):
        if not self.start_pitches or not self.end_pitches:
            raise ValueError("glissando needs start and end pitches")
        for p in self.start_pitches | self.end_pitches:
            check_pitch(p)
        if self.scale not in GLISS_SCALES:
            raise ValueError(f"unknown glissando scale {self.scale!r}")
        lo, hi = min(self.start_pitches), max(self.end_pitches)
        if lo == hi and len(self.start_pitches) == len(self.end_pitches) == 1:
            raise ValueError("glissando with no direction (start == end)")


BodyEvent = ChordEvent | RestEvent | TremoloEvent | GlissandoEvent


@dataclass(frozen=True)
class GraceGroup:
    """Ordered run of grace chords, played as after notes or short appoggiaturas.

    ``from_ornament`` marks runs synthesized from mordents/turns; those keep
    their indeterminate internal ordering and are never split into separate
    states downstream.
    """

    chords: tuple[frozenset[int], ...] = ()
    kind: str = "short_appoggiatura"  # or "after_note"
    from_ornament: bool = False

    def __post_init__(self):
        if self.kind not in ("short_appoggiatura", "after_note"):
            raise ValueError(f"unknown grace kind {self.kind!r}")
        for c in self.chords:
            if not c:
                raise ValueError("empty grace chord")
            for p in c:
                check_pitch(p)

    def __bool__(self) -> bool:
        return bool(self.chords)

    @property
    def pitches(self) -> frozenset[int]:
        out: set[int] = set()
        for c in self.chords:
            out |= c
        return frozenset(out)


EMPTY_AFTER = GraceGroup(kind="after_note")
EMPTY_GRACE = GraceGroup(kind="short_appoggiatura")


@dataclass(frozen=True)
class HomophonicFactor:
    """After notes + short appoggiaturas + body at one score time."""

    score_time: int
    after: GraceGroup = EMPTY_AFTER
    grace: GraceGroup = EMPTY_GRACE
    body: BodyEvent | None = None
    cadenza: bool = False

    def __post_init__(self):
        if self.after.kind != "after_note":
            raise ValueError("after group must have kind after_note")
        if self.grace.kind != "short_appoggiatura":
            raise ValueError("grace group must have kind short_appoggiatura")

    @property
    def is_empty(self) -> bool:
        """A factor is empty when it implies no note onsets at all."""
        return (
            not self.after
            and not self.grace
            and (self.body is None or isinstance(self.body, RestEvent))
        )

    @property
    def value_ticks(self) -> int:
        if self.body is None:
            return 0
        return self.body.value.ticks


@dataclass(frozen=True)
class PolyphonicScore:
    voices: tuple[tuple[HomophonicFactor, ...], ...]
    ticks_per_quarter: int = 480
    metronome_qpm: float | None = None  # quarter notes per minute, if marked

    def __post_init__(self):
        if not self.voices:
            raise ValueError("score with no voices")
        if self.ticks_per_quarter <= 0:
            raise ValueError("ticks_per_quarter must be positive")

    def note_onset_count(self) -> int:
        """Total number of sounding note onsets implied by the score."""
        n = 0
        for voice in self.voices:
            for f in voice:
                for g in (f.after, f.grace):
                    n += sum(len(c) for c in g.chords)
                b = f.body
                if isinstance(b, ChordEvent):
                    n += len(b.pitches)
                elif isinstance(b, TremoloEvent):
                    n += sum(len(c) for c in b.chords)
                elif isinstance(b, GlissandoEvent):
                    n += len(b.start_pitches)  # nominal: expansion decides
        return n


def validate_score(score: PolyphonicScore) -> list[str]:
    """Return invariant violations as diagnostics; [] iff ready for merging."""
    diags = []
    for v, voice in enumerate(score.voices):
        prev_time = None
        for i, f in enumerate(voice):
            where = f"voice {v} factor {i} (t={f.score_time})"
            if prev_time is not None and f.score_time <= prev_time:
                diags.append(f"{where}: non-increasing score time")
            prev_time = f.score_time
            if not f.after and not f.grace and f.body is None:
                diags.append(f"{where}: all-empty factor")
    return diags


# ---------------------------------------------------------------------------
# Fallback text format, one factor per line:
#   voice <v> time <ticks> [after p,p;p...] [grace p;p...]
#   body chord|rest|tremolo|gliss <pitches> value <ticks>
#   [orn <name>] [trillp p,p] [arp <id> <dir>] [scale <name>] [fermata] [cadenza]

def _fmt_chord(c: frozenset[int]) -> str:
    return ",".join(str(p) for p in sorted(c))


def _fmt_group(g: GraceGroup) -> str:
    return ";".join(_fmt_chord(c) for c in g.chords)


def _parse_chord(s: str) -> frozenset[int]:
    return frozenset(int(p) for p in s.split(",") if p)


def _parse_group(s: str) -> tuple[frozenset[int], ...]:
    return tuple(_parse_chord(c) for c in s.split(";") if c)


def dump_score(score: PolyphonicScore) -> str:
    lines = [f"tpq {score.ticks_per_quarter}"]
    if score.metronome_qpm is not None:
        lines.append(f"qpm {score.metronome_qpm:g}")
    for v, voice in enumerate(score.voices):
        for f in voice:
            parts = [f"voice {v} time {f.score_time}"]
            if f.after:
                kw = "after*" if f.after.from_ornament else "after"
                parts.append(f"{kw} {_fmt_group(f.after)}")
            if f.grace:
                kw = "grace*" if f.grace.from_ornament else "grace"
                parts.append(f"{kw} {_fmt_group(f.grace)}")
            b = f.body
            if isinstance(b, ChordEvent):
                parts.append(f"body chord {_fmt_chord(b.pitches)} value {b.value.ticks}")
                if b.ornament:
                    parts.append(f"orn {b.ornament}")
                if b.trill_pitches:
                    parts.append(f"trillp {_fmt_chord(b.trill_pitches)}")
                if b.arpeggio:
                    parts.append(f"arp {b.arpeggio[0]} {b.arpeggio[1]}")
                if b.fermata:
                    parts.append("fermata")
            elif isinstance(b, RestEvent):
                parts.append(f"body rest value {b.value.ticks}")
            elif isinstance(b, TremoloEvent):
                parts.append(f"body tremolo {_fmt_group(GraceGroup(b.chords))} value {b.value.ticks}")
                if b.fermata:
                    parts.append("fermata")
            elif isinstance(b, GlissandoEvent):
                parts.append(
                    f"body gliss {_fmt_chord(b.start_pitches)}>{_fmt_chord(b.end_pitches)}"
                    f" value {b.value.ticks} scale {b.scale}"
                )
            if f.cadenza:
                parts.append("cadenza")
            lines.append(" ".join(parts))
    return "\n".join(lines) + "\n"


class ScoreParseError(ValueError):
    pass


_TOKEN_RE = re.compile(r"\S+")


def parse_score_text(text: str) -> PolyphonicScore:
    """Parse the fallback text format produced by :func:`dump_score`."""
    tpq = 480
    qpm = None
    voices: dict[int, list[HomophonicFactor]] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        toks = _TOKEN_RE.findall(line)
        try:
            if toks[0] == "tpq":
                tpq = int(toks[1])
                continue
            if toks[0] == "qpm":
                qpm = float(toks[1])
                continue
            factor, v = _parse_factor_line(toks, tpq)
        except (ValueError, IndexError) as exc:
            raise ScoreParseError(f"line {lineno}: {exc}") from exc
        voices.setdefault(v, []).append(factor)
    if not voices:
        raise ScoreParseError("no factors in score text")
    ordered = tuple(tuple(voices[v]) for v in sorted(voices))
    return PolyphonicScore(ordered, ticks_per_quarter=tpq, metronome_qpm=qpm)


def _parse_factor_line(toks: list[str], tpq: int) -> tuple[HomophonicFactor, int]:
    i = 0

    def expect(word):
        nonlocal i
        if toks[i] != word:
            raise ValueError(f"expected {word!r}, got {toks[i]!r}")
        i += 1

    expect("voice")
    v = int(toks[i]); i += 1
    expect("time")
    t = int(toks[i]); i += 1

    after = EMPTY_AFTER
    grace = EMPTY_GRACE
    body: BodyEvent | None = None
    cadenza = False

    def grab_group(kind, orn):
        nonlocal i
        chords = _parse_group(toks[i]); i += 1
        return GraceGroup(chords, kind=kind, from_ornament=orn)

    while i < len(toks):
        tok = toks[i]
        if tok in ("after", "after*"):
            i += 1
            after = grab_group("after_note", tok.endswith("*"))
        elif tok in ("grace", "grace*"):
            i += 1
            grace = grab_group("short_appoggiatura", tok.endswith("*"))
        elif tok == "body":
            i += 1
            kind = toks[i]; i += 1
            if kind == "rest":
                expect("value")
                body = RestEvent(NoteValue(int(toks[i]), tpq)); i += 1
            elif kind == "chord":
                pitches = _parse_chord(toks[i]); i += 1
                expect("value")
                val = NoteValue(int(toks[i]), tpq); i += 1
                orn = None
                trillp: frozenset[int] = frozenset()
                arp = None
                fermata = False
                while i < len(toks) and toks[i] in ("orn", "trillp", "arp", "fermata"):
                    if toks[i] == "orn":
                        orn = toks[i + 1]; i += 2
                    elif toks[i] == "trillp":
                        trillp = _parse_chord(toks[i + 1]); i += 2
                    elif toks[i] == "arp":
                        arp = (int(toks[i + 1]), toks[i + 2]); i += 3
                    else:
                        fermata = True; i += 1
                body = ChordEvent(pitches, val, ornament=orn,
                                  trill_pitches=trillp, arpeggio=arp, fermata=fermata)
            elif kind == "tremolo":
                chords = _parse_group(toks[i]); i += 1
                expect("value")
                val = NoteValue(int(toks[i]), tpq); i += 1
                fermata = False
                if i < len(toks) and toks[i] == "fermata":
                    fermata = True; i += 1
                body = TremoloEvent(chords, val, fermata=fermata)
            elif kind == "gliss":
                start_s, end_s = toks[i].split(">"); i += 1
                expect("value")
                val = NoteValue(int(toks[i]), tpq); i += 1
                scale = "white_keys"
                if i < len(toks) and toks[i] == "scale":
                    scale = toks[i + 1]; i += 2
                body = GlissandoEvent(_parse_chord(start_s), _parse_chord(end_s),
                                      val, scale=scale)
            else:
                raise ValueError(f"unknown body kind {kind!r}")
        elif tok == "fermata" and isinstance(body, (ChordEvent, TremoloEvent)):
            body = replace(body, fermata=True)
            i += 1
        elif tok == "cadenza":
            cadenza = True
            i += 1
        else:
            raise ValueError(f"unexpected token {tok!r}")
    return HomophonicFactor(score_time=t, after=after, grace=grace,
                            body=body, cadenza=cadenza), v
