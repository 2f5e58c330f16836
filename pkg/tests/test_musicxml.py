import pytest

from scorefollow.musicxml import MusicXmlError, parse_musicxml
from scorefollow.score import ChordEvent


def _doc(measures: str, divisions: int = 2) -> str:
    return f"""<?xml version="1.0"?>
<score-partwise version="3.1">
  <part-list>
    <score-part id="P1"><part-name>Piano</part-name></score-part>
  </part-list>
  <part id="P1">
    <measure number="1">
      <attributes><divisions>{divisions}</divisions></attributes>
      {measures}
    </measure>
  </part>
</score-partwise>
"""


def _note(step, octave, dur, extra=""):
    return (f"<note><pitch><step>{step}</step><octave>{octave}</octave>"
            f"</pitch><duration>{dur}</duration><voice>1</voice>{extra}"
            "</note>")


def test_simple_notes_and_chord():
    doc = _doc(
        _note("C", 4, 2)
        + _note("E", 4, 2, "<chord/>")
        + _note("G", 4, 2))
    result = parse_musicxml(doc)
    assert result.note_count == 3
    (voice,) = result.score.voices
    bodies = [f.body for f in voice if isinstance(f.body, ChordEvent)]
    pitch_sets = [set(b.pitches) for b in bodies]
    assert {60, 64} in pitch_sets
    assert {67} in pitch_sets


def test_trill_mark_recognized():
    doc = _doc(_note("A", 4, 4,
                     "<notations><ornaments><trill-mark/></ornaments>"
                     "</notations>"))
    result = parse_musicxml(doc)
    (voice,) = result.score.voices
    chord = next(f.body for f in voice if isinstance(f.body, ChordEvent))
    assert 69 in chord.trill_pitches


def test_grace_note_attaches():
    doc = _doc(
        "<note><grace slash=\"yes\"/><pitch><step>D</step>"
        "<octave>5</octave></pitch><voice>1</voice></note>"
        + _note("C", 5, 2))
    result = parse_musicxml(doc)
    (voice,) = result.score.voices
    graced = [f for f in voice if f.grace]
    assert len(graced) == 1
    assert frozenset({74}) in graced[0].grace.chords


def test_rest_and_metronome():
    doc = """<?xml version="1.0"?>
<score-partwise>
  <part-list><score-part id="P1"/></part-list>
  <part id="P1">
    <measure number="1">
      <attributes><divisions>1</divisions></attributes>
      <direction><direction-type><metronome>
        <beat-unit>quarter</beat-unit><per-minute>90</per-minute>
      </metronome></direction-type></direction>
      <note><rest/><duration>1</duration><voice>1</voice></note>
      <note><pitch><step>C</step><octave>4</octave></pitch>
        <duration>1</duration><voice>1</voice></note>
    </measure>
  </part>
</score-partwise>
"""
    result = parse_musicxml(doc)
    assert result.score.metronome_qpm == 90.0
    assert result.note_count == 1


def test_alter_changes_pitch():
    doc = _doc("<note><pitch><step>C</step><alter>1</alter>"
               "<octave>4</octave></pitch><duration>2</duration>"
               "<voice>1</voice></note>")
    result = parse_musicxml(doc)
    chord = next(f.body for f in result.score.voices[0]
                 if isinstance(f.body, ChordEvent))
    assert 61 in chord.pitches


def test_errors():
    with pytest.raises(MusicXmlError):
        parse_musicxml("<not-xml")
    with pytest.raises(MusicXmlError):
        parse_musicxml("<score-timewise/>")
    with pytest.raises(MusicXmlError):
        parse_musicxml(_doc(""))  # no notes
