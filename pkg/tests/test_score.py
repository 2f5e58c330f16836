import pytest

from scorefollow.score import (
    ChordEvent, GraceGroup, NoteValue, PolyphonicScore, RestEvent,
    ScoreParseError, TremoloEvent, check_pitch, dump_score, parse_score_text,
    validate_score)

from helpers import ornament_score_text, plain_score_text


def test_parse_dump_round_trip():
    text = ornament_score_text(25)
    score = parse_score_text(text)
    again = parse_score_text(dump_score(score))
    assert again == score


def test_parse_plain_chords():
    score = parse_score_text(plain_score_text([60, 64, 67]))
    (voice,) = score.voices
    assert [f.score_time for f in voice] == [0, 480, 960]
    assert all(isinstance(f.body, ChordEvent) for f in voice)
    assert voice[0].body.pitches == frozenset({60})


def test_parse_grace_and_trill_flags():
    text = ("tpq 480\n"
            "voice 0 time 0 grace 71;69 body chord 67 value 480 orn trill\n"
            "voice 0 time 480 after 60 body chord 62,65 value 240 fermata\n")
    score = parse_score_text(text)
    (voice,) = score.voices
    f0, f1 = voice
    assert f0.grace.chords == (frozenset({71}), frozenset({69}))
    assert 67 in f0.body.trill_pitches
    assert f1.after.chords == (frozenset({60}),)
    assert f1.body.fermata


def test_parse_tremolo_and_rest():
    text = ("tpq 480\n"
            "voice 0 time 0 body tremolo 60,64;62 value 960\n"
            "voice 0 time 960 body rest value 480\n")
    score = parse_score_text(text)
    f0, f1 = score.voices[0]
    assert isinstance(f0.body, TremoloEvent)
    assert f0.body.chords == (frozenset({60, 64}), frozenset({62}))
    assert isinstance(f1.body, RestEvent)


def test_parse_errors():
    with pytest.raises(ScoreParseError):
        parse_score_text("voice 0 time 0 body chord nope value 480\n")
    with pytest.raises(ScoreParseError):
        parse_score_text("")
    with pytest.raises(ScoreParseError):
        parse_score_text("voice 0 time 0 body sonata 60 value 480\n")


def test_check_pitch_bounds():
    assert check_pitch(0) == 0
    assert check_pitch(127) == 127
    for bad in (-1, 128):
        with pytest.raises(ValueError):
            check_pitch(bad)


def test_note_value_positive():
    with pytest.raises(ValueError):
        NoteValue(-1, 480)


def test_validate_score_returns_list():
    score = parse_score_text(plain_score_text([60, 64]))
    assert isinstance(validate_score(score), list)


def test_multi_voice_round_trip():
    text = ("tpq 480\n"
            "voice 0 time 0 body chord 60,64 value 480\n"
            "voice 1 time 0 body chord 48 value 960\n"
            "voice 0 time 480 body chord 65 value 480\n")
    score = parse_score_text(text)
    assert len(score.voices) == 2
    assert parse_score_text(dump_score(score)) == score
