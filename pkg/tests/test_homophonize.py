import pytest

from scorefollow.homophonize import (
    HomophonizedSequence, homophonize, sequence_signature, wrap_as_score)
from scorefollow.score import parse_score_text

from helpers import ornament_score_text


def _v(voice, t, rest):
    return f"voice {voice} time {t} {rest}"


def _fixture_corpus() -> list[str]:
    """30 scores covering overlapping trills, multi-voice graces, cadenzas."""
    corpus = [
        # overlapping trills between voices
        ("tpq 480\n"
         "voice 0 time 0 body chord 72 value 1920 orn trill\n"
         "voice 1 time 480 body chord 60 value 480\n"
         "voice 1 time 960 body chord 62 value 480 orn trill\n"),
        # two simultaneous trills on the same grid
        ("tpq 480\n"
         "voice 0 time 0 body chord 72 value 960 orn trill\n"
         "voice 1 time 0 body chord 48 value 960 orn trill\n"
         "voice 0 time 960 body chord 74 value 480\n"),
        # multi-voice graces at one onset
        ("tpq 480\n"
         "voice 0 time 0 grace 74;72 body chord 71 value 480\n"
         "voice 1 time 0 grace 50 body chord 48,55 value 480\n"
         "voice 0 time 480 body chord 69 value 480\n"),
        # after notes stealing from the previous event
        ("tpq 480\n"
         "voice 0 time 0 body chord 67 value 480\n"
         "voice 0 time 480 after 66;68 body chord 67 value 480\n"),
        # cadenza run
        ("tpq 480\n"
         "voice 0 time 0 body chord 60 value 480\n"
         "voice 0 time 480 body chord 62 value 480 cadenza\n"
         "voice 0 time 960 body chord 64 value 480\n"),
        # tremolo against held chord
        ("tpq 480\n"
         "voice 0 time 0 body tremolo 60,64;62 value 1920\n"
         "voice 1 time 0 body chord 36 value 1920\n"),
        # glissando
        ("tpq 480\n"
         "voice 0 time 0 body chord 60 value 480\n"
         "voice 0 time 480 body gliss 60>72 value 480\n"
         "voice 0 time 960 body chord 72 value 480\n"),
        # rests interleaved
        ("tpq 480\n"
         "voice 0 time 0 body chord 60 value 480\n"
         "voice 0 time 480 body rest value 480\n"
         "voice 0 time 960 body rest value 480\n"
         "voice 0 time 1440 body chord 64 value 480\n"),
        # trill carried across another voice's onsets (clipped carryover)
        ("tpq 480\n"
         "voice 0 time 0 body chord 79 value 2400 orn trill\n"
         "voice 1 time 600 body chord 52 value 600\n"
         "voice 1 time 1200 body chord 55 value 600\n"
         "voice 1 time 1800 body chord 57 value 600\n"),
        # mordent + turn ornaments
        ("tpq 480\n"
         "voice 0 time 0 body chord 65 value 480 orn upper_mordent\n"
         "voice 0 time 480 body chord 67 value 480 orn direct_turn\n"),
        # arpeggiated chord
        ("tpq 480\n"
         "voice 0 time 0 body chord 48,52,55,60 value 960 arp 1 up\n"
         "voice 0 time 960 body chord 50 value 480\n"),
        # explicit trill pitches
        ("tpq 480\n"
         "voice 0 time 0 body chord 70 value 960 orn trill trillp 70,71\n"
         "voice 0 time 960 body chord 72 value 480\n"),
        # fermata events
        ("tpq 480\n"
         "voice 0 time 0 body chord 60,64,67 value 960 fermata\n"
         "voice 0 time 960 body chord 59 value 480\n"),
        # grace before a trill
        ("tpq 480\n"
         "voice 0 time 0 grace 76 body chord 74 value 960 orn trill\n"
         "voice 0 time 960 body chord 72 value 480\n"),
    ]
    corpus.extend(ornament_score_text(n) for n in range(4, 16))
    # dense multi-voice lattices with staggered onsets
    for k in range(4):
        lines = ["tpq 480"]
        for r in range(6):
            lines.append(_v(0, r * 480,
                            f"body chord {60 + r} value 480"
                            + (" orn trill" if r % 3 == k % 3 else "")))
            lines.append(_v(1, r * 480 + 240 * (k % 2),
                            f"body chord {40 + r} value 480"))
        corpus.append("\n".join(lines) + "\n")
    assert len(corpus) == 30
    return corpus


CORPUS = _fixture_corpus()


def check_invariants(seq: HomophonizedSequence) -> None:
    times = [f.score_time for f in seq.factors]
    assert times == sorted(times)
    assert len(set(times)) == len(times), "score times must be strict"
    for f in seq.factors:
        assert not f.is_empty, "no all-empty factor may remain"
        assert f.end_time >= f.score_time
    for prev, f in zip(seq.factors, seq.factors[1:]):
        contained_dup = (
            not f.after and not f.grace and f.is_purely_trill_like()
            and f.trill_pitch_content() <= prev.trill_pitch_content()
            and all(v in prev.bodies for v in f.bodies))
        assert not contained_dup, "contained purely-trill-like duplicate"


@pytest.mark.parametrize("idx", range(len(CORPUS)))
def test_corpus_invariants(idx):
    seq = homophonize(parse_score_text(CORPUS[idx]))
    check_invariants(seq)


@pytest.mark.parametrize("idx", range(len(CORPUS)))
def test_corpus_idempotence(idx):
    seq = homophonize(parse_score_text(CORPUS[idx]))
    again = homophonize(wrap_as_score(seq))
    assert sequence_signature(again) == sequence_signature(seq)


def test_note_onset_count_positive():
    seq = homophonize(parse_score_text(CORPUS[0]))
    assert seq.note_onset_count() > 0
