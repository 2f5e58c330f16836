"""Minimal Standard MIDI File (format 0) writer and reader.

Only what the toolkit needs: note-on/note-off events and set-tempo meta
events.  The reader tolerates running status and skips unknown events; the
writer emits a single track at a fixed resolution.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

DEFAULT_TPQ = 480
DEFAULT_USPQ = 500_000  # microseconds per quarter (120 qpm)


@dataclass(frozen=True)
class MidiNote:
    onset: float  # seconds
    pitch: int
    velocity: int = 64
    duration: float = 0.1  # seconds


def _vlq(value: int) -> bytes:
    if value < 0:
        raise ValueError("negative delta time")
    out = [value & 0x7F]
    value >>= 7
    while value:
        out.append(0x80 | (value & 0x7F))
        value >>= 7
    return bytes(reversed(out))


def write_midi(notes: list[MidiNote], *, ticks_per_quarter: int = DEFAULT_TPQ,
               qpm: float = 120.0) -> bytes:
    """Serialize notes as a single-track SMF at a fixed tempo."""
    uspq = round(60_000_000 / qpm)
    tick_per_s = 1_000_000 * ticks_per_quarter / uspq
    events: list[tuple[int, int, bytes]] = []  # (tick, order, message)
    for n in sorted(notes, key=lambda n: (n.onset, n.pitch)):
        if not 0 <= n.pitch < 128:
            raise ValueError(f"pitch out of range: {n.pitch}")
        on = round(n.onset * tick_per_s)
        off = max(on + 1, round((n.onset + n.duration) * tick_per_s))
        vel = min(max(n.velocity, 1), 127)
        events.append((on, 1, bytes((0x90, n.pitch, vel))))
        events.append((off, 0, bytes((0x80, n.pitch, 0))))
    events.sort()

    track = bytearray()
    track += _vlq(0) + bytes((0xFF, 0x51, 0x03)) + uspq.to_bytes(3, "big")
    tick = 0
    for t, _, msg in events:
        track += _vlq(t - tick) + msg
        tick = t
    track += _vlq(0) + bytes((0xFF, 0x2F, 0x00))

    header = struct.pack(">4sIHHH", b"MThd", 6, 0, 1, ticks_per_quarter)
    return header + struct.pack(">4sI", b"MTrk", len(track)) + bytes(track)


class MidiParseError(ValueError):
    pass


def _read_vlq(data: bytes, i: int) -> tuple[int, int]:
    value = 0
    for _ in range(4):
        if i >= len(data):
            raise MidiParseError("truncated variable-length quantity")
        b = data[i]
        i += 1
        value = (value << 7) | (b & 0x7F)
        if not b & 0x80:
            return value, i
    raise MidiParseError("variable-length quantity too long")


def read_midi(data: bytes) -> list[MidiNote]:
    """Note onsets in seconds from an SMF, honoring the tempo map."""
    if len(data) < 14 or data[:4] != b"MThd":
        raise MidiParseError("not a standard MIDI file")
    hlen, fmt, ntrk, division = struct.unpack(">IHHH", data[4:14])
    if division & 0x8000:
        raise MidiParseError("SMPTE time division is not supported")
    if division == 0:
        raise MidiParseError("zero time division")
    pos = 8 + hlen

    # merge all tracks into one absolute-tick event list
    merged: list[tuple[int, int, tuple]] = []
    for trk in range(ntrk):
        if data[pos:pos + 4] != b"MTrk":
            raise MidiParseError(f"missing track chunk {trk}")
        tlen = struct.unpack(">I", data[pos + 4:pos + 8])[0]
        chunk = data[pos + 8:pos + 8 + tlen]
        if len(chunk) < tlen:
            raise MidiParseError("truncated track chunk")
        pos += 8 + tlen
        merged.extend(_parse_track(chunk))
    merged.sort(key=lambda e: (e[0], e[1]))

    # tick -> seconds with tempo changes, then pair note-ons with note-offs
    notes: list[MidiNote] = []
    open_notes: dict[int, list[int]] = {}
    times: dict[int, float] = {}
    uspq = DEFAULT_USPQ
    last_tick, last_time = 0, 0.0
    for tick, _, ev in merged:
        t = last_time + (tick - last_tick) * uspq / (1_000_000 * division)
        last_tick, last_time = tick, t
        kind = ev[0]
        if kind == "tempo":
            uspq = ev[1]
        elif kind == "on":
            open_notes.setdefault(ev[1], []).append(len(notes))
            times[len(notes)] = t
            notes.append(MidiNote(onset=t, pitch=ev[1], velocity=ev[2],
                                  duration=0.0))
        elif kind == "off":
            stack = open_notes.get(ev[1])
            if stack:
                idx = stack.pop(0)
                notes[idx] = MidiNote(onset=times[idx], pitch=ev[1],
                                      velocity=notes[idx].velocity,
                                      duration=max(t - times[idx], 0.0))
    notes.sort(key=lambda n: (n.onset, n.pitch))
    return notes


def _parse_track(chunk: bytes):
    events = []
    order = 0
    i = 0
    tick = 0
    status = 0
    while i < len(chunk):
        delta, i = _read_vlq(chunk, i)
        tick += delta
        if i >= len(chunk):
            raise MidiParseError("truncated event")
        b = chunk[i]
        if b >= 0x80:
            status = b
            i += 1
        elif status == 0:
            raise MidiParseError("running status without prior status byte")
        if status == 0xFF:
            if i >= len(chunk):
                raise MidiParseError("truncated meta event")
            meta = chunk[i]
            i += 1
            length, i = _read_vlq(chunk, i)
            payload = chunk[i:i + length]
            i += length
            if meta == 0x51 and length == 3:
                events.append((tick, order,
                               ("tempo", int.from_bytes(payload, "big"))))
                order += 1
            if meta == 0x2F:
                break
            status = 0
        elif status in (0xF0, 0xF7):
            length, i = _read_vlq(chunk, i)
            i += length
            status = 0
        else:
            hi = status & 0xF0
            n_data = 1 if hi in (0xC0, 0xD0) else 2
            if i + n_data > len(chunk):
                raise MidiParseError("truncated channel event")
            d = chunk[i:i + n_data]
            i += n_data
            if hi == 0x90 and d[1] > 0:
                events.append((tick, order, ("on", d[0], d[1])))
                order += 1
            elif hi == 0x80 or (hi == 0x90 and d[1] == 0):
                events.append((tick, order, ("off", d[0])))
                order += 1
    return events
