#!/usr/bin/env python
"""Measure per-feed wall-clock latency of the online matcher.

Builds a large compiled model (>= 1354 bottom states), simulates a long
performance stream, and reports mean/p95/max feed() latency.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from scorefollow import compile_hmm, homophonize
from scorefollow.match import MatcherConfig, NoteEvent, Session
from scorefollow.score import parse_score_text
from scorefollow.simulate import SimConfig, simulate


def big_score_text(n_events: int) -> str:
    """Score with pitch-disjoint adjacent events and a mix of ornaments."""
    lines = ["tpq 480"]
    windows = [45, 57, 69]
    for r in range(n_events):
        base = windows[r % 3]
        t = r * 480
        chord = f"{base},{base + 4},{base + 7}"
        if r % 10 == 3:
            lines.append(
                f"voice 0 time {t} body chord {chord} value 480 orn trill")
        elif r % 10 == 6:
            lines.append(
                f"voice 0 time {t} grace {base + 9} body chord {chord}"
                " value 480")
        elif r % 10 == 8:
            lines.append(
                f"voice 0 time {t} body tremolo {base},{base + 7};"
                f"{base + 4},{base + 11} value 480")
        else:
            lines.append(f"voice 0 time {t} body chord {chord} value 480")
    return "\n".join(lines) + "\n"


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--events", type=int, default=1100)
    ap.add_argument("--notes", type=int, default=10000)
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args()

    score = parse_score_text(big_score_text(args.events))
    hmm = compile_hmm(homophonize(score))
    print(f"states: {hmm.n_states}  edges: {len(hmm.edges['src'])}")

    cfg = SimConfig(seed=args.seed, pitch_error_rate=0.02,
                    insertion_rate=0.01, deletion_rate=0.01, skip_rate=0.005)
    sim = simulate(hmm, cfg)
    stream = sim.stream
    while len(stream) < args.notes:
        shift = stream[-1].onset + 1.0
        extra = simulate(hmm, SimConfig(seed=args.seed + len(stream))).stream
        stream = stream + [
            NoteEvent(pitch=n.pitch, onset=n.onset + shift, index=0)
            for n in extra]
    stream = stream[:args.notes]
    stream = [NoteEvent(pitch=n.pitch, onset=n.onset, index=i)
              for i, n in enumerate(stream)]

    session = Session(hmm, MatcherConfig.online())
    lat = np.empty(len(stream))
    for i, ev in enumerate(stream):
        t0 = time.perf_counter()
        session.feed(ev)
        lat[i] = time.perf_counter() - t0
    lat *= 1e3
    print(f"notes {len(stream)}  total {lat.sum() / 1e3:.1f}s  "
          f"mean {lat.mean():.3f} ms  p50 {np.percentile(lat, 50):.3f} ms  "
          f"p95 {np.percentile(lat, 95):.3f} ms  max {lat.max():.3f} ms")


if __name__ == "__main__":
    main()
