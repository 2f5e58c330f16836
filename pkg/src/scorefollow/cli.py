"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 input parse failure, 3 runtime
failure.  Diagnostics go to standard error.
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from . import evaluate, hmm, ioi, match, midi, musicxml, score
from .homophonize import homophonize
from .simulate import (SimConfig, parse_rates_text, parse_stream_jsonl,
                       simulate, stream_jsonl, write_stream_midi)

EXIT_OK, EXIT_USAGE, EXIT_PARSE, EXIT_RUNTIME = 0, 1, 2, 3


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse exits 2 by default; we want 1
        raise _UsageError(message)


def _build_parser() -> _Parser:
    p = _Parser(prog="scorefollow",
                description="Symbolic score-performance matching toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("compile", help="compile a score into a model file")
    c.add_argument("--score", required=True)
    c.add_argument("--out", required=True)
    c.add_argument("--error-rate", type=float, default=0.01,
                   help="pitch output error rate (default 0.01)")
    c.add_argument("--params", help="IOI parameter config file")

    a = sub.add_parser("align", help="offline alignment of a performance")
    a.add_argument("--model", required=True)
    a.add_argument("--perf", required=True,
                   help="SMF MIDI file or JSON-lines stream")
    a.add_argument("--out", required=True)
    a.add_argument("--gamma", type=float, default=math.exp(-40.0))
    a.add_argument("--delta", type=float, default=0.3)
    a.add_argument("--tempo-out", help="optional tempo track TSV path")

    f = sub.add_parser("follow", help="streaming score following on stdin")
    f.add_argument("--model", required=True)
    f.add_argument("--gamma", type=float, default=math.exp(-20.0))
    f.add_argument("--delta", type=float, default=0.4)

    s = sub.add_parser("simulate", help="generate a synthetic performance")
    s.add_argument("--model", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--rates", help="mistake-rate config file")
    s.add_argument("--out-dir", required=True)

    fi = sub.add_parser("fit-ioi", help="fit IOI families to labeled samples")
    fi.add_argument("--samples", required=True,
                    help="TSV with rows `label<TAB>dt_seconds`")
    fi.add_argument("--out", required=True)

    e = sub.add_parser("eval", help="compare an alignment against truth")
    e.add_argument("--pred", required=True)
    e.add_argument("--truth", required=True)
    e.add_argument("--piece", default="piece")
    return p


def _read_text(path: str) -> str:
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"no such file: {path}")
    return p.read_text(encoding="utf-8")


def _load_model(path: str) -> hmm.PerformanceHmm:
    return hmm.load_model(_read_text(path))


def _load_performance(path: str) -> list[match.NoteEvent]:
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"no such file: {path}")
    if p.suffix.lower() in (".mid", ".midi", ".smf"):
        notes = midi.read_midi(p.read_bytes())
        return [match.NoteEvent(n.pitch, n.onset, i)
                for i, n in enumerate(notes)]
    return parse_stream_jsonl(p.read_text(encoding="utf-8"))


def _cmd_compile(args) -> int:
    text = _read_text(args.score)
    if args.score.lower().endswith((".musicxml", ".xml")):
        result = musicxml.parse_musicxml(text)
        for d in result.diagnostics:
            print(f"compile: {d}", file=sys.stderr)
        poly = result.score
    else:
        poly = score.parse_score_text(text)
    seq = homophonize(poly)
    params = ioi.parse_params_text(_read_text(args.params)) \
        if args.params else None
    model = hmm.compile_hmm(seq, error_rate=args.error_rate, params=params)
    Path(args.out).write_text(hmm.save_model(model), encoding="utf-8")
    print(f"compile: {model.n_events} events, {model.n_states} states "
          f"-> {args.out}", file=sys.stderr)
    return EXIT_OK


def _cmd_align(args) -> int:
    model = _load_model(args.model)
    events = _load_performance(args.perf)
    if not events:
        raise ValueError("empty performance")
    config = match.MatcherConfig(mode="offline", gamma_bar=args.gamma,
                                 delta_width=args.delta)
    alignment, track = match.align_offline(model, events, config)
    Path(args.out).write_text(alignment.to_tsv(), encoding="utf-8")
    if args.tempo_out:
        Path(args.tempo_out).write_text(track.to_tsv(), encoding="utf-8")
    return EXIT_OK


def _cmd_follow(args) -> int:
    model = _load_model(args.model)
    config = match.MatcherConfig(mode="online", gamma_bar=args.gamma,
                                 delta_width=args.delta)
    session = match.new_session(model, config)
    tpq = model.ticks_per_quarter
    for ln in sys.stdin:
        parts = ln.split()
        if not parts:
            continue
        if len(parts) < 2:
            raise ValueError(f"expected 'onset_s pitch [velocity]': {ln!r}")
        est = session.feed(match.NoteEvent(int(parts[1]), float(parts[0])))
        print(f"{est.note_index} {est.top_index} {est.score_time} "
              f"{est.tempo * tpq:.6g}", flush=True)
    return EXIT_OK


def _cmd_simulate(args) -> int:
    model = _load_model(args.model)
    kw = parse_rates_text(_read_text(args.rates)) if args.rates else {}
    result = simulate(model, SimConfig(seed=args.seed, **kw))
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    qpm = model.metronome_qpm or 120.0
    (out / "performance.mid").write_bytes(
        write_stream_midi(result.stream, qpm=qpm))
    (out / "truth.tsv").write_text(result.truth.to_tsv(), encoding="utf-8")
    (out / "stream.jsonl").write_text(stream_jsonl(result.stream),
                                      encoding="utf-8")
    (out / "tempo.tsv").write_text(result.tempo_track.to_tsv(),
                                   encoding="utf-8")
    print(f"simulate: {len(result.stream)} notes -> {out}", file=sys.stderr)
    return EXIT_OK


def _cmd_fit_ioi(args) -> int:
    by_label: dict[str, list[float]] = {}
    for lineno, ln in enumerate(_read_text(args.samples).splitlines(), 1):
        if not ln.strip() or ln.startswith("label"):
            continue
        parts = ln.split("\t") if "\t" in ln else ln.split()
        if len(parts) != 2:
            raise ValueError(f"line {lineno}: expected 'label dt'")
        by_label.setdefault(parts[0], []).append(float(parts[1]))
    fitted = {}
    for label, samples in sorted(by_label.items()):
        spec, r2 = ioi.fit_distribution(np.asarray(samples))
        fitted[label] = spec
        print(f"fit-ioi: {label}: {spec.family} loc={spec.location:.4g} "
              f"width={spec.width:.4g} (R2 {r2[spec.family]:.3f}, "
              f"n={len(samples)})", file=sys.stderr)
    Path(args.out).write_text(ioi.dump_params_text(fitted), encoding="utf-8")
    return EXIT_OK


def _cmd_eval(args) -> int:
    pred = match.Alignment.from_tsv(_read_text(args.pred))
    truth = match.Alignment.from_tsv(_read_text(args.truth))
    report = evaluate.build_report(args.piece, pred, truth)
    sys.stdout.write(report.to_tsv())
    return EXIT_OK


_COMMANDS = {
    "compile": _cmd_compile,
    "align": _cmd_align,
    "follow": _cmd_follow,
    "simulate": _cmd_simulate,
    "fit-ioi": _cmd_fit_ioi,
    "eval": _cmd_eval,
}

_PARSE_ERRORS = (FileNotFoundError, score.ScoreParseError,
                 musicxml.MusicXmlError, midi.MidiParseError,
                 ioi.FitError, ValueError)


def run(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        return _COMMANDS[args.command](args)
    except _PARSE_ERRORS as exc:
        print(f"{args.command}: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except Exception as exc:  # noqa: BLE001 - contract: runtime failures exit 3
        print(f"{args.command}: runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def main() -> None:
    sys.exit(run())
