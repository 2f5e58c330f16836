"""Compile a homophonized sequence into the expanded two-level HMM.

Top-level states are composite score events; bottom-level states are typed
CH (chord with a metric duration), SA (immediately-succeeded: grace runs,
chordal onsets before trills), or TR (sustained trill/tremolo emission).
The expanded transition matrix follows the standard hierarchical product
form, with a constant uniform mass for arbitrary repeats and skips kept
implicit so decoding stays linear in the state count.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import ioi
from .homophonize import HomophonizedSequence, trill_part
from .ioi import DistSpec, IoiMixture
from .score import ChordEvent, GraceGroup, RestEvent, TremoloEvent

EPSILON_NOTES = 0.1  # expected extra emissions from insertions/deletions
TRILL_UPPER_NEIGHBOR = 2

# transition classes
SELF, IMMEDIATE, METRIC, INSERTION, SKIP = range(5)
CLASS_NAMES = ("self", "immediate", "metric", "insertion", "skip")

# neighborhood kernel: score-event offset -> base weight
KERNEL_WEIGHTS = {
    -2: 0.005,
    -1: 0.015,
    0: 0.03,
    1: 0.80,
    2: 0.10,
    3: 0.04,
    4: 0.01,
}

DEFAULT_GAMMA_BAR = math.exp(-40.0)

RHO_IN_FIRST = 0.9
RHO_FORWARD = 0.9


def self_transition_from_expected(n_e: float) -> float:
    """Self-transition probability whose geometric emission count matches n_e."""
    if n_e < 1.0:
        raise ValueError(f"expected note count below 1: {n_e}")
    return 1.0 - 1.0 / n_e


def trill_expected_notes(n_bar: float, v: float, nu_ticks: float,
                         t_bar: float) -> float:
    """Expected emitted notes of a trill state: notes/repetition x duration/period."""
    if min(n_bar, v, nu_ticks, t_bar) <= 0:
        raise ValueError("trill parameters must be positive")
    return n_bar * v * nu_ticks / t_bar


def expand_hierarchical(A: np.ndarray, rho_in: list[np.ndarray],
                        rho_mat: list[np.ndarray],
                        rho_out: list[np.ndarray]) -> np.ndarray:
    """Dense expanded transition matrix from top matrix + bottom parameters."""
    A = np.asarray(A, dtype=float)
    n_top = A.shape[0]
    if not np.allclose(A.sum(axis=1), 1.0, atol=1e-9):
        raise ValueError("top matrix is not row-stochastic")
    for I in range(n_top):
        if not np.allclose(rho_mat[I].sum(axis=1) + rho_out[I], 1.0, atol=1e-9):
            raise ValueError(f"bottom rows of event {I} do not sum to 1")
        if abs(rho_in[I].sum() - 1.0) > 1e-9:
            raise ValueError(f"entering probabilities of event {I} do not sum to 1")
    sizes = [len(rho_in[I]) for I in range(n_top)]
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    n = offsets[-1]
    a = np.zeros((n, n))
    for I in range(n_top):
        for J in range(n_top):
            block = np.outer(rho_out[I], rho_in[J]) * A[I, J]
            if I == J:
                block = block + rho_mat[I]
            a[offsets[I]:offsets[I + 1], offsets[J]:offsets[J + 1]] = block
    return a


def bottom_params(n_states: int, rho_self: np.ndarray):
    """Entering / inter-state / exiting probabilities for one top event."""
    K = n_states
    rho_in = np.zeros(K)
    rho_in[0] = RHO_IN_FIRST if K > 1 else 1.0
    if K > 1:
        rho_in[1:] = (1.0 - RHO_IN_FIRST) / (K - 1)
    rho_mat = np.zeros((K, K))
    rho_out = np.zeros(K)
    for k in range(K):
        stay = rho_self[k]
        rho_mat[k, k] = stay
        rest = 1.0 - stay
        if k == K - 1:
            rho_out[k] = rest
        else:
            rho_mat[k, k + 1] = RHO_FORWARD * rest
            residue = (1.0 - RHO_FORWARD) * rest
            targets = K - k - 2  # states k+2..K-1
            share = residue / (targets + 1)
            for l in range(k + 2, K):
                rho_mat[k, l] = share
            rho_out[k] = share
    return rho_in, rho_mat, rho_out


# ---------------------------------------------------------------------------
# event segmentation

@dataclass
class BottomState:
    top_index: int
    sub_index: int
    state_type: str  # CH | SA | TR
    pitches: frozenset[int]
    extra_pitches: frozenset[int] = frozenset()  # small-probability additions
    grace_chords: tuple[frozenset[int], ...] = ()  # internal run structure
    mixture_counts: dict[str, float] = field(default_factory=dict)
    n_e: float = 1.0 + EPSILON_NOTES
    note_value_ticks: int = 0
    trill_params: tuple[float, float, int] | None = None  # (n_bar, t_bar s, nu ticks)
    trill_groups: tuple[frozenset[int], ...] = ()  # alternation chords, in order
    emit_pitches: frozenset[int] = frozenset()  # simulator onset realization
    score_time: int = 0
    end_time: int = 0
    arpeggio: bool = False


@dataclass
class TopEvent:
    index: int
    score_time: int
    end_time: int
    state_offset: int = 0
    n_states: int = 0
    leading_grace_notes: int = 0  # for the stolen-time deviation term


def _grace_states(groups: list[GraceGroup], top: int, t: int) -> list[BottomState]:
    """SA states for a composite grace sub-factor (after or grace groups)."""
    if not groups:
        return []
    single_plain = (len(groups) == 1 and not groups[0].from_ornament)
    if single_plain:
        # one voice, no mordent/turn: split into intentionally simultaneous notes
        out = []
        for chord in groups[0].chords:
            out.append(BottomState(
                top_index=top, sub_index=-1, state_type="SA",
                pitches=chord, grace_chords=(chord,),
                mixture_counts={"chord": float(len(chord) - 1)},
                n_e=len(chord) + EPSILON_NOTES,
                score_time=t, end_time=t))
        return out
    chords: tuple[frozenset[int], ...] = ()
    for g in groups:
        chords += g.chords
    pitches: set[int] = set()
    for c in chords:
        pitches |= c
    counts = {
        "short_app": float(max(len(chords) - 1, 0)),
        "chord": float(sum(len(c) - 1 for c in chords)),
    }
    n_notes = sum(len(c) for c in chords)
    return [BottomState(
        top_index=top, sub_index=-1, state_type="SA",
        pitches=frozenset(pitches), grace_chords=chords,
        mixture_counts=counts, n_e=n_notes + EPSILON_NOTES,
        score_time=t, end_time=t)]


def _trill_alternation(bodies: list) -> tuple[
        tuple[frozenset[int], ...], float]:
    """Ordered alternation chords and the repetition period in seconds."""
    groups: list[set[int]] = []
    for b in bodies:
        tp = trill_part(b)
        if tp is None:
            continue
        if isinstance(tp, TremoloEvent):
            chords = list(tp.chords)
        else:
            # a trill alternates the written pitches with their upper neighbors
            upper = frozenset(min(p + TRILL_UPPER_NEIGHBOR, 127)
                              for p in tp.pitches)
            chords = [tp.pitches, upper]
        while len(groups) < len(chords):
            groups.append(set())
        for i, c in enumerate(chords):
            groups[i] |= c
    period = 0.5 * ioi.default_trill_period() * max(len(groups), 2)
    return tuple(frozenset(g) for g in groups), period


def segment_events(seq: HomophonizedSequence,
                   v0: float) -> tuple[list[TopEvent], list[BottomState]]:
    """Bottom-state layout per composite factor (needs v0 for trill lengths)."""
    events: list[TopEvent] = []
    states: list[BottomState] = []
    for I, comp in enumerate(seq.factors):
        t = comp.score_time
        ev = TopEvent(index=I, score_time=t, end_time=comp.end_time,
                      state_offset=len(states))
        layout: list[BottomState] = []
        layout += _grace_states(list(comp.after.values()), I, t)
        grace_states = _grace_states(list(comp.grace.values()), I, t)
        layout += grace_states
        ev.leading_grace_notes = sum(
            sum(len(c) for c in s.grace_chords) for s in grace_states)

        bodies = [b for v, b in comp.bodies.items()
                  if not isinstance(b, RestEvent)]
        chord_pitches: set[int] = set()
        arpeggio = False
        value_ticks = 0
        for b in bodies:
            if isinstance(b, ChordEvent):
                chord_pitches |= b.pitches - b.trill_pitches
                arpeggio |= b.arpeggio is not None
                value_ticks = max(value_ticks, b.value.ticks)
            elif isinstance(b, TremoloEvent):
                value_ticks = max(value_ticks, b.value.ticks)
        trills = [b for b in bodies if trill_part(b) is not None]

        if not trills:
            if chord_pitches:
                label = "arpeggio" if arpeggio else "chord"
                layout.append(BottomState(
                    top_index=I, sub_index=-1, state_type="CH",
                    pitches=frozenset(chord_pitches),
                    mixture_counts={label: float(len(chord_pitches) - 1)},
                    n_e=len(chord_pitches) + EPSILON_NOTES,
                    note_value_ticks=value_ticks,
                    score_time=t, end_time=t, arpeggio=arpeggio))
        else:
            groups, period = _trill_alternation(bodies)
            sizes = [len(g) for g in groups]
            trill_pitches = frozenset().union(*groups)
            onset_pitches = frozenset(chord_pitches) | trill_pitches
            # the performer strikes the chordal notes and the first
            # alternation chord at the onset; the neighbors follow in TR
            onset_emit = frozenset(chord_pitches) | groups[0]
            onset_count = len(onset_emit)
            layout.append(BottomState(
                top_index=I, sub_index=-1, state_type="SA",
                pitches=onset_pitches, emit_pitches=onset_emit,
                mixture_counts={"chord": float(max(onset_count - 1, 0))},
                n_e=onset_count + EPSILON_NOTES,
                score_time=t, end_time=t))
            nu_tr = max(comp.end_time - comp.score_time, 1)
            n_bar = float(sum(sizes))
            n_strikes = len(sizes)
            counts = {
                "trill": float(n_strikes),
                "chord": float(sum(s - 1 for s in sizes)),
            }
            n_e = trill_expected_notes(n_bar, v0, nu_tr, period) + EPSILON_NOTES
            layout.append(BottomState(
                top_index=I, sub_index=-1, state_type="TR",
                pitches=trill_pitches, mixture_counts=counts,
                n_e=max(n_e, 1.0 + EPSILON_NOTES),
                trill_params=(n_bar, period, nu_tr),
                trill_groups=groups,
                score_time=t, end_time=comp.end_time))

        if not layout:
            # factor implied no onsets (should have been removed upstream)
            continue
        for k, st in enumerate(layout):
            st.sub_index = k
        ev.n_states = len(layout)
        states.extend(layout)
        events.append(ev)

    # trill states may be followed by after notes: include those pitches
    # with small probability in the TR output
    for ev in events:
        nxt = ev.index + 1
        if nxt >= len(events):
            continue
        nxt_ev = events[nxt]
        for k in range(ev.n_states):
            st = states[ev.state_offset + k]
            if st.state_type != "TR":
                continue
            extra: set[int] = set()
            for l in range(nxt_ev.n_states):
                cand = states[nxt_ev.state_offset + l]
                if cand.state_type == "SA" and cand.grace_chords:
                    extra |= set(cand.pitches)
            st.extra_pitches = frozenset(extra - set(st.pitches))
    for new_idx, ev in enumerate(events):
        delta = ev.index - new_idx
        ev.index = new_idx
        for k in range(ev.n_states):
            states[ev.state_offset + k].top_index = new_idx
    return events, states


# ---------------------------------------------------------------------------
# output models

def build_pitch_output(pitches: frozenset[int], error_rate: float,
                       extra_pitches: frozenset[int] = frozenset()) -> np.ndarray:
    """Categorical distribution over the 128 MIDI pitches for one state."""
    if not 0.0 <= error_rate <= 0.2:
        raise ValueError("error_rate must be in [0, 0.2]")
    dist = np.zeros(128)
    main = sorted(pitches)
    if not main:
        raise ValueError("state with no pitches")
    extra_mass = 0.005 * len(extra_pitches)
    score_mass = (1.0 - error_rate) - extra_mass
    dist[main] = score_mass / len(main)
    for p in sorted(extra_pitches):
        dist[p] += 0.005
    if error_rate > 0:
        neighbors = sorted({q for p in main for q in
                            (p - 1, p + 1, p - 12, p + 12)
                            if 0 <= q < 128} - pitches - extra_pitches)
        rest = sorted(set(range(128)) - pitches - set(neighbors) - extra_pitches)
        near_mass = 0.6 * error_rate
        far_mass = 0.4 * error_rate
        if neighbors:
            dist[neighbors] += near_mass / len(neighbors)
        else:
            far_mass += near_mass
        if rest:
            dist[rest] += far_mass / len(rest)
        else:
            dist[main] += far_mass / len(main)
    return dist / dist.sum()


def build_self_mixture(counts: dict[str, float],
                       params: dict[str, DistSpec]) -> IoiMixture:
    """Self-transition IOI mixture with weights from note-succession counts."""
    items = [(c, z) for z, c in sorted(counts.items()) if c > 0]
    if not items:
        items = [(1.0, "chord")]
    total = sum(c for c, _ in items)
    comps = tuple((c / total, params[z]) for c, z in items)
    return IoiMixture(comps)


# ---------------------------------------------------------------------------
# compiled model

@dataclass
class PerformanceHmm:
    events: list[TopEvent]
    states: list[BottomState]
    ticks_per_quarter: int
    v0: float  # s/tick reference tempo used at build time
    gamma_bar: float
    error_rate: float
    ioi_params: dict[str, DistSpec]
    metronome_qpm: float | None = None

    # derived, filled by _finalize
    rho_in: list[np.ndarray] = field(default_factory=list, repr=False)
    rho_mat: list[np.ndarray] = field(default_factory=list, repr=False)
    rho_out: list[np.ndarray] = field(default_factory=list, repr=False)
    pitch_logp: np.ndarray | None = field(default=None, repr=False)
    self_mixtures: list[IoiMixture] = field(default_factory=list, repr=False)
    edges: dict | None = field(default=None, repr=False)
    init_logp: np.ndarray | None = field(default=None, repr=False)

    @property
    def n_states(self) -> int:
        return len(self.states)

    @property
    def n_events(self) -> int:
        return len(self.events)

    def state_label(self, idx: int) -> tuple[int, int]:
        st = self.states[idx]
        return st.top_index, st.sub_index

    def top_matrix(self) -> np.ndarray:
        """Dense top-level transition matrix (tests / small models only)."""
        N = self.n_events
        A = np.full((N, N), self.gamma_bar)
        near_mass = 1.0 - self.gamma_bar * N
        for I in range(N):
            offs = [d for d in KERNEL_WEIGHTS if 0 <= I + d < N]
            W = sum(KERNEL_WEIGHTS[d] for d in offs)
            for d in offs:
                A[I, I + d] += KERNEL_WEIGHTS[d] * near_mass / W
        return A

    def expanded_matrix(self) -> np.ndarray:
        """Dense expanded-HMM matrix (tests / small models only)."""
        return expand_hierarchical(self.top_matrix(), self.rho_in,
                                   self.rho_mat, self.rho_out)


def compile_hmm(seq: HomophonizedSequence, *,
                gamma_bar: float = DEFAULT_GAMMA_BAR,
                error_rate: float = 0.01,
                params: dict[str, DistSpec] | None = None,
                default_qpm: float = 120.0) -> PerformanceHmm:
    """Build the full performance model from a homophonized sequence."""
    params = dict(params or ioi.default_params())
    qpm = seq.metronome_qpm or default_qpm
    v0 = 60.0 / (qpm * seq.ticks_per_quarter)
    events, states = segment_events(seq, v0)
    if not states:
        raise ValueError("sequence yields no states")
    model = PerformanceHmm(events=events, states=states,
                           ticks_per_quarter=seq.ticks_per_quarter,
                           v0=v0, gamma_bar=gamma_bar, error_rate=error_rate,
                           ioi_params=params,
                           metronome_qpm=seq.metronome_qpm)
    _finalize(model)
    return model


def _finalize(model: PerformanceHmm) -> None:
    params = model.ioi_params
    for ev in model.events:
        rho_self = np.array([
            self_transition_from_expected(
                model.states[ev.state_offset + k].n_e)
            for k in range(ev.n_states)])
        rin, rmat, rout = bottom_params(ev.n_states, rho_self)
        model.rho_in.append(rin)
        model.rho_mat.append(rmat)
        model.rho_out.append(rout)

    with np.errstate(divide="ignore"):
        model.pitch_logp = np.log(np.stack([
            build_pitch_output(st.pitches, model.error_rate, st.extra_pitches)
            for st in model.states]))

    model.self_mixtures = [
        build_self_mixture(st.mixture_counts, params) for st in model.states]

    model.edges = _build_edges(model)
    model.init_logp = _initial_distribution(model)


def _initial_distribution(model: PerformanceHmm) -> np.ndarray:
    n = model.n_states
    pi = np.full(n, 0.1 / n)
    ev0 = model.events[0]
    pi[ev0.state_offset:ev0.state_offset + ev0.n_states] += \
        0.9 * model.rho_in[0]
    return np.log(pi / pi.sum())


def _stolen_time_deviation(model: PerformanceHmm, ev: TopEvent,
                           sub: int) -> float:
    """Expected onset shift (s) of entering state (J, sub), from grace runs."""
    if sub != 0 or ev.leading_grace_notes == 0:
        return 0.0
    med = model.ioi_params["short_app"].median()
    return -min(ev.leading_grace_notes * med, 0.15)


def _build_edges(model: PerformanceHmm) -> dict:
    """Flat arrays of all neighborhood transitions, sorted by target state."""
    N = model.n_events
    by_dst: list[list[tuple]] = [[] for _ in range(model.n_states)]
    # the uniform mass gamma_bar * rho_out * rho_in over ALL event pairs is
    # kept implicit (decoder global-max trick); edges hold the kernel part
    near_mass = 1.0 - model.gamma_bar * N
    if near_mass <= 0:
        raise ValueError("gamma_bar too large for this many events")
    for I, ev in enumerate(model.events):
        offs = [d for d in KERNEL_WEIGHTS if 0 <= I + d < N]
        W = sum(KERNEL_WEIGHTS[d] for d in offs)
        for d in offs:
            J = I + d
            A_IJ = KERNEL_WEIGHTS[d] * near_mass / W
            ev_j = model.events[J]
            for k in range(ev.n_states):
                src = ev.state_offset + k
                st_src = model.states[src]
                end_src = (st_src.end_time if st_src.state_type == "TR"
                           else st_src.score_time)
                for l in range(ev_j.n_states):
                    dst = ev_j.state_offset + l
                    dtau = ev_j.score_time - end_src
                    if d == 0:
                        p_int = model.rho_mat[I][k, l]
                        if p_int > 0:
                            cls = SELF if k == l else IMMEDIATE
                            by_dst[dst].append((src, math.log(p_int), cls, 0, 0.0))
                        p_ins = model.rho_out[I][k] * A_IJ * model.rho_in[I][l]
                        if p_ins > 0:
                            by_dst[dst].append((src, math.log(p_ins),
                                                INSERTION, 0, 0.0))
                        continue
                    p = model.rho_out[I][k] * A_IJ * model.rho_in[J][l]
                    if p <= 0:
                        continue
                    if d < 0:
                        cls, dev = SKIP, 0.0
                    elif dtau <= 0:
                        cls, dev = IMMEDIATE, 0.0
                    else:
                        cls = METRIC
                        dev = _stolen_time_deviation(model, ev_j, l)
                    by_dst[dst].append((src, math.log(p), cls, dtau, dev))

    flat = []
    seg_starts = np.zeros(model.n_states + 1, dtype=np.int64)
    for dst in range(model.n_states):
        seg_starts[dst] = len(flat)
        flat.extend(sorted(by_dst[dst]))
    seg_starts[model.n_states] = len(flat)

    edge_src = np.array([e[0] for e in flat], dtype=np.int64)
    edge_logp = np.array([e[1] for e in flat])
    edge_class = np.array([e[2] for e in flat], dtype=np.int8)
    edge_dtau = np.array([e[3] for e in flat], dtype=np.float64)
    edge_dev = np.array([e[4] for e in flat])

    # per-state exit/enter log masses for the implicit uniform skip term
    log_rho_out = np.empty(model.n_states)
    log_rho_in = np.empty(model.n_states)
    with np.errstate(divide="ignore"):
        for ev in model.events:
            sl = slice(ev.state_offset, ev.state_offset + ev.n_states)
            log_rho_out[sl] = np.log(model.rho_out[ev.index])
            log_rho_in[sl] = np.log(model.rho_in[ev.index])

    # flattened self-mixture components for vectorized evaluation
    mix_state, mix_w, mix_fam, mix_loc, mix_width, mix_floor = [], [], [], [], [], []
    fam_code = {f: i for i, f in enumerate(ioi.FAMILIES)}
    for s_idx, mix in enumerate(model.self_mixtures):
        for w, spec in mix.components:
            mix_state.append(s_idx)
            mix_w.append(w)
            mix_fam.append(fam_code[spec.family])
            mix_loc.append(spec.location)
            mix_width.append(spec.width)
            mix_floor.append(spec.truncation_floor or 0.0)

    return {
        "src": edge_src,
        "logp": edge_logp,
        "class": edge_class,
        "dtau": edge_dtau,
        "dev": edge_dev,
        "seg_starts": seg_starts,
        "log_rho_out": log_rho_out,
        "log_rho_in": log_rho_in,
        "mix_state": np.array(mix_state, dtype=np.int64),
        "mix_w": np.array(mix_w),
        "mix_fam": np.array(mix_fam, dtype=np.int8),
        "mix_loc": np.array(mix_loc),
        "mix_width": np.array(mix_width),
        "mix_floor": np.array(mix_floor),
    }


def with_gamma(model: PerformanceHmm, gamma_bar: float) -> PerformanceHmm:
    """Same layout and outputs, different repeat/skip mass."""
    if gamma_bar == model.gamma_bar:
        return model
    clone = PerformanceHmm(
        events=model.events, states=model.states,
        ticks_per_quarter=model.ticks_per_quarter, v0=model.v0,
        gamma_bar=gamma_bar, error_rate=model.error_rate,
        ioi_params=model.ioi_params, metronome_qpm=model.metronome_qpm,
        rho_in=model.rho_in, rho_mat=model.rho_mat, rho_out=model.rho_out,
        pitch_logp=model.pitch_logp, self_mixtures=model.self_mixtures)
    clone.edges = _build_edges(clone)
    clone.init_logp = _initial_distribution(clone)
    return clone


# ---------------------------------------------------------------------------
# model (de)serialization

FORMAT_VERSION = 1


def save_model(model: PerformanceHmm) -> str:
    """Versioned JSON dump; derived arrays are rebuilt on load."""
    doc = {
        "format_version": FORMAT_VERSION,
        "ticks_per_quarter": model.ticks_per_quarter,
        "v0": model.v0,
        "gamma_bar": model.gamma_bar,
        "error_rate": model.error_rate,
        "metronome_qpm": model.metronome_qpm,
        "ioi_params": {name: [s.family, s.location, s.width,
                              s.truncation_floor]
                       for name, s in model.ioi_params.items()},
        "events": [[ev.index, ev.score_time, ev.end_time, ev.state_offset,
                    ev.n_states, ev.leading_grace_notes]
                   for ev in model.events],
        "states": [{
            "top": st.top_index, "sub": st.sub_index, "type": st.state_type,
            "pitches": sorted(st.pitches),
            "extra": sorted(st.extra_pitches),
            "grace": [sorted(c) for c in st.grace_chords],
            "counts": st.mixture_counts,
            "n_e": st.n_e,
            "value": st.note_value_ticks,
            "trill": list(st.trill_params) if st.trill_params else None,
            "groups": [sorted(g) for g in st.trill_groups],
            "emit": sorted(st.emit_pitches),
            "t": st.score_time, "end": st.end_time,
            "arp": st.arpeggio,
        } for st in model.states],
    }
    return json.dumps(doc)


def load_model(text: str) -> PerformanceHmm:
    doc = json.loads(text)
    if doc.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"unsupported model format {doc.get('format_version')}")
    events = [TopEvent(index=e[0], score_time=e[1], end_time=e[2],
                       state_offset=e[3], n_states=e[4],
                       leading_grace_notes=e[5]) for e in doc["events"]]
    states = [BottomState(
        top_index=s["top"], sub_index=s["sub"], state_type=s["type"],
        pitches=frozenset(s["pitches"]), extra_pitches=frozenset(s["extra"]),
        grace_chords=tuple(frozenset(c) for c in s["grace"]),
        mixture_counts={k: float(v) for k, v in s["counts"].items()},
        n_e=s["n_e"], note_value_ticks=s["value"],
        trill_params=tuple(s["trill"]) if s["trill"] else None,
        trill_groups=tuple(frozenset(g) for g in s["groups"]),
        emit_pitches=frozenset(s["emit"]),
        score_time=s["t"], end_time=s["end"], arpeggio=s["arp"],
    ) for s in doc["states"]]
    params = {name: DistSpec(f, loc, w, truncation_floor=fl)
              for name, (f, loc, w, fl) in doc["ioi_params"].items()}
    model = PerformanceHmm(events=events, states=states,
                           ticks_per_quarter=doc["ticks_per_quarter"],
                           v0=doc["v0"], gamma_bar=doc["gamma_bar"],
                           error_rate=doc["error_rate"], ioi_params=params,
                           metronome_qpm=doc["metronome_qpm"])
    _finalize(model)
    return model


# ---------------------------------------------------------------------------
# equivalence of the onset-time-state and IOI-output formulations

def loglik_equivalence_check(weights: np.ndarray, rates: np.ndarray,
                             pitch_dists: np.ndarray,
                             observations: list[tuple[int, float]],
                             initial: np.ndarray,
                             state_path: list[int]) -> tuple[float, float]:
    """Log-likelihood of (pitch, onset) data under both model formulations.

    The onset-time-state model has transition densities
    a'_{ij}(s) = weights[i,j] * rates[i,j] * exp(-rates[i,j] s) and pitch
    output b'_j(p) = pitch_dists[j, p].  The IOI-output model derives its
    transition probabilities by numerically integrating a' over s and its
    joint output density as a'(s) b'(p) / integral.  Both are evaluated
    along ``state_path`` and must agree.
    """
    from scipy.integrate import quad

    weights = np.asarray(weights, dtype=float)
    rates = np.asarray(rates, dtype=float)
    if not np.allclose(weights.sum(axis=1), 1.0, atol=1e-12):
        raise ValueError("a' does not satisfy the normalization condition")

    # formulation 1: onset times in the state space
    ll_onset = math.log(initial[state_path[0]])
    ll_onset += math.log(pitch_dists[state_path[0], observations[0][0]])
    for m in range(1, len(observations)):
        i, j = state_path[m - 1], state_path[m]
        dt = observations[m][1] - observations[m - 1][1]
        aprime = weights[i, j] * rates[i, j] * math.exp(-rates[i, j] * dt)
        ll_onset += math.log(aprime) + math.log(
            pitch_dists[j, observations[m][0]])

    # formulation 2: IOI as a transition output
    ll_ioi = math.log(initial[state_path[0]])
    ll_ioi += math.log(pitch_dists[state_path[0], observations[0][0]])
    for m in range(1, len(observations)):
        i, j = state_path[m - 1], state_path[m]
        dt = observations[m][1] - observations[m - 1][1]
        a_ij, _ = quad(
            lambda s, i=i, j=j: weights[i, j] * rates[i, j]
            * math.exp(-rates[i, j] * s),
            0, np.inf)
        aprime = weights[i, j] * rates[i, j] * math.exp(-rates[i, j] * dt)
        b_ij = aprime * pitch_dists[j, observations[m][0]] / a_ij
        ll_ioi += math.log(a_ij) + math.log(b_ij)

    return ll_onset, ll_ioi
