"""Online and offline Viterbi decoding with coupled tempo tracking.

All lattice math is in the log domain.  Per performed note the decoder
evaluates the explicit neighborhood edges plus one implicit uniform term
that covers arbitrary repeats and skips: the global maximum of
(previous score + log rho_out) is computed once and combined with
gamma_bar, the per-state entering probability, and the skip IOI density,
keeping each update O(states x window).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import ioi, tempo
from .hmm import (CLASS_NAMES, IMMEDIATE, INSERTION, METRIC, SELF, SKIP,
                  PerformanceHmm, with_gamma)

LOG_FLOOR = math.log(1e-12)

ONLINE_DEFAULTS = (math.exp(-20.0), 0.4)
OFFLINE_DEFAULTS = (math.exp(-40.0), 0.3)


@dataclass(frozen=True)
class NoteEvent:
    pitch: int
    onset: float  # seconds
    index: int = 0

    def __post_init__(self):
        if not 0 <= self.pitch < 128:
            raise ValueError(f"pitch out of range: {self.pitch}")
        if self.onset < 0:
            raise ValueError("onset must be non-negative")


@dataclass(frozen=True)
class MatcherConfig:
    mode: str = "offline"  # online | offline
    gamma_bar: float = OFFLINE_DEFAULTS[0]
    delta_width: float = OFFLINE_DEFAULTS[1]  # seconds
    skip_floor: float = 0.3  # seconds

    def __post_init__(self):
        if self.mode not in ("online", "offline"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if not 0.0 < self.gamma_bar < 1.0:
            raise ValueError("gamma_bar must be in (0, 1)")
        if self.delta_width <= 0:
            raise ValueError("delta_width must be positive")
        if self.skip_floor < 0:
            raise ValueError("skip_floor must be non-negative")

    @classmethod
    def online(cls, **kw):
        g, d = ONLINE_DEFAULTS
        kw.setdefault("gamma_bar", g)
        kw.setdefault("delta_width", d)
        return cls(mode="online", **kw)


@dataclass(frozen=True)
class OnlineEstimate:
    note_index: int
    top_index: int
    sub_index: int
    score_time: int  # ticks
    tempo: float  # v hat, s/tick
    logodds: float  # margin over the runner-up state


@dataclass(frozen=True)
class AlignmentRow:
    note_index: int
    onset: float
    pitch: int
    top_index: int
    sub_index: int
    state_type: str
    score_time: int
    transition_class: str
    logodds: float
    unmatched: bool = False
    candidates: tuple[int, ...] = ()  # acceptable top indices if unmatched


@dataclass
class Alignment:
    rows: list[AlignmentRow] = field(default_factory=list)

    HEADER = ("m\tonset_s\tpitch\ttop_I\tsub_k\tstate_type"
              "\tscore_time_ticks\tclass\tlogodds")

    def to_tsv(self) -> str:
        lines = [self.HEADER]
        for r in self.rows:
            top = "-1" if r.unmatched and r.top_index < 0 else str(r.top_index)
            if r.unmatched:
                top += "?" + ",".join(str(c) for c in r.candidates)
            lines.append(f"{r.note_index}\t{r.onset:.6f}\t{r.pitch}\t{top}"
                         f"\t{r.sub_index}\t{r.state_type}\t{r.score_time}"
                         f"\t{r.transition_class}\t{r.logodds:.6g}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_tsv(cls, text: str) -> "Alignment":
        rows = []
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines or not lines[0].startswith("m\t"):
            raise ValueError("missing alignment header")
        for ln in lines[1:]:
            f = ln.split("\t")
            if len(f) != 9:
                raise ValueError(f"bad alignment row: {ln!r}")
            top_field = f[3]
            unmatched = "?" in top_field
            candidates: tuple[int, ...] = ()
            if unmatched:
                top_s, cand_s = top_field.split("?", 1)
                candidates = tuple(int(c) for c in cand_s.split(",") if c)
                top = int(top_s)
            else:
                top = int(top_field)
            rows.append(AlignmentRow(
                note_index=int(f[0]), onset=float(f[1]), pitch=int(f[2]),
                top_index=top, sub_index=int(f[4]), state_type=f[5],
                score_time=int(f[6]), transition_class=f[7],
                logodds=float(f[8]), unmatched=unmatched,
                candidates=candidates))
        return cls(rows)


class Session:
    """Single-threaded decoding session over an immutable PerformanceHmm."""

    def __init__(self, hmm: PerformanceHmm, config: MatcherConfig,
                 tempo_params: tempo.TempoParams | None = None):
        if config.gamma_bar != hmm.gamma_bar:
            hmm = with_gamma(hmm, config.gamma_bar)
        self.hmm = hmm
        self.config = config
        self.tempo_params = tempo_params or tempo.TempoParams(
            v0=hmm.v0, ticks_per_quarter=hmm.ticks_per_quarter)
        self.tempo_state = tempo.init(self.tempo_params)
        self.tempo_track = tempo.TempoTrack()

        n = hmm.n_states
        e = hmm.edges
        self._seg_starts = e["seg_starts"]
        self._edge_src = e["src"]
        self._edge_logp = e["logp"]
        self._edge_dtau = e["dtau"]
        self._edge_dev = e["dev"]
        self._edge_class = e["class"]
        self._edge_index = np.arange(len(e["src"]), dtype=np.int64)
        self._seg_ids = np.repeat(np.arange(n),
                                  np.diff(self._seg_starts))
        self._idx_by_class = [np.nonzero(e["class"] == c)[0]
                              for c in range(5)]
        # immediate transitions into a TR state happen one alternation
        # strike after the onset, so the trill family fits them, not the
        # grace-note family
        state_types = np.array([s.state_type for s in hmm.states])
        seg_ids = np.repeat(np.arange(n), np.diff(e["seg_starts"]))
        imm = self._idx_by_class[IMMEDIATE]
        into_tr = state_types[seg_ids[imm]] == "TR"
        self._idx_imm_tr = imm[into_tr]
        self._idx_imm_plain = imm[~into_tr]
        self._log_rho_out = e["log_rho_out"]
        self._log_rho_in = e["log_rho_in"]
        self._mix_starts = np.searchsorted(e["mix_state"], np.arange(n + 1))
        self._mix_w = e["mix_w"]
        self._mix_fam = e["mix_fam"]
        self._mix_loc = e["mix_loc"]
        self._mix_width = e["mix_width"]
        self._mix_floor = e["mix_floor"]
        self._mix_lognorm = ioi.batch_log_norm(
            self._mix_fam, self._mix_loc, self._mix_width, self._mix_floor)
        self._init_hot_path()

        skip_spec = replace(hmm.ioi_params["skip"],
                            truncation_floor=config.skip_floor)
        self._skip = _scalar_family(skip_spec)
        self._imm = _scalar_family(hmm.ioi_params["short_app"])
        self._trill = _scalar_family(hmm.ioi_params["trill"])
        self._log_gamma = math.log(config.gamma_bar)

        self.scores: np.ndarray | None = None
        self.backpointers: list[np.ndarray] = []
        self.chosen_class: list[np.ndarray] = []
        self.events_fed: list[NoteEvent] = []
        self.estimates: list[OnlineEstimate] = []
        self._last_top: int | None = None
        self._last_top_time: float = 0.0
        self._last_top_score_time: int = 0
        self._prev_nu: float = float(self.tempo_params.ticks_per_quarter)

    # -- public API ---------------------------------------------------------

    @property
    def current_estimate(self) -> OnlineEstimate | None:
        """None until the first note is fed."""
        return self.estimates[-1] if self.estimates else None

    def feed(self, ev: NoteEvent) -> OnlineEstimate:
        if self.events_fed and ev.onset < self.events_fed[-1].onset - 1e-12:
            raise ValueError(
                f"out-of-order onset {ev.onset} after "
                f"{self.events_fed[-1].onset}")
        hmm = self.hmm
        pitch_col = hmm.pitch_logp[:, ev.pitch]
        if self.scores is None:
            self.scores = hmm.init_logp + pitch_col
            self.backpointers.append(
                np.full(hmm.n_states, -1, dtype=np.int32))
            self.chosen_class.append(
                np.full(hmm.n_states, -1, dtype=np.int8))
        else:
            dt = ev.onset - self.events_fed[-1].onset
            self._advance(dt, pitch_col)
        self.events_fed.append(ev)
        return self._emit(ev)

    def finalize(self) -> tuple[Alignment, tempo.TempoTrack]:
        if not self.events_fed:
            raise ValueError("no notes fed")
        if self.config.mode == "online":
            rows = [self._row_for(est.top_index, est.sub_index, m, est.logodds)
                    for m, est in enumerate(self.estimates)]
        else:
            rows = self._backtrace()
        return Alignment(rows), self.tempo_track

    # -- internals ----------------------------------------------------------

    def _init_hot_path(self) -> None:
        """Precompute contiguous arrays and scratch buffers for feed()."""
        n_edges = len(self._edge_src)
        n = self.hmm.n_states
        # per-edge density code: 0 self-mixture, 1 immediate, 2 immediate
        # into TR, 3 gap (insertion/skip share b_skip), 4 metric
        code = np.empty(n_edges, dtype=np.intp)
        code[self._idx_by_class[SELF]] = 0
        code[self._idx_imm_plain] = 1
        code[self._idx_imm_tr] = 2
        code[self._idx_by_class[INSERTION]] = 3
        code[self._idx_by_class[SKIP]] = 3
        code[self._idx_by_class[METRIC]] = 4
        self._edge_code = code
        self._dens_lut = np.zeros(5)
        self._idx_self = self._idx_by_class[SELF]
        self._src_self = self._edge_src[self._idx_self].copy()
        mi = self._idx_by_class[METRIC]
        self._idx_metric = mi
        self._dtau_metric = self._edge_dtau[mi].astype(float)
        self._dev_metric = self._edge_dev[mi].copy()
        self._dens_buf = np.empty(n_edges)
        self._val_buf = np.empty(n_edges)
        self._u_buf = np.empty(len(mi))
        self._seg_max_buf = np.empty(n)
        self._exit_buf = np.empty(n)
        self._red_idx = self._seg_starts[:-1]

        # mixture components grouped by family, contiguous copies
        fam = self._mix_fam
        log_sqrt_2pi = 0.5 * math.log(2.0 * math.pi)
        self._mix_gi = np.nonzero(fam == 0)[0]
        self._mix_hi = np.nonzero(fam == 1)[0]
        self._mix_ci = np.nonzero(fam == 2)[0]
        self._g_loc = self._mix_loc[self._mix_gi].copy()
        self._g_w = self._mix_width[self._mix_gi].copy()
        self._g_const = (-np.log(self._g_w) - log_sqrt_2pi
                         - self._mix_lognorm[self._mix_gi])
        self._h_loc = self._mix_loc[self._mix_hi].copy()
        self._h_w = self._mix_width[self._mix_hi].copy()
        self._h_const = np.log(self._h_w) - self._mix_lognorm[self._mix_hi]
        self._c_loc = self._mix_loc[self._mix_ci].copy()
        self._c_w = self._mix_width[self._mix_ci].copy()
        self._c_const = (-np.log(math.pi * self._c_w)
                         - self._mix_lognorm[self._mix_ci])
        self._mix_fidx = np.nonzero(self._mix_floor > 0)[0]
        self._mix_fvals = self._mix_floor[self._mix_fidx].copy()
        self._mix_lp = np.empty(len(fam))
        self._mix_ps = np.empty(n)
        self._g_buf = np.empty(len(self._mix_gi))
        self._h_buf = np.empty(len(self._mix_hi))
        self._c_buf = np.empty(len(self._mix_ci))

    def _advance(self, dt: float, pitch_col: np.ndarray) -> None:
        prev = self.scores
        log_b_imm = max(self._imm(dt), LOG_FLOOR)
        log_b_skip = max(self._skip(dt), LOG_FLOOR)
        lut = self._dens_lut
        lut[1] = log_b_imm
        lut[2] = max(self._trill(dt), LOG_FLOOR)
        lut[3] = log_b_skip
        dens = self._dens_buf
        np.take(lut, self._edge_code, out=dens)

        mixlog = self._mixture_logpdf(dt)
        dens[self._idx_self] = mixlog[self._src_self]

        v_hat = tempo.estimate(self.tempo_state, self.tempo_params)
        delta = self.config.delta_width
        u = self._u_buf
        np.multiply(self._dtau_metric, -v_hat, out=u)
        u += dt
        u -= self._dev_metric
        u /= delta
        np.multiply(u, u, out=u)
        np.log1p(u, out=u)
        np.negative(u, out=u)
        u -= math.log(math.pi * delta)
        np.maximum(u, LOG_FLOOR, out=u)
        dens[self._idx_metric] = u

        val = self._val_buf
        np.take(prev, self._edge_src, out=val)
        val += self._edge_logp
        val += dens
        seg_max = np.maximum.reduceat(val, self._red_idx,
                                      out=self._seg_max_buf)

        # implicit uniform repeat/skip route
        exit_score = np.add(prev, self._log_rho_out, out=self._exit_buf)
        g_src = int(np.argmax(exit_score))
        g_base = exit_score[g_src] + self._log_gamma + log_b_skip
        g_cand = g_base + self._log_rho_in

        best = np.maximum(seg_max, g_cand)
        if self.config.mode == "offline":
            # deterministic argmax: lowest edge index (edges sorted by src)
            masked = np.where(val >= seg_max[self._seg_ids],
                              self._edge_index, len(val))
            first_edge = np.minimum.reduceat(masked, self._red_idx)
            use_edge = seg_max >= g_cand
            clipped = np.minimum(first_edge, len(val) - 1)
            bp = np.where(use_edge, self._edge_src[clipped],
                          g_src).astype(np.int32)
            cls = np.where(use_edge, self._edge_class[clipped],
                           SKIP).astype(np.int8)
            self.backpointers.append(bp)
            self.chosen_class.append(cls)
        self.scores = best + pitch_col

    def _mixture_logpdf(self, dt: float) -> np.ndarray:
        lp = self._mix_lp
        if self._mix_gi.size:
            u = np.subtract(dt, self._g_loc, out=self._g_buf)
            u /= self._g_w
            np.multiply(u, u, out=u)
            u *= -0.5
            u += self._g_const
            lp[self._mix_gi] = u
        if self._mix_hi.size:
            u = np.subtract(self._h_loc, dt, out=self._h_buf)
            u *= self._h_w
            u += self._h_const
            np.copyto(u, -np.inf, where=self._h_loc > dt)
            lp[self._mix_hi] = u
        if self._mix_ci.size:
            u = np.subtract(dt, self._c_loc, out=self._c_buf)
            u /= self._c_w
            np.multiply(u, u, out=u)
            np.log1p(u, out=u)
            np.subtract(self._c_const, u, out=u)
            lp[self._mix_ci] = u
        if self._mix_fidx.size:
            lp[self._mix_fidx[dt < self._mix_fvals]] = -np.inf
        np.exp(lp, out=lp)
        lp *= self._mix_w
        per_state = np.add.reduceat(lp, self._mix_starts[:-1],
                                    out=self._mix_ps)
        with np.errstate(divide="ignore"):
            return np.maximum(np.log(per_state, out=per_state), LOG_FLOOR,
                              out=per_state)

    def _emit(self, ev: NoteEvent) -> OnlineEstimate:
        scores = self.scores
        best = int(np.argmax(scores))
        if scores.shape[0] > 1:
            runner = np.partition(scores, -2)[-2]
        else:
            runner = -np.inf
        margin = float(scores[best] - runner)
        st = self.hmm.states[best]

        if self._last_top is None:
            self._last_top = st.top_index
            self._last_top_time = ev.onset
            self._last_top_score_time = st.score_time
        elif st.top_index != self._last_top:
            nu = st.score_time - self._last_top_score_time
            dt = ev.onset - self._last_top_time
            if nu > 0 and dt > 0:
                self.tempo_state = tempo.step(
                    self.tempo_state, self._prev_nu, float(nu), dt,
                    self.tempo_params)
                self._prev_nu = float(nu)
                v_hat = tempo.estimate(self.tempo_state, self.tempo_params)
                self.tempo_track.append(
                    len(self.events_fed) - 1, ev.onset, float(nu), v_hat,
                    self.tempo_state.regime_posterior[0])
            self._last_top = st.top_index
            self._last_top_time = ev.onset
            self._last_top_score_time = st.score_time

        est = OnlineEstimate(
            note_index=len(self.events_fed) - 1, top_index=st.top_index,
            sub_index=st.sub_index, score_time=st.score_time,
            tempo=tempo.estimate(self.tempo_state, self.tempo_params),
            logodds=margin)
        self.estimates.append(est)
        return est

    def _row_for(self, top: int, sub: int, m: int,
                 logodds: float, cls: int = -1) -> AlignmentRow:
        ev = self.events_fed[m]
        offset = self.hmm.events[top].state_offset
        st = self.hmm.states[offset + sub]
        return AlignmentRow(
            note_index=m, onset=ev.onset, pitch=ev.pitch,
            top_index=top, sub_index=sub, state_type=st.state_type,
            score_time=st.score_time,
            transition_class=CLASS_NAMES[cls] if cls >= 0 else "initial",
            logodds=logodds)

    def _backtrace(self) -> list[AlignmentRow]:
        M = len(self.events_fed)
        path = np.empty(M, dtype=np.int64)
        path[-1] = int(np.argmax(self.scores))
        for m in range(M - 1, 0, -1):
            path[m - 1] = self.backpointers[m][path[m]]
        rows = []
        for m in range(M):
            s = int(path[m])
            st = self.hmm.states[s]
            cls = int(self.chosen_class[m][s])
            rows.append(self._row_for(st.top_index, st.sub_index, m,
                                      self.estimates[m].logodds, cls))
        return rows

    def path_logprob(self) -> float:
        """Log probability of the best path ending anywhere (offline score)."""
        if self.scores is None:
            raise ValueError("no notes fed")
        return float(np.max(self.scores))


def _scalar_family(spec: ioi.DistSpec):
    """Fast scalar log-pdf closure for one DistSpec (decoder hot path)."""
    fam = np.array([ioi.FAMILIES.index(spec.family)], dtype=np.int8)
    loc = float(spec.location)
    width = float(spec.width)
    floor = float(spec.truncation_floor or 0.0)
    lognorm = float(ioi.batch_log_norm(fam, np.array([loc]),
                                       np.array([width]),
                                       np.array([floor]))[0])
    log_sqrt_2pi = 0.5 * math.log(2.0 * math.pi)
    code = int(fam[0])

    def logpdf(dt: float) -> float:
        if dt < floor:
            return -math.inf
        if code == 0:
            u = (dt - loc) / width
            return -0.5 * u * u - math.log(width) - log_sqrt_2pi - lognorm
        if code == 1:
            if dt < loc:
                return -math.inf
            return math.log(width) - width * (dt - loc) - lognorm
        u = (dt - loc) / width
        return -math.log(math.pi * width * (1.0 + u * u)) - lognorm

    return logpdf


def new_session(hmm: PerformanceHmm, config: MatcherConfig,
                tempo_params: tempo.TempoParams | None = None) -> Session:
    return Session(hmm, config, tempo_params)


def align_offline(hmm: PerformanceHmm, events: list[NoteEvent],
                  config: MatcherConfig | None = None,
                  tempo_params: tempo.TempoParams | None = None,
                  ) -> tuple[Alignment, tempo.TempoTrack]:
    """Feed-loop + finalize over a complete performance."""
    if not events:
        raise ValueError("empty event list")
    session = new_session(hmm, config or MatcherConfig(), tempo_params)
    for ev in events:
        session.feed(ev)
    return session.finalize()
