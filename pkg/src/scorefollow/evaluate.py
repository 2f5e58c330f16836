"""Note-level and score-time-level matching error rates and reports."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

from .match import Alignment


@dataclass
class EvalReport:
    piece_id: str
    onset_count: int
    note_level_error: float  # percent
    scoretime_level_error: float  # percent
    class_breakdown: dict[str, tuple[int, int]] = field(default_factory=dict)
    skip_episodes: int = 0

    def to_tsv(self) -> str:
        lines = ["piece\tonsets\tnote_error_pct\tscoretime_error_pct"
                 "\tskip_episodes"]
        lines.append(f"{self.piece_id}\t{self.onset_count}"
                     f"\t{self.note_level_error:.3f}"
                     f"\t{self.scoretime_level_error:.3f}"
                     f"\t{self.skip_episodes}")
        lines.append("state_type\terrors\tcount")
        for ty in sorted(self.class_breakdown):
            e, c = self.class_breakdown[ty]
            lines.append(f"{ty}\t{e}\t{c}")
        return "\n".join(lines) + "\n"


def _check_index(pred: Alignment, truth: Alignment) -> None:
    if len(pred.rows) != len(truth.rows):
        raise ValueError(f"alignment lengths differ: {len(pred.rows)} vs "
                         f"{len(truth.rows)}")
    for p, t in zip(pred.rows, truth.rows):
        if p.note_index != t.note_index:
            raise ValueError(f"note index mismatch at {p.note_index} vs "
                             f"{t.note_index}")


def _row_correct(p, t, *, scoretime: bool) -> bool:
    if t.unmatched:
        # notes without a true score note count as correct when the
        # prediction lands on any listed candidate event
        return p.top_index in t.candidates
    if scoretime:
        return p.score_time == t.score_time
    return (p.top_index, p.sub_index) == (t.top_index, t.sub_index)


def note_error_rate(pred: Alignment, truth: Alignment) -> float:
    """Percent of notes assigned to the wrong (I, k) state."""
    _check_index(pred, truth)
    wrong = sum(not _row_correct(p, t, scoretime=False)
                for p, t in zip(pred.rows, truth.rows))
    return 100.0 * wrong / len(pred.rows)


def scoretime_error_rate(pred: Alignment, truth: Alignment) -> float:
    """Percent of notes assigned a wrong score time (coarser than note level)."""
    _check_index(pred, truth)
    wrong = sum(not _row_correct(p, t, scoretime=True)
                for p, t in zip(pred.rows, truth.rows))
    return 100.0 * wrong / len(pred.rows)


def build_report(piece_id: str, pred: Alignment, truth: Alignment) -> EvalReport:
    _check_index(pred, truth)
    errors: Counter[str] = Counter()
    counts: Counter[str] = Counter()
    skip_episodes = 0
    prev_top = None
    for p, t in zip(pred.rows, truth.rows):
        counts[t.state_type] += 1
        if not _row_correct(p, t, scoretime=False):
            errors[t.state_type] += 1
        if prev_top is not None and abs(t.top_index - prev_top) > 4:
            skip_episodes += 1
        prev_top = t.top_index
    return EvalReport(
        piece_id=piece_id,
        onset_count=len(pred.rows),
        note_level_error=note_error_rate(pred, truth),
        scoretime_level_error=scoretime_error_rate(pred, truth),
        class_breakdown={ty: (errors[ty], counts[ty]) for ty in counts},
        skip_episodes=skip_episodes)
