"""Symbolic score-performance matching toolkit.

Compiles polyphonic scores (with ornaments) into a temporal hierarchical
HMM and aligns MIDI performances against it, online or offline, with a
coupled switching-Kalman tempo tracker, a generative performance
simulator, and IOI-distribution analysis tools.
"""

__version__ = "0.1.0"

from .hmm import PerformanceHmm, compile_hmm, load_model, save_model
from .homophonize import HomophonizedSequence, homophonize
from .match import (Alignment, MatcherConfig, NoteEvent, Session,
                    align_offline, new_session)
from .score import PolyphonicScore
from .simulate import SimConfig, simulate

__all__ = [
    "Alignment",
    "HomophonizedSequence",
    "MatcherConfig",
    "NoteEvent",
    "PerformanceHmm",
    "PolyphonicScore",
    "Session",
    "SimConfig",
    "align_offline",
    "compile_hmm",
    "homophonize",
    "load_model",
    "new_session",
    "save_model",
    "simulate",
]
