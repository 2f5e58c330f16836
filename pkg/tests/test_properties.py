"""Property-based tests for the numeric building blocks."""
import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from scorefollow.hmm import (
    bottom_params, build_pitch_output, expand_hierarchical,
    self_transition_from_expected)
from scorefollow.midi import _read_vlq, _vlq
from scorefollow.score import check_pitch


@st.composite
def hierarchies(draw):
    n_events = draw(st.integers(2, 5))
    a = draw(st.lists(
        st.lists(st.floats(0.05, 1.0), min_size=n_events, max_size=n_events),
        min_size=n_events, max_size=n_events))
    A = np.array(a)
    A /= A.sum(axis=1, keepdims=True)
    rho_in, rho_mat, rho_out = [], [], []
    for _ in range(n_events):
        k = draw(st.integers(1, 3))
        rho_self = np.array(draw(st.lists(
            st.floats(0.05, 0.95), min_size=k, max_size=k)))
        rin, rmat, rout = bottom_params(k, rho_self)
        rho_in.append(rin)
        rho_mat.append(rmat)
        rho_out.append(rout)
    return A, rho_in, rho_mat, rho_out


@given(hierarchies())
@settings(max_examples=60, deadline=None)
def test_expansion_always_row_stochastic(h):
    A, rho_in, rho_mat, rho_out = h
    M = expand_hierarchical(A, rho_in, rho_mat, rho_out)
    assert np.all(M >= -1e-15)
    np.testing.assert_allclose(M.sum(axis=1), 1.0, atol=1e-9)


@given(st.sets(st.integers(10, 110), min_size=1, max_size=6),
       st.floats(0.0, 0.2))
@settings(max_examples=80, deadline=None)
def test_pitch_output_is_distribution(pitches, err):
    out = build_pitch_output(frozenset(pitches), err, frozenset())
    assert np.all(out >= 0)
    assert abs(out.sum() - 1.0) <= 1e-9
    peak = (1.0 - err) / len(pitches)
    for p in pitches:
        assert out[p] >= peak - 1e-12


@given(st.floats(1.01, 1e6))
@settings(max_examples=100, deadline=None)
def test_self_transition_in_unit_interval(n_e):
    rho = self_transition_from_expected(n_e)
    assert 0.0 < rho < 1.0


@given(st.integers(0, 0x0FFFFFFF))
@settings(max_examples=200, deadline=None)
def test_vlq_round_trip(value):
    data = _vlq(value)
    got, consumed = _read_vlq(data, 0)
    assert got == value
    assert consumed == len(data)


@given(st.integers(0, 127))
def test_check_pitch_accepts_valid(p):
    assert check_pitch(p) == p
