import math

import numpy as np
import pytest

from scorefollow import hmm as hmm_mod
from scorefollow import ioi
from scorefollow.hmm import (
    KERNEL_WEIGHTS, BottomState, bottom_params, build_pitch_output,
    compile_hmm, expand_hierarchical, load_model, loglik_equivalence_check,
    save_model, self_transition_from_expected, trill_expected_notes,
    with_gamma)

from helpers import build_model, build_plain_model


def random_hierarchy(rng):
    """Random top matrix plus per-event bottom parameters."""
    n_events = int(rng.integers(2, 6))
    A = rng.uniform(0.05, 1.0, size=(n_events, n_events))
    A /= A.sum(axis=1, keepdims=True)
    rho_in, rho_mat, rho_out = [], [], []
    for _ in range(n_events):
        k = int(rng.integers(1, 4))
        rho_self = rng.uniform(0.1, 0.9, size=k)
        rin, rmat, rout = bottom_params(k, rho_self)
        rho_in.append(rin)
        rho_mat.append(rmat)
        rho_out.append(rout)
    return A, rho_in, rho_mat, rho_out


def expansion_deviation(n_draws=100, seed=11):
    """Worst deviation from the product-form identity and row-stochasticity."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_draws):
        A, rho_in, rho_mat, rho_out = random_hierarchy(rng)
        M = expand_hierarchical(A, rho_in, rho_mat, rho_out)
        worst = max(worst, float(np.abs(M.sum(axis=1) - 1.0).max()))
        offsets = np.cumsum([0] + [len(r) for r in rho_in])
        for I in range(len(rho_in)):
            for J in range(len(rho_in)):
                for k in range(len(rho_in[I])):
                    for l in range(len(rho_in[J])):
                        want = rho_out[I][k] * A[I, J] * rho_in[J][l]
                        if I == J:
                            want += rho_mat[I][k, l]
                        got = M[offsets[I] + k, offsets[J] + l]
                        worst = max(worst, abs(got - want))
    return worst


def test_expansion_identity_and_stochasticity():
    assert expansion_deviation() <= 1e-9


def random_equivalence_instance(rng):
    k = int(rng.integers(2, 6))
    n_pitch = 6
    weights = rng.uniform(0.1, 1.0, size=(k, k))
    weights /= weights.sum(axis=1, keepdims=True)
    rates = rng.uniform(0.3, 5.0, size=(k, k))
    pitch_dists = rng.uniform(0.05, 1.0, size=(k, n_pitch))
    pitch_dists /= pitch_dists.sum(axis=1, keepdims=True)
    initial = rng.uniform(0.1, 1.0, size=k)
    initial /= initial.sum()
    m = int(rng.integers(2, 7))
    path = [int(rng.integers(0, k)) for _ in range(m)]
    t = 0.0
    obs = []
    for _ in range(m):
        obs.append((int(rng.integers(0, n_pitch)), t))
        t += float(rng.uniform(0.05, 1.5))
    return weights, rates, pitch_dists, obs, initial, path


def equivalence_deviation(n_models=100, seed=5):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_models):
        args = random_equivalence_instance(rng)
        ll_onset, ll_ioi = loglik_equivalence_check(*args)
        worst = max(worst, abs(ll_onset - ll_ioi))
    return worst


def test_model_formulations_equivalent():
    assert equivalence_deviation() <= 1e-9


def test_self_transition_formula():
    assert self_transition_from_expected(2.0) == pytest.approx(0.5)
    n_e = trill_expected_notes(10, 0.001, 480, 0.085)
    assert n_e == pytest.approx(10 * 0.001 * 480 / 0.085)


def test_top_matrix_rows_stochastic():
    model = build_model(12)
    A = model.top_matrix()
    assert np.allclose(A.sum(axis=1), 1.0, atol=1e-12)
    assert np.all(A >= model.gamma_bar * 0.999)
    # forward step dominates
    for i in range(len(A) - 1):
        assert A[i, i + 1] == A[i].max()


def test_expanded_matrix_stochastic():
    model = build_model(8)
    M = model.expanded_matrix()
    assert np.allclose(M.sum(axis=1), 1.0, atol=1e-9)


def test_pitch_output_normalized_and_peaked():
    out = build_pitch_output(frozenset({60, 64, 67}), 0.01, frozenset())
    assert out.sum() == pytest.approx(1.0, abs=1e-12)
    assert out[60] == pytest.approx((1 - 0.01) / 3)
    out0 = build_pitch_output(frozenset({60}), 0.0, frozenset())
    assert out0[60] == pytest.approx(1.0)


def test_pitch_output_extra_pitches():
    out = build_pitch_output(frozenset({60}), 0.0, frozenset({72}))
    assert out[72] == pytest.approx(0.005)
    assert out.sum() == pytest.approx(1.0, abs=1e-12)


def test_state_segmentation_shapes():
    model = build_model(20)
    assert model.n_events == 20
    # trill events contribute SA + TR, grace events an extra SA state
    assert model.n_states > model.n_events
    types = {st.state_type for st in model.states}
    assert types == {"CH", "SA", "TR"}
    for ev in model.events:
        subs = [model.states[ev.state_offset + k].sub_index
                for k in range(ev.n_states)]
        assert subs == list(range(ev.n_states))


def test_save_load_round_trip():
    model = build_model(10)
    again = load_model(save_model(model))
    assert again.n_states == model.n_states
    assert again.gamma_bar == model.gamma_bar
    np.testing.assert_allclose(again.pitch_logp, model.pitch_logp)
    np.testing.assert_allclose(again.init_logp, model.init_logp)
    for key in ("src", "logp", "class", "dtau", "dev", "seg_starts"):
        np.testing.assert_allclose(again.edges[key], model.edges[key])
    for a, b in zip(again.states, model.states):
        assert a.pitches == b.pitches
        assert a.state_type == b.state_type
        assert a.trill_groups == b.trill_groups


def test_with_gamma_rescales_uniform_mass():
    model = build_plain_model([60, 64, 67, 72])
    other = with_gamma(model, math.exp(-20.0))
    assert other.gamma_bar == math.exp(-20.0)
    assert other.n_states == model.n_states
    A = other.top_matrix()
    assert np.allclose(A.sum(axis=1), 1.0, atol=1e-12)


def test_gamma_too_large_rejected():
    with pytest.raises(ValueError):
        build_plain_model([60, 64], gamma_bar=0.6)


def test_kernel_weights_forward_biased():
    assert max(KERNEL_WEIGHTS, key=KERNEL_WEIGHTS.get) == 1
    assert sum(KERNEL_WEIGHTS.values()) == pytest.approx(1.0)
