import numpy as np
import pytest

from nmtlab import autodiff as ad
from nmtlab.attention import (
    AlignmentMatrix, AttentionState, AttentionVariant,
    attend, attend_base, attend_hybrid1, attend_hybrid2, attend_recatt,
    attend_rnnatt, advance_attention_state, collect_alignment, conv_features,
    init_attention_state, init_attention_variant, precompute, rnnatt_update,
)
from nmtlab.encoder import EncoderStates
from nmtlab.errors import ConfigError, ContractError

from conftest import fd_gradient, max_rel_err

HIDDEN = 3          # per direction; encoder states have dim 6
ALIGN = 4
QDIM = 3
GDIM = 2


def make_enc(S):
    """EncoderStates straight from a (T, 2*hidden) matrix."""
    S = np.asarray(S, dtype=np.float64)
    states = [ad.constant(row) for row in S]
    return EncoderStates(fwd=[], bwd=[], states=states, stacked=ad.constant(S))


def make_variant(rng, tag):
    return init_attention_variant(rng, tag, hidden=HIDDEN, align_dim=ALIGN,
                                  q_dim=QDIM, g_dim=GDIM, kernel_width=3)


def zero_like(t):
    return ad.parameter(np.zeros_like(t.data))


def oracle_scores(h, S, var, extra_vec=None, extra_rows=None):
    """Position-by-position score loop, independent of the batched path."""
    T = S.shape[0]
    e = np.zeros(T)
    for j in range(T):
        pre = var.w_a.data @ h + var.u_a.data @ S[j]
        if extra_vec is not None:
            pre = pre + extra_vec
        if extra_rows is not None:
            pre = pre + extra_rows[j]
        e[j] = var.v.data @ np.tanh(pre)
    return e


def oracle_softmax_context(e, S):
    w = np.exp(e - e.max())
    w /= w.sum()
    c = np.zeros(S.shape[1])
    for j in range(S.shape[0]):
        c += w[j] * S[j]
    return w, c


# ---------------------------------------------------------------------------
# base


def test_base_single_state_is_forced(rng):
    var = make_variant(rng, "base")
    S = rng.uniform(-1, 1, size=(1, 6))
    w, c = attend_base(ad.constant(rng.uniform(-1, 1, 3)), make_enc(S), var)
    np.testing.assert_array_equal(w.data, [1.0])
    np.testing.assert_allclose(c.data, S[0], atol=1e-15)


def test_base_zero_score_vector_gives_uniform(rng):
    var = make_variant(rng, "base")
    var.v.data[:] = 0.0
    S = rng.uniform(-1, 1, size=(4, 6))
    w, c = attend_base(ad.constant(rng.uniform(-1, 1, 3)), make_enc(S), var)
    np.testing.assert_allclose(w.data, np.full(4, 0.25), atol=1e-15)
    np.testing.assert_allclose(c.data, S.mean(axis=0), atol=1e-12)


def test_base_matches_direct_summation_oracle(rng):
    var = make_variant(rng, "base")
    S = rng.uniform(-1, 1, size=(3, 6))
    h = rng.uniform(-1, 1, 3)
    w, c = attend_base(ad.constant(h), make_enc(S), var)
    ew = oracle_scores(h, S, var)
    ow, oc = oracle_softmax_context(ew, S)
    np.testing.assert_allclose(w.data, ow, atol=1e-12)
    np.testing.assert_allclose(c.data, oc, atol=1e-12)


# ---------------------------------------------------------------------------
# recatt


def test_recatt_zero_context_matrix_reduces_to_base(rng):
    for _ in range(20):
        var = make_variant(rng, "recatt")
        var.v_a.data[:] = 0.0
        S = rng.uniform(-1, 1, size=(int(rng.integers(1, 6)), 6))
        h = ad.constant(rng.uniform(-1, 1, 3))
        c_prev = ad.constant(rng.uniform(-1, 1, 6))
        enc = make_enc(S)
        w_rec, c_rec = attend_recatt(h, c_prev, enc, var)
        w_base, c_base = attend_base(h, enc, var)
        np.testing.assert_allclose(w_rec.data, w_base.data, atol=1e-12)
        np.testing.assert_allclose(c_rec.data, c_base.data, atol=1e-12)


def test_recatt_single_state(rng):
    var = make_variant(rng, "recatt")
    S = rng.uniform(-1, 1, size=(1, 6))
    w, _ = attend_recatt(ad.constant(rng.uniform(-1, 1, 3)),
                         ad.constant(rng.uniform(-1, 1, 6)), make_enc(S), var)
    np.testing.assert_array_equal(w.data, [1.0])


def test_recatt_matches_stated_formula(rng):
    var = make_variant(rng, "recatt")
    S = rng.uniform(-1, 1, size=(4, 6))
    h = rng.uniform(-1, 1, 3)
    c_prev = rng.uniform(-1, 1, 6)
    w, c = attend_recatt(ad.constant(h), ad.constant(c_prev), make_enc(S), var)
    ew = oracle_scores(h, S, var, extra_vec=var.v_a.data @ c_prev)
    ow, oc = oracle_softmax_context(ew, S)
    np.testing.assert_allclose(w.data, ow, atol=1e-12)
    np.testing.assert_allclose(c.data, oc, atol=1e-12)


# ---------------------------------------------------------------------------
# rnnatt


def test_rnnatt_zero_cell_keeps_zero_state(rng):
    var = make_variant(rng, "rnnatt")
    for t in var.att_rnn.named("x").values():
        t.data[:] = 0.0
    q0 = ad.constant(np.zeros(QDIM))
    q1 = rnnatt_update(q0, ad.constant(rng.uniform(-1, 1, 3)),
                       ad.constant(rng.uniform(-1, 1, 6)), var)
    np.testing.assert_array_equal(q1.data, np.zeros(QDIM))


def test_rnnatt_single_state_context(rng):
    var = make_variant(rng, "rnnatt")
    S = rng.uniform(-1, 1, size=(1, 6))
    _, c = attend_rnnatt(ad.constant(rng.uniform(-1, 1, QDIM)), make_enc(S), var)
    np.testing.assert_allclose(c.data, S[0], atol=1e-15)


def test_rnnatt_two_step_unroll_matches_manual_chain(rng):
    var = make_variant(rng, "rnnatt")
    S = rng.uniform(-1, 1, size=(3, 6))
    enc = make_enc(S)
    h0, h1 = rng.uniform(-1, 1, 3), rng.uniform(-1, 1, 3)

    q = ad.constant(np.zeros(QDIM))
    w1, c1 = attend_rnnatt(q, enc, var)
    q1 = rnnatt_update(q, ad.constant(h0), c1, var)
    w2, c2 = attend_rnnatt(q1, enc, var)
    q2 = rnnatt_update(q1, ad.constant(h1), c2, var)

    # manual chain in plain numpy
    def sig(v):
        return 1.0 / (1.0 + np.exp(-v))

    def manual_cell(x, h, p):
        r = sig(p.wr.data @ x + p.ur.data @ h)
        z = sig(p.wz.data @ x + p.uz.data @ h)
        hbar = np.tanh(r * (p.u.data @ h) + p.w.data @ x)
        return (1 - z) * hbar + z * h

    def manual_attend(qv):
        e = oracle_scores(qv, S, var)
        return oracle_softmax_context(e, S)

    mq = np.zeros(QDIM)
    mw1, mc1 = manual_attend(mq)
    mq1 = manual_cell(np.concatenate([h0, mc1]), mq, var.att_rnn)
    mw2, mc2 = manual_attend(mq1)
    mq2 = manual_cell(np.concatenate([h1, mc2]), mq1, var.att_rnn)

    np.testing.assert_allclose(w1.data, mw1, atol=1e-12)
    np.testing.assert_allclose(q1.data, mq1, atol=1e-12)
    np.testing.assert_allclose(w2.data, mw2, atol=1e-12)
    np.testing.assert_allclose(q2.data, mq2, atol=1e-12)


# ---------------------------------------------------------------------------
# hybrid1


def test_hybrid1_single_state(rng):
    var = make_variant(rng, "hybrid1")
    S = rng.uniform(-1, 1, size=(1, 6))
    w, _ = attend_hybrid1(ad.constant(rng.uniform(-1, 1, 3)),
                          ad.constant([1.0]), make_enc(S), var)
    np.testing.assert_allclose(w.data, [1.0], atol=1e-15)


def test_hybrid1_closed_form_two_states(rng):
    # v = 0 so every raw score is equal; uniform previous weights over two
    # states put the center at m = 1.5, leaving pure logistic re-weighting:
    # [sig(-0.5), sig(0.5)] normalized = [0.37754067, 0.62245933]
    var = make_variant(rng, "hybrid1")
    var.v.data[:] = 0.0
    S = rng.uniform(-1, 1, size=(2, 6))
    w, _ = attend_hybrid1(ad.constant(rng.uniform(-1, 1, 3)),
                          ad.constant([0.5, 0.5]), make_enc(S), var)
    def sig(x):
        return 1.0 / (1.0 + np.exp(-x))
    expected = np.array([sig(-0.5), sig(0.5)])
    expected /= expected.sum()
    np.testing.assert_allclose(w.data, expected, atol=1e-12)
    np.testing.assert_allclose(w.data, [0.3775, 0.6225], atol=1e-4)


def test_hybrid1_weights_sum_to_one(rng):
    var = make_variant(rng, "hybrid1")
    for _ in range(50):
        T = int(rng.integers(1, 7))
        wp = rng.uniform(0.1, 1, size=T)
        wp /= wp.sum()
        w, _ = attend_hybrid1(ad.constant(rng.uniform(-1, 1, 3)),
                              ad.constant(wp), make_enc(rng.uniform(-1, 1, (T, 6))), var)
        assert abs(w.data.sum() - 1.0) < 1e-9


def test_hybrid1_uniform_center_is_midpoint(rng):
    var = make_variant(rng, "hybrid1")
    for T in range(1, 8):
        wp = np.full(T, 1.0 / T)
        m = float(np.dot(wp, np.arange(1, T + 1)))
        assert m == pytest.approx((T + 1) / 2, abs=1e-12)
        # same center as computed inside the op
        cache = precompute(var, make_enc(np.zeros((T, 6))))
        assert float(np.dot(wp, cache.jpos)) == pytest.approx((T + 1) / 2, abs=1e-12)


def test_hybrid1_matches_stated_formula(rng):
    var = make_variant(rng, "hybrid1")
    S = rng.uniform(-1, 1, size=(5, 6))
    h = rng.uniform(-1, 1, 3)
    wp = rng.uniform(0.1, 1, size=5)
    wp /= wp.sum()
    w, c = attend_hybrid1(ad.constant(h), ad.constant(wp), make_enc(S), var)

    def sig(x):
        return 1.0 / (1.0 + np.exp(-x))
    e = oracle_scores(h, S, var)
    m = np.dot(np.arange(1, 6, dtype=float), wp)
    ep = sig(np.arange(1, 6, dtype=float) - m) * np.exp(e)
    ow = ep / ep.sum()
    np.testing.assert_allclose(w.data, ow, atol=1e-12)
    np.testing.assert_allclose(c.data, ow @ S, atol=1e-12)


def test_hybrid1_rejects_non_distribution(rng):
    var = make_variant(rng, "hybrid1")
    with pytest.raises(ContractError):
        attend_hybrid1(ad.constant(rng.uniform(-1, 1, 3)),
                       ad.constant([0.7, 0.7]), make_enc(np.zeros((2, 6))), var)


# ---------------------------------------------------------------------------
# hybrid2


def test_hybrid2_zero_kernel_reduces_to_base(rng):
    for _ in range(20):
        var = make_variant(rng, "hybrid2")
        var.kernel.data[:] = 0.0
        T = int(rng.integers(1, 6))
        S = rng.uniform(-1, 1, size=(T, 6))
        h = ad.constant(rng.uniform(-1, 1, 3))
        wp = rng.uniform(0.1, 1, size=T)
        wp /= wp.sum()
        enc = make_enc(S)
        w2, c2 = attend_hybrid2(h, ad.constant(wp), enc, var)
        wb, cb = attend_base(h, enc, var)
        np.testing.assert_allclose(w2.data, wb.data, atol=1e-12)
        np.testing.assert_allclose(c2.data, cb.data, atol=1e-12)


def test_hybrid2_single_tap_kernel_picks_column(rng):
    var = make_variant(rng, "hybrid2")
    kernel = ad.parameter(rng.uniform(-1, 1, size=(GDIM, 1)))
    w_prev = np.zeros(4)
    w_prev[2] = 1.0
    g = conv_features(kernel, ad.constant(w_prev))
    np.testing.assert_allclose(g.data[2], kernel.data[:, 0], atol=1e-15)
    for j in (0, 1, 3):
        np.testing.assert_array_equal(g.data[j], np.zeros(GDIM))


def test_hybrid2_convolution_matches_direct_summation(rng):
    kernel = ad.parameter(rng.uniform(-1, 1, size=(GDIM, 5)))
    w_prev = rng.uniform(0, 1, size=7)
    g = conv_features(kernel, ad.constant(w_prev)).data

    # oracle: O(T*k) loop with explicit zero padding
    T, width, r = 7, 5, 2
    expected = np.zeros((T, GDIM))
    for j in range(T):
        for t in range(width):
            src = j + t - r
            if 0 <= src < T:
                expected[j] += kernel.data[:, t] * w_prev[src]
    np.testing.assert_allclose(g, expected, atol=1e-12)


def test_hybrid2_even_kernel_rejected(rng):
    with pytest.raises(ConfigError):
        init_attention_variant(rng, "hybrid2", hidden=HIDDEN, align_dim=ALIGN,
                               g_dim=GDIM, kernel_width=4)


def test_hybrid2_matches_stated_formula(rng):
    var = make_variant(rng, "hybrid2")
    S = rng.uniform(-1, 1, size=(4, 6))
    h = rng.uniform(-1, 1, 3)
    wp = rng.uniform(0.1, 1, size=4)
    wp /= wp.sum()
    w, _ = attend_hybrid2(ad.constant(h), ad.constant(wp), make_enc(S), var)

    g = conv_features(var.kernel, ad.constant(wp)).data
    extra = g @ var.g_a.data.T
    e = oracle_scores(h, S, var, extra_rows=extra)
    ow, _ = oracle_softmax_context(e, S)
    np.testing.assert_allclose(w.data, ow, atol=1e-12)


# ---------------------------------------------------------------------------
# alignment assembly


def test_collect_alignment_single_row(rng):
    w = rng.uniform(0, 1, size=5)
    w /= w.sum()
    m = collect_alignment([ad.constant(w)])
    assert m.weights.shape == (1, 5)
    np.testing.assert_array_equal(m.weights[0], w)


def test_collect_alignment_preserves_rows_bit_exactly(rng):
    rows = [rng.uniform(0, 1, size=4) for _ in range(3)]
    rows = [r / r.sum() for r in rows]
    m = collect_alignment(rows)
    for i, r in enumerate(rows):
        np.testing.assert_array_equal(m.weights[i], r)


def test_collect_alignment_row_sums(rng):
    rows = [np.full(6, 1 / 6) for _ in range(4)]
    m = collect_alignment(rows)
    np.testing.assert_allclose(m.weights.sum(axis=1), np.ones(4), atol=1e-9)


def test_collect_alignment_ragged_rejected():
    with pytest.raises(ContractError):
        collect_alignment([np.ones(3) / 3, np.ones(4) / 4])


# ---------------------------------------------------------------------------
# cross-variant properties


def _random_attend(rng, var, T):
    S = rng.uniform(-2, 2, size=(T, 6))
    enc = make_enc(S)
    st = init_attention_state(var, T, 6)
    if st.c_prev is not None:
        st.c_prev = ad.constant(rng.uniform(-1, 1, 6))
    query = ad.constant(rng.uniform(-2, 2, QDIM if var.tag == "rnnatt" else 3))
    if var.tag == "rnnatt":
        st.q = ad.constant(rng.uniform(-1, 1, QDIM))
    w, c = attend(var, enc, query, st)
    return S, w.data, c.data


@pytest.mark.parametrize("tag", ["base", "recatt", "rnnatt", "hybrid1", "hybrid2"])
def test_weights_in_simplex_and_context_in_envelope(rng, tag):
    var = make_variant(rng, tag)
    for _ in range(200):
        S, w, c = _random_attend(rng, var, int(rng.integers(1, 7)))
        assert np.all(w >= 0)
        assert abs(w.sum() - 1.0) <= 1e-9
        np.testing.assert_array_less(c, S.max(axis=0) + 1e-9)
        np.testing.assert_array_less(S.min(axis=0) - 1e-9, c)


@pytest.mark.parametrize("tag", ["base", "recatt", "rnnatt", "hybrid1", "hybrid2"])
def test_variant_parameters_are_differentiable(rng, tag):
    var = make_variant(rng, tag)
    T = 4
    S = rng.uniform(-1, 1, size=(T, 6))
    h = rng.uniform(-1, 1, 3)
    q0 = rng.uniform(-1, 1, QDIM)
    c_prev = rng.uniform(-1, 1, 6)
    wp = rng.uniform(0.1, 1, size=T)
    wp /= wp.sum()
    probe = rng.uniform(-1, 1, 6)

    def run():
        enc = make_enc(S)
        st = AttentionState(c_prev=ad.constant(c_prev), w_prev=ad.constant(wp),
                            q=ad.constant(q0))
        query = ad.constant(q0 if tag == "rnnatt" else h)
        w, c = attend(var, enc, query, st)
        if tag == "rnnatt":
            c = rnnatt_update(st.q, ad.constant(h), c, var)
        return ad.vsum(ad.hadamard(c, ad.constant(probe[: c.data.shape[0]])))

    with ad.Tape() as tape:
        ad.backward(run(), tape)

    for name, param in var.named().items():
        numeric = fd_gradient(lambda a: float(run().data), param.data)
        analytic = param.grad if param.grad is not None else np.zeros_like(param.data)
        assert max_rel_err(analytic, numeric, floor=1e-6) < 1e-4, name


def test_advance_state_keeps_context_for_input_feeding(rng):
    var = make_variant(rng, "base")
    S = rng.uniform(-1, 1, size=(3, 6))
    enc = make_enc(S)
    st = init_attention_state(var, 3, 6, keep_context=True)
    np.testing.assert_array_equal(st.c_prev.data, np.zeros(6))
    w, c = attend(var, enc, ad.constant(rng.uniform(-1, 1, 3)), st)
    new = advance_attention_state(var, st, None, w, c, keep_context=True)
    assert new.c_prev is c
