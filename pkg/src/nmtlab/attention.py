"""Attention unit variants.

Every variant maps (query state, recurrent attention state, encoder states)
to a weight distribution over source positions plus the weighted-average
context vector. Scores use the additive match: a tanh of summed linear maps
of the inputs, dotted with a score vector.

Variants and what flows back into the unit between steps:

* base      - nothing; the score sees only the previous decoder state.
* recatt    - the previous context vector enters the match as a third
              additive term (content-based short-term memory).
* rnnatt    - the unit keeps its own GRU state q, which replaces the
              decoder state as the query; q is updated from the previous
              decoder state and the fresh context (long-term memory).
* hybrid1   - the previous weights define an attention center
              m = sum_j j*w_j (1-based positions); raw exponentiated scores
              are re-weighted by logistic(j - m) and renormalized.
              Note: as printed, logistic(j - m) grows with j, so forward
              jumps are favored rather than distance being penalized
              symmetrically; implemented exactly as stated.
* hybrid2   - the previous weights are convolved with a kernel into
              per-position feature vectors that enter the match as the
              third additive term.
"""

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .encoder import EncoderStates, GruParams, gru_step, init_gru
from .errors import ConfigError, ContractError, ShapeError

ATTENTION_TAGS = ("base", "recatt", "rnnatt", "hybrid1", "hybrid2")


@dataclass
class AttentionVariant:
    """Parameters for one attention variant; exactly the fields the tag
    demands are populated."""

    tag: str
    v: Tensor                       # score vector (align,)
    w_a: Tensor                     # query map (align, query_dim)
    u_a: Tensor                     # encoder-state map (align, 2*hidden)
    v_a: Tensor | None = None       # recatt: previous-context map (align, 2*hidden)
    att_rnn: GruParams | None = None  # rnnatt: cell over [h_prev; c] with state q
    kernel: Tensor | None = None    # hybrid2: (g_dim, width) convolution taps
    g_a: Tensor | None = None       # hybrid2: feature map (align, g_dim)

    def __post_init__(self):
        if self.tag not in ATTENTION_TAGS:
            raise ConfigError(f"unknown attention variant {self.tag!r}")
        if self.tag == "recatt" and self.v_a is None:
            raise ConfigError("recatt needs the previous-context match matrix")
        if self.tag == "rnnatt" and self.att_rnn is None:
            raise ConfigError("rnnatt needs its own recurrent cell")
        if self.tag == "hybrid2":
            if self.kernel is None or self.g_a is None:
                raise ConfigError("hybrid2 needs a kernel and a feature map")
            if self.kernel.data.shape[1] % 2 != 1:
                raise ConfigError(
                    f"hybrid2 kernel width must be odd, got {self.kernel.data.shape[1]}")

    def named(self, prefix="att"):
        out = {f"{prefix}.v": self.v, f"{prefix}.wa": self.w_a, f"{prefix}.ua": self.u_a}
        if self.v_a is not None:
            out[f"{prefix}.va"] = self.v_a
        if self.att_rnn is not None:
            out.update(self.att_rnn.named(f"{prefix}.rnn"))
        if self.kernel is not None:
            out[f"{prefix}.kernel"] = self.kernel
            out[f"{prefix}.ga"] = self.g_a
        return out


@dataclass
class AttentionState:
    """Recurrent attention quantities carried between decoding steps."""

    c_prev: Tensor | None = None   # recatt (and input-feeding decoders)
    w_prev: Tensor | None = None   # hybrid1 / hybrid2
    q: Tensor | None = None        # rnnatt


@dataclass
class AlignmentMatrix:
    """Attention weights per decoded step: rows = target steps, columns =
    source positions; every row is a distribution."""

    weights: np.ndarray

    @property
    def n_rows(self):
        return self.weights.shape[0]

    @property
    def n_cols(self):
        return self.weights.shape[1]


def collect_alignment(per_step_weights):
    """Assemble step weight vectors (in decoding order) into a matrix."""
    rows = [w.data if isinstance(w, Tensor) else np.asarray(w, dtype=np.float64)
            for w in per_step_weights]
    if not rows:
        raise ContractError("collect_alignment: no rows")
    n = rows[0].shape[0]
    for r in rows:
        if r.ndim != 1 or r.shape[0] != n:
            raise ContractError(
                f"collect_alignment: ragged rows ({r.shape} vs ({n},))")
    return AlignmentMatrix(weights=np.stack(rows))


# ---------------------------------------------------------------------------
# scoring pieces


@dataclass
class AttentionCache:
    """Per-sentence reusable pieces: the encoder-state half of the match is
    the same at every decoding step."""

    us: Tensor                     # (T, align) = stacked @ u_a^T
    jpos: np.ndarray               # 1-based positions, hybrid1 center


def precompute(variant, enc):
    us = ad.matmul(enc.stacked, ad.transpose(variant.u_a))
    return AttentionCache(us=us, jpos=np.arange(1, len(enc) + 1, dtype=np.float64))


def _query_rows(variant, enc, cache, query_term, extra_rows=None):
    """tanh(us + query_term [+ extra_rows]) @ v -> raw scores (T,)."""
    cache = cache or precompute(variant, enc)
    m = ad.add_rowvec(cache.us, query_term)
    if extra_rows is not None:
        m = ad.add(m, extra_rows)
    return ad.matmul(ad.tanh(m), variant.v)


def _context(weights, enc):
    return ad.matmul(weights, enc.stacked)


def _check_simplex(w_prev):
    total = float(w_prev.data.sum())
    if abs(total - 1.0) > 1e-6 or np.any(w_prev.data < -1e-12):
        raise ContractError(
            f"previous attention weights must be a distribution (sum={total})")


# ---------------------------------------------------------------------------
# variants


def attend_base(h_prev, enc, variant, cache=None):
    """Content-based attention: softmax of match(h_prev, s_j)."""
    if len(enc) == 0:
        raise ShapeError("attend: no encoder states")
    e = _query_rows(variant, enc, cache, ad.matmul(variant.w_a, h_prev))
    w = ad.softmax_vec(e)
    return w, _context(w, enc)


def attend_recatt(h_prev, c_prev, enc, variant, cache=None):
    """Three-term match: the previous context joins the score additively."""
    if c_prev.data.shape[0] != variant.v_a.data.shape[1]:
        raise ShapeError(
            f"attend_recatt: c_prev {c_prev.data.shape} does not fit "
            f"{variant.v_a.data.shape}")
    query = ad.add(ad.matmul(variant.w_a, h_prev), ad.matmul(variant.v_a, c_prev))
    e = _query_rows(variant, enc, cache, query)
    w = ad.softmax_vec(e)
    return w, _context(w, enc)


def attend_rnnatt(q_prev, enc, variant, cache=None):
    """The unit's own hidden state is the query; scoring is the base form."""
    e = _query_rows(variant, enc, cache, ad.matmul(variant.w_a, q_prev))
    w = ad.softmax_vec(e)
    return w, _context(w, enc)


def rnnatt_update(q_prev, h_prev, c_i, variant):
    """Advance the attention unit's state from what was just extracted."""
    return gru_step(ad.concat([h_prev, c_i]), q_prev, variant.att_rnn)


def attend_hybrid1(h_prev, w_prev, enc, variant, cache=None):
    """Weights re-scored by distance from the previous attention center.

    e'_j = logistic(j - m) * exp(e_j), renormalized; positions are 1-based.
    The exp is max-shifted, which cancels in the ratio.
    """
    _check_simplex(w_prev)
    cache = cache or precompute(variant, enc)
    e = _query_rows(variant, enc, cache, ad.matmul(variant.w_a, h_prev))
    m = ad.vsum(ad.hadamard(w_prev, ad.constant(cache.jpos)))
    gate = ad.sigmoid(ad.sub(ad.constant(cache.jpos), ad.scalar_expand(m, len(enc))))
    shifted = ad.exp(ad.affine(e, 1.0, -float(e.data.max())))
    w = ad.normalize_sum(ad.hadamard(gate, shifted))
    return w, _context(w, enc)


def conv_features(kernel, w_prev):
    """Zero-padded same-length convolution of the previous weights.

    Tap t of the (g_dim, width) kernel weighs position j + t - width//2, so
    each source position gets a g_dim feature vector.
    """
    width = kernel.data.shape[1]
    feats = [ad.matmul(kernel, ad.padded_window(w_prev, j, width))
             for j in range(w_prev.data.shape[0])]
    return ad.stack_rows(feats)


def attend_hybrid2(h_prev, w_prev, enc, variant, cache=None):
    """Previous weights convolved into features that join the match."""
    _check_simplex(w_prev)
    g = conv_features(variant.kernel, w_prev)              # (T, g_dim)
    g_rows = ad.matmul(g, ad.transpose(variant.g_a))       # (T, align)
    e = _query_rows(variant, enc, cache, ad.matmul(variant.w_a, h_prev),
                    extra_rows=g_rows)
    w = ad.softmax_vec(e)
    return w, _context(w, enc)


# ---------------------------------------------------------------------------
# uniform driver used by the model


def init_attention_state(variant, n_src, two_hidden, keep_context=False):
    """Neutral starts: zero context, uniform weights, zero unit state."""
    st = AttentionState()
    if variant.tag == "recatt" or keep_context:
        st.c_prev = ad.zeros(two_hidden)
    if variant.tag in ("hybrid1", "hybrid2"):
        st.w_prev = ad.constant(np.full(n_src, 1.0 / n_src))
    if variant.tag == "rnnatt":
        st.q = ad.zeros(variant.att_rnn.u.data.shape[0])
    return st


def attend(variant, enc, h_prev, state, cache=None):
    """Dispatch one attention application for the variant."""
    if variant.tag == "base":
        return attend_base(h_prev, enc, variant, cache)
    if variant.tag == "recatt":
        return attend_recatt(h_prev, state.c_prev, enc, variant, cache)
    if variant.tag == "rnnatt":
        return attend_rnnatt(state.q, enc, variant, cache)
    if variant.tag == "hybrid1":
        return attend_hybrid1(h_prev, state.w_prev, enc, variant, cache)
    return attend_hybrid2(h_prev, state.w_prev, enc, variant, cache)


def advance_attention_state(variant, state, h_prev, w, c, keep_context=False):
    """State to carry into the next step, given this step's outputs."""
    new = AttentionState()
    if variant.tag == "recatt" or keep_context:
        new.c_prev = c
    if variant.tag in ("hybrid1", "hybrid2"):
        new.w_prev = w
    if variant.tag == "rnnatt":
        new.q = rnnatt_update(state.q, h_prev, c, variant)
    return new


def init_attention_variant(rng, tag, hidden, align_dim, q_dim=None,
                           g_dim=None, kernel_width=3):
    """Glorot-uniform parameters for one variant.

    hidden is the per-direction encoder size; encoder states have dim
    2*hidden. The rnnatt query has its own dimension q_dim; hybrid2 extracts
    g_dim features with an odd kernel_width.
    """
    two_h = 2 * hidden

    def mat(rows, cols):
        a = np.sqrt(6.0 / (rows + cols))
        return ad.parameter(rng.uniform(-a, a, size=(rows, cols)))

    def vec(n):
        a = np.sqrt(6.0 / (n + 1))
        return ad.parameter(rng.uniform(-a, a, size=n))

    if tag == "hybrid2" and kernel_width % 2 != 1:
        raise ConfigError(f"hybrid2 kernel width must be odd, got {kernel_width}")

    query_dim = q_dim if tag == "rnnatt" else hidden
    kwargs = {}
    if tag == "recatt":
        kwargs["v_a"] = mat(align_dim, two_h)
    if tag == "rnnatt":
        kwargs["att_rnn"] = init_gru(rng, q_dim, hidden + two_h)
    if tag == "hybrid2":
        kwargs["kernel"] = mat(g_dim, kernel_width)
        kwargs["g_a"] = mat(align_dim, g_dim)
    return AttentionVariant(
        tag=tag, v=vec(align_dim), w_a=mat(align_dim, query_dim),
        u_a=mat(align_dim, two_h), **kwargs)
