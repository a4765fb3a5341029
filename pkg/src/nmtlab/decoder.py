"""Decoder step variants and the deep-output prediction layer.

Step variants:

* base       - the context-conditioned GRU: h_i = cell(y_{i-1}, h_{i-1}, c_i).
* inputfeed  - the previous context joins the current one as decoder input.
               Stored as separate matrices per context (mathematically the
               doubled-width matrix over [c_i; c_prev]), so zeroing the
               c_prev matrices reproduces base bit for bit.
* conddec    - a decay gate d multiplicatively shrinks a condition vector
               sd each step, and tanh of a linear map of sd is added to the
               new hidden state:

                   d_i  = sigmoid(Wd y + Ud h + Vd c)
                   sd_i = d_i * sd_{i-1}
                   h_i  = (1-z)*h' + z*h_{i-1} + tanh(Vh sd_i)

               Since d is in (0,1), |sd_i| <= |sd_{i-1}| coordinatewise.

The prediction layer concatenates [h_i; c_i; y_{i-1}], takes an elementwise
max over a pool of affine maps, and reads out vocabulary logits.
"""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .encoder import GruParams, gru_step
from .errors import ConfigError, ShapeError

DECODER_TAGS = ("base", "inputfeed", "conddec")


@dataclass
class DecoderVariant:
    """Parameters for one decoder variant plus the state/condition
    initializer maps."""

    tag: str
    gru: GruParams                 # context matrices target c_i (2*hidden wide)
    h0_map: Tensor                 # hidden x hidden, applied to the first backward encoder state
    vc2: Tensor | None = None      # inputfeed: matrices for the c_prev half
    vcr2: Tensor | None = None
    vcz2: Tensor | None = None
    wd: Tensor | None = None       # conddec decay gate
    ud: Tensor | None = None
    vd: Tensor | None = None
    vh: Tensor | None = None       # condition injection into h
    cond_init: Tensor | None = None  # cond x 2*hidden, applied to the last encoder state

    def __post_init__(self):
        if self.tag not in DECODER_TAGS:
            raise ConfigError(f"unknown decoder variant {self.tag!r}")
        if self.tag == "inputfeed" and self.vc2 is None:
            raise ConfigError("inputfeed needs the previous-context matrices")
        if self.tag == "conddec" and any(
                t is None for t in (self.wd, self.ud, self.vd, self.vh, self.cond_init)):
            raise ConfigError("conddec needs decay-gate and condition parameters")

    def named(self, prefix="dec"):
        out = self.gru.named(prefix)
        out[f"{prefix}.h0"] = self.h0_map
        if self.vc2 is not None:
            out.update({f"{prefix}.vc2": self.vc2, f"{prefix}.vcr2": self.vcr2,
                        f"{prefix}.vcz2": self.vcz2})
        if self.wd is not None:
            out.update({f"{prefix}.wd": self.wd, f"{prefix}.ud": self.ud,
                        f"{prefix}.vd": self.vd, f"{prefix}.vh": self.vh,
                        f"{prefix}.cond0": self.cond_init})
        return out


def decoder_step_base(h_prev, y_prev_embed, c_i, var):
    """h_i from the context-conditioned cell."""
    return gru_step(y_prev_embed, h_prev, var.gru, c_i)


def decoder_step_inputfeed(h_prev, y_prev_embed, c_i, c_prev, var):
    """Base step with the previous context as an extra additive input."""
    p = var.gru
    pre_r = ad.add(ad.add(ad.matmul(p.wr, y_prev_embed), ad.matmul(p.ur, h_prev)),
                   ad.add(ad.matmul(p.vcr, c_i), ad.matmul(var.vcr2, c_prev)))
    pre_z = ad.add(ad.add(ad.matmul(p.wz, y_prev_embed), ad.matmul(p.uz, h_prev)),
                   ad.add(ad.matmul(p.vcz, c_i), ad.matmul(var.vcz2, c_prev)))
    r = ad.sigmoid(pre_r)
    z = ad.sigmoid(pre_z)
    cand = ad.add(ad.add(ad.hadamard(r, ad.matmul(p.u, h_prev)),
                         ad.matmul(p.w, y_prev_embed)),
                  ad.add(ad.matmul(p.vc, c_i), ad.matmul(var.vc2, c_prev)))
    h_bar = ad.tanh(cand)
    return ad.add(ad.hadamard(ad.affine(z, -1.0, 1.0), h_bar),
                  ad.hadamard(z, h_prev))


def conddec_step(h_prev, y_prev_embed, c_i, sd_prev, var):
    """Decay-gated step; returns (h_i, sd_i)."""
    if sd_prev.data.shape[0] != var.wd.data.shape[0]:
        raise ShapeError(
            f"conddec_step: condition {sd_prev.data.shape} does not fit decay "
            f"gate {var.wd.data.shape}")
    p = var.gru
    pre_r = ad.add(ad.add(ad.matmul(p.wr, y_prev_embed), ad.matmul(p.ur, h_prev)),
                   ad.matmul(p.vcr, c_i))
    pre_z = ad.add(ad.add(ad.matmul(p.wz, y_prev_embed), ad.matmul(p.uz, h_prev)),
                   ad.matmul(p.vcz, c_i))
    r = ad.sigmoid(pre_r)
    z = ad.sigmoid(pre_z)
    cand = ad.add(ad.add(ad.hadamard(r, ad.matmul(p.u, h_prev)),
                         ad.matmul(p.w, y_prev_embed)),
                  ad.matmul(p.vc, c_i))
    h_bar = ad.tanh(cand)

    d = ad.sigmoid(ad.add(ad.add(ad.matmul(var.wd, y_prev_embed),
                                 ad.matmul(var.ud, h_prev)),
                          ad.matmul(var.vd, c_i)))
    sd_i = ad.hadamard(d, sd_prev)
    h_i = ad.add(ad.add(ad.hadamard(ad.affine(z, -1.0, 1.0), h_bar),
                        ad.hadamard(z, h_prev)),
                 ad.tanh(ad.matmul(var.vh, sd_i)))
    return h_i, sd_i


def init_condition(last_encoder_state, var):
    """sd_0 = tanh(M s_T): trainable, dimension-safe start for the
    condition vector."""
    return ad.tanh(ad.matmul(var.cond_init, last_encoder_state))


def init_decoder_state(enc, var):
    """h_0 = tanh(N s1_bwd) from the first backward encoder state."""
    return ad.tanh(ad.matmul(var.h0_map, enc.bwd[0]))


# ---------------------------------------------------------------------------
# prediction layer


@dataclass
class OutputLayerParams:
    """Maxout pool over [h; c; y_prev] followed by a vocabulary readout."""

    pools: list                    # p tensors of shape (maxout_dim, in_dim)
    readout: Tensor                # (vocab, maxout_dim)

    def __post_init__(self):
        if len(self.pools) < 2:
            raise ConfigError(f"maxout pool size must be >= 2, got {len(self.pools)}")

    def named(self, prefix="out"):
        out = {f"{prefix}.pool{i}": m for i, m in enumerate(self.pools)}
        out[f"{prefix}.readout"] = self.readout
        return out


def deep_output(h_i, c_i, y_prev_embed, out_params, feature_mask=None):
    """Vocabulary logits; the caller applies softmax.

    feature_mask, when given, is a dropout mask over the concatenated
    feature vector.
    """
    u = ad.concat([h_i, c_i, y_prev_embed])
    if feature_mask is not None:
        u = ad.hadamard(u, feature_mask)
    t = ad.matmul(out_params.pools[0], u)
    for m in out_params.pools[1:]:
        t = ad.maximum(t, ad.matmul(m, u))
    return ad.matmul(out_params.readout, t)


def init_decoder_variant(rng, tag, hidden, embed_dim, cond_dim, two_hidden):
    def mat(rows, cols):
        a = np.sqrt(6.0 / (rows + cols))
        return ad.parameter(rng.uniform(-a, a, size=(rows, cols)))

    from .encoder import init_gru
    gru = init_gru(rng, hidden, embed_dim, ctx_dim=two_hidden)
    kwargs = {}
    if tag == "inputfeed":
        kwargs = dict(vc2=mat(hidden, two_hidden), vcr2=mat(hidden, two_hidden),
                      vcz2=mat(hidden, two_hidden))
    elif tag == "conddec":
        kwargs = dict(wd=mat(cond_dim, embed_dim), ud=mat(cond_dim, hidden),
                      vd=mat(cond_dim, two_hidden), vh=mat(hidden, cond_dim),
                      cond_init=mat(cond_dim, two_hidden))
    return DecoderVariant(tag=tag, gru=gru, h0_map=mat(hidden, hidden), **kwargs)


def init_output_layer(rng, hidden, two_hidden, embed_dim, maxout_dim, pool, vocab):
    def mat(rows, cols):
        a = np.sqrt(6.0 / (rows + cols))
        return ad.parameter(rng.uniform(-a, a, size=(rows, cols)))

    in_dim = hidden + two_hidden + embed_dim
    return OutputLayerParams(
        pools=[mat(maxout_dim, in_dim) for _ in range(pool)],
        readout=mat(vocab, maxout_dim))
