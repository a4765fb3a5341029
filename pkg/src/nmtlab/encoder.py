"""GRU cell and the bidirectional encoder.

The cell follows the reset/update-gate form with biases omitted; an
optional context vector enters every gate pre-activation through its own
matrix, which is how the decoder reuses the same cell:

    r = sigmoid(Wr x + Ur h [+ Vr c])
    h'= tanh(r * (U h) + W x [+ V c])
    z = sigmoid(Wz x + Uz h [+ Vz c])
    h_new = (1 - z) * h' + z * h

The encoder runs two independent cells over the sentence, left-to-right and
right-to-left, both from a zero initial state, and concatenates the two
states at each position.
"""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import InputError, ShapeError


@dataclass
class GruParams:
    """One cell's matrices; the v* context matrices may be absent."""

    w: Tensor
    u: Tensor
    wr: Tensor
    ur: Tensor
    wz: Tensor
    uz: Tensor
    vc: Tensor | None = None
    vcr: Tensor | None = None
    vcz: Tensor | None = None

    def named(self, prefix):
        out = {f"{prefix}.w": self.w, f"{prefix}.u": self.u,
               f"{prefix}.wr": self.wr, f"{prefix}.ur": self.ur,
               f"{prefix}.wz": self.wz, f"{prefix}.uz": self.uz}
        if self.vc is not None:
            out.update({f"{prefix}.vc": self.vc, f"{prefix}.vcr": self.vcr,
                        f"{prefix}.vcz": self.vcz})
        return out


def init_gru(rng, hidden, input_dim, ctx_dim=0):
    """Uniform +-sqrt(6/(fan_in+fan_out)) matrices for one cell."""
    def mat(rows, cols):
        a = np.sqrt(6.0 / (rows + cols))
        return ad.parameter(rng.uniform(-a, a, size=(rows, cols)))

    ctx = dict(vc=None, vcr=None, vcz=None)
    if ctx_dim:
        ctx = dict(vc=mat(hidden, ctx_dim), vcr=mat(hidden, ctx_dim),
                   vcz=mat(hidden, ctx_dim))
    return GruParams(
        w=mat(hidden, input_dim), u=mat(hidden, hidden),
        wr=mat(hidden, input_dim), ur=mat(hidden, hidden),
        wz=mat(hidden, input_dim), uz=mat(hidden, hidden), **ctx)


def gru_step(x, h_prev, p, c=None):
    """One cell application; gates are strictly inside (0, 1)."""
    if x.data.shape[0] != p.w.data.shape[1]:
        raise ShapeError(
            f"gru_step: input {x.data.shape} does not fit W {p.w.data.shape}")
    if h_prev.data.shape[0] != p.u.data.shape[1]:
        raise ShapeError(
            f"gru_step: state {h_prev.data.shape} does not fit U {p.u.data.shape}")
    pre_r = ad.add(ad.matmul(p.wr, x), ad.matmul(p.ur, h_prev))
    pre_z = ad.add(ad.matmul(p.wz, x), ad.matmul(p.uz, h_prev))
    if c is not None:
        pre_r = ad.add(pre_r, ad.matmul(p.vcr, c))
        pre_z = ad.add(pre_z, ad.matmul(p.vcz, c))
    r = ad.sigmoid(pre_r)
    z = ad.sigmoid(pre_z)
    cand = ad.add(ad.hadamard(r, ad.matmul(p.u, h_prev)), ad.matmul(p.w, x))
    if c is not None:
        cand = ad.add(cand, ad.matmul(p.vc, c))
    h_bar = ad.tanh(cand)
    return ad.add(ad.hadamard(ad.affine(z, -1.0, 1.0), h_bar),
                  ad.hadamard(z, h_prev))


@dataclass
class EncoderStates:
    """Per-position source representations.

    states[j] is the concatenation [fwd[j]; bwd[j]]; stacked holds the same
    vectors as the rows of a (length x 2*hidden) matrix for batched
    attention scoring.
    """

    fwd: list
    bwd: list
    states: list
    stacked: Tensor

    def __len__(self):
        return len(self.states)


def encode(src_ids, embed, fwd, bwd, input_masks=None):
    """Bidirectional encoding of a source id sequence.

    input_masks, when given, are per-position dropout masks applied to the
    word embeddings before they enter either direction's cell.
    """
    if len(src_ids) == 0:
        raise InputError("encode: empty source sentence")
    hidden = fwd.u.data.shape[0]
    xs = [ad.take_row(embed, i) for i in src_ids]
    if input_masks is not None:
        xs = [ad.hadamard(x, m) for x, m in zip(xs, input_masks)]

    h = ad.zeros(hidden)
    fwd_states = []
    for x in xs:
        h = gru_step(x, h, fwd)
        fwd_states.append(h)

    h = ad.zeros(hidden)
    bwd_states = [None] * len(xs)
    for j in range(len(xs) - 1, -1, -1):
        h = gru_step(xs[j], h, bwd)
        bwd_states[j] = h

    states = [ad.concat([f, b]) for f, b in zip(fwd_states, bwd_states)]
    return EncoderStates(fwd=fwd_states, bwd=bwd_states, states=states,
                         stacked=ad.stack_rows(states))
