"""Desk-scale neural machine translation laboratory.

Pure-numpy encoder-decoder models with interchangeable attention variants
(content-based baseline, context-recurrent, attention-with-own-RNN, and two
weight-feedback hybrids), a conditioned decoder with a decay-gated fertility
vector, reverse-mode autodiff, AdaGrad training, beam-search decoding with
alignment-based unknown-word replacement, BLEU scoring, and alignment
pathology diagnostics.
"""

__version__ = "0.1.0"
